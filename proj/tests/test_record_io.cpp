#include "ppgfusion/record_io.hpp"
#include "ppgfusion/run_config.hpp"
#include "ppgfusion/synth.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>

using namespace ppgfusion;
namespace fs = std::filesystem;

namespace {

MultiChannelRecord small_record() {
  SubjectProfile p;
  p.subject_id = "R7";
  p.duration_s = 60.0;
  return generate_subject(p);
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ppgfusion_test_record_io";
  fs::create_directories(dir);
  return dir / name;
}

template <typename T>
T read_le(const std::vector<std::uint8_t>& b, std::size_t at) {
  T v;
  std::memcpy(&v, b.data() + at, sizeof v);
  return v;
}

}  // namespace

TEST_CASE("record file header layout") {
  const MultiChannelRecord rec = small_record();
  const std::vector<std::uint8_t> b = encode_record_file(to_record_file(rec));
  CHECK(std::string(b.begin(), b.begin() + 4) == "PPGF");
  CHECK(read_le<std::uint16_t>(b, 4) == 1);
  CHECK(read_le<std::uint16_t>(b, 6) == 4);
  CHECK(read_le<double>(b, 8) == 128.0);
  CHECK(read_le<std::uint64_t>(b, 16) == 60u * 128u);
  CHECK(read_le<std::uint16_t>(b, 24) == 2);
  CHECK(std::string(b.begin() + 26, b.begin() + 28) == "R7");
  // First channel name, then the first green sample after all four names.
  CHECK(read_le<std::uint16_t>(b, 28) == 5);
  CHECK(std::string(b.begin() + 30, b.begin() + 35) == "green");
  const std::size_t data = 28 + (2 + 5) + (2 + 3) + (2 + 2) + (2 + 3);
  CHECK(read_le<float>(b, data) == static_cast<float>(rec.green.samples[0]));
}

TEST_CASE("record round trip") {
  const MultiChannelRecord rec = small_record();
  const MultiChannelRecord back = from_record_file(decode_record_file(encode_record_file(to_record_file(rec))));
  CHECK(back.subject_id == "R7");
  CHECK(back.fs() == 128.0);
  CHECK(back.size() == rec.size());
  CHECK((back.green.samples - rec.green.samples).cwiseAbs().maxCoeff() <= 1e-6 * rec.green.samples.cwiseAbs().maxCoeff());
  CHECK(back.ecg.samples == rec.ecg.samples.cast<float>().cast<double>());
  REQUIRE(back.truth);
  CHECK(back.truth->r_peak_times == rec.truth->r_peak_times);
  CHECK(back.truth->clean_ppg == rec.truth->clean_ppg.cast<float>().cast<double>());
  // Encoding what was decoded reproduces the bytes.
  const auto once = encode_record_file(to_record_file(back));
  CHECK(encode_record_file(to_record_file(from_record_file(decode_record_file(once)))) == once);
}

TEST_CASE("unknown blocks are carried, not rejected") {
  RecordFile f = to_record_file(small_record());
  f.blocks.push_back({{'X', 'T', 'R', 'A'}, {1, 2, 3}});
  const RecordFile back = decode_record_file(encode_record_file(f));
  REQUIRE(back.find_block("XTRA"));
  CHECK(back.find_block("XTRA")->payload == std::vector<std::uint8_t>{1, 2, 3});
  CHECK(from_record_file(back).size() == 60 * 128);
}

TEST_CASE("malformed record files") {
  const auto good = encode_record_file(to_record_file(small_record()));
  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_record_file(bad), FormatError);
  bad = good;
  bad[4] = 9;
  CHECK_THROWS_AS(decode_record_file(bad), FormatError);
  bad.assign(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(good.size() / 2));
  CHECK_THROWS_AS(decode_record_file(bad), FormatError);
  bad = good;
  const std::uint64_t huge = 1ull << 40;
  std::memcpy(bad.data() + 16, &huge, 8);
  CHECK_THROWS_AS(decode_record_file(bad), FormatError);
  bad.assign(good.begin(), good.begin() + 10);
  CHECK_THROWS_AS(decode_record_file(bad), FormatError);
  // A block whose length runs past the end.
  bad = good;
  bad.insert(bad.end(), {'J', 'U', 'N', 'K', 50, 0, 0, 0, 0, 0, 0, 0, 1});
  CHECK_THROWS_AS(decode_record_file(bad), FormatError);
}

TEST_CASE("reference and series files") {
  const MultiChannelRecord rec = small_record();
  const PreparedReference ref = prepare_reference(rec, TemplateConfig{.window_s = 30.0});
  const PreparedReference back = from_reference_file(decode_record_file(encode_record_file(to_reference_file("R7", ref))));
  CHECK(back.reference.begin == ref.reference.begin);
  CHECK(back.reference.end == ref.reference.end);
  CHECK(back.beats.r_peak_times == ref.beats.r_peak_times);
  CHECK(back.reference.signal.size() == rec.size());
  CHECK(back.templates.empty());

  const TimeSeries fused(rec.green.samples, 128.0);
  const TimeSeries s = from_series_file(decode_record_file(encode_record_file(to_series_file("R7", "fused", fused))));
  CHECK(s.size() == fused.size());
  CHECK_THROWS_AS(from_series_file(to_record_file(rec)), FormatError);
  CHECK_THROWS_AS(from_reference_file(to_record_file(rec)), FormatError);
}

TEST_CASE("checkpoint round trip") {
  UNetConfig cfg;
  cfg.base_channels = 4;
  FusionModel<float> m = init_model<float>(cfg, 5);
  m.meta.best_epoch = 12;
  m.meta.epochs_run = 87;
  m.meta.best_val_l1 = 0.125;
  m.meta.learning_rate = 5e-4;
  m.meta.train_subjects = {"S01", "S02"};
  m.meta.val_subjects = {"S03"};
  const fs::path path = scratch("model.ppgm");
  save_checkpoint(path, m);
  const FusionModel<float> back = load_checkpoint(path);
  CHECK(back.params == m.params);
  CHECK(back.config.base_channels == 4);
  CHECK(back.config.window_len == 1024);
  CHECK(back.config.leaky_slope == m.config.leaky_slope);
  CHECK(back.meta.best_epoch == 12);
  CHECK(back.meta.epochs_run == 87);
  CHECK(back.meta.best_val_l1 == 0.125);
  CHECK(back.meta.learning_rate == 5e-4);
  CHECK(back.meta.seed == 5);
  CHECK(back.meta.train_subjects == m.meta.train_subjects);
  CHECK(back.meta.val_subjects == m.meta.val_subjects);

  MultiChannelRecord rec = small_record();
  CHECK(fuse(back, rec).samples == fuse(m, rec).samples);
}

TEST_CASE("malformed checkpoints") {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.window_len = 256;
  const auto good = encode_checkpoint(init_model<float>(cfg, 1));
  CHECK(std::string(good.begin(), good.begin() + 4) == "PPGM");
  CHECK(read_le<std::uint32_t>(good, 16) == 4);

  auto bad = good;
  bad[1] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  // A configuration that disagrees with the stored tensor shapes.
  bad = good;
  bad[16] = 5;
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  // An invalid configuration.
  bad = good;
  bad[12] = 0;
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad.assign(good.begin(), good.end() - 3);
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);

  FusionModel<float> wrong = init_model<float>(cfg, 1);
  wrong.params.conservativeResize(wrong.params.size() - 1);
  CHECK_THROWS_AS(encode_checkpoint(wrong), InvalidInput);
  CHECK_THROWS_AS(load_checkpoint(scratch("does-not-exist.ppgm")), InvalidInput);
}

TEST_CASE("atomic writes") {
  const fs::path p = scratch("atomic.txt");
  write_text_atomic(p, "one\n");
  write_text_atomic(p, "two\n");
  CHECK(read_text(p) == "two\n");
  for (const auto& e : fs::directory_iterator(p.parent_path())) CHECK(e.path().extension() != ".tmp");
  CHECK_THROWS_AS(write_text_atomic(scratch("no/such/dir/x.txt"), "x"), InvalidInput);
}

TEST_CASE("manifest") {
  const std::vector<ManifestEntry> entries{{"S01", "S01.ppgf", 230400, 128.0}, {"S02", "S02.ppgf", 1000, 64.0}};
  const std::string text = manifest_to_text(entries);
  CHECK(text.starts_with("subject\tfile\tsamples\tfs\n"));
  const auto back = parse_manifest(text);
  REQUIRE(back.size() == 2);
  CHECK(back[1].subject_id == "S02");
  CHECK(back[1].file == "S02.ppgf");
  CHECK(back[1].samples == 1000);
  CHECK(back[1].fs == 64.0);
  CHECK_THROWS_AS(parse_manifest("id\tfile\n"), FormatError);
  CHECK_THROWS_AS(parse_manifest("subject\tfile\tsamples\tfs\nS01\tS01.ppgf\n"), FormatError);
}

TEST_CASE("history text") {
  TrainingHistory h;
  h.epochs.push_back({1, 0.5, 0.6, 1e-3, true, false});
  h.epochs.push_back({2, 0.4, 0.7, 1e-3, false, false});
  const std::string t = history_to_text(h);
  CHECK(t.starts_with("epoch\ttrain_l1\tval_l1\tlearning_rate\timproved\tlr_reduced\n"));
  CHECK(std::count(t.begin(), t.end(), '\n') == 3);
}

TEST_CASE("run configuration") {
  const RunConfig d;
  CHECK(d.experiment.model.base_channels == 32);
  CHECK(d.experiment.model.depth == 4);
  CHECK(d.experiment.hyper.batch_size == 80);
  CHECK(d.experiment.hyper.lr_init == 0.001);
  CHECK(d.n_folds == 5);

  RunConfig c = parse_run_config("# comment\nseed = 9\nmodel.base_channels = 8\ntrain.max_epochs = 60\n\ncorpus.artifacts = false\n");
  CHECK(c.seed == 9);
  CHECK(c.corpus.seed == 9);
  CHECK(c.experiment.model.base_channels == 8);
  CHECK(c.experiment.hyper.max_epochs == 60);
  CHECK_FALSE(c.corpus.artifacts);

  const RunConfig again = parse_run_config(run_config_to_text(c));
  CHECK(run_config_to_text(again) == run_config_to_text(c));
  // Every documented key appears once in the text form.
  const std::string text = "\n" + run_config_to_text(c);
  for (const std::string& k : run_config_keys()) CHECK(text.find("\n" + k + " = ") != std::string::npos);

  CHECK_THROWS_AS(parse_run_config("model.colour = 3\n"), InvalidConfig);
  CHECK_THROWS_AS(parse_run_config("seed = 1\nseed = 2\n"), InvalidConfig);
  CHECK_THROWS_AS(parse_run_config("model.depth = four\n"), InvalidConfig);
  CHECK_THROWS_AS(parse_run_config("model.window_len = 1000\n"), InvalidConfig);
  CHECK_THROWS_AS(parse_run_config("just words\n"), InvalidConfig);
  try {
    parse_run_config("seed = 1\n\nbogus = 2\n");
    FAIL("expected an error");
  } catch (const InvalidConfig& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}
