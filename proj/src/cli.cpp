#include "ppgfusion/cli.hpp"

#include "ppgfusion/record_io.hpp"
#include "ppgfusion/run_config.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <future>
#include <optional>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;

namespace ppgfusion {

namespace {

constexpr const char* kManifest = "manifest.tsv";
constexpr const char* kFoldsFile = "folds.tsv";

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out_dir;
  std::string corpus_dir;
  std::string checkpoint;
};

/// Calls fn(i) for i in [0, n), at most `jobs` at a time; results in index order.
template <typename Fn>
auto parallel_map(int n, int jobs, Fn fn) {
  using R = decltype(fn(0));
  std::vector<R> out;
  out.reserve(n);
  for (int first = 0; first < n; first += jobs) {
    std::vector<std::future<R>> running;
    const int last = std::min(n, first + jobs);
    for (int i = first; i < last; ++i)
      running.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, fn, i));
    for (auto& f : running) out.push_back(f.get());
  }
  return out;
}

RunConfig load_config(const Options& opt) {
  RunConfig cfg = opt.config_path.empty() ? parse_run_config("") : parse_run_config(read_text(opt.config_path));
  if (opt.seed) cfg.seed = cfg.corpus.seed = *opt.seed;
  if (opt.jobs) {
    if (*opt.jobs < 1) throw InvalidConfig("--jobs must be at least 1");
    cfg.jobs = cfg.experiment.jobs = *opt.jobs;
  }
  if (!opt.corpus_dir.empty()) cfg.corpus_dir = opt.corpus_dir;
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InvalidInput("cannot create directory " + dir.string());
}

fs::path reference_path(const fs::path& corpus, const std::string& id) { return corpus / (id + ".ref.ppgf"); }

std::vector<ManifestEntry> load_manifest(const fs::path& corpus) {
  if (!fs::exists(corpus / kManifest)) throw InvalidInput("no corpus manifest in " + corpus.string());
  return parse_manifest(read_text(corpus / kManifest));
}

std::vector<PreparedSubject> load_prepared(const fs::path& corpus) {
  std::vector<PreparedSubject> out;
  for (const ManifestEntry& e : load_manifest(corpus)) {
    PreparedSubject s;
    s.record = load_record(corpus / e.file);
    const fs::path ref = reference_path(corpus, e.subject_id);
    if (!fs::exists(ref)) throw InvalidInput("missing reference for " + e.subject_id + "; run prepare-reference first");
    s.reference = from_reference_file(decode_record_file(read_file(ref)));
    if (s.reference.reference.signal.size() != s.record.size())
      throw FormatError("reference length of " + e.subject_id + " differs from its record");
    out.push_back(std::move(s));
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, ','))
    if (!part.empty()) out.push_back(part);
  return out;
}

std::string folds_to_text(const FoldPlan& plan) {
  std::string s = "fold\ttest\tval\ttrain\n";
  for (std::size_t f = 0; f < plan.folds.size(); ++f)
    s += std::to_string(f) + "\t" + join(plan.folds[f].test) + "\t" + plan.folds[f].val + "\t" +
         join(plan.folds[f].train) + "\n";
  return s;
}

FoldPlan parse_folds(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "fold\ttest\tval\ttrain") throw FormatError("fold file header missing");
  FoldPlan plan;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string index, test, val, train;
    if (!std::getline(fields, index, '\t') || !std::getline(fields, test, '\t') ||
        !std::getline(fields, val, '\t') || !std::getline(fields, train, '\t'))
      throw FormatError("malformed fold line: " + line);
    plan.folds.push_back({split(test), val, split(train)});
  }
  return plan;
}

fs::path fold_checkpoint(const fs::path& dir, std::size_t f) { return dir / ("fold" + std::to_string(f) + ".ppgm"); }

int cmd_synth(const Options& opt, std::ostream& err) {
  const RunConfig cfg = load_config(opt);
  const fs::path out = opt.out_dir.empty() ? fs::path(cfg.corpus_dir) : fs::path(opt.out_dir);
  ensure_dir(out);
  const std::vector<SubjectProfile> profiles = default_corpus_profiles(cfg.corpus);
  const auto entries = parallel_map(static_cast<int>(profiles.size()), cfg.jobs, [&](int i) {
    const MultiChannelRecord rec = generate_subject(profiles[i]);
    ManifestEntry e{rec.subject_id, rec.subject_id + ".ppgf", rec.size(), rec.fs()};
    save_record(out / e.file, rec);
    return e;
  });
  write_text_atomic(out / kManifest, manifest_to_text(entries));
  err << "wrote " << entries.size() << " records to " << out.string() << "\n";
  return kExitOk;
}

int cmd_prepare_reference(const Options& opt, std::ostream& err) {
  const RunConfig cfg = load_config(opt);
  const fs::path corpus(cfg.corpus_dir);
  const std::vector<ManifestEntry> entries = load_manifest(corpus);
  const auto failures = parallel_map(static_cast<int>(entries.size()), cfg.jobs, [&](int i) -> std::string {
    const ManifestEntry& e = entries[i];
    const MultiChannelRecord rec = load_record(corpus / e.file);
    try {
      const PreparedReference ref = prepare_reference(rec, cfg.templates, cfg.pan_tompkins);
      write_file_atomic(reference_path(corpus, e.subject_id), encode_record_file(to_reference_file(e.subject_id, ref)));
      return {};
    } catch (const InvalidInput&) {
      throw;
    } catch (const Error& ex) {
      return e.subject_id + ": " + ex.what();
    }
  });
  int failed = 0;
  for (const std::string& f : failures)
    if (!f.empty()) {
      err << "reference failed for " << f << "\n";
      ++failed;
    }
  err << "prepared " << entries.size() - failed << " of " << entries.size() << " references\n";
  return failed ? kExitPartial : kExitOk;
}

int cmd_train(const Options& opt, std::ostream& err) {
  const RunConfig cfg = load_config(opt);
  if (opt.out_dir.empty()) throw InvalidInput("train needs --out");
  const std::vector<PreparedSubject> corpus = load_prepared(cfg.corpus_dir);
  std::vector<std::string> ids;
  for (const auto& s : corpus) ids.push_back(s.record.subject_id);
  const FoldPlan plan = make_folds(ids, cfg.seed, cfg.n_folds);
  const fs::path out(opt.out_dir);
  ensure_dir(out);
  write_text_atomic(out / "config.txt", run_config_to_text(cfg));
  write_text_atomic(out / kFoldsFile, folds_to_text(plan));

  const int n_folds = cfg.experiment.max_folds > 0 ? std::min<int>(cfg.experiment.max_folds, plan.folds.size())
                                                   : static_cast<int>(plan.folds.size());
  struct Trained {
    std::optional<FoldOutcome> outcome;
    std::optional<TrainingHistory> diverged;
    std::string what;
  };
  const auto results = parallel_map(n_folds, cfg.jobs, [&](int f) {
    Trained t;
    const bool verbose = cfg.jobs == 1;
    EpochCallback progress;
    if (verbose)
      progress = [&err, f](const EpochRecord& e) {
        err << "fold " << f << " epoch " << e.epoch << " train " << e.train_l1 << " val " << e.val_l1
            << " lr " << e.learning_rate << "\n";
      };
    try {
      t.outcome = train_fold(corpus, plan.folds[f], f, cfg.experiment, fold_seed(cfg.seed, f), progress);
    } catch (const TrainingDiverged& ex) {
      t.diverged = ex.history();
      t.what = ex.what();
    }
    return t;
  });
  int status = kExitOk;
  for (int f = 0; f < n_folds; ++f) {
    const Trained& t = results[f];
    const fs::path history = out / ("fold" + std::to_string(f) + ".history.tsv");
    if (t.diverged) {
      write_text_atomic(history, history_to_text(*t.diverged));
      err << "fold " << f << " diverged: " << t.what << "\n";
      status = kExitNumeric;
      continue;
    }
    save_checkpoint(fold_checkpoint(out, f), t.outcome->model);
    write_text_atomic(history, history_to_text(t.outcome->history));
    err << "fold " << f << ": best epoch " << t.outcome->history.best_epoch << ", val L1 "
        << t.outcome->history.best_val_l1 << "\n";
  }
  return status;
}

/// Models keyed by the subjects they may be applied to.
struct ModelSet {
  FoldPlan plan;
  std::vector<std::optional<FusionModel<float>>> models;  // per fold
  std::optional<FusionModel<float>> single;
};

ModelSet load_models(const std::string& checkpoint) {
  if (checkpoint.empty()) throw InvalidInput("--checkpoint is required");
  ModelSet set;
  const fs::path p(checkpoint);
  if (fs::is_regular_file(p)) {
    set.single = load_checkpoint(p);
    return set;
  }
  if (!fs::exists(p / kFoldsFile)) throw InvalidInput("no checkpoint at " + checkpoint);
  set.plan = parse_folds(read_text(p / kFoldsFile));
  bool any = false;
  for (std::size_t f = 0; f < set.plan.folds.size(); ++f) {
    if (fs::exists(fold_checkpoint(p, f))) {
      set.models.push_back(load_checkpoint(fold_checkpoint(p, f)));
      any = true;
    } else {
      set.models.emplace_back();
    }
  }
  if (!any) throw InvalidInput("no fold checkpoints in " + checkpoint);
  return set;
}

int cmd_fuse(const Options& opt, std::ostream& err) {
  const RunConfig cfg = load_config(opt);
  if (opt.out_dir.empty()) throw InvalidInput("fuse needs --out");
  const ModelSet models = load_models(opt.checkpoint);
  const fs::path corpus(cfg.corpus_dir);
  const std::vector<ManifestEntry> entries = load_manifest(corpus);
  const fs::path out(opt.out_dir);
  ensure_dir(out);
  const auto written = parallel_map(static_cast<int>(entries.size()), cfg.jobs, [&](int i) {
    const ManifestEntry& e = entries[i];
    const FusionModel<float>* model = models.single ? &*models.single : nullptr;
    if (!model) {
      const int f = models.plan.fold_of(e.subject_id);
      if (f >= 0 && models.models[f]) model = &*models.models[f];
    }
    if (!model) return false;
    const MultiChannelRecord rec = load_record(corpus / e.file);
    const TimeSeries fused = fuse(*model, rec);
    write_file_atomic(out / (e.subject_id + ".fused.ppgf"),
                      encode_record_file(to_series_file(e.subject_id, "fused", fused)));
    return true;
  });
  int n = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (written[i])
      ++n;
    else
      err << "no model tests " << entries[i].subject_id << "; skipped\n";
  }
  err << "fused " << n << " records\n";
  return kExitOk;
}

int cmd_eval(const Options& opt, std::ostream& out_stream, std::ostream& err) {
  const RunConfig cfg = load_config(opt);
  if (opt.out_dir.empty()) throw InvalidInput("eval needs --out");
  const ModelSet models = load_models(opt.checkpoint);
  if (models.single) throw InvalidInput("eval needs a training output directory, not a single checkpoint");
  const std::vector<PreparedSubject> corpus = load_prepared(cfg.corpus_dir);
  std::vector<int> folds;
  for (std::size_t f = 0; f < models.models.size(); ++f)
    if (models.models[f]) folds.push_back(static_cast<int>(f));
  const auto rows = parallel_map(static_cast<int>(folds.size()), cfg.jobs, [&](int i) {
    const int f = folds[i];
    return evaluate_fold(corpus, models.plan.folds[f], *models.models[f], cfg.experiment.eval);
  });
  std::vector<SubjectMetrics> all;
  for (const auto& r : rows) all.insert(all.end(), r.begin(), r.end());
  const EvaluationReport report = assemble_report(std::move(all));
  const fs::path out(opt.out_dir);
  ensure_dir(out);
  write_text_atomic(out / "report.tsv", report_tsv(report));
  const std::string table = report_table(report);
  write_text_atomic(out / "report.txt", table);
  out_stream << table;
  err << "evaluated " << report.subjects.size() << " subjects over " << folds.size() << " folds\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-wavelength PPG fusion pipeline"};
  app.require_subcommand(1);
  Options opt;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Run configuration (key = value)");
    sub->add_option("--seed", opt.seed, "Seed overriding the configuration");
    sub->add_option("--jobs", opt.jobs, "Parallel workers");
    sub->add_option("--corpus", opt.corpus_dir, "Corpus directory overriding the configuration");
  };
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  CLI::App* prepare = app.add_subcommand("prepare-reference", "Synthesize reference signals next to the records");
  CLI::App* train = app.add_subcommand("train", "Train one model per fold");
  CLI::App* fuse_cmd = app.add_subcommand("fuse", "Fuse records with trained models");
  CLI::App* eval = app.add_subcommand("eval", "Evaluate trained models on their test subjects");
  for (CLI::App* sub : {synth, prepare, train, fuse_cmd, eval}) common(sub);
  for (CLI::App* sub : {synth, train, fuse_cmd, eval}) sub->add_option("--out", opt.out_dir, "Output directory");
  for (CLI::App* sub : {fuse_cmd, eval})
    sub->add_option("--checkpoint", opt.checkpoint, "Checkpoint file or training output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream msg, diag;
    const int code = app.exit(e, msg, diag);
    out << msg.str();
    err << diag.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(opt, err);
    if (*prepare) return cmd_prepare_reference(opt, err);
    if (*train) return cmd_train(opt, err);
    if (*fuse_cmd) return cmd_fuse(opt, err);
    return cmd_eval(opt, out, err);
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidConfig& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitPartial;
  }
}

}  // namespace ppgfusion
