#include "ppgfusion/fusion.hpp"
#include "ppgfusion/synth.hpp"
#include "ppgfusion/training.hpp"

#include <doctest.h>

using namespace ppgfusion;

namespace {

UNetConfig desk_config(int base = 8) {
  UNetConfig c;
  c.base_channels = base;
  return c;
}

MultiChannelRecord test_subject(double duration_s = 300.0) {
  SubjectProfile p;
  p.seed = 21;
  p.duration_s = duration_s;
  p.hr_walk_sd_bpm = 1.0;
  return generate_subject(p);
}

}  // namespace

TEST_CASE("plateau schedule bookkeeping") {
  PlateauSchedule s(1e-3, 50, 0.5, 75);
  CHECK(s.observe(1.0).improved);
  int halved_at = 0, stopped_at = 0;
  for (int k = 1; k <= 100 && !stopped_at; ++k) {
    const auto d = s.observe(1.0);
    CHECK_FALSE(d.improved);
    if (d.lr_reduced && !halved_at) halved_at = k;
    if (d.stop) stopped_at = k;
  }
  CHECK(halved_at == 50);
  CHECK(stopped_at == 75);
  CHECK(s.learning_rate() == doctest::Approx(5e-4));

  // Any strict improvement resets both counters.
  PlateauSchedule r(1e-3, 3, 0.5, 5);
  r.observe(1.0);
  r.observe(1.0);
  r.observe(1.0);
  CHECK(r.observe(0.999).improved);
  CHECK_FALSE(r.observe(0.999).lr_reduced);
  CHECK_FALSE(r.observe(0.999).lr_reduced);
  CHECK(r.observe(0.999).lr_reduced);
  CHECK_FALSE(r.observe(0.999).stop);
  CHECK(r.observe(0.999).stop);
}

TEST_CASE("frozen-loss fixture: halve at the 50th flat epoch, stop at the 75th") {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.window_len = 64;
  const std::vector<WindowExample<float>> data{{Tensor<float>::Zero(3, 64), Tensor<float>::Zero(1, 64)}};
  const TrainingHyperparams hyper;
  const TrainResult<float> r = train<float>(data, data, cfg, hyper, 1);
  const auto& e = r.history.epochs;
  REQUIRE(e.size() == 76);
  CHECK(e[0].improved);
  for (std::size_t i = 1; i < e.size(); ++i) CHECK_FALSE(e[i].improved);
  // Epoch k (1-based) is the (k-1)-th epoch without improvement.
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(e[i].lr_reduced == (e[i].epoch == 51));
  CHECK(e[50].learning_rate == doctest::Approx(1e-3));
  CHECK(e[51].learning_rate == doctest::Approx(5e-4));
  CHECK(e.back().learning_rate == doctest::Approx(5e-4));
  CHECK(r.history.early_stopped);
  CHECK(r.history.best_epoch == 1);
  CHECK(r.model.meta.epochs_run == 76);
}

TEST_CASE("a single window can be memorized") {
  const MultiChannelRecord rec = test_subject();
  const PreparedReference prep = prepare_reference(rec);
  WindowSelection sel;
  sel.max_windows = 1;
  const auto windows = make_training_windows<float>(rec, prep, sel);
  REQUIRE(windows.size() == 1);
  TrainingHyperparams hyper;
  hyper.max_epochs = 500;
  hyper.stop_patience = 500;
  hyper.plateau_patience = 500;
  const TrainResult<float> r = train<float>(windows, windows, desk_config(), hyper, 3);
  CHECK(r.history.best_val_l1 < 0.05);
  // The returned parameters are the best snapshot.
  const UNet<float> net(r.model.config);
  CHECK(mean_l1<float>(net, r.model.params, windows) == doctest::Approx(r.history.best_val_l1).epsilon(1e-6));
}

TEST_CASE("identity-recoverable task generalizes to held-out windows") {
  const MultiChannelRecord rec = test_subject(600.0);
  std::vector<WindowExample<float>> train_set, held_out;
  int k = 0;
  for (Index s = 0; s + 1024 <= rec.size(); s += 512, ++k) {
    WindowExample<float> ex;
    ex.input = normalized_window<float>(rec, s, 1024);
    ex.target = ex.input.row(0);
    (k % 4 == 3 ? held_out : train_set).push_back(std::move(ex));
  }
  TrainingHyperparams hyper;
  hyper.max_epochs = 40;
  hyper.batch_size = 16;
  const TrainResult<float> r = train<float>(train_set, held_out, desk_config(4), hyper, 5);
  double worst = 1.0;
  for (const auto& ex : held_out)
    worst = std::min(worst, pearson(forward(r.model, ex.input).row(0).transpose(), ex.target.row(0).transpose()));
  CHECK(worst > 0.95);
}

TEST_CASE("training is deterministic given the seed") {
  const MultiChannelRecord rec = test_subject();
  const PreparedReference prep = prepare_reference(rec);
  WindowSelection sel;
  sel.max_windows = 12;
  const auto windows = make_training_windows<float>(rec, prep, sel);
  const std::vector<WindowExample<float>> tr(windows.begin(), windows.begin() + 9);
  const std::vector<WindowExample<float>> va(windows.begin() + 9, windows.end());
  TrainingHyperparams hyper;
  hyper.max_epochs = 4;
  hyper.batch_size = 4;
  std::vector<int> seen;
  const auto a = train<float>(tr, va, desk_config(4), hyper, 9, [&](const EpochRecord& e) { seen.push_back(e.epoch); });
  const auto b = train<float>(tr, va, desk_config(4), hyper, 9);
  CHECK(seen == std::vector<int>{1, 2, 3, 4});
  CHECK(a.model.params == b.model.params);
  REQUIRE(a.history.epochs.size() == b.history.epochs.size());
  for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
    CHECK(a.history.epochs[i].train_l1 == b.history.epochs[i].train_l1);
    CHECK(a.history.epochs[i].val_l1 == b.history.epochs[i].val_l1);
  }
  const auto c = train<float>(tr, va, desk_config(4), hyper, 10);
  CHECK(a.model.params != c.model.params);
}

TEST_CASE("training errors") {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.window_len = 64;
  const std::vector<WindowExample<float>> data{{Tensor<float>::Ones(3, 64), Tensor<float>::Ones(1, 64)}};
  const std::vector<WindowExample<float>> none;
  CHECK_THROWS_AS(train<float>(none, data, cfg, {}, 1), InvalidInput);
  CHECK_THROWS_AS(train<float>(data, none, cfg, {}, 1), InvalidInput);
  TrainingHyperparams bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train<float>(data, data, cfg, bad, 1), InvalidConfig);

  std::vector<WindowExample<float>> poisoned = data;
  poisoned[0].target(0, 5) = std::numeric_limits<float>::quiet_NaN();
  TrainingHyperparams hyper;
  hyper.max_epochs = 5;
  try {
    train<float>(poisoned, data, cfg, hyper, 1);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    REQUIRE(e.history().epochs.size() == 1);
    CHECK(e.history().epochs[0].epoch == 1);
  }
}

TEST_CASE("Adam matches a hand-computed first step") {
  Adam<double> adam(2, 0.9, 0.999, 1e-8);
  Eigen::VectorXd p(2), g(2);
  p << 1.0, -2.0;
  g << 0.5, -3.0;
  adam.step(p, g, 0.1);
  // The bias-corrected first step is lr * g / (|g| + eps).
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.1 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
  CHECK(adam.steps() == 1);
}

TEST_CASE("L1 loss and its gradient") {
  Tensor<double> y(1, 4), t(1, 4), g;
  y << 1.0, 2.0, 3.0, 4.0;
  t << 0.0, 2.5, 3.0, 2.0;
  CHECK(l1_loss<double>(y, t, &g, 2.0) == doctest::Approx(3.5 / 4));
  CHECK(g(0, 0) == doctest::Approx(0.5));
  CHECK(g(0, 1) == doctest::Approx(-0.5));
  CHECK(g(0, 2) == 0.0);
}
