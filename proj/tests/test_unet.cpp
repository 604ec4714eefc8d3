#include "ppgfusion/fusion.hpp"
#include "ppgfusion/synth.hpp"
#include "ppgfusion/unet.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace ppgfusion;

namespace {

UNetConfig small_config() {
  UNetConfig c;
  c.depth = 2;
  c.base_channels = 4;
  c.window_len = 64;
  return c;
}

template <typename Scalar>
Tensor<Scalar> random_tensor(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  Tensor<Scalar> t(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(dist(rng));
  return t;
}

// 0.5 * sum (y - target)^2
double smooth_loss(const UNet<double>& net, const Eigen::VectorXd& p, const Tensor<double>& x,
                   const Tensor<double>& target) {
  return 0.5 * (net.forward(p, x) - target).squaredNorm();
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace

TEST_CASE("configuration and layout") {
  UNetConfig c;
  CHECK(c.level_channels() == std::vector<int>{32, 64, 128, 256});
  c.window_len = 1000;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  CHECK_THROWS_AS(UNet<float>{c}, InvalidConfig);

  const UNetLayout layout{UNetConfig{}};
  Index total = 0;
  for (const TensorSpec& t : layout.tensors()) {
    CHECK(t.offset == total);
    total += t.size();
  }
  CHECK(total == layout.parameter_count());
  CHECK(layout.tensors().front().name == "down0.weight");
  CHECK(layout.tensors().front().shape == std::vector<Index>{15, 3, 32});
  CHECK(layout.tensors().back().name == "output.bias");
  CHECK(layout.tensors().back().shape == std::vector<Index>{1});
  // Re-deriving the layout from the configuration alone gives the same shapes.
  const UNetLayout again{UNetConfig{}};
  for (std::size_t i = 0; i < layout.tensors().size(); ++i) CHECK(layout.tensors()[i].shape == again.tensors()[i].shape);
}

TEST_CASE("initialization is deterministic and the forward pass is finite") {
  const UNetConfig cfg;
  const UNet<float> net(cfg);
  const auto a = net.initialize(7);
  const auto b = net.initialize(7);
  const auto c = net.initialize(8);
  CHECK(a == b);
  CHECK(a != c);
  const UNetLayout& layout = net.layout();
  for (const TensorSpec& t : layout.tensors()) {
    const auto v = a.segment(t.offset, t.size());
    if (t.name.ends_with(".bias")) {
      CHECK(v.isZero());
    } else {
      const double fan_in = static_cast<double>(t.shape[0] * t.shape[1]);
      CHECK(v.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / fan_in) + 1e-6);
    }
  }
  const Tensor<float> y = net.forward(a, Tensor<float>::Zero(3, 1024));
  CHECK(y.rows() == 1);
  CHECK(y.cols() == 1024);
  CHECK(y.allFinite());

  const Tensor<float> x = random_tensor<float>(3, 1024, 1);
  CHECK(net.forward(a, x) == net.forward(a, x));
  CHECK_THROWS_AS(net.forward(a, Tensor<float>::Zero(3, 512)), InvalidInput);
  CHECK_THROWS_AS(net.forward(a, Tensor<float>::Zero(2, 1024)), InvalidInput);
}

TEST_CASE("forward pass matches a direct-convolution oracle") {
  for (const UNetConfig& cfg : {small_config(), UNetConfig{3, 3, 5, 7, 3, 0.1, 128}}) {
    const UNet<double> net(cfg);
    Eigen::VectorXd p = net.initialize(3);
    // Non-zero biases so they are exercised too.
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (const TensorSpec& t : net.layout().tensors())
      if (t.name.ends_with(".bias"))
        for (Index i = 0; i < t.size(); ++i) p[t.offset + i] = u(rng);
    const Tensor<double> x = random_tensor<double>(3, cfg.window_len, 9);
    const Tensor<double> y = net.forward(p, x);
    const std::vector<double> expect = oracle::unet_forward(cfg, p, x);
    double worst = 0.0;
    for (Index t = 0; t < cfg.window_len; ++t) worst = std::max(worst, std::abs(y(0, t) - expect[t]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("analytic gradients agree with central differences") {
  const UNetConfig cfg = small_config();
  const UNet<double> net(cfg);
  Eigen::VectorXd p = net.initialize(11);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (const TensorSpec& t : net.layout().tensors())
    if (t.name.ends_with(".bias"))
      for (Index i = 0; i < t.size(); ++i) p[t.offset + i] = u(rng);
  const Tensor<double> x = random_tensor<double>(3, 64, 13);
  const Tensor<double> target = random_tensor<double>(1, 64, 14);

  ForwardCache<double> cache;
  const Tensor<double> y = net.forward(p, x, cache);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p.size());
  Tensor<double> grad_x;
  net.backward(p, cache, (y - target).eval(), grad, &grad_x);

  // 100 weights drawn across all tensors, plus every tensor at least once.
  std::vector<Index> picks;
  for (const TensorSpec& t : net.layout().tensors()) picks.push_back(t.offset);
  std::uniform_int_distribution<Index> pick(0, p.size() - 1);
  while (picks.size() < 100 + net.layout().tensors().size()) picks.push_back(pick(rng));

  const double h = 1e-5;
  double worst = 0.0;
  for (Index i : picks) {
    Eigen::VectorXd plus = p, minus = p;
    plus[i] += h;
    minus[i] -= h;
    const double numeric = (smooth_loss(net, plus, x, target) - smooth_loss(net, minus, x, target)) / (2 * h);
    worst = std::max(worst, relative_error(grad[i], numeric));
  }
  CHECK(worst <= 1e-4);

  double worst_x = 0.0;
  for (int k = 0; k < 30; ++k) {
    const Index c = k % 3, t = (k * 7) % 64;
    Tensor<double> xp = x, xm = x;
    xp(c, t) += h;
    xm(c, t) -= h;
    const double numeric = (smooth_loss(net, p, xp, target) - smooth_loss(net, p, xm, target)) / (2 * h);
    worst_x = std::max(worst_x, relative_error(grad_x(c, t), numeric));
  }
  CHECK(worst_x <= 1e-4);
}

TEST_CASE("backward accumulates into the gradient") {
  const UNet<double> net(small_config());
  const Eigen::VectorXd p = net.initialize(2);
  const Tensor<double> x = random_tensor<double>(3, 64, 3);
  const Tensor<double> g = random_tensor<double>(1, 64, 4);
  ForwardCache<double> cache;
  net.forward(p, x, cache);
  Eigen::VectorXd once = Eigen::VectorXd::Zero(p.size());
  net.backward(p, cache, g, once);
  Eigen::VectorXd twice = Eigen::VectorXd::Zero(p.size());
  net.backward(p, cache, g, twice);
  net.backward(p, cache, g, twice);
  CHECK((twice - 2 * once).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fuse window placement and cross-fade") {
  CHECK(fuse_window_starts(1024, 1024) == std::vector<Index>{0});
  CHECK(fuse_window_starts(1536, 1024) == std::vector<Index>{0, 512});
  CHECK(fuse_window_starts(2048, 1024) == std::vector<Index>{0, 512, 1024});
  CHECK(fuse_window_starts(2100, 1024) == std::vector<Index>{0, 512, 1024, 1076});

  const Eigen::VectorXd w = crossfade_weights(1024);
  CHECK((w.array() > 0).all());
  // Two half-overlapping windows: normalized weights on the overlap sum to one,
  // and the overlap starts fully on the first window's side.
  for (Index i = 512; i < 1024; ++i) {
    const double a = w[i], b = w[i - 512];
    CHECK(a / (a + b) + b / (a + b) == doctest::Approx(1.0));
  }
  CHECK(w[512] / (w[512] + w[0]) > 0.99);
  CHECK(w[1023] / (w[1023] + w[511]) < 0.01);
}

TEST_CASE("fuse output") {
  UNetConfig cfg = small_config();
  cfg.window_len = 256;
  SubjectProfile prof;
  prof.duration_s = 60.0;
  const MultiChannelRecord full = generate_subject(prof);

  SUBCASE("a single window equals the network output") {
    MultiChannelRecord rec = full;
    for (TimeSeries* s : {&rec.green, &rec.red, &rec.ir, &rec.ecg}) *s = s->slice(0, 256);
    const FusionModel<double> m = init_model<double>(cfg, 1);
    const TimeSeries y = fuse(m, rec);
    const Tensor<double> direct = forward(m, normalized_window<double>(rec, 0, 256));
    CHECK((y.samples - direct.row(0).transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("two windows blend on their overlap") {
    MultiChannelRecord rec = full;
    for (TimeSeries* s : {&rec.green, &rec.red, &rec.ir, &rec.ecg}) *s = s->slice(0, 384);
    const FusionModel<double> m = init_model<double>(cfg, 1);
    const TimeSeries y = fuse(m, rec);
    const Eigen::VectorXd a = forward(m, normalized_window<double>(rec, 0, 256)).row(0).transpose();
    const Eigen::VectorXd b = forward(m, normalized_window<double>(rec, 128, 256)).row(0).transpose();
    const Eigen::VectorXd w = crossfade_weights(256);
    CHECK((y.samples.head(128) - a.head(128)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((y.samples.tail(128) - b.tail(128)).cwiseAbs().maxCoeff() < 1e-12);
    for (Index i = 128; i < 256; ++i) {
      const double wa = w[i], wb = w[i - 128];
      CHECK(y.samples[i] == doctest::Approx((wa * a[i] + wb * b[i - 128]) / (wa + wb)).epsilon(1e-12));
    }
  }

  SUBCASE("length, fs and per-channel affine invariance") {
    const FusionModel<double> m = init_model<double>(cfg, 4);
    const TimeSeries y = fuse(m, full);
    CHECK(y.size() == full.size());
    CHECK(y.fs == full.fs());
    MultiChannelRecord scaled = full;
    scaled.green.samples = (scaled.green.samples.array() * 37.0 - 1000.0).matrix();
    scaled.red.samples = (scaled.red.samples.array() * 0.01 + 3.0).matrix();
    scaled.ir.samples = (scaled.ir.samples.array() * 2.5).matrix();
    CHECK((fuse(m, scaled).samples - y.samples).cwiseAbs().maxCoeff() < 1e-6);
  }

  SUBCASE("a constant channel becomes zeros") {
    MultiChannelRecord rec = full;
    rec.red.samples.setConstant(4.0);
    const FusionModel<double> m = init_model<double>(cfg, 4);
    const TimeSeries y = fuse(m, rec);
    CHECK(y.samples.allFinite());
    MultiChannelRecord zeroed = full;
    zeroed.red.samples.setZero();
    CHECK((fuse(m, zeroed).samples - y.samples).cwiseAbs().maxCoeff() == 0.0);
    CHECK(normalized_window<double>(rec, 0, 256).row(1).isZero());
  }

  SUBCASE("short records are rejected") {
    MultiChannelRecord rec = full;
    for (TimeSeries* s : {&rec.green, &rec.red, &rec.ir, &rec.ecg}) *s = s->slice(0, 200);
    CHECK_THROWS_AS(fuse(init_model<double>(cfg, 1), rec), InvalidInput);
  }
}
