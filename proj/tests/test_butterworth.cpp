#include "ppgfusion/butterworth.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <numbers>

using namespace ppgfusion;

namespace {

constexpr double kFs = 128.0;
constexpr double kProbes[] = {0.3, 0.6, 1.5, 3.3, 8.0};

Eigen::VectorXd sine(Eigen::Index n, double f) {
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / kFs);
  return x;
}

double rms(const Eigen::VectorXd& x) { return std::sqrt(x.squaredNorm() / static_cast<double>(x.size())); }

}  // namespace

TEST_CASE("biquad magnitudes match the analytic Butterworth response") {
  const Biquad lp = butterworth_lowpass(3.3, kFs);
  const Biquad hp = butterworth_highpass(0.6, kFs);
  CHECK(lp.dc_gain() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(hp.b0 + hp.b1 + hp.b2) < 1e-12);
  CHECK(lp.magnitude(3.3, kFs) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
  CHECK(hp.magnitude(0.6, kFs) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
  for (double f : kProbes) {
    CHECK(lp.magnitude(f, kFs) == doctest::Approx(std::sqrt(oracle::lowpass_mag2(f, 3.3, kFs))).epsilon(1e-9));
    CHECK(hp.magnitude(f, kFs) == doctest::Approx(std::sqrt(oracle::highpass_mag2(f, 0.6, kFs))).epsilon(1e-9));
  }
  const ButterworthBandpass bp(0.6, 3.3, kFs);
  for (double f : kProbes)
    CHECK(bp.magnitude(f) * bp.magnitude(f) ==
          doctest::Approx(oracle::bandpass_zero_phase_gain(f, 0.6, 3.3, kFs)).epsilon(1e-9));
}

TEST_CASE("zero-phase filtering applies the squared magnitude at probe frequencies") {
  const ButterworthBandpass bp(0.6, 3.3, kFs);
  const Eigen::Index n = 128 * 120;
  for (double f : kProbes) {
    const Eigen::VectorXd x = sine(n, f);
    const Eigen::VectorXd y = bp.filter_zero_phase(x);
    const double measured = rms(y.segment(n / 4, n / 2)) / rms(x.segment(n / 4, n / 2));
    CAPTURE(f);
    CHECK(measured == doctest::Approx(oracle::bandpass_zero_phase_gain(f, 0.6, 3.3, kFs)).epsilon(0.02));
  }
}

TEST_CASE("zero-phase filtering does not shift a passband sine") {
  const ButterworthBandpass bp(0.6, 3.3, kFs);
  const Eigen::Index n = 128 * 60;
  const Eigen::VectorXd x = sine(n, 1.2);
  const Eigen::VectorXd y = bp.filter_zero_phase(x);
  // Cross-correlation between input and output peaks at lag 0.
  double best = -1e300;
  int best_lag = 99;
  for (int lag = -10; lag <= 10; ++lag) {
    double acc = 0.0;
    for (Eigen::Index i = 1000; i < n - 1000; ++i) acc += x[i] * y[i + lag];
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("band edges are validated and short inputs handled") {
  CHECK_THROWS_AS(ButterworthBandpass(0.0, 3.3, kFs), InvalidInput);
  CHECK_THROWS_AS(ButterworthBandpass(3.3, 0.6, kFs), InvalidInput);
  CHECK_THROWS_AS(ButterworthBandpass(0.6, 64.0, kFs), InvalidInput);
  const ButterworthBandpass bp(0.6, 3.3, kFs);
  CHECK(bp.settling_length() > 0);
  // An 8 s section is shorter than three settling lengths; it must still
  // filter to the same length with finite output.
  const Eigen::VectorXd y = bp.filter_zero_phase(sine(1024, 1.0));
  CHECK(y.size() == 1024);
  CHECK(y.allFinite());
  CHECK_THROWS_AS(bp.filter_zero_phase(Eigen::VectorXd::Ones(3)), InvalidInput);
}
