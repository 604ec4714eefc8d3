#include "ppgfusion/butterworth.hpp"

#include "ppgfusion/error.hpp"

#include <cmath>
#include <complex>
#include <numbers>

namespace ppgfusion {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

// Runs one section in place; the state starts at the steady state for a
// constant input equal to `x[0]`.
void run_section(const Biquad& s, Eigen::VectorXd& x) {
  if (x.size() == 0) return;
  const double x0 = x[0];
  const double y0 = s.dc_gain() * x0;
  double z2 = s.b2 * x0 - s.a2 * y0;
  double z1 = s.b1 * x0 - s.a1 * y0 + z2;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double in = x[i];
    const double out = s.b0 * in + z1;
    z1 = s.b1 * in - s.a1 * out + z2;
    z2 = s.b2 * in - s.a2 * out;
    x[i] = out;
  }
}

}  // namespace

double Biquad::magnitude(double f_hz, double fs_hz) const {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / fs_hz);
  const std::complex<double> z2 = z1 * z1;
  return std::abs((b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2));
}

Biquad butterworth_lowpass(double cutoff_hz, double fs_hz) {
  const double k = std::tan(std::numbers::pi * cutoff_hz / fs_hz);
  const double norm = 1.0 / (1.0 + kSqrt2 * k + k * k);
  Biquad s;
  s.b0 = k * k * norm;
  s.b1 = 2.0 * s.b0;
  s.b2 = s.b0;
  s.a1 = 2.0 * (k * k - 1.0) * norm;
  s.a2 = (1.0 - kSqrt2 * k + k * k) * norm;
  return s;
}

Biquad butterworth_highpass(double cutoff_hz, double fs_hz) {
  const double k = std::tan(std::numbers::pi * cutoff_hz / fs_hz);
  const double norm = 1.0 / (1.0 + kSqrt2 * k + k * k);
  Biquad s;
  s.b0 = norm;
  s.b1 = -2.0 * norm;
  s.b2 = norm;
  s.a1 = 2.0 * (k * k - 1.0) * norm;
  s.a2 = (1.0 - kSqrt2 * k + k * k) * norm;
  return s;
}

ButterworthBandpass::ButterworthBandpass(double lo_hz, double hi_hz, double fs_hz)
    : lo_hz_(lo_hz), hi_hz_(hi_hz), fs_hz_(fs_hz) {
  if (!(fs_hz > 0.0)) throw InvalidInput("bandpass: sampling rate must be positive");
  if (!(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < fs_hz / 2.0))
    throw InvalidInput("bandpass: need 0 < lo < hi < fs/2");
  sections_ = {butterworth_highpass(lo_hz, fs_hz), butterworth_lowpass(hi_hz, fs_hz)};

  // Impulse response of the single-pass cascade until it has decayed for good.
  constexpr Eigen::Index kMaxLen = 1 << 22;
  Eigen::Index chunk = static_cast<Eigen::Index>(8 * fs_hz / lo_hz) + 64;
  for (;;) {
    Eigen::VectorXd h = Eigen::VectorXd::Zero(chunk);
    h[0] = 1.0;
    // Zero initial state: run_section starts from steady state of x[0], so
    // prepend a zero sample.
    Eigen::VectorXd padded(chunk + 1);
    padded << 0.0, h;
    for (const Biquad& s : sections_) run_section(s, padded);
    const Eigen::VectorXd resp = padded.tail(chunk).cwiseAbs();
    const double peak = resp.maxCoeff();
    Eigen::Index last = 0;
    for (Eigen::Index i = chunk - 1; i >= 0; --i) {
      if (resp[i] >= 1e-6 * peak) {
        last = i;
        break;
      }
    }
    if (last < chunk / 2 || chunk >= kMaxLen) {
      settling_ = last + 1;
      break;
    }
    chunk *= 2;
  }
}

double ButterworthBandpass::magnitude(double f_hz) const {
  return sections_[0].magnitude(f_hz, fs_hz_) * sections_[1].magnitude(f_hz, fs_hz_);
}

Eigen::VectorXd ButterworthBandpass::filter_zero_phase(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::Index n = x.size();
  if (n < 4) throw InvalidInput("bandpass: signal too short");
  const Eigen::Index pad = std::min<Eigen::Index>(3 * settling_, n - 1);

  Eigen::VectorXd ext(n + 2 * pad);
  for (Eigen::Index i = 0; i < pad; ++i) {
    ext[i] = 2.0 * x[0] - x[pad - i];
    ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  }
  ext.segment(pad, n) = x;

  for (const Biquad& s : sections_) run_section(s, ext);
  ext.reverseInPlace();
  for (const Biquad& s : sections_) run_section(s, ext);
  ext.reverseInPlace();
  return ext.segment(pad, n);
}

}  // namespace ppgfusion
