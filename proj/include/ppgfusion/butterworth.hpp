#pragma once

#include <Eigen/Dense>

#include <array>

namespace ppgfusion {

/// Second-order section in transposed direct form II, a0 normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
  /// |H(e^{j 2 pi f / fs})|
  double magnitude(double f_hz, double fs_hz) const;
};

/// Second-order Butterworth sections from the bilinear transform, prewarped
/// so the -3 dB point lands exactly on `cutoff_hz`.
Biquad butterworth_lowpass(double cutoff_hz, double fs_hz);
Biquad butterworth_highpass(double cutoff_hz, double fs_hz);

/// High-pass at lo_hz cascaded with low-pass at hi_hz, applied forward and
/// backward. The effective magnitude response is the square of the cascade's.
class ButterworthBandpass {
 public:
  ButterworthBandpass(double lo_hz, double hi_hz, double fs_hz);

  double lo_hz() const { return lo_hz_; }
  double hi_hz() const { return hi_hz_; }
  double fs_hz() const { return fs_hz_; }
  const std::array<Biquad, 2>& sections() const { return sections_; }

  /// Single-pass magnitude of the cascade.
  double magnitude(double f_hz) const;

  /// Samples until the single-pass impulse response stays below 1e-6 of its peak.
  Eigen::Index settling_length() const { return settling_; }

  /// Forward-backward filtering with odd-reflection padding of
  /// min(3 * settling_length, n - 1) samples and steady-state initial
  /// conditions.
  Eigen::VectorXd filter_zero_phase(const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  double lo_hz_, hi_hz_, fs_hz_;
  std::array<Biquad, 2> sections_;
  Eigen::Index settling_ = 0;
};

}  // namespace ppgfusion
