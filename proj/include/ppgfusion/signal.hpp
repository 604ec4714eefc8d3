#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ppgfusion/error.hpp"

namespace ppgfusion {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Uniformly sampled real-valued signal. `t0` is the time of the first sample
/// in seconds from the recording origin.
struct TimeSeries {
  Eigen::VectorXd samples;
  double fs = 128.0;
  double t0 = 0.0;

  TimeSeries() = default;
  TimeSeries(Eigen::VectorXd s, double fs_hz, double start = 0.0);

  Index size() const { return samples.size(); }
  bool empty() const { return samples.size() == 0; }
  double duration() const { return static_cast<double>(samples.size()) / fs; }
  double time_at(Index i) const { return t0 + static_cast<double>(i) / fs; }

  /// Samples [begin, end); the slice's t0 is shifted accordingly.
  TimeSeries slice(Index begin, Index end) const;
};

enum class PpgChannel { Green = 0, Red = 1, Ir = 2 };

inline constexpr std::array<PpgChannel, 3> kPpgChannels{PpgChannel::Green, PpgChannel::Red,
                                                        PpgChannel::Ir};

const char* channel_name(PpgChannel c);

/// Known-truth annotations; only the synthetic generator fills these in.
struct GroundTruth {
  std::vector<double> r_peak_times;
  Eigen::VectorXd clean_ppg;
};

/// Synchronized green/red/infrared PPG plus ECG for one subject.
struct MultiChannelRecord {
  std::string subject_id;
  TimeSeries green;
  TimeSeries red;
  TimeSeries ir;
  TimeSeries ecg;
  std::optional<GroundTruth> truth;

  const TimeSeries& ppg(PpgChannel c) const;
  TimeSeries& ppg(PpgChannel c);

  Index size() const { return green.size(); }
  double fs() const { return green.fs; }
  double duration() const { return green.duration(); }

  /// Throws InvalidInput unless all four channels share fs, t0 and length.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Statistics on Eigen expressions.

template <typename Derived>
double mean_of(const Eigen::MatrixBase<Derived>& x) {
  return static_cast<double>(x.mean());
}

/// Population (1/N) standard deviation.
template <typename Derived>
double population_std(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = x.mean();
  const auto centered = (x.array() - m).template cast<double>();
  return std::sqrt(centered.square().sum() / static_cast<double>(x.size()));
}

inline constexpr double kDegenerateStd = 1e-12;

/// Zero mean, unit population standard deviation. Throws DegenerateSignal on
/// (near-)constant input.
template <typename Derived>
Vector<typename Derived::Scalar> zscore(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() < 2) throw InvalidInput("zscore needs at least 2 samples");
  const double sd = population_std(x);
  if (!(sd >= kDegenerateStd)) throw DegenerateSignal("zscore of a constant signal");
  const Scalar m = x.mean();
  return ((x.array() - m) / static_cast<Scalar>(sd)).matrix();
}

/// Like zscore, but a degenerate input maps to all zeros.
template <typename Derived>
Vector<typename Derived::Scalar> zscore_or_zero(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() < 2 || !(population_std(x) >= kDegenerateStd))
    return Vector<Scalar>::Zero(x.size());
  return zscore(x);
}

/// Pearson product-moment correlation.
template <typename DerivedX, typename DerivedY>
double pearson(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  if (x.size() != y.size()) throw InvalidInput("pearson: length mismatch");
  if (x.size() < 2) throw InvalidInput("pearson needs at least 2 samples");
  const Eigen::ArrayXd a = x.template cast<double>().array() - mean_of(x.template cast<double>());
  const Eigen::ArrayXd b = y.template cast<double>().array() - mean_of(y.template cast<double>());
  const double saa = a.square().sum();
  const double sbb = b.square().sum();
  const double n = static_cast<double>(x.size());
  if (std::sqrt(saa / n) < kDegenerateStd || std::sqrt(sbb / n) < kDegenerateStd)
    throw DegenerateSignal("pearson of a constant signal");
  const double r = (a * b).sum() / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// DSP primitives.

/// Linear interpolation onto `target_len` evenly spaced points spanning the
/// same first and last sample.
Eigen::VectorXd resample(const Eigen::Ref<const Eigen::VectorXd>& x, Index target_len);

/// Resample keeping the duration: fs scales by target_len / len(x).
TimeSeries resample(const TimeSeries& x, Index target_len);

TimeSeries zscore(const TimeSeries& x);

/// Centered moving average over `window` samples; edges average over the
/// part of the window that lies inside the signal.
Eigen::VectorXd moving_average(const Eigen::Ref<const Eigen::VectorXd>& x, Index window);
TimeSeries moving_average(const TimeSeries& x, double window_s);

/// Zero-phase Butterworth bandpass (see butterworth.hpp).
TimeSeries bandpass(const TimeSeries& x, double lo_hz, double hi_hz);

}  // namespace ppgfusion
