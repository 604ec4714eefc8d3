#pragma once

#include "ppgfusion/signal.hpp"

#include <vector>

namespace ppgfusion {

enum class BeatSource { DetectedPanTompkins, SyntheticGroundTruth };

/// Strictly increasing R-peak times in seconds.
struct BeatAnnotation {
  std::vector<double> r_peak_times;
  BeatSource source = BeatSource::DetectedPanTompkins;

  std::size_t size() const { return r_peak_times.size(); }
  bool empty() const { return r_peak_times.empty(); }
  void validate() const;
};

/// Classic Pan-Tompkins constants.
struct PanTompkinsConfig {
  double band_lo_hz = 5.0;
  double band_hi_hz = 15.0;
  double integration_window_s = 0.150;
  double refractory_s = 0.200;
  double searchback_factor = 1.66;
  int rr_average_beats = 8;
  double learning_period_s = 2.0;
  /// R time is moved to the bandpassed ECG maximum within this radius.
  double refine_radius_s = 0.100;
  double min_fs_hz = 100.0;
  double min_duration_s = 5.0;
};

struct TimeSpan {
  double begin = 0.0;
  double end = 0.0;
  bool contains(double t) const { return t >= begin && t <= end; }
};

/// Pan-Tompkins QRS detection: 5-15 Hz bandpass, 5-point derivative,
/// squaring, moving-window integration, adaptive thresholds with refractory
/// period and searchback. Returns an empty annotation when nothing is found.
BeatAnnotation detect_r_peaks(const TimeSeries& ecg, const PanTompkinsConfig& cfg = {});

/// Throws InsufficientBeats with fewer than two peaks.
std::vector<double> rr_intervals(const BeatAnnotation& ann);

/// 60 / mean of the R-R intervals lying fully inside `section`.
double reference_hr(const BeatAnnotation& ann, TimeSpan section);

}  // namespace ppgfusion
