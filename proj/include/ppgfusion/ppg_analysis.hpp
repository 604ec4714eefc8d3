#pragma once

#include "ppgfusion/signal.hpp"

#include <optional>
#include <span>
#include <vector>

namespace ppgfusion {

struct PulseDetectorConfig {
  double band_lo_hz = 0.6;
  double band_hi_hz = 3.3;
  double ma_window_s = 0.75;
  /// Offsets c * sigma for c = 0, step, 2*step, ..., max.
  double offset_step = 0.1;
  double offset_max = 2.0;
  double min_duration_s = 4.0;
};

/// Detected pulse peaks. `amplitudes` are read from the bandpassed signal and
/// `offset_used` is in units of its standard deviation.
struct PeakSet {
  std::vector<double> peak_times;
  std::vector<double> amplitudes;
  double offset_used = 0.0;
  double ma_window_s = 0.0;

  std::size_t size() const { return peak_times.size(); }
};

/// Bandpass, then one peak per region where the signal exceeds its moving
/// average plus an offset; the offset minimizing the variance of the peak
/// intervals wins, ties going to the smaller offset. Throws NoPeaksFound when
/// no offset yields three peaks.
PeakSet detect_pulse_peaks(const TimeSeries& x, const PulseDetectorConfig& cfg = {});

/// Repeatedly drops the lower peak of the closest pair while any interval
/// implies a rate above max_hr_bpm.
PeakSet prune_peaks(PeakSet peaks, double max_hr_bpm = 185.0);

struct IbiSeries {
  std::vector<double> intervals;
  std::vector<bool> accepted;

  std::size_t accepted_count() const;
};

/// Accepts an interval iff it lies in some run of `run` consecutive intervals
/// with min / max > min_ratio.
IbiSeries filter_ibis(std::span<const double> intervals, double min_ratio = 0.51, int run = 5);

/// 60 / mean of the accepted intervals. Throws NoHrAvailable.
double estimate_hr(const IbiSeries& ibis);

struct HrPipelineConfig {
  PulseDetectorConfig detector;
  double max_hr_bpm = 185.0;
  double ibi_min_ratio = 0.51;
  int ibi_run = 5;
};

/// detect -> prune -> interval filter -> estimate. Throws NoPeaksFound or
/// NoHrAvailable.
double ppg_heart_rate(const TimeSeries& x, const HrPipelineConfig& cfg = {});

/// ppg_heart_rate with failures mapped to nullopt.
std::optional<double> try_ppg_heart_rate(const TimeSeries& x, const HrPipelineConfig& cfg = {});

}  // namespace ppgfusion
