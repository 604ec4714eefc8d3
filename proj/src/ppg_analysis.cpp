#include "ppgfusion/ppg_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ppgfusion {

namespace {

// One peak per supra-threshold region; regions whose maximum sits on the
// section edge are not true local maxima and are skipped.
std::vector<Index> region_peaks(const Eigen::VectorXd& y, const Eigen::VectorXd& threshold) {
  std::vector<Index> peaks;
  const Index n = y.size();
  Index i = 0;
  while (i < n) {
    if (!(y[i] > threshold[i])) {
      ++i;
      continue;
    }
    Index best = i;
    Index j = i;
    while (j < n && y[j] > threshold[j]) {
      if (y[j] > y[best]) best = j;
      ++j;
    }
    if (best > 0 && best < n - 1) peaks.push_back(best);
    i = j;
  }
  return peaks;
}

double interval_variance(const std::vector<Index>& peaks) {
  const std::size_t m = peaks.size() - 1;
  double mean = 0.0;
  for (std::size_t k = 0; k < m; ++k) mean += static_cast<double>(peaks[k + 1] - peaks[k]);
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double d = static_cast<double>(peaks[k + 1] - peaks[k]) - mean;
    var += d * d;
  }
  return var / static_cast<double>(m);
}

}  // namespace

PeakSet detect_pulse_peaks(const TimeSeries& x, const PulseDetectorConfig& cfg) {
  if (x.duration() < cfg.min_duration_s) throw InvalidInput("detect_pulse_peaks: section too short");
  if (!(cfg.offset_step > 0.0) || cfg.offset_max < 0.0) throw InvalidConfig("bad offset grid");
  const TimeSeries filtered = bandpass(x, cfg.band_lo_hz, cfg.band_hi_hz);
  const Eigen::VectorXd& y = filtered.samples;
  const double sigma = population_std(y);
  if (!(sigma > kDegenerateStd)) throw NoPeaksFound("flat section");
  const Eigen::VectorXd ma = moving_average(filtered, cfg.ma_window_s).samples;

  const int steps = static_cast<int>(std::floor(cfg.offset_max / cfg.offset_step + 1e-9));
  double best_var = std::numeric_limits<double>::infinity();
  double best_c = 0.0;
  std::vector<Index> best_peaks;
  for (int k = 0; k <= steps; ++k) {
    const double c = k * cfg.offset_step;
    const Eigen::VectorXd threshold = ma.array() + c * sigma;
    std::vector<Index> peaks = region_peaks(y, threshold);
    if (peaks.size() < 3) continue;
    const double var = interval_variance(peaks);
    if (var < best_var) {
      best_var = var;
      best_c = c;
      best_peaks = std::move(peaks);
    }
  }
  if (best_peaks.empty()) throw NoPeaksFound("no offset produced three peaks");

  PeakSet out;
  out.offset_used = best_c;
  out.ma_window_s = cfg.ma_window_s;
  for (Index p : best_peaks) {
    out.peak_times.push_back(x.time_at(p));
    out.amplitudes.push_back(y[p]);
  }
  return out;
}

PeakSet prune_peaks(PeakSet peaks, double max_hr_bpm) {
  const double min_interval = 60.0 / max_hr_bpm;
  if (peaks.amplitudes.size() != peaks.peak_times.size())
    throw InvalidInput("prune_peaks: amplitudes and times differ in length");
  for (;;) {
    std::size_t worst = 0;
    double shortest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < peaks.size(); ++i) {
      const double d = peaks.peak_times[i + 1] - peaks.peak_times[i];
      if (d < shortest) {
        shortest = d;
        worst = i;
      }
    }
    if (!(shortest < min_interval)) break;
    const std::size_t drop =
        peaks.amplitudes[worst + 1] < peaks.amplitudes[worst] ? worst + 1 : worst;
    peaks.peak_times.erase(peaks.peak_times.begin() + static_cast<std::ptrdiff_t>(drop));
    peaks.amplitudes.erase(peaks.amplitudes.begin() + static_cast<std::ptrdiff_t>(drop));
  }
  return peaks;
}

std::size_t IbiSeries::accepted_count() const {
  return static_cast<std::size_t>(std::count(accepted.begin(), accepted.end(), true));
}

IbiSeries filter_ibis(std::span<const double> intervals, double min_ratio, int run) {
  IbiSeries out;
  out.intervals.assign(intervals.begin(), intervals.end());
  out.accepted.assign(intervals.size(), false);
  const auto r = static_cast<std::size_t>(std::max(run, 1));
  for (std::size_t s = 0; s + r <= intervals.size(); ++s) {
    const auto [lo, hi] = std::minmax_element(intervals.begin() + s, intervals.begin() + s + r);
    if (*hi > 0.0 && *lo / *hi > min_ratio)
      std::fill(out.accepted.begin() + s, out.accepted.begin() + s + r, true);
  }
  return out;
}

double estimate_hr(const IbiSeries& ibis) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ibis.intervals.size(); ++i) {
    if (i < ibis.accepted.size() && ibis.accepted[i]) {
      sum += ibis.intervals[i];
      ++n;
    }
  }
  if (n == 0) throw NoHrAvailable("no accepted interbeat intervals");
  return 60.0 / (sum / static_cast<double>(n));
}

double ppg_heart_rate(const TimeSeries& x, const HrPipelineConfig& cfg) {
  const PeakSet peaks = prune_peaks(detect_pulse_peaks(x, cfg.detector), cfg.max_hr_bpm);
  std::vector<double> ibi;
  for (std::size_t i = 0; i + 1 < peaks.size(); ++i)
    ibi.push_back(peaks.peak_times[i + 1] - peaks.peak_times[i]);
  return estimate_hr(filter_ibis(ibi, cfg.ibi_min_ratio, cfg.ibi_run));
}

std::optional<double> try_ppg_heart_rate(const TimeSeries& x, const HrPipelineConfig& cfg) {
  try {
    return ppg_heart_rate(x, cfg);
  } catch (const NoPeaksFound&) {
    return std::nullopt;
  } catch (const NoHrAvailable&) {
    return std::nullopt;
  }
}

}  // namespace ppgfusion
