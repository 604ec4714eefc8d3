#include "ppgfusion/ecg.hpp"

#include "ppgfusion/butterworth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace ppgfusion {

void BeatAnnotation::validate() const {
  for (std::size_t i = 1; i < r_peak_times.size(); ++i) {
    if (!(r_peak_times[i] > r_peak_times[i - 1]))
      throw InvalidInput("beat annotation must be strictly increasing");
  }
}

namespace {

struct Candidate {
  Index index;
  double value;
};

// Adaptive-threshold state shared by the main pass and the searchback.
class ThresholdState {
 public:
  ThresholdState(double spki, double npki) : spki_(spki), npki_(npki) {}

  double threshold1() const { return npki_ + 0.25 * (spki_ - npki_); }
  double threshold2() const { return 0.5 * threshold1(); }

  void signal_peak(double v) { spki_ = 0.125 * v + 0.875 * spki_; }
  void searchback_peak(double v) { spki_ = 0.25 * v + 0.75 * spki_; }
  void noise_peak(double v) { npki_ = 0.125 * v + 0.875 * npki_; }

 private:
  double spki_;
  double npki_;
};

}  // namespace

BeatAnnotation detect_r_peaks(const TimeSeries& ecg, const PanTompkinsConfig& cfg) {
  if (ecg.fs < cfg.min_fs_hz) throw InvalidInput("detect_r_peaks: sampling rate too low");
  if (ecg.duration() < cfg.min_duration_s) throw InvalidInput("detect_r_peaks: input too short");

  BeatAnnotation out;
  out.source = BeatSource::DetectedPanTompkins;

  const double fs = ecg.fs;
  const Index n = ecg.size();
  const ButterworthBandpass band(cfg.band_lo_hz, cfg.band_hi_hz, fs);
  const Eigen::VectorXd filtered = band.filter_zero_phase(ecg.samples);

  // Centered 5-point derivative, squared.
  Eigen::VectorXd energy = Eigen::VectorXd::Zero(n);
  for (Index i = 2; i + 2 < n; ++i) {
    const double d = (-filtered[i - 2] - 2.0 * filtered[i - 1] + 2.0 * filtered[i + 1] +
                      filtered[i + 2]) *
                     fs / 8.0;
    energy[i] = d * d;
  }
  const Index mwi_len = std::max<Index>(1, std::llround(cfg.integration_window_s * fs));
  const Eigen::VectorXd mwi = moving_average(energy, mwi_len);

  std::vector<Candidate> candidates;
  for (Index i = 1; i + 1 < n; ++i) {
    if (mwi[i] > 0.0 && mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1])
      candidates.push_back({i, mwi[i]});
  }
  if (candidates.empty()) return out;

  const Index learn = std::min<Index>(n, std::llround(cfg.learning_period_s * fs));
  const double learn_max = mwi.head(learn).maxCoeff();
  const double learn_mean = mwi.head(learn).mean();
  // A silent learning period falls back to whole-signal statistics.
  ThresholdState state(learn_max > 0.0 ? 0.25 * learn_max : 0.25 * mwi.maxCoeff(),
                       learn_max > 0.0 ? 0.5 * learn_mean : 0.5 * mwi.mean());

  const Index refractory = std::llround(cfg.refractory_s * fs);
  std::vector<Index> qrs;
  std::deque<double> recent_rr;
  std::vector<Candidate> noise_since_last;

  auto accept = [&](const Candidate& c) {
    if (!qrs.empty()) {
      recent_rr.push_back(static_cast<double>(c.index - qrs.back()));
      if (static_cast<int>(recent_rr.size()) > cfg.rr_average_beats) recent_rr.pop_front();
    }
    qrs.push_back(c.index);
    noise_since_last.clear();
  };

  // Looks back over the noise peaks since the last QRS for one above the
  // lower threshold. Returns true if a beat was recovered.
  auto searchback = [&](Index now) -> bool {
    if (qrs.empty() || recent_rr.empty()) return false;
    const double rr_avg =
        std::accumulate(recent_rr.begin(), recent_rr.end(), 0.0) / recent_rr.size();
    if (static_cast<double>(now - qrs.back()) <= cfg.searchback_factor * rr_avg) return false;
    const Candidate* best = nullptr;
    for (const Candidate& c : noise_since_last) {
      if (c.index - qrs.back() < refractory) continue;
      if (c.value > state.threshold2() && (best == nullptr || c.value > best->value)) best = &c;
    }
    if (best == nullptr) return false;
    const Candidate found = *best;
    state.searchback_peak(found.value);
    // Noise peaks after the recovered beat stay eligible for a later searchback.
    std::vector<Candidate> rest;
    for (const Candidate& c : noise_since_last)
      if (c.index > found.index) rest.push_back(c);
    accept(found);
    noise_since_last = std::move(rest);
    return true;
  };

  for (const Candidate& c : candidates) {
    while (searchback(c.index)) {
    }
    if (!qrs.empty() && c.index - qrs.back() < refractory) continue;
    if (c.value > state.threshold1()) {
      state.signal_peak(c.value);
      accept(c);
    } else {
      state.noise_peak(c.value);
      noise_since_last.push_back(c);
    }
  }
  while (searchback(n - 1)) {
  }

  // Refine onto the bandpassed R wave.
  const Index radius = std::llround(cfg.refine_radius_s * fs);
  std::vector<Index> refined;
  refined.reserve(qrs.size());
  for (Index q : qrs) {
    const Index a = std::max<Index>(0, q - radius);
    const Index b = std::min<Index>(n - 1, q + radius);
    Index best = a;
    filtered.segment(a, b - a + 1).maxCoeff(&best);
    best += a;
    if (!refined.empty() && best - refined.back() < refractory) {
      if (filtered[best] > filtered[refined.back()]) refined.back() = best;
      continue;
    }
    refined.push_back(best);
  }
  out.r_peak_times.reserve(refined.size());
  for (Index r : refined) out.r_peak_times.push_back(ecg.time_at(r));
  return out;
}

std::vector<double> rr_intervals(const BeatAnnotation& ann) {
  if (ann.size() < 2) throw InsufficientBeats("need at least two R peaks");
  std::vector<double> rr(ann.size() - 1);
  for (std::size_t i = 0; i + 1 < ann.size(); ++i)
    rr[i] = ann.r_peak_times[i + 1] - ann.r_peak_times[i];
  return rr;
}

double reference_hr(const BeatAnnotation& ann, TimeSpan section) {
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i + 1 < ann.size(); ++i) {
    const double a = ann.r_peak_times[i];
    const double b = ann.r_peak_times[i + 1];
    if (section.contains(a) && section.contains(b)) {
      sum += b - a;
      ++count;
    }
  }
  if (count == 0) throw InsufficientBeats("fewer than two R peaks in section");
  return 60.0 / (sum / count);
}

}  // namespace ppgfusion
