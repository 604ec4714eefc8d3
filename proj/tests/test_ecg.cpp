#include "ppgfusion/ecg.hpp"
#include "ppgfusion/synth.hpp"

#include <doctest.h>

using namespace ppgfusion;

namespace {

SubjectProfile steady_profile(double bpm, double duration_s, double ecg_snr_db, std::uint64_t seed) {
  SubjectProfile p;
  p.seed = seed;
  p.duration_s = duration_s;
  p.hr_baseline_bpm = bpm;
  p.hr_walk_sd_bpm = 0.0;
  p.ecg_snr_db = ecg_snr_db;
  return p;
}

struct Match {
  int true_pos = 0;
  int missed = 0;
  int extra = 0;
  double worst_error = 0.0;
};

// Greedy one-to-one matching of detections to truth within `tol` seconds.
// Truth beats within `edge` of the record ends are not required.
Match match_beats(const std::vector<double>& truth, const std::vector<double>& found, double tol,
                  double duration, double edge = 0.5) {
  Match m;
  std::vector<bool> used(found.size(), false);
  for (double t : truth) {
    int best = -1;
    for (std::size_t i = 0; i < found.size(); ++i)
      if (!used[i] && std::abs(found[i] - t) <= tol && (best < 0 || std::abs(found[i] - t) < std::abs(found[best] - t)))
        best = static_cast<int>(i);
    if (best >= 0) {
      used[best] = true;
      ++m.true_pos;
      m.worst_error = std::max(m.worst_error, std::abs(found[best] - t));
    } else if (t > edge && t < duration - edge) {
      ++m.missed;
    }
  }
  for (std::size_t i = 0; i < found.size(); ++i)
    if (!used[i] && found[i] > edge && found[i] < duration - edge) ++m.extra;
  return m;
}

}  // namespace

// A QRS cut by the record start cannot be localized, so the first 150 ms are
// not scored.
TEST_CASE("clean 60 bpm ECG: every beat within 20 ms") {
  const MultiChannelRecord rec = generate_subject(steady_profile(60.0, 60.0, 30.0, 7));
  const BeatAnnotation ann = detect_r_peaks(rec.ecg);
  CHECK(ann.source == BeatSource::DetectedPanTompkins);
  const Match m = match_beats(rec.truth->r_peak_times, ann.r_peak_times, 0.020, 60.0, 0.15);
  CHECK(m.missed == 0);
  CHECK(m.extra == 0);
  CHECK(m.worst_error <= 0.020);
  CHECK(ann.size() == rec.truth->r_peak_times.size());
}

TEST_CASE("180 bpm ECG: all beats found") {
  const MultiChannelRecord rec = generate_subject(steady_profile(180.0, 60.0, 30.0, 8));
  const BeatAnnotation ann = detect_r_peaks(rec.ecg);
  const Match m = match_beats(rec.truth->r_peak_times, ann.r_peak_times, 0.020, 60.0, 0.15);
  CHECK(m.missed == 0);
  CHECK(m.extra == 0);
}

TEST_CASE("sensitivity and precision of at least 99% across 40-185 bpm at 10 dB") {
  int tp = 0, missed = 0, extra = 0;
  for (double bpm = 40.0; bpm <= 185.0; bpm += 15.0) {
    for (std::uint64_t seed : {1u, 2u}) {
      const MultiChannelRecord rec = generate_subject(steady_profile(bpm, 120.0, 10.0, seed));
      const Match m = match_beats(rec.truth->r_peak_times, detect_r_peaks(rec.ecg).r_peak_times, 0.05, 120.0);
      tp += m.true_pos;
      missed += m.missed;
      extra += m.extra;
      CAPTURE(bpm);
      CHECK(m.missed + m.extra <= 1);
    }
  }
  const double sensitivity = static_cast<double>(tp) / (tp + missed);
  const double precision = static_cast<double>(tp) / (tp + extra);
  CHECK(sensitivity >= 0.99);
  CHECK(precision >= 0.99);
}

TEST_CASE("detection with a varying heart rate") {
  SubjectProfile p = steady_profile(90.0, 300.0, 20.0, 3);
  p.hr_walk_sd_bpm = 1.5;
  p.hr_drift_bpm = 40.0;
  const MultiChannelRecord rec = generate_subject(p);
  const Match m = match_beats(rec.truth->r_peak_times, detect_r_peaks(rec.ecg).r_peak_times, 0.05, 300.0);
  CHECK(static_cast<double>(m.true_pos) / (m.true_pos + m.missed) >= 0.99);
  CHECK(static_cast<double>(m.true_pos) / (m.true_pos + m.extra) >= 0.99);
}

TEST_CASE("detected times do not depend on the ECG amplitude") {
  const MultiChannelRecord rec = generate_subject(steady_profile(75.0, 60.0, 20.0, 4));
  const BeatAnnotation base = detect_r_peaks(rec.ecg);
  REQUIRE(!base.empty());
  for (double scale : {0.5, 2.0, 1024.0, 1.0 / 4096}) {
    const TimeSeries scaled((rec.ecg.samples * scale).eval(), rec.ecg.fs, rec.ecg.t0);
    CAPTURE(scale);
    CHECK(detect_r_peaks(scaled).r_peak_times == base.r_peak_times);
  }
}

TEST_CASE("flat and short ECG") {
  const TimeSeries flat(Eigen::VectorXd::Zero(128 * 30), 128.0);
  CHECK(detect_r_peaks(flat).empty());
  CHECK_THROWS_AS(detect_r_peaks(TimeSeries(Eigen::VectorXd::Zero(128 * 4), 128.0)), InvalidInput);
  CHECK_THROWS_AS(detect_r_peaks(TimeSeries(Eigen::VectorXd::Zero(50 * 30), 50.0)), InvalidInput);
}

TEST_CASE("R-R intervals") {
  BeatAnnotation a;
  a.r_peak_times = {0.0, 1.0, 2.0};
  CHECK(rr_intervals(a) == std::vector<double>{1.0, 1.0});
  a.r_peak_times = {0.0, 0.5, 1.5};
  CHECK(rr_intervals(a) == std::vector<double>{0.5, 1.0});
  a.r_peak_times = {3.0};
  CHECK_THROWS_AS(rr_intervals(a), InsufficientBeats);
  a.r_peak_times = {1.0, 1.0};
  CHECK_THROWS_AS(a.validate(), InvalidInput);
}

TEST_CASE("reference heart rate") {
  BeatAnnotation a;
  for (int i = 0; i <= 10; ++i) a.r_peak_times.push_back(i * 1.0);
  CHECK(reference_hr(a, {0.0, 10.0}) == doctest::Approx(60.0));
  a.r_peak_times.clear();
  for (int i = 0; i <= 20; ++i) a.r_peak_times.push_back(i * 0.5);
  CHECK(reference_hr(a, {0.0, 10.0}) == doctest::Approx(120.0));
  a.r_peak_times = {1.0, 1.5, 2.5};
  CHECK(reference_hr(a, {0.9, 2.6}) == doctest::Approx(80.0));
  // Intervals straddling the section edge are ignored.
  a.r_peak_times = {0.0, 1.0, 1.5, 2.5, 5.0};
  CHECK(reference_hr(a, {0.9, 2.6}) == doctest::Approx(80.0));
  CHECK_THROWS_AS(reference_hr(a, {3.0, 4.0}), InsufficientBeats);
}
