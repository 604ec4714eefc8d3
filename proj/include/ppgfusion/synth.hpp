#pragma once

// Deterministic synthetic multi-wavelength PPG + ECG recordings with ground
// truth. Every output is a pure function of the profile.

#include "ppgfusion/signal.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ppgfusion {

enum class ArtifactKind { MotionBurst, AmbientStep };

/// Additive disturbance on a subset of the PPG channels. `gain` is relative to
/// the affected channel's standard deviation before injection: motion bursts
/// get that RMS, ambient steps that height. Channels in the mask share one
/// noise draw.
struct ArtifactEpisode {
  ArtifactKind kind = ArtifactKind::MotionBurst;
  double start_s = 0.0;
  double duration_s = 1.0;
  std::array<bool, 3> channels{true, true, true};  // green, red, ir
  double gain = 1.0;
};

struct ChannelProfile {
  double gain = 1.0;
  double dc_offset = 0.0;
  double snr_db = 20.0;
};

struct SubjectProfile {
  std::string subject_id = "S01";
  std::uint64_t seed = 1;
  double duration_s = 1800.0;
  double fs = 128.0;

  // Heart rate: baseline + linear drift over the recording + mean-reverting
  // random walk stepped once per beat, clamped to [hr_min_bpm, hr_max_bpm].
  double hr_baseline_bpm = 70.0;
  double hr_drift_bpm = 0.0;
  double hr_walk_sd_bpm = 0.5;
  double hr_walk_reversion = 0.05;
  double hr_min_bpm = 40.0;
  double hr_max_bpm = 185.0;

  // Pulse: two Gaussians placed at fractions of the R-R interval after the
  // R peak (plus the arrival offset); widths are fractions of the interval.
  double systolic_pos = 0.30;
  double diastolic_pos = 0.65;
  double systolic_width = 0.09;
  double diastolic_width = 0.10;
  double diastolic_ratio = 0.4;
  double pulse_arrival_s = 0.0;

  double ecg_snr_db = 30.0;
  std::array<ChannelProfile, 3> channels{ChannelProfile{1.0, 2.0, 20.0},
                                         ChannelProfile{0.6, 1.5, 13.0},
                                         ChannelProfile{0.8, 1.8, 16.0}};

  /// 1/f-shaped baseline wander RMS relative to each channel's pulse RMS.
  double wander_amplitude = 0.0;
  double wander_max_hz = 0.5;

  std::vector<ArtifactEpisode> episodes;

  /// Throws InvalidInput.
  void validate() const;
};

/// Builds the record: ECG wavelets at the beat times, the clean pulse train,
/// per-channel gain/offset/white noise/wander, then the scheduled episodes.
MultiChannelRecord generate_subject(const SubjectProfile& profile);

/// Adds the episodes to the PPG channels. Throws InvalidInput for episodes
/// outside the record.
MultiChannelRecord inject_artifacts(MultiChannelRecord record,
                                    std::span<const ArtifactEpisode> episodes,
                                    std::uint64_t seed);

struct CorpusConfig {
  int n_subjects = 10;
  double duration_s = 1800.0;
  std::uint64_t seed = 1;
  bool artifacts = true;
};

/// Subject profiles for a default corpus: varied heart rates and channel
/// quality ordered green > ir > red, with motion bursts, ambient-light steps
/// and baseline wander when artifacts are on.
std::vector<SubjectProfile> default_corpus_profiles(const CorpusConfig& cfg);

std::string profile_to_text(const SubjectProfile& profile);
/// Plain `key = value` lines; `episode = <motion|step> start dur channels gain`
/// may repeat, channels being a comma list of green/red/ir.
SubjectProfile parse_profile(const std::string& text);

}  // namespace ppgfusion
