#include "ppgfusion/synth.hpp"

#include "ppgfusion/butterworth.hpp"
#include "ppgfusion/config.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace ppgfusion {

namespace {

constexpr double kPi = std::numbers::pi;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                       std::uint64_t c = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(c)};
  return std::mt19937_64(seq);
}

// Adds amp * exp(-((t - center) / width)^2 / 2) over +-5 widths.
void add_gaussian(Eigen::VectorXd& x, double fs, double center, double width, double amp) {
  const Index n = x.size();
  const Index a = std::max<Index>(0, static_cast<Index>(std::floor((center - 5 * width) * fs)));
  const Index b = std::min<Index>(n - 1, static_cast<Index>(std::ceil((center + 5 * width) * fs)));
  for (Index i = a; i <= b; ++i) {
    const double u = (static_cast<double>(i) / fs - center) / width;
    x[i] += amp * std::exp(-0.5 * u * u);
  }
}

std::vector<double> beat_times(const SubjectProfile& p) {
  auto rng = stream(p.seed, 1);
  std::normal_distribution<double> step(0.0, p.hr_walk_sd_bpm);
  std::vector<double> t;
  double now = -2.0;
  double walk = 0.0;
  while (now < p.duration_s + 2.0) {
    t.push_back(now);
    const double frac = std::clamp(now / p.duration_s, 0.0, 1.0);
    const double hr =
        std::clamp(p.hr_baseline_bpm + p.hr_drift_bpm * frac + walk, p.hr_min_bpm, p.hr_max_bpm);
    now += 60.0 / hr;
    walk = (1.0 - p.hr_walk_reversion) * walk + step(rng);
  }
  return t;
}

Eigen::VectorXd white_noise(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd x(n);
  for (Index i = 0; i < n; ++i) x[i] = dist(rng);
  return x;
}

double rms(const Eigen::VectorXd& x) { return std::sqrt(x.squaredNorm() / static_cast<double>(x.size())); }

// Sum of sinusoids with log-spaced frequencies and 1/f amplitudes, unit RMS.
Eigen::VectorXd wander(std::mt19937_64& rng, Index n, double fs, double max_hz) {
  constexpr int kTones = 8;
  constexpr double kMinHz = 0.02;
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < kTones; ++k) {
    const double f = kMinHz * std::pow(max_hz / kMinHz, static_cast<double>(k) / (kTones - 1));
    const double ph = phase(rng);
    for (Index i = 0; i < n; ++i) x[i] += std::sin(2.0 * kPi * f * static_cast<double>(i) / fs + ph) / f;
  }
  const double r = rms(x);
  return r > 0.0 ? Eigen::VectorXd(x / r) : x;
}

const char* kChannelKeys[3] = {"green", "red", "ir"};

}  // namespace

void SubjectProfile::validate() const {
  if (!(duration_s >= 60.0)) throw InvalidInput("profile duration must be at least 60 s");
  if (!(fs > 0.0)) throw InvalidInput("profile sampling rate must be positive");
  if (!(hr_min_bpm >= 40.0 && hr_max_bpm <= 185.0 && hr_min_bpm < hr_max_bpm))
    throw InvalidInput("heart-rate bounds must lie within [40, 185] bpm");
  if (!(hr_baseline_bpm > 0.0) || hr_walk_sd_bpm < 0.0 || hr_walk_reversion < 0.0 ||
      hr_walk_reversion > 1.0)
    throw InvalidInput("invalid heart-rate trajectory parameters");
  if (!(systolic_width > 0.0 && diastolic_width > 0.0)) throw InvalidInput("pulse widths must be positive");
  if (wander_amplitude < 0.0 || !(wander_max_hz > 0.02)) throw InvalidInput("invalid wander parameters");
  for (const ArtifactEpisode& e : episodes) {
    if (e.start_s < 0.0 || !(e.duration_s > 0.0) || e.start_s + e.duration_s > duration_s)
      throw InvalidInput("artifact episode outside the recording");
  }
}

MultiChannelRecord generate_subject(const SubjectProfile& p) {
  p.validate();
  const double fs = p.fs;
  const auto n = static_cast<Index>(std::llround(p.duration_s * fs));
  const std::vector<double> beats = beat_times(p);

  Eigen::VectorXd ecg = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd clean = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < beats.size(); ++k) {
    const double t = beats[k];
    const double rr = k + 1 < beats.size() ? beats[k + 1] - t : beats[k] - beats[k - 1];
    add_gaussian(ecg, fs, t - 0.16, 0.025, 0.12);                        // P
    add_gaussian(ecg, fs, t - 0.03, 0.008, -0.12);                       // Q
    add_gaussian(ecg, fs, t, 0.010, 1.0);                                // R
    add_gaussian(ecg, fs, t + 0.03, 0.010, -0.25);                       // S
    add_gaussian(ecg, fs, t + 0.16 + std::min(0.1 * rr, 0.1), 0.04, 0.3);  // T
    const double onset = t + p.pulse_arrival_s;
    add_gaussian(clean, fs, onset + p.systolic_pos * rr, p.systolic_width * rr, 1.0);
    add_gaussian(clean, fs, onset + p.diastolic_pos * rr, p.diastolic_width * rr, p.diastolic_ratio);
  }

  auto ecg_rng = stream(p.seed, 2);
  const double ecg_noise = population_std(ecg) * std::pow(10.0, -p.ecg_snr_db / 20.0);
  ecg += ecg_noise * white_noise(ecg_rng, n);

  const double pulse_sd = population_std(clean);
  MultiChannelRecord rec;
  rec.subject_id = p.subject_id;
  rec.ecg = TimeSeries(std::move(ecg), fs, 0.0);
  for (int c = 0; c < 3; ++c) {
    const ChannelProfile& ch = p.channels[c];
    auto noise_rng = stream(p.seed, 3, static_cast<std::uint64_t>(c));
    auto wander_rng = stream(p.seed, 4, static_cast<std::uint64_t>(c));
    const double sd = ch.gain * pulse_sd;
    Eigen::VectorXd x = (ch.gain * clean).array() + ch.dc_offset;
    x += sd * std::pow(10.0, -ch.snr_db / 20.0) * white_noise(noise_rng, n);
    if (p.wander_amplitude > 0.0) x += p.wander_amplitude * sd * wander(wander_rng, n, fs, p.wander_max_hz);
    rec.ppg(kPpgChannels[c]) = TimeSeries(std::move(x), fs, 0.0);
  }

  GroundTruth truth;
  for (double t : beats)
    if (t >= 0.0 && t < p.duration_s) truth.r_peak_times.push_back(t);
  truth.clean_ppg = std::move(clean);
  rec.truth = std::move(truth);

  if (!p.episodes.empty()) rec = inject_artifacts(std::move(rec), p.episodes, p.seed);
  return rec;
}

MultiChannelRecord inject_artifacts(MultiChannelRecord record,
                                    std::span<const ArtifactEpisode> episodes, std::uint64_t seed) {
  record.validate();
  const double fs = record.fs();
  const Index n = record.size();
  std::array<double, 3> scale{};
  for (int c = 0; c < 3; ++c) scale[c] = population_std(record.ppg(kPpgChannels[c]).samples);

  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const ArtifactEpisode& ep = episodes[e];
    const Index a = static_cast<Index>(std::llround((ep.start_s - record.green.t0) * fs));
    const Index len = static_cast<Index>(std::llround(ep.duration_s * fs));
    if (ep.start_s < record.green.t0 || !(ep.duration_s > 0.0) || a < 0 || a + len > n || len < 1)
      throw InvalidInput("artifact episode outside the record");
    if (ep.gain == 0.0) continue;

    Eigen::VectorXd shape;
    if (ep.kind == ArtifactKind::AmbientStep) {
      shape = Eigen::VectorXd::Ones(len);
    } else {
      auto rng = stream(seed, 5, e);
      Eigen::VectorXd w = white_noise(rng, len + 2);
      shape = ButterworthBandpass(0.5, std::min(10.0, 0.45 * fs), fs).filter_zero_phase(w).head(len);
      const double r = rms(shape);
      if (r > 0.0) shape /= r;
      // Raised-cosine edges so bursts fade in and out.
      const Index edge = std::min<Index>(len / 4, static_cast<Index>(0.5 * fs));
      for (Index i = 0; i < edge; ++i) {
        const double g = 0.5 - 0.5 * std::cos(kPi * static_cast<double>(i) / edge);
        shape[i] *= g;
        shape[len - 1 - i] *= g;
      }
    }
    for (int c = 0; c < 3; ++c) {
      if (!ep.channels[c]) continue;
      record.ppg(kPpgChannels[c]).samples.segment(a, len) += (ep.gain * scale[c]) * shape;
    }
  }
  return record;
}

std::vector<SubjectProfile> default_corpus_profiles(const CorpusConfig& cfg) {
  std::vector<SubjectProfile> out;
  for (int i = 0; i < cfg.n_subjects; ++i) {
    auto rng = stream(cfg.seed, 100, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SubjectProfile p;
    char id[16];
    std::snprintf(id, sizeof id, "S%02d", i + 1);
    p.subject_id = id;
    p.seed = rng();
    p.duration_s = cfg.duration_s;
    p.hr_baseline_bpm = 58.0 + 34.0 * u(rng);
    p.hr_drift_bpm = -8.0 + 16.0 * u(rng);
    p.hr_walk_sd_bpm = 0.4 + 0.4 * u(rng);
    p.systolic_pos = 0.28 + 0.04 * u(rng);
    p.diastolic_pos = 0.62 + 0.06 * u(rng);
    p.diastolic_ratio = 0.3 + 0.2 * u(rng);
    p.channels[0] = {1.0, 2.0, 20.0 + 2.0 * u(rng) - 1.0};
    p.channels[1] = {0.6, 1.5, 13.0 + 2.0 * u(rng) - 1.0};
    p.channels[2] = {0.8, 1.8, 16.0 + 2.0 * u(rng) - 1.0};
    if (cfg.artifacts) {
      p.wander_amplitude = 0.5;
      // Per-channel bursts (per minute) and ambient steps, more frequent and
      // stronger on the channels that are noisier anyway.
      const std::array<double, 3> burst_rate{0.5, 1.5, 1.0};
      const std::array<double, 3> burst_gain{2.0, 4.0, 3.0};
      const std::array<double, 3> step_rate{0.05, 0.15, 0.1};
      const double minutes = cfg.duration_s / 60.0;
      for (int c = 0; c < 3; ++c) {
        std::poisson_distribution<int> bursts(burst_rate[c] * minutes);
        const int nb = bursts(rng);
        for (int k = 0; k < nb; ++k) {
          ArtifactEpisode e;
          e.kind = ArtifactKind::MotionBurst;
          e.duration_s = 3.0 + 9.0 * u(rng);
          e.start_s = u(rng) * (cfg.duration_s - e.duration_s);
          e.channels = {c == 0, c == 1, c == 2};
          e.gain = burst_gain[c] * (0.5 + u(rng));
          p.episodes.push_back(e);
        }
        std::poisson_distribution<int> steps(step_rate[c] * minutes);
        const int ns = steps(rng);
        for (int k = 0; k < ns; ++k) {
          ArtifactEpisode e;
          e.kind = ArtifactKind::AmbientStep;
          e.duration_s = 10.0 + 50.0 * u(rng);
          e.start_s = u(rng) * (cfg.duration_s - e.duration_s);
          e.channels = {c == 0, c == 1, c == 2};
          e.gain = (u(rng) < 0.5 ? -1.0 : 1.0) * (1.0 + 3.0 * u(rng));
          p.episodes.push_back(e);
        }
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text form.

std::string profile_to_text(const SubjectProfile& p) {
  std::ostringstream os;
  os.precision(17);
  os << "subject_id = " << p.subject_id << "\n"
     << "seed = " << p.seed << "\n"
     << "duration_s = " << p.duration_s << "\n"
     << "fs = " << p.fs << "\n"
     << "hr_baseline_bpm = " << p.hr_baseline_bpm << "\n"
     << "hr_drift_bpm = " << p.hr_drift_bpm << "\n"
     << "hr_walk_sd_bpm = " << p.hr_walk_sd_bpm << "\n"
     << "hr_walk_reversion = " << p.hr_walk_reversion << "\n"
     << "hr_min_bpm = " << p.hr_min_bpm << "\n"
     << "hr_max_bpm = " << p.hr_max_bpm << "\n"
     << "systolic_pos = " << p.systolic_pos << "\n"
     << "diastolic_pos = " << p.diastolic_pos << "\n"
     << "systolic_width = " << p.systolic_width << "\n"
     << "diastolic_width = " << p.diastolic_width << "\n"
     << "diastolic_ratio = " << p.diastolic_ratio << "\n"
     << "pulse_arrival_s = " << p.pulse_arrival_s << "\n"
     << "ecg_snr_db = " << p.ecg_snr_db << "\n";
  for (int c = 0; c < 3; ++c) {
    os << kChannelKeys[c] << ".gain = " << p.channels[c].gain << "\n"
       << kChannelKeys[c] << ".dc_offset = " << p.channels[c].dc_offset << "\n"
       << kChannelKeys[c] << ".snr_db = " << p.channels[c].snr_db << "\n";
  }
  os << "wander_amplitude = " << p.wander_amplitude << "\n"
     << "wander_max_hz = " << p.wander_max_hz << "\n";
  for (const ArtifactEpisode& e : p.episodes) {
    os << "episode = " << (e.kind == ArtifactKind::MotionBurst ? "motion" : "step") << " "
       << e.start_s << " " << e.duration_s << " ";
    bool first = true;
    for (int c = 0; c < 3; ++c) {
      if (!e.channels[c]) continue;
      os << (first ? "" : ",") << kChannelKeys[c];
      first = false;
    }
    os << " " << e.gain << "\n";
  }
  return os.str();
}

SubjectProfile parse_profile(const std::string& text) {
  SubjectProfile p;
  std::map<std::string, std::function<void(const std::string&)>> setters{
      {"subject_id", [&](const std::string& v) { p.subject_id = v; }},
      {"seed", [&](const std::string& v) { p.seed = parse_u64(v); }},
      {"duration_s", [&](const std::string& v) { p.duration_s = parse_double(v); }},
      {"fs", [&](const std::string& v) { p.fs = parse_double(v); }},
      {"hr_baseline_bpm", [&](const std::string& v) { p.hr_baseline_bpm = parse_double(v); }},
      {"hr_drift_bpm", [&](const std::string& v) { p.hr_drift_bpm = parse_double(v); }},
      {"hr_walk_sd_bpm", [&](const std::string& v) { p.hr_walk_sd_bpm = parse_double(v); }},
      {"hr_walk_reversion", [&](const std::string& v) { p.hr_walk_reversion = parse_double(v); }},
      {"hr_min_bpm", [&](const std::string& v) { p.hr_min_bpm = parse_double(v); }},
      {"hr_max_bpm", [&](const std::string& v) { p.hr_max_bpm = parse_double(v); }},
      {"systolic_pos", [&](const std::string& v) { p.systolic_pos = parse_double(v); }},
      {"diastolic_pos", [&](const std::string& v) { p.diastolic_pos = parse_double(v); }},
      {"systolic_width", [&](const std::string& v) { p.systolic_width = parse_double(v); }},
      {"diastolic_width", [&](const std::string& v) { p.diastolic_width = parse_double(v); }},
      {"diastolic_ratio", [&](const std::string& v) { p.diastolic_ratio = parse_double(v); }},
      {"pulse_arrival_s", [&](const std::string& v) { p.pulse_arrival_s = parse_double(v); }},
      {"ecg_snr_db", [&](const std::string& v) { p.ecg_snr_db = parse_double(v); }},
      {"wander_amplitude", [&](const std::string& v) { p.wander_amplitude = parse_double(v); }},
      {"wander_max_hz", [&](const std::string& v) { p.wander_max_hz = parse_double(v); }},
  };
  for (int c = 0; c < 3; ++c) {
    const std::string k = kChannelKeys[c];
    setters[k + ".gain"] = [&p, c](const std::string& v) { p.channels[c].gain = parse_double(v); };
    setters[k + ".dc_offset"] = [&p, c](const std::string& v) { p.channels[c].dc_offset = parse_double(v); };
    setters[k + ".snr_db"] = [&p, c](const std::string& v) { p.channels[c].snr_db = parse_double(v); };
  }
  setters["episode"] = [&](const std::string& v) {
    std::istringstream is(v);
    std::string kind, mask;
    ArtifactEpisode e;
    if (!(is >> kind >> e.start_s >> e.duration_s >> mask >> e.gain))
      throw InvalidConfig("malformed episode: " + v);
    if (kind == "motion")
      e.kind = ArtifactKind::MotionBurst;
    else if (kind == "step")
      e.kind = ArtifactKind::AmbientStep;
    else
      throw InvalidConfig("unknown episode kind: " + kind);
    e.channels = {false, false, false};
    std::istringstream ms(mask);
    for (std::string name; std::getline(ms, name, ',');) {
      const auto* it = std::find(std::begin(kChannelKeys), std::end(kChannelKeys), name);
      if (it == std::end(kChannelKeys)) throw InvalidConfig("unknown channel in episode: " + name);
      e.channels[static_cast<std::size_t>(it - std::begin(kChannelKeys))] = true;
    }
    p.episodes.push_back(e);
  };
  for (const KeyValue& kv : parse_key_values(text)) {
    const auto it = setters.find(kv.key);
    if (it == setters.end())
      throw InvalidConfig("unknown profile key '" + kv.key + "' on line " + std::to_string(kv.line));
    it->second(kv.value);
  }
  return p;
}

}  // namespace ppgfusion
