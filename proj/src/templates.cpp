#include "ppgfusion/templates.hpp"

#include <algorithm>
#include <cmath>

namespace ppgfusion {

Index time_to_index(double t, double origin, double fs) {
  return static_cast<Index>(std::llround((t - origin) * fs));
}

std::vector<BeatSegment> segment_beats(const TimeSeries& ppg, const BeatAnnotation& ann,
                                       const TemplateConfig& cfg) {
  std::vector<BeatSegment> out;
  const auto& t = ann.r_peak_times;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double interval = t[i + 1] - t[i];
    const double hr = 60.0 / interval;
    if (hr < cfg.min_hr_bpm || hr > cfg.max_hr_bpm) continue;
    const Index a = time_to_index(t[i], ppg.t0, ppg.fs);
    const Index b = time_to_index(t[i + 1], ppg.t0, ppg.fs);
    if (a < 0 || b > ppg.size() || b - a < 2) continue;
    out.push_back({t[i], t[i + 1], ppg.samples.segment(a, b - a)});
  }
  return out;
}

Eigen::VectorXd leaning_triangle(Index n, double rise_fraction) {
  if (n < 3) throw InvalidInput("leaning_triangle needs n >= 3");
  if (!(rise_fraction > 0.0 && rise_fraction < 1.0))
    throw InvalidInput("rise fraction must lie in (0, 1)");
  const Index peak = std::clamp<Index>(
      static_cast<Index>(std::floor(rise_fraction * static_cast<double>(n - 1))), 1, n - 2);
  Eigen::VectorXd w(n);
  for (Index i = 0; i <= peak; ++i) w[i] = static_cast<double>(i) / static_cast<double>(peak);
  for (Index i = peak + 1; i < n; ++i)
    w[i] = static_cast<double>(n - 1 - i) / static_cast<double>(n - 1 - peak);
  return w;
}

std::optional<PulseTemplate> gate_and_average(std::span<const BeatSegment> beats,
                                              const TemplateConfig& cfg, double center_time) {
  const Eigen::VectorXd triangle = zscore(leaning_triangle(cfg.template_len, cfg.rise_fraction));
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(cfg.template_len);
  int count = 0;
  double corr_sum = 0.0;
  for (const BeatSegment& beat : beats) {
    if (beat.samples.size() < 10) throw InvalidInput("beat segment shorter than 10 samples");
    Eigen::VectorXd norm;
    try {
      norm = zscore(resample(beat.samples, cfg.template_len));
    } catch (const DegenerateSignal&) {
      continue;
    }
    const double r = pearson(norm, triangle);
    if (!(r > cfg.gate_threshold)) continue;
    sum += norm;
    corr_sum += r;
    ++count;
  }
  if (count == 0) return std::nullopt;
  PulseTemplate tpl;
  tpl.wave = zscore_or_zero(Eigen::VectorXd(sum / count));
  tpl.center_time = center_time;
  tpl.n_contributing = count;
  tpl.mean_triangle_corr = corr_sum / count;
  return tpl;
}

std::vector<PulseTemplate> build_window_templates(std::span<const TimeSeries> channels,
                                                  const BeatAnnotation& ann,
                                                  const TemplateConfig& cfg) {
  if (channels.empty()) throw InvalidInput("no PPG channels supplied");
  if (!(cfg.window_s > 0.0)) throw InvalidConfig("template window must be positive");
  const TimeSeries& first = channels.front();
  const std::size_t used = cfg.channels == TemplateChannels::GreenOnly ? 1 : channels.size();

  std::vector<BeatSegment> pooled;
  for (std::size_t c = 0; c < used; ++c) {
    auto seg = segment_beats(channels[c], ann, cfg);
    pooled.insert(pooled.end(), std::make_move_iterator(seg.begin()),
                  std::make_move_iterator(seg.end()));
  }

  const auto n_windows = static_cast<Index>(std::floor(first.duration() / cfg.window_s + 1e-9));
  std::vector<PulseTemplate> out;
  for (Index k = 0; k < n_windows; ++k) {
    const double begin = first.t0 + static_cast<double>(k) * cfg.window_s;
    const double end = begin + cfg.window_s;
    std::vector<BeatSegment> members;
    for (const BeatSegment& b : pooled)
      if (b.start_time >= begin && b.start_time < end) members.push_back(b);
    if (auto tpl = gate_and_average(members, cfg, 0.5 * (begin + end))) out.push_back(*tpl);
  }
  if (out.empty()) throw NoUsableSignal("no window produced a pulse template");
  return out;
}

BlendWeights blend_weights(std::span<const PulseTemplate> templates, double t) {
  if (templates.empty()) throw NoUsableSignal("no templates to blend");
  BlendWeights w;
  const std::size_t last = templates.size() - 1;
  if (t <= templates.front().center_time) return w;
  if (t >= templates.back().center_time) {
    w.first = w.second = last;
    return w;
  }
  std::size_t hi = 1;
  while (hi < last && templates[hi].center_time < t) ++hi;
  const double t1 = templates[hi - 1].center_time;
  const double t2 = templates[hi].center_time;
  w.first = hi - 1;
  w.second = hi;
  w.w_first = (t2 - t) / (t2 - t1);
  w.w_second = (t - t1) / (t2 - t1);
  return w;
}

Eigen::VectorXd blend_templates(std::span<const PulseTemplate> templates, double t) {
  const BlendWeights w = blend_weights(templates, t);
  return w.w_first * templates[w.first].wave + w.w_second * templates[w.second].wave;
}

TimeSeries synthesize_reference(const BeatAnnotation& ann,
                                std::span<const PulseTemplate> templates, double fs,
                                double origin) {
  if (templates.empty()) throw NoUsableSignal("no templates to synthesize from");
  if (ann.size() < 2) throw InsufficientBeats("reference synthesis needs two R peaks");
  const auto& t = ann.r_peak_times;
  const Index start = time_to_index(t.front(), origin, fs);
  const Index stop = time_to_index(t.back(), origin, fs);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(std::max<Index>(0, stop - start));

  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const Index a = time_to_index(t[i], origin, fs) - start;
    const Index b = time_to_index(t[i + 1], origin, fs) - start;
    const Index len = b - a;
    if (len <= 0) continue;
    const Eigen::VectorXd wave = zscore_or_zero(blend_templates(templates, 0.5 * (t[i] + t[i + 1])));
    if (len == 1)
      out[a] = wave[0];
    else
      out.segment(a, len) = resample(wave, len);
  }
  return TimeSeries(std::move(out), fs, origin + static_cast<double>(start) / fs);
}

AlignedReference align_reference(const TimeSeries& reference, double origin, Index n) {
  AlignedReference out;
  out.signal = TimeSeries(Eigen::VectorXd::Zero(n), reference.fs, origin);
  const Index offset = time_to_index(reference.t0, origin, reference.fs);
  const Index begin = std::clamp<Index>(offset, 0, n);
  const Index end = std::clamp<Index>(offset + reference.size(), 0, n);
  if (end > begin)
    out.signal.samples.segment(begin, end - begin) =
        reference.samples.segment(begin - offset, end - begin);
  out.begin = begin;
  out.end = std::max(begin, end);
  return out;
}

PreparedReference prepare_reference(const MultiChannelRecord& record, const TemplateConfig& cfg,
                                    const PanTompkinsConfig& pt) {
  record.validate();
  PreparedReference out;
  out.beats = detect_r_peaks(record.ecg, pt);
  if (out.beats.size() < 2) throw NoUsableSignal("no R peaks found in the ECG");
  const std::vector<TimeSeries> channels{record.green, record.red, record.ir};
  out.templates = build_window_templates(channels, out.beats, cfg);
  const TimeSeries ref =
      synthesize_reference(out.beats, out.templates, record.fs(), record.green.t0);
  out.reference = align_reference(ref, record.green.t0, record.size());
  return out;
}

}  // namespace ppgfusion
