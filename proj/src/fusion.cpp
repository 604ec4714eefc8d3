#include "ppgfusion/fusion.hpp"

#include <cmath>

namespace ppgfusion {

std::vector<Index> fuse_window_starts(Index n, Index window_len) {
  std::vector<Index> starts;
  if (n < window_len) return starts;
  const Index hop = std::max<Index>(1, window_len / 2);
  for (Index s = 0; s + window_len <= n; s += hop) starts.push_back(s);
  if (starts.back() + window_len < n) starts.push_back(n - window_len);
  return starts;
}

Eigen::VectorXd crossfade_weights(Index window_len) {
  Eigen::VectorXd w(window_len);
  const double half = 0.5 * static_cast<double>(window_len);
  for (Index i = 0; i < window_len; ++i)
    w[i] = (static_cast<double>(std::min(i, window_len - 1 - i)) + 0.5) / half;
  return w;
}

std::vector<Index> training_window_starts(const AlignedReference& ref, const BeatAnnotation& beats,
                                          double record_t0, const WindowSelection& sel) {
  if (sel.window_len < 1 || sel.hop < 1) throw InvalidConfig("window length and hop must be positive");
  const double fs = ref.signal.fs;
  const auto& t = beats.r_peak_times;
  std::vector<Index> candidates;
  std::size_t first_beat = 0;
  for (Index s = ref.begin; s + sel.window_len <= ref.end; s += sel.hop) {
    const double begin = record_t0 + static_cast<double>(s) / fs;
    const double end = begin + static_cast<double>(sel.window_len) / fs;
    while (first_beat + 1 < t.size() && t[first_beat + 1] <= begin) ++first_beat;
    bool plausible = true;
    for (std::size_t i = first_beat; i + 1 < t.size() && t[i] < end; ++i) {
      const double hr = 60.0 / (t[i + 1] - t[i]);
      if (hr < sel.min_hr_bpm || hr > sel.max_hr_bpm) {
        plausible = false;
        break;
      }
    }
    if (plausible) candidates.push_back(s);
  }
  if (sel.max_windows <= 0 || static_cast<Index>(candidates.size()) <= sel.max_windows)
    return candidates;
  std::vector<Index> picked;
  const auto m = static_cast<double>(candidates.size() - 1);
  const Index k = sel.max_windows;
  for (Index j = 0; j < k; ++j) {
    const auto idx = k == 1 ? 0 : static_cast<std::size_t>(std::llround(j * m / static_cast<double>(k - 1)));
    picked.push_back(candidates[idx]);
  }
  return picked;
}

}  // namespace ppgfusion
