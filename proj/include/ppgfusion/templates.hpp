#pragma once

#include "ppgfusion/ecg.hpp"
#include "ppgfusion/signal.hpp"

#include <optional>
#include <span>
#include <vector>

namespace ppgfusion {

enum class TemplateChannels { Pooled, GreenOnly };

struct TemplateConfig {
  double min_hr_bpm = 40.0;
  double max_hr_bpm = 185.0;
  Index template_len = 100;
  /// Fraction of the leaning triangle spent rising.
  double rise_fraction = 0.3;
  /// Beats need a correlation strictly above this with the triangle.
  double gate_threshold = 0.8;
  double window_s = 300.0;
  TemplateChannels channels = TemplateChannels::Pooled;
};

/// Raw PPG between two consecutive R peaks.
struct BeatSegment {
  double start_time = 0.0;
  double end_time = 0.0;
  Eigen::VectorXd samples;
};

/// Ensemble-averaged, z-scored beat shape for one window.
struct PulseTemplate {
  Eigen::VectorXd wave;
  double center_time = 0.0;
  int n_contributing = 0;
  double mean_triangle_corr = 0.0;
};

/// Sample index of time `t` on a grid starting at `origin`, rounded half away
/// from zero.
Index time_to_index(double t, double origin, double fs);

/// One segment per R-R interval with an implied heart rate inside
/// [min_hr_bpm, max_hr_bpm] that lies within the PPG span.
std::vector<BeatSegment> segment_beats(const TimeSeries& ppg, const BeatAnnotation& ann,
                                       const TemplateConfig& cfg = {});

/// Rises linearly 0 -> 1 up to index floor(rise_fraction * (n - 1)), then
/// falls linearly back to 0 at n - 1.
Eigen::VectorXd leaning_triangle(Index n = 100, double rise_fraction = 0.3);

/// Resamples each beat to the template length, z-scores it and keeps those
/// correlating above the gate with the leaning triangle. Returns the
/// re-z-scored pointwise mean, or nullopt when no beat passes.
std::optional<PulseTemplate> gate_and_average(std::span<const BeatSegment> beats,
                                              const TemplateConfig& cfg = {},
                                              double center_time = 0.0);

/// One template per complete, non-overlapping window of cfg.window_s seconds
/// (measured from the first channel's t0). Beats are assigned to the window
/// containing their start. Throws NoUsableSignal when no window yields one.
std::vector<PulseTemplate> build_window_templates(std::span<const TimeSeries> channels,
                                                  const BeatAnnotation& ann,
                                                  const TemplateConfig& cfg = {});

struct BlendWeights {
  std::size_t first = 0;
  std::size_t second = 0;
  double w_first = 1.0;
  double w_second = 0.0;
};

/// Inverse-distance weights of the two templates whose centers bracket `t`.
/// Templates must be sorted by center time.
BlendWeights blend_weights(std::span<const PulseTemplate> templates, double t);

/// w_first * wave_first + w_second * wave_second (not re-normalized).
Eigen::VectorXd blend_templates(std::span<const PulseTemplate> templates, double t);

/// Concatenates one blended, re-z-scored template per R-R interval, each
/// resampled to the samples between its anchors round((t_i - origin) * fs).
/// The result starts at the first R peak's anchor and ends at the last one's.
TimeSeries synthesize_reference(const BeatAnnotation& ann,
                                std::span<const PulseTemplate> templates, double fs,
                                double origin = 0.0);

/// Reference laid onto a record's sample grid. Samples outside
/// [begin, end) are zero and carry no training signal.
struct AlignedReference {
  TimeSeries signal;
  Index begin = 0;
  Index end = 0;
};

/// R-peak detection on the ECG, window templates and reference synthesis for
/// one record, laid onto the record's grid.
struct PreparedReference {
  BeatAnnotation beats;
  std::vector<PulseTemplate> templates;
  AlignedReference reference;
};

PreparedReference prepare_reference(const MultiChannelRecord& record,
                                    const TemplateConfig& cfg = {},
                                    const PanTompkinsConfig& pt = {});

/// Places a synthesized reference onto a grid of `n` samples starting at `origin`.
AlignedReference align_reference(const TimeSeries& reference, double origin, Index n);

}  // namespace ppgfusion
