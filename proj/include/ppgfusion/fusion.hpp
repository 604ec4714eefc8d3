#pragma once

#include "ppgfusion/ecg.hpp"
#include "ppgfusion/templates.hpp"
#include "ppgfusion/training.hpp"

#include <vector>

namespace ppgfusion {

/// Start indices of the inference windows over n samples: hop L/2, plus a
/// final window flush with the end when the hops do not reach it.
std::vector<Index> fuse_window_starts(Index n, Index window_len);

/// Strictly positive triangular cross-fade weight over one window.
Eigen::VectorXd crossfade_weights(Index window_len);

/// The three PPG channels of [begin, begin + len), each z-scored; a constant
/// channel becomes zeros.
template <typename Scalar>
Tensor<Scalar> normalized_window(const MultiChannelRecord& record, Index begin, Index len) {
  Tensor<Scalar> w(3, len);
  for (int c = 0; c < 3; ++c) {
    const auto& x = record.ppg(kPpgChannels[c]).samples.segment(begin, len);
    w.row(c) = zscore_or_zero(x).template cast<Scalar>().transpose();
  }
  return w;
}

/// Full-record inference: overlapping windows, each normalized and passed
/// through the network, cross-faded back together.
template <typename Scalar>
TimeSeries fuse(const FusionModel<Scalar>& model, const MultiChannelRecord& record) {
  record.validate();
  const Index len = model.config.window_len;
  const Index n = record.size();
  if (n < len) throw InvalidInput("fuse: record shorter than one window");
  const UNet<Scalar> net(model.config);
  const Eigen::VectorXd weight = crossfade_weights(len);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd norm = Eigen::VectorXd::Zero(n);
  ForwardCache<Scalar> cache;
  for (Index start : fuse_window_starts(n, len)) {
    const Tensor<Scalar>& y = net.forward(model.params, normalized_window<Scalar>(record, start, len), cache);
    acc.segment(start, len) += weight.cwiseProduct(y.row(0).transpose().template cast<double>());
    norm.segment(start, len) += weight;
  }
  return TimeSeries(acc.cwiseQuotient(norm), record.fs(), record.green.t0);
}

struct WindowSelection {
  Index window_len = 1024;
  /// Stride between candidate windows.
  Index hop = 512;
  /// Keep at most this many, evenly spread over the candidates; 0 keeps all.
  Index max_windows = 0;
  /// Windows touching an R-R interval outside this band are skipped.
  double min_hr_bpm = 40.0;
  double max_hr_bpm = 185.0;
};

/// Start indices of training windows lying inside the reference span whose
/// R-R intervals are all plausible.
std::vector<Index> training_window_starts(const AlignedReference& ref, const BeatAnnotation& beats,
                                          double record_t0, const WindowSelection& sel);

/// Normalized input windows paired with the z-scored reference.
template <typename Scalar>
std::vector<WindowExample<Scalar>> make_training_windows(const MultiChannelRecord& record,
                                                         const PreparedReference& prepared,
                                                         const WindowSelection& sel) {
  std::vector<WindowExample<Scalar>> out;
  for (Index start :
       training_window_starts(prepared.reference, prepared.beats, record.green.t0, sel)) {
    WindowExample<Scalar> ex;
    ex.input = normalized_window<Scalar>(record, start, sel.window_len);
    ex.target = zscore_or_zero(prepared.reference.signal.samples.segment(start, sel.window_len))
                    .template cast<Scalar>()
                    .transpose();
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace ppgfusion
