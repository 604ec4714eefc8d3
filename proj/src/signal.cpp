#include "ppgfusion/signal.hpp"

#include "ppgfusion/butterworth.hpp"

#include <cmath>

namespace ppgfusion {

TimeSeries::TimeSeries(Eigen::VectorXd s, double fs_hz, double start)
    : samples(std::move(s)), fs(fs_hz), t0(start) {
  if (!(fs > 0.0) || !std::isfinite(fs)) throw InvalidInput("sampling rate must be positive");
}

TimeSeries TimeSeries::slice(Index begin, Index end) const {
  if (begin < 0 || end > size() || begin > end) throw InvalidInput("slice out of range");
  return TimeSeries(samples.segment(begin, end - begin), fs, time_at(begin));
}

const char* channel_name(PpgChannel c) {
  switch (c) {
    case PpgChannel::Green: return "green";
    case PpgChannel::Red: return "red";
    case PpgChannel::Ir: return "ir";
  }
  return "?";
}

const TimeSeries& MultiChannelRecord::ppg(PpgChannel c) const {
  switch (c) {
    case PpgChannel::Green: return green;
    case PpgChannel::Red: return red;
    case PpgChannel::Ir: return ir;
  }
  throw InvalidInput("unknown channel");
}

TimeSeries& MultiChannelRecord::ppg(PpgChannel c) {
  return const_cast<TimeSeries&>(std::as_const(*this).ppg(c));
}

void MultiChannelRecord::validate() const {
  for (const TimeSeries* ch : {&red, &ir, &ecg}) {
    if (ch->fs != green.fs || ch->t0 != green.t0 || ch->size() != green.size())
      throw InvalidInput("record channels must share fs, t0 and sample count");
  }
  if (green.empty()) throw InvalidInput("record is empty");
}

Eigen::VectorXd resample(const Eigen::Ref<const Eigen::VectorXd>& x, Index target_len) {
  const Index n = x.size();
  if (n < 2) throw InvalidInput("resample needs at least 2 samples");
  if (target_len < 2) throw InvalidInput("resample target length must be >= 2");
  if (target_len == n) return x;
  Eigen::VectorXd out(target_len);
  const double step = static_cast<double>(n - 1) / static_cast<double>(target_len - 1);
  for (Index i = 0; i < target_len; ++i) {
    const double pos = static_cast<double>(i) * step;
    Index k = static_cast<Index>(std::floor(pos));
    if (k >= n - 1) k = n - 2;
    const double frac = pos - static_cast<double>(k);
    out[i] = x[k] + frac * (x[k + 1] - x[k]);
  }
  out[0] = x[0];
  out[target_len - 1] = x[n - 1];
  return out;
}

TimeSeries resample(const TimeSeries& x, Index target_len) {
  const double fs = x.fs * static_cast<double>(target_len) / static_cast<double>(x.size());
  return TimeSeries(resample(x.samples, target_len), fs, x.t0);
}

TimeSeries zscore(const TimeSeries& x) { return TimeSeries(zscore(x.samples), x.fs, x.t0); }

Eigen::VectorXd moving_average(const Eigen::Ref<const Eigen::VectorXd>& x, Index window) {
  if (window < 1) throw InvalidInput("moving average window must cover at least one sample");
  const Index n = x.size();
  Eigen::VectorXd prefix(n + 1);
  prefix[0] = 0.0;
  for (Index i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  const Index left = (window - 1) / 2;
  const Index right = window - 1 - left;
  Eigen::VectorXd out(n);
  for (Index i = 0; i < n; ++i) {
    const Index a = std::max<Index>(0, i - left);
    const Index b = std::min<Index>(n, i + right + 1);
    out[i] = (prefix[b] - prefix[a]) / static_cast<double>(b - a);
  }
  return out;
}

TimeSeries moving_average(const TimeSeries& x, double window_s) {
  const Index window = static_cast<Index>(std::llround(window_s * x.fs));
  return TimeSeries(moving_average(x.samples, window), x.fs, x.t0);
}

TimeSeries bandpass(const TimeSeries& x, double lo_hz, double hi_hz) {
  const ButterworthBandpass filter(lo_hz, hi_hz, x.fs);
  return TimeSeries(filter.filter_zero_phase(x.samples), x.fs, x.t0);
}

}  // namespace ppgfusion
