#pragma once

// 1D U-Net over (channels x time) tensors, templated on the scalar type.
//
// Parameters live in one flat vector so the optimizer, the gradient check and
// the checkpoint code can all treat them uniformly; each layer views its slice
// through Eigen::Map. Convolution weights are stored as a (cout x kernel*cin)
// column-major matrix whose column k*cin + c holds tap k of input channel c.

#include "ppgfusion/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace ppgfusion {

template <typename Scalar>
using Tensor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

struct UNetConfig {
  int in_channels = 3;
  int depth = 4;
  int base_channels = 32;
  int kernel_down = 15;
  int kernel_up = 5;
  double leaky_slope = 0.2;
  Eigen::Index window_len = 1024;

  /// Throws InvalidConfig.
  void validate() const;
  /// base_channels * 2^level for each level.
  std::vector<int> level_channels() const;

  bool operator==(const UNetConfig&) const = default;
};

/// A named parameter tensor inside the flat parameter vector. `shape` is
/// row-major (last index fastest): conv weights are [kernel, cin, cout].
struct TensorSpec {
  std::string name;
  std::vector<Eigen::Index> shape;
  Eigen::Index offset = 0;

  Eigen::Index size() const;
};

struct ConvSpec {
  int cin = 0;
  int cout = 0;
  int kernel = 1;
  Eigen::Index weight_offset = 0;
  Eigen::Index bias_offset = 0;
};

/// Parameter layout derived from the configuration alone.
class UNetLayout {
 public:
  explicit UNetLayout(const UNetConfig& cfg);

  const UNetConfig& config() const { return cfg_; }
  Eigen::Index parameter_count() const { return count_; }
  const std::vector<TensorSpec>& tensors() const { return tensors_; }

  const ConvSpec& down(int level) const { return down_[level]; }
  const ConvSpec& bottleneck() const { return bottleneck_; }
  const ConvSpec& up(int level) const { return up_[level]; }
  const ConvSpec& output() const { return output_; }

 private:
  ConvSpec add_conv(const std::string& name, int cin, int cout, int kernel);

  UNetConfig cfg_;
  std::vector<ConvSpec> down_;
  ConvSpec bottleneck_;
  std::vector<ConvSpec> up_;
  ConvSpec output_;
  std::vector<TensorSpec> tensors_;
  Eigen::Index count_ = 0;
};

namespace detail {

template <typename Scalar>
using ConstMatMap = Eigen::Map<const Tensor<Scalar>>;
template <typename Scalar>
using MatMap = Eigen::Map<Tensor<Scalar>>;
template <typename Scalar>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
template <typename Scalar>
using VecMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

// cols(k*cin + c, t) = x(c, t + k - kernel/2), zero outside.
template <typename Scalar>
void im2col(const Tensor<Scalar>& x, int kernel, Tensor<Scalar>& cols) {
  const Eigen::Index cin = x.rows();
  const Eigen::Index len = x.cols();
  const int pad = kernel / 2;
  cols.resize(cin * kernel, len);
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index shift = k - pad;
    const Eigen::Index dst_begin = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index dst_end = std::min<Eigen::Index>(len, len - shift);
    auto block = cols.middleRows(k * cin, cin);
    if (dst_begin > 0) block.leftCols(dst_begin).setZero();
    if (dst_end < len) block.rightCols(len - dst_end).setZero();
    if (dst_end > dst_begin)
      block.middleCols(dst_begin, dst_end - dst_begin) =
          x.middleCols(dst_begin + shift, dst_end - dst_begin);
  }
}

// Adjoint of im2col, accumulated into dx.
template <typename Scalar>
void col2im_add(const Tensor<Scalar>& dcols, int kernel, Tensor<Scalar>& dx) {
  const Eigen::Index cin = dx.rows();
  const Eigen::Index len = dx.cols();
  const int pad = kernel / 2;
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index shift = k - pad;
    const Eigen::Index dst_begin = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index dst_end = std::min<Eigen::Index>(len, len - shift);
    if (dst_end > dst_begin)
      dx.middleCols(dst_begin + shift, dst_end - dst_begin) +=
          dcols.block(k * cin, dst_begin, cin, dst_end - dst_begin);
  }
}

template <typename Scalar>
void leaky_relu_inplace(Tensor<Scalar>& y, Scalar slope) {
  y = y.array().max(y.array() * slope).matrix();
}

// dy *= leaky'(out); out has the same sign as the pre-activation.
template <typename Scalar>
void leaky_relu_backward(const Tensor<Scalar>& out, Scalar slope, Tensor<Scalar>& dy) {
  dy = (out.array() > Scalar(0)).select(dy.array(), dy.array() * slope).matrix();
}

template <typename Scalar>
void decimate(const Tensor<Scalar>& x, Tensor<Scalar>& y) {
  const Eigen::Index rows = x.rows();
  y = Eigen::Map<const Tensor<Scalar>, 0, Eigen::OuterStride<>>(x.data(), rows, x.cols() / 2,
                                                                 Eigen::OuterStride<>(2 * rows));
}

template <typename Scalar>
void decimate_backward_add(const Tensor<Scalar>& dy, Tensor<Scalar>& dx) {
  const Eigen::Index rows = dx.rows();
  Eigen::Map<Tensor<Scalar>, 0, Eigen::OuterStride<>>(dx.data(), rows, dy.cols(),
                                                      Eigen::OuterStride<>(2 * rows)) += dy;
}

template <typename Scalar>
using StridedMap = Eigen::Map<Tensor<Scalar>, 0, Eigen::OuterStride<>>;
template <typename Scalar>
using ConstStridedMap = Eigen::Map<const Tensor<Scalar>, 0, Eigen::OuterStride<>>;

// Linear 2x upsampling: even outputs copy, odd outputs average neighbours,
// the final odd output repeats the last input.
template <typename Scalar>
void upsample2(const Tensor<Scalar>& x, Tensor<Scalar>& y) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index n = x.cols();
  y.resize(rows, 2 * n);
  StridedMap<Scalar> even(y.data(), rows, n, Eigen::OuterStride<>(2 * rows));
  StridedMap<Scalar> odd(y.data() + rows, rows, n, Eigen::OuterStride<>(2 * rows));
  even = x;
  odd.leftCols(n - 1) = Scalar(0.5) * (x.leftCols(n - 1) + x.rightCols(n - 1));
  odd.col(n - 1) = x.col(n - 1);
}

template <typename Scalar>
void upsample2_backward(const Tensor<Scalar>& dy, Tensor<Scalar>& dx) {
  const Eigen::Index rows = dy.rows();
  const Eigen::Index n = dy.cols() / 2;
  ConstStridedMap<Scalar> even(dy.data(), rows, n, Eigen::OuterStride<>(2 * rows));
  ConstStridedMap<Scalar> odd(dy.data() + rows, rows, n, Eigen::OuterStride<>(2 * rows));
  dx = even;
  dx.leftCols(n - 1) += Scalar(0.5) * odd.leftCols(n - 1);
  dx.rightCols(n - 1) += Scalar(0.5) * odd.leftCols(n - 1);
  dx.col(n - 1) += odd.col(n - 1);
}

}  // namespace detail

/// Activations kept from a forward pass for the backward pass. Reusing one
/// cache across calls avoids reallocation.
template <typename Scalar>
struct ForwardCache {
  std::vector<Tensor<Scalar>> down_in;
  std::vector<Tensor<Scalar>> down_out;
  Tensor<Scalar> bottleneck_in;
  Tensor<Scalar> bottleneck_out;
  std::vector<Tensor<Scalar>> up_in;
  std::vector<Tensor<Scalar>> up_out;
  Tensor<Scalar> output;
  Tensor<Scalar> cols;  // scratch
};

/// Network evaluation for a fixed layout. Stateless apart from the layout.
template <typename Scalar>
class UNet {
 public:
  using Params = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Grad = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit UNet(const UNetConfig& cfg) : layout_(cfg) {}

  const UNetLayout& layout() const { return layout_; }
  const UNetConfig& config() const { return layout_.config(); }

  /// He-uniform (fan-in) weights, zero biases; deterministic in `seed`.
  Params initialize(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    Params p = Params::Zero(layout_.parameter_count());
    auto fill = [&](const ConvSpec& c) {
      const double limit = std::sqrt(6.0 / (static_cast<double>(c.cin) * c.kernel));
      std::uniform_real_distribution<double> dist(-limit, limit);
      const Eigen::Index n = static_cast<Eigen::Index>(c.cin) * c.kernel * c.cout;
      for (Eigen::Index i = 0; i < n; ++i) p[c.weight_offset + i] = static_cast<Scalar>(dist(rng));
    };
    for (int l = 0; l < config().depth; ++l) fill(layout_.down(l));
    fill(layout_.bottleneck());
    for (int l = config().depth - 1; l >= 0; --l) fill(layout_.up(l));
    fill(layout_.output());
    return p;
  }

  /// (in_channels x window_len) -> (1 x window_len).
  Tensor<Scalar> forward(const Params& params, const Tensor<Scalar>& input) const {
    ForwardCache<Scalar> cache;
    forward(params, input, cache);
    return cache.output;
  }

  const Tensor<Scalar>& forward(const Params& params, const Tensor<Scalar>& input,
                                ForwardCache<Scalar>& cache) const {
    check_params(params);
    const UNetConfig& cfg = config();
    if (input.rows() != cfg.in_channels || input.cols() != cfg.window_len)
      throw InvalidInput("forward: input must be in_channels x window_len");
    const int depth = cfg.depth;
    const auto slope = static_cast<Scalar>(cfg.leaky_slope);
    cache.down_in.resize(depth);
    cache.down_out.resize(depth);
    cache.up_in.resize(depth);
    cache.up_out.resize(depth);

    for (int l = 0; l < depth; ++l) {
      if (l == 0)
        cache.down_in[0] = input;
      else
        detail::decimate(cache.down_out[l - 1], cache.down_in[l]);
      conv(params, layout_.down(l), cache.down_in[l], cache.cols, cache.down_out[l]);
      detail::leaky_relu_inplace(cache.down_out[l], slope);
    }
    detail::decimate(cache.down_out[depth - 1], cache.bottleneck_in);
    conv(params, layout_.bottleneck(), cache.bottleneck_in, cache.cols, cache.bottleneck_out);
    detail::leaky_relu_inplace(cache.bottleneck_out, slope);

    Tensor<Scalar> upsampled;
    for (int l = depth - 1; l >= 0; --l) {
      const Tensor<Scalar>& below = l == depth - 1 ? cache.bottleneck_out : cache.up_out[l + 1];
      detail::upsample2(below, upsampled);
      const Tensor<Scalar>& skip = cache.down_out[l];
      Tensor<Scalar>& cat = cache.up_in[l];
      cat.resize(upsampled.rows() + skip.rows(), skip.cols());
      cat.topRows(upsampled.rows()) = upsampled;
      cat.bottomRows(skip.rows()) = skip;
      conv(params, layout_.up(l), cat, cache.cols, cache.up_out[l]);
      detail::leaky_relu_inplace(cache.up_out[l], slope);
    }
    conv(params, layout_.output(), cache.up_out[0], cache.cols, cache.output);
    return cache.output;
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  /// When `grad_input` is non-null it receives d(loss)/d(input).
  void backward(const Params& params, ForwardCache<Scalar>& cache,
                const Tensor<Scalar>& grad_output, Grad& grad,
                Tensor<Scalar>* grad_input = nullptr) const {
    check_params(params);
    if (grad.size() != params.size()) throw InvalidInput("backward: gradient size mismatch");
    const int depth = config().depth;
    const auto slope = static_cast<Scalar>(config().leaky_slope);

    std::vector<Tensor<Scalar>> d_skip(depth);
    for (int l = 0; l < depth; ++l) d_skip[l].setZero(cache.down_out[l].rows(), cache.down_out[l].cols());

    Tensor<Scalar> d_cur;  // gradient w.r.t. the current layer's output
    Tensor<Scalar> d_in;
    conv_backward(params, layout_.output(), cache.up_out[0], grad_output, cache.cols, grad, &d_cur);

    Tensor<Scalar> d_up;
    for (int l = 0; l < depth; ++l) {
      detail::leaky_relu_backward(cache.up_out[l], slope, d_cur);
      conv_backward(params, layout_.up(l), cache.up_in[l], d_cur, cache.cols, grad, &d_in);
      const Eigen::Index skip_rows = cache.down_out[l].rows();
      d_skip[l] += d_in.bottomRows(skip_rows);
      d_up = d_in.topRows(d_in.rows() - skip_rows);
      detail::upsample2_backward(d_up, d_cur);
    }

    detail::leaky_relu_backward(cache.bottleneck_out, slope, d_cur);
    conv_backward(params, layout_.bottleneck(), cache.bottleneck_in, d_cur, cache.cols, grad, &d_in);
    detail::decimate_backward_add(d_in, d_skip[depth - 1]);

    for (int l = depth - 1; l >= 0; --l) {
      d_cur = std::move(d_skip[l]);
      detail::leaky_relu_backward(cache.down_out[l], slope, d_cur);
      const bool need_dx = l > 0 || grad_input != nullptr;
      conv_backward(params, layout_.down(l), cache.down_in[l], d_cur, cache.cols, grad,
                    need_dx ? &d_in : nullptr);
      if (l > 0)
        detail::decimate_backward_add(d_in, d_skip[l - 1]);
      else if (grad_input != nullptr)
        *grad_input = d_in;
    }
  }

 private:
  void check_params(const Params& params) const {
    if (params.size() != layout_.parameter_count())
      throw InvalidInput("parameter vector does not match the network layout");
  }

  static void conv(const Params& params, const ConvSpec& c, const Tensor<Scalar>& x,
                   Tensor<Scalar>& cols, Tensor<Scalar>& y) {
    const detail::ConstMatMap<Scalar> w(params.data() + c.weight_offset, c.cout,
                                        static_cast<Eigen::Index>(c.kernel) * c.cin);
    const detail::ConstVecMap<Scalar> b(params.data() + c.bias_offset, c.cout);
    if (c.kernel == 1) {
      y.noalias() = w * x;
    } else {
      detail::im2col(x, c.kernel, cols);
      y.noalias() = w * cols;
    }
    y.colwise() += b;
  }

  static void conv_backward(const Params& params, const ConvSpec& c, const Tensor<Scalar>& x,
                            const Tensor<Scalar>& dy, Tensor<Scalar>& cols, Grad& grad,
                            Tensor<Scalar>* dx) {
    const Eigen::Index taps = static_cast<Eigen::Index>(c.kernel) * c.cin;
    const detail::ConstMatMap<Scalar> w(params.data() + c.weight_offset, c.cout, taps);
    detail::MatMap<Scalar> dw(grad.data() + c.weight_offset, c.cout, taps);
    detail::VecMap<Scalar> db(grad.data() + c.bias_offset, c.cout);
    db += dy.rowwise().sum();
    if (c.kernel == 1) {
      dw.noalias() += dy * x.transpose();
      if (dx != nullptr) dx->noalias() = w.transpose() * dy;
      return;
    }
    detail::im2col(x, c.kernel, cols);
    dw.noalias() += dy * cols.transpose();
    if (dx != nullptr) {
      cols.noalias() = w.transpose() * dy;
      dx->setZero(x.rows(), x.cols());
      detail::col2im_add(cols, c.kernel, *dx);
    }
  }

  UNetLayout layout_;
};

}  // namespace ppgfusion
