#include "ppgfusion/unet.hpp"

namespace ppgfusion {

void UNetConfig::validate() const {
  if (in_channels < 1) throw InvalidConfig("in_channels must be positive");
  if (depth < 1 || depth > 12) throw InvalidConfig("depth must lie in [1, 12]");
  if (base_channels < 1) throw InvalidConfig("base_channels must be positive");
  if (kernel_down < 1 || kernel_down % 2 == 0 || kernel_up < 1 || kernel_up % 2 == 0)
    throw InvalidConfig("kernel sizes must be odd and positive");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw InvalidConfig("leaky slope must lie in (0, 1)");
  const Eigen::Index factor = Eigen::Index{1} << depth;
  if (window_len < 2 * factor || window_len % factor != 0)
    throw InvalidConfig("window_len must be divisible by 2^depth");
}

std::vector<int> UNetConfig::level_channels() const {
  std::vector<int> ch(depth);
  for (int l = 0; l < depth; ++l) ch[l] = base_channels << l;
  return ch;
}

Eigen::Index TensorSpec::size() const {
  Eigen::Index n = 1;
  for (Eigen::Index d : shape) n *= d;
  return n;
}

ConvSpec UNetLayout::add_conv(const std::string& name, int cin, int cout, int kernel) {
  ConvSpec c{cin, cout, kernel, 0, 0};
  c.weight_offset = count_;
  tensors_.push_back({name + ".weight", {kernel, cin, cout}, count_});
  count_ += static_cast<Eigen::Index>(kernel) * cin * cout;
  c.bias_offset = count_;
  tensors_.push_back({name + ".bias", {cout}, count_});
  count_ += cout;
  return c;
}

UNetLayout::UNetLayout(const UNetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::vector<int> ch = cfg_.level_channels();
  const int depth = cfg_.depth;
  for (int l = 0; l < depth; ++l)
    down_.push_back(add_conv("down" + std::to_string(l), l == 0 ? cfg_.in_channels : ch[l - 1],
                             ch[l], cfg_.kernel_down));
  bottleneck_ = add_conv("bottleneck", ch[depth - 1], ch[depth - 1], cfg_.kernel_down);
  up_.resize(depth);
  for (int l = depth - 1; l >= 0; --l) {
    const int below = l == depth - 1 ? ch[depth - 1] : ch[l + 1];
    up_[l] = add_conv("up" + std::to_string(l), below + ch[l], ch[l], cfg_.kernel_up);
  }
  output_ = add_conv("output", ch[0], 1, 1);
}

}  // namespace ppgfusion
