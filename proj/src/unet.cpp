#include "lenslearn/unet.hpp"

#include <algorithm>

namespace lenslearn::nn {

void UNetConfig::validate() const {
  if (depth == 0) throw ConfigError("unet: depth must be at least 1");
  if (base_channels == 0 || in_channels == 0 || out_channels == 0) {
    throw ConfigError("unet: channel counts must be positive");
  }
  if (depth >= 16 || input_hw == 0 || input_hw % (std::size_t{1} << depth) != 0) {
    throw ConfigError("unet: input size " + std::to_string(input_hw) +
                      " is not divisible by 2^depth = " + std::to_string(std::size_t{1} << depth));
  }
}

namespace {
UNetConfig validated(UNetConfig cfg) {
  cfg.validate();
  return cfg;
}
}  // namespace

template <typename T>
UNet<T>::UNet(UNetConfig cfg)
    : cfg_(validated(cfg)),
      bottleneck_(cfg.stage_channels(cfg.depth), cfg.stage_channels(cfg.depth) * 2,
                  cfg.residual_in_block),
      head_(cfg.base_channels, cfg.out_channels, 1, 0) {
  std::size_t in = cfg_.in_channels;
  for (std::size_t k = 1; k <= cfg_.depth; ++k) {
    encoder_.emplace_back(in, cfg_.stage_channels(k), cfg_.residual_in_block);
    pools_.emplace_back();
    in = cfg_.stage_channels(k);
  }
  for (std::size_t k = 1; k <= cfg_.depth; ++k) {
    const std::size_t c = cfg_.stage_channels(k);
    ups_.emplace_back();
    // halves the channel count of the deeper level before the skip concat
    up_convs_.emplace_back(2 * c, c, 3, 1);
    decoder_.emplace_back(2 * c, c, cfg_.residual_in_block);
  }
}

template <typename T>
BasicTensor<T> UNet<T>::forward(const BasicTensor<T>& x, Mode mode) {
  require_rank4(x.shape(), "unet input");
  if (x.dim(1) != cfg_.in_channels || x.dim(2) != cfg_.input_hw || x.dim(3) != cfg_.input_hw) {
    throw DimensionError("unet: input " + shape_string(x.shape()) + " does not match configured " +
                         std::to_string(cfg_.in_channels) + "x" + std::to_string(cfg_.input_hw) +
                         "x" + std::to_string(cfg_.input_hw));
  }
  trace_.clear();
  std::vector<BasicTensor<T>> skips;
  BasicTensor<T> h = x;
  for (std::size_t i = 0; i < cfg_.depth; ++i) {
    skips.push_back(encoder_[i].forward(h, mode));
    h = pools_[i].forward(skips.back(), mode);
    trace_.emplace_back("encoder" + std::to_string(i + 1), h.shape());
  }
  h = bottleneck_.forward(h, mode);
  trace_.emplace_back("bottleneck", h.shape());
  for (std::size_t i = cfg_.depth; i-- > 0;) {
    BasicTensor<T> up = up_convs_[i].forward(ups_[i].forward(h, mode), mode);
    if (up.shape() != skips[i].shape()) {
      throw DimensionError("unet: skip " + shape_string(skips[i].shape()) +
                           " does not match decoder " + shape_string(up.shape()));
    }
    h = decoder_[i].forward(ops::concat_channels(skips[i], up), mode);
    trace_.emplace_back("decoder" + std::to_string(i + 1), h.shape());
  }
  return head_.forward(h, mode);
}

template <typename T>
BasicTensor<T> UNet<T>::backward(const BasicTensor<T>& grad_out) {
  BasicTensor<T> g = head_.backward(grad_out);
  std::vector<BasicTensor<T>> skip_grads(cfg_.depth);
  for (std::size_t i = 0; i < cfg_.depth; ++i) {
    BasicTensor<T> gcat = decoder_[i].backward(g);
    auto [gskip, gup] = ops::split_channels(gcat, cfg_.stage_channels(i + 1));
    skip_grads[i] = std::move(gskip);
    g = ups_[i].backward(up_convs_[i].backward(gup));
  }
  g = bottleneck_.backward(g);
  for (std::size_t i = cfg_.depth; i-- > 0;) {
    g = ops::add(pools_[i].backward(g), skip_grads[i]);
    g = encoder_[i].backward(g);
  }
  return g;
}

template <typename T>
void UNet<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  auto name = [&](const std::string& n) { return prefix.empty() ? n : prefix + "." + n; };
  for (std::size_t i = 0; i < cfg_.depth; ++i) {
    encoder_[i].collect(name("enc" + std::to_string(i + 1)), out);
  }
  bottleneck_.collect(name("bottleneck"), out);
  for (std::size_t i = cfg_.depth; i-- > 0;) {
    up_convs_[i].collect(name("up" + std::to_string(i + 1)), out);
    decoder_[i].collect(name("dec" + std::to_string(i + 1)), out);
  }
  head_.collect(name("head"), out);
}

template <typename T>
BasicTensor<T> UNet<T>::reconstruct(const BasicTensor<T>& x, Mode mode) {
  BasicTensor<T> out = ops::sigmoid_forward(forward(x, mode));
  // float sigmoid saturates to exactly 0 or 1 for |logit| beyond ~17..88
  const T lo = T(1e-7), hi = T(1) - T(1e-7);
  for (auto& v : out.data()) v = std::clamp(v, lo, hi);
  return out;
}

template class UNet<float>;
template class UNet<double>;

}  // namespace lenslearn::nn
