#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lenslearn/nn.hpp"

namespace lenslearn::nn {

struct UNetConfig {
  std::size_t depth = 4;
  std::size_t base_channels = 16;
  std::size_t input_hw = 128;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  bool residual_in_block = true;
  std::uint64_t init_seed = 1;

  // Block output channels of encoder stage k (1-based): base * 2^(k-1).
  std::size_t stage_channels(std::size_t k) const { return base_channels << (k - 1); }
  // Throws ConfigError for invalid geometry.
  void validate() const;
};

// Encoder: depth x (dense block -> 2x2 max pool); bottleneck dense block;
// decoder: depth x (upsample x2 -> 3x3 conv -> concat with the matching
// encoder block output -> dense block); head: 1x1 conv. forward() returns
// logits; reconstruct() applies the output sigmoid, clamped to
// [1e-7, 1 - 1e-7] so values stay strictly inside (0, 1).
template <typename T>
class UNet : public Module<T> {
 public:
  explicit UNet(UNetConfig cfg);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) override;

  BasicTensor<T> reconstruct(const BasicTensor<T>& x, Mode mode = Mode::eval);

  const UNetConfig& config() const { return cfg_; }

  // Shape after each encoder stage (block + pool), the bottleneck, and each
  // decoder stage, recorded by the last forward().
  const std::vector<std::pair<std::string, Shape>>& trace() const { return trace_; }

  DenseBlock<T>& encoder_block(std::size_t i) { return encoder_[i]; }

 private:
  UNetConfig cfg_;
  std::vector<DenseBlock<T>> encoder_;
  std::vector<MaxPool2x2<T>> pools_;
  DenseBlock<T> bottleneck_;
  std::vector<Upsample2x<T>> ups_;
  std::vector<Conv2d<T>> up_convs_;
  std::vector<DenseBlock<T>> decoder_;  // decoder_[i] works at encoder level i
  Conv2d<T> head_;
  std::vector<std::pair<std::string, Shape>> trace_;
};

template <typename T>
UNet<T> build_unet(const UNetConfig& cfg) {
  UNet<T> net(cfg);
  init_he_uniform(net, cfg.init_seed);
  return net;
}

}  // namespace lenslearn::nn
