#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lenslearn/ops.hpp"
#include "lenslearn/tensor.hpp"

namespace lenslearn::nn {

using ops::Mode;

// A parameter or persistent buffer, addressed by its dotted path
// ("enc1.conv1.weight"). Buffers (batchnorm running statistics) are saved in
// checkpoints but are not trainable.
template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T>* tensor;
  bool trainable;
};

// Base of every layer and network. forward() caches what backward() needs;
// backward() accumulates parameter gradients and returns the input gradient.
template <typename T>
class Module {
 public:
  virtual ~Module() = default;
  virtual BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) = 0;
  virtual BasicTensor<T> backward(const BasicTensor<T>& grad_out) = 0;
  virtual void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
    (void)prefix;
    (void)out;
  }
};

// Parameters and buffers in declaration order.
template <typename T>
std::vector<NamedTensor<T>> named_state(Module<T>& m);

template <typename T>
std::vector<NamedTensor<T>> parameters(Module<T>& m);

template <typename T>
std::size_t count_parameters(Module<T>& m);

template <typename T>
void zero_grad(Module<T>& m);

// He-uniform weights (bound sqrt(6 / fan_in)), zero biases. Each tensor draws
// from its own stream keyed by (seed, name).
template <typename T>
void init_he_uniform(Module<T>& m, std::uint64_t seed);

// Copies every parameter and buffer from src into dst; names and shapes must match.
template <typename T, typename U>
void copy_state(Module<T>& src, Module<U>& dst);

template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t padding);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) override;

  ops::ConvParams<T>& params() { return params_; }
  std::size_t in_channels() const { return params_.kernel.dim(1); }
  std::size_t out_channels() const { return params_.kernel.dim(0); }

 private:
  ops::ConvParams<T> params_;
  BasicTensor<T> input_;
};

template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(std::size_t channels);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) override;

 private:
  ops::BatchNormState<T> state(Mode mode) const;

  BasicTensor<T> gamma_, beta_, running_mean_, running_var_;
  ops::BatchNormCache<T> cache_;
};

template <typename T>
class ReLU : public Module<T> {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;

 private:
  BasicTensor<T> input_;
};

// With floor_mode set an odd trailing row/column is dropped before pooling.
template <typename T>
class MaxPool2x2 : public Module<T> {
 public:
  explicit MaxPool2x2(bool floor_mode = false) : floor_mode_(floor_mode) {}
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;

 private:
  bool floor_mode_;
  Shape input_shape_, cropped_shape_;
  std::vector<std::uint32_t> argmax_;
};

template <typename T>
class Upsample2x : public Module<T> {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
};

// N x C x H x W -> N x C
template <typename T>
class GlobalAvgPool : public Module<T> {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;

 private:
  Shape input_shape_;
};

// N x C -> N x K, stored as a 1x1 convolution named "weight"/"bias".
template <typename T>
class Linear : public Module<T> {
 public:
  Linear(std::size_t in_features, std::size_t out_features) : conv_(in_features, out_features, 1, 0) {}
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    conv_.collect(prefix, out);
  }

 private:
  Conv2d<T> conv_;
};

template <typename T>
class Sequential : public Module<T> {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L& add(std::string name, Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back({std::move(name), std::move(layer)});
    return ref;
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) override;

  std::size_t size() const { return layers_.size(); }
  const std::string& name(std::size_t i) const { return layers_[i].name; }
  Module<T>& at(std::size_t i) { return *layers_[i].module; }

 private:
  struct Entry {
    std::string name;
    std::unique_ptr<Module<T>> module;
  };
  std::vector<Entry> layers_;
};

// conv3x3 -> ReLU -> conv3x3 -> ReLU -> batchnorm. With a residual the
// block input (when channel counts match) or else the first ReLU output is
// added in front of the batchnorm.
template <typename T>
class DenseBlock : public Module<T> {
 public:
  DenseBlock(std::size_t in_channels, std::size_t out_channels, bool residual);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) override;

  std::size_t in_channels() const { return conv1_.in_channels(); }
  std::size_t out_channels() const { return conv2_.out_channels(); }
  bool identity_skip() const { return residual_ && in_channels() == out_channels(); }

  Conv2d<T>& conv1() { return conv1_; }
  Conv2d<T>& conv2() { return conv2_; }

 private:
  Conv2d<T> conv1_;
  ReLU<T> relu1_;
  Conv2d<T> conv2_;
  ReLU<T> relu2_;
  BatchNorm2d<T> bn_;
  bool residual_;
};

}  // namespace lenslearn::nn
