#include "lenslearn/nn.hpp"

#include <cmath>

#include "lenslearn/rng.hpp"

namespace lenslearn::nn {

namespace {
std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}
}  // namespace

template <typename T>
std::vector<NamedTensor<T>> named_state(Module<T>& m) {
  std::vector<NamedTensor<T>> out;
  m.collect("", out);
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> parameters(Module<T>& m) {
  std::vector<NamedTensor<T>> out;
  for (auto& e : named_state(m)) {
    if (e.trainable) out.push_back(e);
  }
  return out;
}

template <typename T>
std::size_t count_parameters(Module<T>& m) {
  std::size_t n = 0;
  for (auto& e : parameters(m)) n += e.tensor->size();
  return n;
}

template <typename T>
void zero_grad(Module<T>& m) {
  for (auto& e : parameters(m)) {
    e.tensor->ensure_grad();
    e.tensor->zero_grad();
  }
}

template <typename T>
void init_he_uniform(Module<T>& m, std::uint64_t seed) {
  for (auto& e : named_state(m)) {
    BasicTensor<T>& t = *e.tensor;
    const bool is_weight = e.name.size() >= 6 && e.name.ends_with("weight") && t.rank() == 4;
    if (!is_weight) continue;
    const std::size_t fan_in = t.dim(1) * t.dim(2) * t.dim(3);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Rng rng(derive_seed(seed, {hash_name(e.name)}));
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  }
}

template <typename T, typename U>
void copy_state(Module<T>& src, Module<U>& dst) {
  auto a = named_state(src);
  auto b = named_state(dst);
  if (a.size() != b.size()) {
    throw DimensionError("copy_state: source has " + std::to_string(a.size()) +
                         " tensors, destination " + std::to_string(b.size()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name) {
      throw DimensionError("copy_state: tensor " + std::to_string(i) + " is '" + a[i].name +
                           "' in source but '" + b[i].name + "' in destination");
    }
    require_same_shape(a[i].tensor->shape(), b[i].tensor->shape(), a[i].name.c_str());
    auto src_data = a[i].tensor->data();
    auto dst_data = b[i].tensor->data();
    for (std::size_t k = 0; k < src_data.size(); ++k) dst_data[k] = static_cast<U>(src_data[k]);
  }
}

// Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  std::size_t padding) {
  params_.kernel = BasicTensor<T>({out_channels, in_channels, kernel, kernel});
  params_.bias = BasicTensor<T>({out_channels});
  params_.stride = 1;
  params_.padding = padding;
  params_.kernel.ensure_grad();
  params_.bias.ensure_grad();
}

template <typename T>
BasicTensor<T> Conv2d<T>::forward(const BasicTensor<T>& x, Mode mode) {
  (void)mode;
  input_ = x;
  return ops::conv2d_forward(x, params_);
}

template <typename T>
BasicTensor<T> Conv2d<T>::backward(const BasicTensor<T>& grad_out) {
  auto g = ops::conv2d_backward(input_, params_, grad_out);
  params_.kernel.ensure_grad();
  params_.bias.ensure_grad();
  auto gk = params_.kernel.grad();
  for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g.kernel[i];
  auto gb = params_.bias.grad();
  for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g.bias[i];
  return std::move(g.input);
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  out.push_back({join(prefix, "weight"), &params_.kernel, true});
  out.push_back({join(prefix, "bias"), &params_.bias, true});
}

// BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels)
    : gamma_({channels}, T(1)),
      beta_({channels}, T(0)),
      running_mean_({channels}, T(0)),
      running_var_({channels}, T(1)) {
  gamma_.ensure_grad();
  beta_.ensure_grad();
}

template <typename T>
ops::BatchNormState<T> BatchNorm2d<T>::state(Mode mode) const {
  ops::BatchNormState<T> s;
  s.gamma = gamma_.storage();
  s.beta = beta_.storage();
  s.running_mean = running_mean_.storage();
  s.running_var = running_var_.storage();
  s.mode = mode;
  return s;
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::forward(const BasicTensor<T>& x, Mode mode) {
  auto s = state(mode);
  auto y = ops::batchnorm_forward(x, s, &cache_);
  running_mean_.storage() = s.running_mean;
  running_var_.storage() = s.running_var;
  return y;
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::backward(const BasicTensor<T>& grad_out) {
  auto s = state(cache_.mode);
  auto g = ops::batchnorm_backward(grad_out, s, cache_);
  gamma_.ensure_grad();
  beta_.ensure_grad();
  for (std::size_t c = 0; c < g.gamma.size(); ++c) {
    gamma_.grad()[c] += g.gamma[c];
    beta_.grad()[c] += g.beta[c];
  }
  return std::move(g.input);
}

template <typename T>
void BatchNorm2d<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  out.push_back({join(prefix, "gamma"), &gamma_, true});
  out.push_back({join(prefix, "beta"), &beta_, true});
  out.push_back({join(prefix, "running_mean"), &running_mean_, false});
  out.push_back({join(prefix, "running_var"), &running_var_, false});
}

// Elementwise and resampling layers

template <typename T>
BasicTensor<T> ReLU<T>::forward(const BasicTensor<T>& x, Mode mode) {
  (void)mode;
  input_ = x;
  return ops::relu_forward(x);
}

template <typename T>
BasicTensor<T> ReLU<T>::backward(const BasicTensor<T>& grad_out) {
  return ops::relu_backward(input_, grad_out);
}

template <typename T>
BasicTensor<T> MaxPool2x2<T>::forward(const BasicTensor<T>& x, Mode mode) {
  (void)mode;
  input_shape_ = x.shape();
  if (floor_mode_) {
    auto cropped = ops::crop_even_forward(x);
    cropped_shape_ = cropped.shape();
    auto r = ops::maxpool2x2_forward(cropped);
    argmax_ = std::move(r.argmax);
    return std::move(r.output);
  }
  cropped_shape_ = x.shape();
  auto r = ops::maxpool2x2_forward(x);
  argmax_ = std::move(r.argmax);
  return std::move(r.output);
}

template <typename T>
BasicTensor<T> MaxPool2x2<T>::backward(const BasicTensor<T>& grad_out) {
  auto g = ops::maxpool2x2_backward(grad_out, argmax_, cropped_shape_);
  return ops::crop_even_backward(g, input_shape_);
}

template <typename T>
BasicTensor<T> Upsample2x<T>::forward(const BasicTensor<T>& x, Mode mode) {
  (void)mode;
  return ops::upsample2x_forward(x);
}

template <typename T>
BasicTensor<T> Upsample2x<T>::backward(const BasicTensor<T>& grad_out) {
  return ops::upsample2x_backward(grad_out);
}

template <typename T>
BasicTensor<T> GlobalAvgPool<T>::forward(const BasicTensor<T>& x, Mode mode) {
  (void)mode;
  input_shape_ = x.shape();
  return ops::global_avg_pool_forward(x).reshaped({x.dim(0), x.dim(1)});
}

template <typename T>
BasicTensor<T> GlobalAvgPool<T>::backward(const BasicTensor<T>& grad_out) {
  return ops::global_avg_pool_backward(
      grad_out.reshaped({input_shape_[0], input_shape_[1], 1, 1}), input_shape_);
}

template <typename T>
BasicTensor<T> Linear<T>::forward(const BasicTensor<T>& x, Mode mode) {
  if (x.rank() != 2) throw DimensionError("linear: expected N x C input, got " + shape_string(x.shape()));
  auto y = conv_.forward(x.reshaped({x.dim(0), x.dim(1), 1, 1}), mode);
  return y.reshaped({y.dim(0), y.dim(1)});
}

template <typename T>
BasicTensor<T> Linear<T>::backward(const BasicTensor<T>& grad_out) {
  auto g = conv_.backward(grad_out.reshaped({grad_out.dim(0), grad_out.dim(1), 1, 1}));
  return g.reshaped({g.dim(0), g.dim(1)});
}

// Sequential

template <typename T>
BasicTensor<T> Sequential<T>::forward(const BasicTensor<T>& x, Mode mode) {
  BasicTensor<T> h = x;
  for (auto& e : layers_) h = e.module->forward(h, mode);
  return h;
}

template <typename T>
BasicTensor<T> Sequential<T>::backward(const BasicTensor<T>& grad_out) {
  BasicTensor<T> g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->module->backward(g);
  return g;
}

template <typename T>
void Sequential<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  for (auto& e : layers_) e.module->collect(join(prefix, e.name), out);
}

// DenseBlock

template <typename T>
DenseBlock<T>::DenseBlock(std::size_t in_channels, std::size_t out_channels, bool residual)
    : conv1_(in_channels, out_channels, 3, 1),
      conv2_(out_channels, out_channels, 3, 1),
      bn_(out_channels),
      residual_(residual) {}

template <typename T>
BasicTensor<T> DenseBlock<T>::forward(const BasicTensor<T>& x, Mode mode) {
  BasicTensor<T> h1 = relu1_.forward(conv1_.forward(x, mode), mode);
  BasicTensor<T> h2 = relu2_.forward(conv2_.forward(h1, mode), mode);
  if (residual_) h2 = ops::add(h2, identity_skip() ? x : h1);
  return bn_.forward(h2, mode);
}

template <typename T>
BasicTensor<T> DenseBlock<T>::backward(const BasicTensor<T>& grad_out) {
  BasicTensor<T> ds = bn_.backward(grad_out);
  BasicTensor<T> dh1 = conv2_.backward(relu2_.backward(ds));
  if (residual_ && !identity_skip()) dh1 = ops::add(dh1, ds);
  BasicTensor<T> dx = conv1_.backward(relu1_.backward(dh1));
  if (identity_skip()) dx = ops::add(dx, ds);
  return dx;
}

template <typename T>
void DenseBlock<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  conv1_.collect(join(prefix, "conv1"), out);
  conv2_.collect(join(prefix, "conv2"), out);
  bn_.collect(join(prefix, "bn"), out);
}

#define LENSLEARN_INSTANTIATE(T)                                             \
  template std::vector<NamedTensor<T>> named_state(Module<T>&);              \
  template std::vector<NamedTensor<T>> parameters(Module<T>&);               \
  template std::size_t count_parameters(Module<T>&);                         \
  template void zero_grad(Module<T>&);                                       \
  template void init_he_uniform(Module<T>&, std::uint64_t);                  \
  template class Conv2d<T>;                                                  \
  template class BatchNorm2d<T>;                                             \
  template class ReLU<T>;                                                    \
  template class MaxPool2x2<T>;                                              \
  template class Upsample2x<T>;                                              \
  template class GlobalAvgPool<T>;                                           \
  template class Linear<T>;                                                  \
  template class Sequential<T>;                                              \
  template class DenseBlock<T>;

LENSLEARN_INSTANTIATE(float)
LENSLEARN_INSTANTIATE(double)
#undef LENSLEARN_INSTANTIATE

template void copy_state(Module<float>&, Module<float>&);
template void copy_state(Module<float>&, Module<double>&);
template void copy_state(Module<double>&, Module<float>&);
template void copy_state(Module<double>&, Module<double>&);

}  // namespace lenslearn::nn
