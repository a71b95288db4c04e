#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lenslearn/tensor.hpp"

// Forward and backward kernels for every layer the reconstruction and
// classification networks use. All image tensors are NCHW.
namespace lenslearn::ops {

template <typename T>
struct ConvParams {
  BasicTensor<T> kernel;  // out x in x kh x kw
  BasicTensor<T> bias;    // out
  std::size_t stride = 1;
  std::size_t padding = 0;
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> kernel;
  BasicTensor<T> bias;
};

// floor((extent + 2*padding - k) / stride) + 1
std::size_t conv_output_extent(std::size_t extent, std::size_t k, std::size_t stride,
                               std::size_t padding);

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvParams<T>& p);

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvParams<T>& p,
                             const BasicTensor<T>& grad_out);

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  // Flat input index of each output's maximum.
  std::vector<std::uint32_t> argmax;
};

// Non-overlapping 2x2 max pooling. H and W must be even. Ties resolve to the
// first element of the window in row-major order.
template <typename T>
PoolResult<T> maxpool2x2_forward(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> maxpool2x2_backward(const BasicTensor<T>& grad_out,
                                   const std::vector<std::uint32_t>& argmax,
                                   const Shape& input_shape);

template <typename T>
BasicTensor<T> upsample2x_forward(const BasicTensor<T>& input);

// Adjoint of nearest-neighbour replication: sums each 2x2 block.
template <typename T>
BasicTensor<T> upsample2x_backward(const BasicTensor<T>& grad_out);

enum class Mode { train, eval };

template <typename T>
struct BatchNormState {
  std::vector<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.1);
  Mode mode = Mode::train;

  static BatchNormState identity(std::size_t channels);
};

template <typename T>
struct BatchNormCache {
  BasicTensor<T> normalized;  // x_hat
  std::vector<T> inv_std;
  Mode mode = Mode::train;
};

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> input;
  std::vector<T> gamma, beta;
};

// In train mode normalizes with batch statistics and updates the running
// statistics of s (running_var uses the unbiased estimate). In eval mode only
// the running statistics are read.
template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& input, BatchNormState<T>& s,
                                 BatchNormCache<T>* cache = nullptr);

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& grad_out, const BatchNormState<T>& s,
                                     const BatchNormCache<T>& cache);

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input);

// Gradient passes where input > 0; the subgradient at 0 is 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out);

template <typename T>
T sigmoid(T x);

template <typename T>
BasicTensor<T> sigmoid_forward(const BasicTensor<T>& input);

// Takes the forward output s and returns grad_out * s * (1 - s).
template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& output, const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& grad,
                                                         std::size_t channels_a);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Drops a trailing row/column so H and W become even. Backward zero-fills.
template <typename T>
BasicTensor<T> crop_even_forward(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> crop_even_backward(const BasicTensor<T>& grad_out, const Shape& input_shape);

// N x C x H x W -> N x C x 1 x 1
template <typename T>
BasicTensor<T> global_avg_pool_forward(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& grad_out, const Shape& input_shape);

template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Finite-difference verification. The op output y is reduced to the scalar
// sum(weights * y) (weights default to all ones). Returns
//   max_i |analytic_i - numeric_i| / max(|analytic_i|, |numeric_i|, 1e-8)
// where numeric is the central difference with step eps.
template <typename T>
using ForwardFn = std::function<BasicTensor<T>(const BasicTensor<T>&)>;
template <typename T>
using BackwardFn = std::function<BasicTensor<T>(const BasicTensor<T>& input,
                                                const BasicTensor<T>& grad_out)>;

template <typename T>
double gradcheck(const ForwardFn<T>& forward, const BackwardFn<T>& backward,
                 const BasicTensor<T>& input, double eps, const BasicTensor<T>* weights = nullptr);

// Same comparison for a scalar function whose analytic gradient is supplied.
// numeric_loss may run at a different precision from the analytic path.
double gradcheck_scalar(const std::function<double(std::size_t index, double delta)>& perturbed_loss,
                        std::span<const double> analytic, double eps);

}  // namespace lenslearn::ops
