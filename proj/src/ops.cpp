#include "lenslearn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace lenslearn::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Upper bound on im2col buffer elements; larger batches are processed in chunks.
constexpr std::size_t kColumnBudget = std::size_t{1} << 16;

struct ConvGeometry {
  std::size_t batch, in_c, in_h, in_w;
  std::size_t out_c, kh, kw;
  std::size_t out_h, out_w;
  std::size_t stride, padding;

  std::size_t patch() const { return in_c * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
  std::size_t chunk_items() const {
    const std::size_t per_item = std::max<std::size_t>(patch() * pixels(), 1);
    return std::max<std::size_t>(1, kColumnBudget / per_item);
  }
};

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& input, const ConvParams<T>& p) {
  require_rank4(input.shape(), "conv2d input");
  require_rank4(p.kernel.shape(), "conv2d kernel");
  if (p.stride == 0) throw DimensionError("conv2d: stride must be positive");
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.in_c = input.dim(1);
  g.in_h = input.dim(2);
  g.in_w = input.dim(3);
  g.out_c = p.kernel.dim(0);
  g.kh = p.kernel.dim(2);
  g.kw = p.kernel.dim(3);
  g.stride = p.stride;
  g.padding = p.padding;
  if (p.kernel.dim(1) != g.in_c) {
    throw DimensionError("conv2d: input " + shape_string(input.shape()) + " has " +
                         std::to_string(g.in_c) + " channels but kernel " +
                         shape_string(p.kernel.shape()) + " expects " +
                         std::to_string(p.kernel.dim(1)));
  }
  if (p.bias.size() != g.out_c) {
    throw DimensionError("conv2d: bias " + shape_string(p.bias.shape()) + " does not match kernel " +
                         shape_string(p.kernel.shape()));
  }
  if (g.in_h + 2 * g.padding < g.kh || g.in_w + 2 * g.padding < g.kw) {
    throw DimensionError("conv2d: input " + shape_string(input.shape()) + " with padding " +
                         std::to_string(g.padding) + " is smaller than kernel " +
                         shape_string(p.kernel.shape()));
  }
  g.out_h = conv_output_extent(g.in_h, g.kh, g.stride, g.padding);
  g.out_w = conv_output_extent(g.in_w, g.kw, g.stride, g.padding);
  return g;
}

// Output columns [lo, hi) whose input column ox * stride + k - pad is in range.
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t k,
                                                       std::size_t stride, std::size_t pad) {
  std::size_t lo = 0;
  while (lo < out && lo * stride + k < pad) ++lo;
  std::size_t hi = out;
  while (hi > lo && (hi - 1) * stride + k >= in + pad) --hi;
  return {lo, hi};
}

// cols is patch x (items * pixels), row-major.
template <typename T>
void im2col(const T* input, const ConvGeometry& g, std::size_t first, std::size_t items,
            std::vector<T>& cols) {
  const std::size_t width = items * g.pixels();
  cols.resize(g.patch() * width);
  for (std::size_t ci = 0; ci < g.in_c; ++ci) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      const auto [ylo, yhi] = valid_range(g.out_h, g.in_h, ky, g.stride, g.padding);
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const auto [xlo, xhi] = valid_range(g.out_w, g.in_w, kx, g.stride, g.padding);
        T* row = cols.data() + ((ci * g.kh + ky) * g.kw + kx) * width;
        for (std::size_t item = 0; item < items; ++item) {
          const T* plane = input + ((first + item) * g.in_c + ci) * g.in_h * g.in_w;
          T* dst = row + item * g.pixels();
          std::fill(dst, dst + ylo * g.out_w, T(0));
          for (std::size_t oy = ylo; oy < yhi; ++oy) {
            const T* src = plane + (oy * g.stride + ky - g.padding) * g.in_w;
            T* out = dst + oy * g.out_w;
            std::fill(out, out + xlo, T(0));
            if (g.stride == 1) {
              const T* s = src + xlo + kx - g.padding;
              std::copy(s, s + (xhi - xlo), out + xlo);
            } else {
              for (std::size_t ox = xlo; ox < xhi; ++ox) out[ox] = src[ox * g.stride + kx - g.padding];
            }
            std::fill(out + xhi, out + g.out_w, T(0));
          }
          std::fill(dst + yhi * g.out_w, dst + g.pixels(), T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, std::size_t first, std::size_t items,
            T* grad_input) {
  const std::size_t width = items * g.pixels();
  for (std::size_t ci = 0; ci < g.in_c; ++ci) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      const auto [ylo, yhi] = valid_range(g.out_h, g.in_h, ky, g.stride, g.padding);
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const auto [xlo, xhi] = valid_range(g.out_w, g.in_w, kx, g.stride, g.padding);
        const T* row = cols + ((ci * g.kh + ky) * g.kw + kx) * width;
        for (std::size_t item = 0; item < items; ++item) {
          T* plane = grad_input + ((first + item) * g.in_c + ci) * g.in_h * g.in_w;
          const T* src = row + item * g.pixels();
          for (std::size_t oy = ylo; oy < yhi; ++oy) {
            T* dst = plane + (oy * g.stride + ky - g.padding) * g.in_w;
            const T* in = src + oy * g.out_w;
            if (g.stride == 1) {
              T* d = dst + kx - g.padding;
              for (std::size_t ox = xlo; ox < xhi; ++ox) d[ox] += in[ox];
            } else {
              for (std::size_t ox = xlo; ox < xhi; ++ox) dst[ox * g.stride + kx - g.padding] += in[ox];
            }
          }
        }
      }
    }
  }
}

std::size_t channel_stats_count(const Shape& s) { return s[0] * s[2] * s[3]; }

}  // namespace

std::size_t conv_output_extent(std::size_t extent, std::size_t k, std::size_t stride,
                               std::size_t padding) {
  return (extent + 2 * padding - k) / stride + 1;
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvParams<T>& p) {
  const ConvGeometry g = conv_geometry(input, p);
  BasicTensor<T> output({g.batch, g.out_c, g.out_h, g.out_w});
  const std::size_t P = g.pixels();
  Eigen::Map<const RowMat<T>> weights(p.kernel.data().data(), g.out_c, g.patch());
  std::vector<T> cols;
  RowMat<T> result;
  const std::size_t step = g.chunk_items();
  for (std::size_t first = 0; first < g.batch; first += step) {
    const std::size_t items = std::min(step, g.batch - first);
    im2col(input.data().data(), g, first, items, cols);
    Eigen::Map<const RowMat<T>> colm(cols.data(), g.patch(), items * P);
    result.noalias() = weights * colm;
    for (std::size_t item = 0; item < items; ++item) {
      for (std::size_t co = 0; co < g.out_c; ++co) {
        T* dst = output.data().data() + ((first + item) * g.out_c + co) * P;
        const T* src = result.data() + co * items * P + item * P;
        const T b = p.bias[co];
        for (std::size_t i = 0; i < P; ++i) dst[i] = src[i] + b;
      }
    }
  }
  return output;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvParams<T>& p,
                             const BasicTensor<T>& grad_out) {
  const ConvGeometry g = conv_geometry(input, p);
  require_same_shape(grad_out.shape(), Shape{g.batch, g.out_c, g.out_h, g.out_w},
                     "conv2d_backward grad_out");
  ConvGrads<T> grads{BasicTensor<T>(input.shape()), BasicTensor<T>(p.kernel.shape()),
                     BasicTensor<T>(p.bias.shape())};
  const std::size_t P = g.pixels();
  Eigen::Map<const RowMat<T>> weights(p.kernel.data().data(), g.out_c, g.patch());
  Eigen::Map<RowMat<T>> grad_w(grads.kernel.data().data(), g.out_c, g.patch());

  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_c; ++co) {
      const T* src = grad_out.data().data() + (n * g.out_c + co) * P;
      T acc = 0;
      for (std::size_t i = 0; i < P; ++i) acc += src[i];
      grads.bias[co] += acc;
    }
  }

  std::vector<T> cols;
  RowMat<T> gout;
  RowMat<T> grad_cols_m;
  const std::size_t step = g.chunk_items();
  for (std::size_t first = 0; first < g.batch; first += step) {
    const std::size_t items = std::min(step, g.batch - first);
    gout.resize(g.out_c, items * P);
    for (std::size_t co = 0; co < g.out_c; ++co) {
      for (std::size_t item = 0; item < items; ++item) {
        const T* src = grad_out.data().data() + ((first + item) * g.out_c + co) * P;
        std::copy(src, src + P, gout.data() + co * items * P + item * P);
      }
    }
    im2col(input.data().data(), g, first, items, cols);
    Eigen::Map<const RowMat<T>> colm(cols.data(), g.patch(), items * P);
    grad_w.noalias() += gout * colm.transpose();
    grad_cols_m.noalias() = weights.transpose() * gout;
    col2im(grad_cols_m.data(), g, first, items, grads.input.data().data());
  }
  return grads;
}

template <typename T>
PoolResult<T> maxpool2x2_forward(const BasicTensor<T>& input) {
  require_rank4(input.shape(), "maxpool2x2");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw DimensionError("maxpool2x2 needs even height and width, got " +
                         shape_string(input.shape()));
  }
  const std::size_t Ho = H / 2, Wo = W / 2;
  PoolResult<T> r{BasicTensor<T>({N, C, Ho, Wo}), std::vector<std::uint32_t>(N * C * Ho * Wo)};
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < N * C; ++plane) {
    const std::size_t base = plane * H * W;
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox, ++o) {
        std::size_t best = base + (2 * oy) * W + 2 * ox;
        const std::size_t window[4] = {best, best + 1, best + W, best + W + 1};
        for (std::size_t k = 1; k < 4; ++k) {
          if (input[window[k]] > input[best]) best = window[k];
        }
        r.output[o] = input[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2x2_backward(const BasicTensor<T>& grad_out,
                                   const std::vector<std::uint32_t>& argmax,
                                   const Shape& input_shape) {
  if (grad_out.size() != argmax.size()) {
    throw DimensionError("maxpool2x2_backward: grad " + shape_string(grad_out.shape()) +
                         " does not match recorded argmax map of " +
                         std::to_string(argmax.size()) + " entries");
  }
  BasicTensor<T> grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad[argmax[i]] += grad_out[i];
  return grad;
}

template <typename T>
BasicTensor<T> upsample2x_forward(const BasicTensor<T>& input) {
  require_rank4(input.shape(), "upsample2x");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  BasicTensor<T> out({N, C, 2 * H, 2 * W});
  for (std::size_t plane = 0; plane < N * C; ++plane) {
    const T* src = input.data().data() + plane * H * W;
    T* dst = out.data().data() + plane * 4 * H * W;
    for (std::size_t y = 0; y < 2 * H; ++y) {
      for (std::size_t x = 0; x < 2 * W; ++x) dst[y * 2 * W + x] = src[(y / 2) * W + x / 2];
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> upsample2x_backward(const BasicTensor<T>& grad_out) {
  require_rank4(grad_out.shape(), "upsample2x_backward");
  const std::size_t N = grad_out.dim(0), C = grad_out.dim(1);
  const std::size_t H2 = grad_out.dim(2), W2 = grad_out.dim(3);
  if (H2 % 2 != 0 || W2 % 2 != 0) {
    throw DimensionError("upsample2x_backward: grad " + shape_string(grad_out.shape()) +
                         " is not an upsampled extent");
  }
  const std::size_t H = H2 / 2, W = W2 / 2;
  BasicTensor<T> grad({N, C, H, W});
  for (std::size_t plane = 0; plane < N * C; ++plane) {
    const T* src = grad_out.data().data() + plane * H2 * W2;
    T* dst = grad.data().data() + plane * H * W;
    for (std::size_t y = 0; y < H2; ++y) {
      for (std::size_t x = 0; x < W2; ++x) dst[(y / 2) * W + x / 2] += src[y * W2 + x];
    }
  }
  return grad;
}

template <typename T>
BatchNormState<T> BatchNormState<T>::identity(std::size_t channels) {
  BatchNormState s;
  s.gamma.assign(channels, T(1));
  s.beta.assign(channels, T(0));
  s.running_mean.assign(channels, T(0));
  s.running_var.assign(channels, T(1));
  return s;
}

template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& input, BatchNormState<T>& s,
                                 BatchNormCache<T>* cache) {
  require_rank4(input.shape(), "batchnorm");
  const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  if (s.gamma.size() != C || s.beta.size() != C || s.running_mean.size() != C ||
      s.running_var.size() != C) {
    throw DimensionError("batchnorm: input " + shape_string(input.shape()) + " has " +
                         std::to_string(C) + " channels, state has " +
                         std::to_string(s.gamma.size()));
  }
  const std::size_t M = channel_stats_count(input.shape());
  if (s.mode == Mode::train && M < 2) {
    throw DimensionError("batchnorm in train mode needs at least 2 values per channel, input is " +
                         shape_string(input.shape()));
  }
  BasicTensor<T> out(input.shape());
  BasicTensor<T> xhat(input.shape());
  std::vector<T> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (s.mode == Mode::train) {
      double sum = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = input.data().data() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) sum += p[i];
      }
      mean = sum / static_cast<double>(M);
      double sq = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = input.data().data() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / static_cast<double>(M);
      const double unbiased = sq / static_cast<double>(M - 1);
      s.running_mean[c] = static_cast<T>((1 - s.momentum) * s.running_mean[c] + s.momentum * mean);
      s.running_var[c] = static_cast<T>((1 - s.momentum) * s.running_var[c] + s.momentum * unbiased);
    } else {
      mean = s.running_mean[c];
      var = s.running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + static_cast<double>(s.epsilon));
    inv_std[c] = static_cast<T>(is);
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        const T xh = static_cast<T>((input[off + i] - mean) * is);
        xhat[off + i] = xh;
        out[off + i] = s.gamma[c] * xh + s.beta[c];
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = s.mode;
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& grad_out, const BatchNormState<T>& s,
                                     const BatchNormCache<T>& cache) {
  require_same_shape(grad_out.shape(), cache.normalized.shape(), "batchnorm_backward grad_out");
  const std::size_t N = grad_out.dim(0), C = grad_out.dim(1), HW = grad_out.dim(2) * grad_out.dim(3);
  const double M = static_cast<double>(channel_stats_count(grad_out.shape()));
  BatchNormGrads<T> g{BasicTensor<T>(grad_out.shape()), std::vector<T>(C), std::vector<T>(C)};
  for (std::size_t c = 0; c < C; ++c) {
    double sum_dy = 0, sum_dy_xhat = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        sum_dy += grad_out[off + i];
        sum_dy_xhat += static_cast<double>(grad_out[off + i]) * cache.normalized[off + i];
      }
    }
    g.beta[c] = static_cast<T>(sum_dy);
    g.gamma[c] = static_cast<T>(sum_dy_xhat);
    const double scale = static_cast<double>(s.gamma[c]) * cache.inv_std[c];
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        if (cache.mode == Mode::train) {
          g.input[off + i] = static_cast<T>(
              scale * (grad_out[off + i] - sum_dy / M - cache.normalized[off + i] * sum_dy_xhat / M));
        } else {
          g.input[off + i] = static_cast<T>(scale * grad_out[off + i]);
        }
      }
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] < T(0) ? T(0) : input[i];  // NaN passes through
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out) {
  require_same_shape(grad_out.shape(), input.shape(), "relu_backward");
  BasicTensor<T> g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
BasicTensor<T> sigmoid_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = sigmoid(input[i]);
  return out;
}

template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& output, const BasicTensor<T>& grad_out) {
  require_same_shape(grad_out.shape(), output.shape(), "sigmoid_backward");
  BasicTensor<T> g(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    g[i] = grad_out[i] * output[i] * (T(1) - output[i]);
  }
  return g;
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank4(a.shape(), "concat_channels a");
  require_rank4(b.shape(), "concat_channels b");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels: " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ in batch or spatial extent");
  }
  const std::size_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), HW = a.dim(2) * a.dim(3);
  BasicTensor<T> out({N, Ca + Cb, a.dim(2), a.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    T* dst = out.data().data() + n * (Ca + Cb) * HW;
    std::copy_n(a.data().data() + n * Ca * HW, Ca * HW, dst);
    std::copy_n(b.data().data() + n * Cb * HW, Cb * HW, dst + Ca * HW);
  }
  return out;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& grad,
                                                         std::size_t channels_a) {
  require_rank4(grad.shape(), "split_channels");
  if (channels_a > grad.dim(1)) {
    throw DimensionError("split_channels: cannot take " + std::to_string(channels_a) +
                         " channels from " + shape_string(grad.shape()));
  }
  const std::size_t N = grad.dim(0), C = grad.dim(1), HW = grad.dim(2) * grad.dim(3);
  const std::size_t Cb = C - channels_a;
  BasicTensor<T> a({N, channels_a, grad.dim(2), grad.dim(3)});
  BasicTensor<T> b({N, Cb, grad.dim(2), grad.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    const T* src = grad.data().data() + n * C * HW;
    std::copy_n(src, channels_a * HW, a.data().data() + n * channels_a * HW);
    std::copy_n(src + channels_a * HW, Cb * HW, b.data().data() + n * Cb * HW);
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
BasicTensor<T> crop_even_forward(const BasicTensor<T>& input) {
  require_rank4(input.shape(), "crop_even");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Ho = H - H % 2, Wo = W - W % 2;
  if (Ho == H && Wo == W) return input;
  BasicTensor<T> out({N, C, Ho, Wo});
  for (std::size_t plane = 0; plane < N * C; ++plane) {
    for (std::size_t y = 0; y < Ho; ++y) {
      const T* src = input.data().data() + (plane * H + y) * W;
      std::copy_n(src, Wo, out.data().data() + (plane * Ho + y) * Wo);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> crop_even_backward(const BasicTensor<T>& grad_out, const Shape& input_shape) {
  if (grad_out.shape() == input_shape) return grad_out;
  const std::size_t H = input_shape[2], W = input_shape[3];
  const std::size_t Ho = grad_out.dim(2), Wo = grad_out.dim(3);
  BasicTensor<T> grad(input_shape);
  for (std::size_t plane = 0; plane < input_shape[0] * input_shape[1]; ++plane) {
    for (std::size_t y = 0; y < Ho; ++y) {
      std::copy_n(grad_out.data().data() + (plane * Ho + y) * Wo, Wo,
                  grad.data().data() + (plane * H + y) * W);
    }
  }
  return grad;
}

template <typename T>
BasicTensor<T> global_avg_pool_forward(const BasicTensor<T>& input) {
  require_rank4(input.shape(), "global_avg_pool");
  const std::size_t NC = input.dim(0) * input.dim(1), HW = input.dim(2) * input.dim(3);
  BasicTensor<T> out({input.dim(0), input.dim(1), 1, 1});
  for (std::size_t plane = 0; plane < NC; ++plane) {
    double sum = 0;
    for (std::size_t i = 0; i < HW; ++i) sum += input[plane * HW + i];
    out[plane] = static_cast<T>(sum / static_cast<double>(HW));
  }
  return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& grad_out, const Shape& input_shape) {
  const std::size_t HW = input_shape[2] * input_shape[3];
  BasicTensor<T> grad(input_shape);
  const T scale = T(1) / static_cast<T>(HW);
  for (std::size_t plane = 0; plane < grad_out.size(); ++plane) {
    for (std::size_t i = 0; i < HW; ++i) grad[plane * HW + i] = grad_out[plane] * scale;
  }
  return grad;
}

template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

namespace {
double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}
}  // namespace

double gradcheck_scalar(const std::function<double(std::size_t index, double delta)>& perturbed_loss,
                        std::span<const double> analytic, double eps) {
  double worst = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double numeric = (perturbed_loss(i, eps) - perturbed_loss(i, -eps)) / (2 * eps);
    worst = std::max(worst, relative_error(analytic[i], numeric));
  }
  return worst;
}

template <typename T>
double gradcheck(const ForwardFn<T>& forward, const BackwardFn<T>& backward,
                 const BasicTensor<T>& input, double eps, const BasicTensor<T>* weights) {
  const BasicTensor<T> y = forward(input);
  BasicTensor<T> w = weights ? *weights : BasicTensor<T>(y.shape(), T(1));
  require_same_shape(w.shape(), y.shape(), "gradcheck weights");
  const BasicTensor<T> analytic = backward(input, w);
  require_same_shape(analytic.shape(), input.shape(), "gradcheck analytic gradient");

  double worst = 0;
  BasicTensor<T> probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T plus = static_cast<T>(input[i] + eps);
    const T minus = static_cast<T>(input[i] - eps);
    probe[i] = plus;
    const BasicTensor<T> yp = forward(probe);
    probe[i] = minus;
    const BasicTensor<T> ym = forward(probe);
    probe[i] = input[i];
    // Difference per output before reducing: outputs that do not depend on
    // input i cancel exactly instead of adding rounding noise to the sum.
    double diff = 0;
    for (std::size_t j = 0; j < yp.size(); ++j) {
      diff += static_cast<double>(w[j]) * (static_cast<double>(yp[j]) - static_cast<double>(ym[j]));
    }
    // step actually taken after rounding to T
    const double h = static_cast<double>(plus) - static_cast<double>(minus);
    worst = std::max(worst, relative_error(analytic[i], diff / h));
  }
  return worst;
}

#define LENSLEARN_INSTANTIATE(T)                                                                \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const ConvParams<T>&);          \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const ConvParams<T>&,            \
                                        const BasicTensor<T>&);                                 \
  template PoolResult<T> maxpool2x2_forward(const BasicTensor<T>&);                             \
  template BasicTensor<T> maxpool2x2_backward(const BasicTensor<T>&,                            \
                                              const std::vector<std::uint32_t>&, const Shape&); \
  template BasicTensor<T> upsample2x_forward(const BasicTensor<T>&);                            \
  template BasicTensor<T> upsample2x_backward(const BasicTensor<T>&);                           \
  template struct BatchNormState<T>;                                                            \
  template BasicTensor<T> batchnorm_forward(const BasicTensor<T>&, BatchNormState<T>&,          \
                                            BatchNormCache<T>*);                                \
  template BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>&, const BatchNormState<T>&, \
                                                const BatchNormCache<T>&);                      \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                  \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template T sigmoid(T);                                                                        \
  template BasicTensor<T> sigmoid_forward(const BasicTensor<T>&);                               \
  template BasicTensor<T> sigmoid_backward(const BasicTensor<T>&, const BasicTensor<T>&);       \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);        \
  template std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>&,      \
                                                                    std::size_t);               \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> crop_even_forward(const BasicTensor<T>&);                             \
  template BasicTensor<T> crop_even_backward(const BasicTensor<T>&, const Shape&);              \
  template BasicTensor<T> global_avg_pool_forward(const BasicTensor<T>&);                       \
  template BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>&, const Shape&);        \
  template double dot(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template double gradcheck(const ForwardFn<T>&, const BackwardFn<T>&, const BasicTensor<T>&,   \
                            double, const BasicTensor<T>*);

LENSLEARN_INSTANTIATE(float)
LENSLEARN_INSTANTIATE(double)

#undef LENSLEARN_INSTANTIATE

}  // namespace lenslearn::ops
