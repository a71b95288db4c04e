#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <unistd.h>

#include "lenslearn/ops.hpp"
#include "lenslearn/rng.hpp"
#include "lenslearn/tensor.hpp"

namespace testing_util {

using lenslearn::BasicTensor;
using lenslearn::Rng;
using lenslearn::Shape;

template <typename T>
BasicTensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Magnitudes in [margin, 1], random sign: keeps ReLU inputs away from the kink.
template <typename T>
BasicTensor<T> away_from_zero(const Shape& shape, Rng& rng, double margin = 0.05) {
  BasicTensor<T> t(shape);
  for (auto& v : t.data()) {
    const double mag = rng.uniform(margin, 1.0);
    v = static_cast<T>(rng.uniform() < 0.5 ? -mag : mag);
  }
  return t;
}

// Distinct values spaced `gap` apart in random order: no pooling ties within
// a finite-difference step smaller than gap / 2.
template <typename T>
BasicTensor<T> distinct_values(const Shape& shape, Rng& rng, double gap = 0.01) {
  BasicTensor<T> t(shape);
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span(order));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(gap * static_cast<double>(order[i]) - 0.5);
  return t;
}

template <typename To, typename From>
BasicTensor<To> convert(const BasicTensor<From>& t) {
  return t.template cast<To>();
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

// Independent direct cross-correlation: 6 nested loops over (n, co, y, x, ci, ky, kx).
inline BasicTensor<double> naive_conv(const BasicTensor<double>& x, const BasicTensor<double>& k,
                                      const BasicTensor<double>& b, std::size_t stride, std::size_t pad) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = k.dim(0), KH = k.dim(2), KW = k.dim(3);
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
  BasicTensor<double> y({N, O, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double acc = b[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < KH; ++ky)
              for (std::size_t kx = 0; kx < KW; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                acc += x.at(n, c, iy, ix) * k.at(o, c, ky, kx);
              }
          y.at(n, o, oy, ox) = acc;
        }
  return y;
}

// Float analytic gradient against a central difference of the same function
// evaluated in double precision.
inline double check_float_against_double(
    const std::function<double(const BasicTensor<double>&)>& loss64, const BasicTensor<double>& x64,
    const std::vector<double>& analytic32, double eps) {
  BasicTensor<double> probe = x64;
  return lenslearn::ops::gradcheck_scalar(
      [&](std::size_t i, double d) {
        probe[i] = x64[i] + d;
        const double l = loss64(probe);
        probe[i] = x64[i];
        return l;
      },
      analytic32, eps);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("lenslearn_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path path_;
};

}  // namespace testing_util
