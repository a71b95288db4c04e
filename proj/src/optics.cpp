#include "lenslearn/optics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "binary_io.hpp"
#include "lenslearn/io.hpp"
#include "lenslearn/rng.hpp"

namespace lenslearn::optics {

void OpticsConfig::validate() const {
  if (object_h == 0 || object_w == 0 || sensor_h == 0 || sensor_w == 0) {
    throw ConfigError("optics: all extents must be positive");
  }
  if (read_noise_sigma < 0) throw ConfigError("optics: read_noise_sigma must be >= 0");
  if (frames_per_capture == 0) throw ConfigError("optics: frames_per_capture must be positive");
  if (smoothing_sigma < 0) throw ConfigError("optics: smoothing_sigma must be >= 0");
  if (!(speckle_density > 0 && speckle_density <= 1)) {
    throw ConfigError("optics: speckle_density must be in (0, 1]");
  }
  if (noise_floor <= 0) throw ConfigError("optics: noise_floor must be positive");
  if (neighbor_coupling < 0 || neighbor_coupling >= 1) {
    throw ConfigError("optics: neighbor_coupling must be in [0, 1)");
  }
}

TransferOperator::TransferOperator(OpticsConfig cfg, std::vector<float> matrix)
    : cfg_(cfg), matrix_(std::move(matrix)) {
  if (matrix_.size() != rows() * cols()) {
    throw DimensionError("transfer operator has " + std::to_string(matrix_.size()) + " entries, expected " +
                         std::to_string(rows()) + "x" + std::to_string(cols()));
  }
  for (std::size_t r = 0; r < rows(); ++r) {
    double sum = 0;
    for (std::size_t j = 0; j < cols(); ++j) sum += matrix_[r * cols() + j];
    full_scale_ = std::max(full_scale_, sum);
  }
  if (!(full_scale_ > 0)) throw NumericError("transfer operator is all zero");
}

Tensor TransferOperator::apply(const Tensor& object) const {
  if (object.size() != cols()) {
    throw DimensionError("object " + shape_string(object.shape()) + " does not match operator input " +
                         std::to_string(cfg_.object_h) + "x" + std::to_string(cfg_.object_w));
  }
  Tensor sensor({cfg_.sensor_h, cfg_.sensor_w});
  const std::size_t m = cols();
  for (std::size_t r = 0; r < rows(); ++r) {
    const float* row = matrix_.data() + r * m;
    double acc = 0;
    for (std::size_t j = 0; j < m; ++j) acc += static_cast<double>(row[j]) * object[j];
    sensor[r] = static_cast<float>(acc);
  }
  return sensor;
}

std::string TransferOperator::content_hash() const {
  detail::Writer w;
  w.u32(static_cast<std::uint32_t>(rows()));
  w.u32(static_cast<std::uint32_t>(cols()));
  w.bytes(matrix_.data(), matrix_.size() * sizeof(float));
  return hex64(lenslearn::content_hash(w.buffer()));
}

namespace {

// Sparse exponential "speckle" seeds for one object pixel.
std::vector<double> own_pattern(const OpticsConfig& cfg, std::size_t pixel) {
  std::vector<double> p(cfg.sensor_pixels(), 0.0);
  Rng rng(derive_seed(cfg.seed, {0x0b1ec7, pixel}));
  for (auto& v : p) {
    const double u = rng.uniform();
    if (u < cfg.speckle_density) v = -std::log(1.0 - rng.uniform());
  }
  return p;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0) return {1.0};
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable blur with zero padding.
void blur(std::vector<double>& img, std::size_t h, std::size_t w, const std::vector<double>& k) {
  if (k.size() == 1) return;
  const auto r = static_cast<std::ptrdiff_t>(k.size() / 2);
  std::vector<double> tmp(img.size(), 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0;
      for (std::ptrdiff_t d = -r; d <= r; ++d) {
        const auto xx = static_cast<std::ptrdiff_t>(x) + d;
        if (xx >= 0 && xx < static_cast<std::ptrdiff_t>(w)) acc += k[d + r] * img[y * w + xx];
      }
      tmp[y * w + x] = acc;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0;
      for (std::ptrdiff_t d = -r; d <= r; ++d) {
        const auto yy = static_cast<std::ptrdiff_t>(y) + d;
        if (yy >= 0 && yy < static_cast<std::ptrdiff_t>(h)) acc += k[d + r] * tmp[yy * w + x];
      }
      img[y * w + x] = acc;
    }
  }
}

}  // namespace

TransferOperator build_transfer_operator(const OpticsConfig& cfg) {
  cfg.validate();
  const std::size_t rows = cfg.sensor_pixels(), cols = cfg.object_pixels();
  const auto kernel = gaussian_kernel(cfg.smoothing_sigma);
  std::vector<float> matrix(rows * cols);

  for (std::size_t oy = 0; oy < cfg.object_h; ++oy) {
    for (std::size_t ox = 0; ox < cfg.object_w; ++ox) {
      const std::size_t j = oy * cfg.object_w + ox;
      std::vector<double> column = own_pattern(cfg, j);
      // neighbouring object pixels share part of their pattern
      std::vector<std::size_t> neighbors;
      if (oy > 0) neighbors.push_back(j - cfg.object_w);
      if (oy + 1 < cfg.object_h) neighbors.push_back(j + cfg.object_w);
      if (ox > 0) neighbors.push_back(j - 1);
      if (ox + 1 < cfg.object_w) neighbors.push_back(j + 1);
      if (cfg.neighbor_coupling > 0) {
        for (auto k : neighbors) {
          const auto other = own_pattern(cfg, k);
          const double wgt = cfg.neighbor_coupling / static_cast<double>(neighbors.size());
          for (std::size_t i = 0; i < rows; ++i) column[i] += wgt * other[i];
        }
      }
      for (auto& v : column) v += cfg.noise_floor;
      blur(column, cfg.sensor_h, cfg.sensor_w, kernel);
      double sum = 0;
      for (auto v : column) sum += v;
      if (!(sum > 0)) throw NumericError("transfer operator column " + std::to_string(j) + " is zero");
      for (std::size_t i = 0; i < rows; ++i) matrix[i * cols + j] = static_cast<float>(column[i] / sum);
    }
  }
  return TransferOperator(cfg, std::move(matrix));
}

double condition_number(const TransferOperator& op) {
  const auto T = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                     op.matrix().data(), static_cast<Eigen::Index>(op.rows()),
                     static_cast<Eigen::Index>(op.cols()))
                     .cast<double>();
  Eigen::MatrixXd gram = T.transpose() * T;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();
  const double lo = ev.minCoeff(), hi = ev.maxCoeff();
  if (!(lo > 0)) return std::numeric_limits<double>::infinity();
  return std::sqrt(hi / lo);
}

Tensor render_capture(const Tensor& object, const TransferOperator& op, std::uint64_t noise_seed) {
  const auto& cfg = op.config();
  if (object.size() != op.cols()) {
    throw ValidationError("object " + shape_string(object.shape()) + " does not match the " +
                          std::to_string(cfg.object_h) + "x" + std::to_string(cfg.object_w) + " object plane");
  }
  for (std::size_t i = 0; i < object.size(); ++i) {
    if (!(object[i] >= 0.0f && object[i] <= 1.0f)) {
      throw ValidationError("object value " + std::to_string(object[i]) + " at pixel " + std::to_string(i) +
                            " outside [0, 1]");
    }
  }
  Tensor clean = op.apply(object);
  const double gain = 1.0 / op.full_scale();
  if (cfg.read_noise_sigma == 0) {
    for (auto& v : clean.data()) v = static_cast<float>(std::min(v * gain, 1.0));
    return clean;
  }

  Rng rng(noise_seed);
  std::vector<double> acc(clean.size(), 0.0);
  for (std::size_t f = 0; f < cfg.frames_per_capture; ++f) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += clean[i] * gain + cfg.read_noise_sigma * rng.normal();
  }
  const double frames = static_cast<double>(cfg.frames_per_capture);
  Tensor out(clean.shape());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(std::clamp(acc[i] / frames, 0.0, 1.0));
  return out;
}

data::LabeledImageSet render_dataset(const data::LabeledImageSet& set, const TransferOperator& op,
                                     std::uint64_t seed, std::size_t threads) {
  const auto& cfg = op.config();
  if (set.count() > 0 && (set.height() != cfg.object_h || set.width() != cfg.object_w ||
                          set.images.dim(1) != 1)) {
    throw ValidationError(set.source + ": images " + shape_string(set.images.shape()) +
                          " do not match the " + std::to_string(cfg.object_h) + "x" +
                          std::to_string(cfg.object_w) + " object plane");
  }
  const std::size_t n = set.count(), px = cfg.sensor_pixels();
  data::LabeledImageSet out;
  out.labels = set.labels;
  out.num_classes = set.num_classes;
  out.source = set.source + " (rendered)";
  out.images = Tensor({n, 1, cfg.sensor_h, cfg.sensor_w});

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Tensor s = render_capture(data::image_at(set, i), op, derive_seed(seed, {i}));
      std::copy(s.data().begin(), s.data().end(), out.images.data().begin() + i * px);
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t per = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = std::min(n, t * per), e = std::min(n, b + per);
      pool.emplace_back([&, t, b, e] {
        try {
          work(b, e);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }
  return out;
}

}  // namespace lenslearn::optics
