#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lenslearn/dataset.hpp"
#include "lenslearn/tensor.hpp"

// Simulated window-plus-edge-sensor camera: a seeded linear operator from
// object pixels to sensor pixels, read noise and multi-frame averaging.
namespace lenslearn::optics {

struct OpticsConfig {
  std::size_t object_h = 32, object_w = 32;
  std::size_t sensor_h = 125, sensor_w = 170;
  double distance_mm = 250.0;      // metadata only
  double smoothing_sigma = 1.0;    // Gaussian blur of each response, sensor pixels
  double speckle_density = 0.02;   // fraction of sensor pixels lit in a raw response
  double noise_floor = 0.02;       // positive floor added before blurring
  double neighbor_coupling = 0.5;  // weight of the 4-neighbours' patterns in each response
  std::uint64_t seed = 1;
  double read_noise_sigma = 0.01;  // per frame
  std::size_t frames_per_capture = 10;

  std::size_t object_pixels() const { return object_h * object_w; }
  std::size_t sensor_pixels() const { return sensor_h * sensor_w; }
  // Throws ConfigError.
  void validate() const;
};

// Dense (sensor_h*sensor_w) x (object_h*object_w) matrix, row-major. Column j
// is the response to object pixel j; entries are non-negative and every
// column sums to 1.
class TransferOperator {
 public:
  TransferOperator(OpticsConfig cfg, std::vector<float> matrix);

  const OpticsConfig& config() const { return cfg_; }
  std::size_t rows() const { return cfg_.sensor_pixels(); }
  std::size_t cols() const { return cfg_.object_pixels(); }
  float at(std::size_t row, std::size_t col) const { return matrix_[row * cols() + col]; }
  const std::vector<float>& matrix() const { return matrix_; }

  // T * vec(object), accumulated in double. object is object_h x object_w.
  Tensor apply(const Tensor& object) const;

  // Largest row sum of T: the brightest sensor pixel under an all-white
  // object. Captures are expressed in units of this value.
  double full_scale() const { return full_scale_; }

  std::string content_hash() const;

 private:
  OpticsConfig cfg_;
  std::vector<float> matrix_;
  double full_scale_ = 0;
};

TransferOperator build_transfer_operator(const OpticsConfig& cfg);

// sigma_max / sigma_min of T (infinity when T is rank deficient).
double condition_number(const TransferOperator& op);

// Mean of frames_per_capture frames of T*obj / full_scale + N(0, read_noise_sigma^2),
// clipped to [0, 1] after averaging. noise_seed selects the noise stream.
Tensor render_capture(const Tensor& object, const TransferOperator& op, std::uint64_t noise_seed);

// One capture per image, noise stream for image i derived from (seed, i).
// Uses up to `threads` workers; the output does not depend on the count.
data::LabeledImageSet render_dataset(const data::LabeledImageSet& set, const TransferOperator& op,
                                     std::uint64_t seed, std::size_t threads = 1);

}  // namespace lenslearn::optics
