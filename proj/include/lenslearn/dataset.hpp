#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lenslearn/tensor.hpp"

namespace lenslearn::data {

struct LabeledImageSet {
  Tensor images;  // count x channels x H x W, values in [0, 1]
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::string source;

  std::size_t count() const { return labels.size(); }
  std::size_t height() const { return images.rank() == 4 ? images.dim(2) : 0; }
  std::size_t width() const { return images.rank() == 4 ? images.dim(3) : 0; }
  // Hash over the image values and labels.
  std::string content_hash() const;
  // Throws ValidationError when an invariant does not hold.
  void validate() const;
};

// IDX (big-endian): images 0x00000803 | count | rows | cols | u8 pixels,
// labels 0x00000801 | count | u8 labels. Pixels scale as p / 255.
// Gzipped files are inflated first.
LabeledImageSet load_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path);
LabeledImageSet parse_idx(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>& labels,
                          const std::string& images_source = "images",
                          const std::string& labels_source = "labels");

// "LLDS" packed container, integers u32 little-endian:
//   magic "LLDS" | version | count | channels | H | W | num_classes
//   count*channels*H*W f32 values in [0, 1] | count u16 labels
inline constexpr std::uint32_t kPackedVersion = 1;
inline constexpr std::size_t kPackedHeaderBytes = 28;

std::vector<std::uint8_t> encode_packed(const LabeledImageSet& set);
LabeledImageSet decode_packed(const std::vector<std::uint8_t>& bytes, const std::string& source = "packed");
void save_packed(const std::filesystem::path& path, const LabeledImageSet& set);
LabeledImageSet load_packed(const std::filesystem::path& path);

LabeledImageSet subset(const LabeledImageSet& set, const std::vector<std::size_t>& indices);

// Keeps labels 0..5 and draws min(target_per_class, available) items per class
// with a seeded shuffle. Result keeps the original item order.
LabeledImageSet subsample_mnist6(const LabeledImageSet& set, std::size_t target_per_class,
                                 std::uint64_t seed);
// Same selection rule with a per-class fraction (e.g. 0.1) instead of a fixed count.
LabeledImageSet subsample_mnist6_fraction(const LabeledImageSet& set, double fraction,
                                          std::uint64_t seed);

struct SplitSpec {
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
};

// Seeded global shuffle; the first floor(train_fraction * count) go to train.
std::pair<LabeledImageSet, LabeledImageSet> split_train_test(const LabeledImageSet& set,
                                                            const SplitSpec& spec);

// Single images are rank-2 H x W tensors.
Tensor image_at(const LabeledImageSet& set, std::size_t index);

Tensor resize_nearest(const Tensor& image, std::size_t out_h, std::size_t out_w);
Tensor center_crop(const Tensor& image, std::size_t out_h, std::size_t out_w);
// Centered zero padding (e.g. 28 x 28 MNIST digits onto a 32 x 32 canvas).
Tensor pad_center(const Tensor& image, std::size_t out_h, std::size_t out_w);
LabeledImageSet pad_set(const LabeledImageSet& set, std::size_t out_h, std::size_t out_w);

struct ReconPair {
  Tensor input;   // size x size
  Tensor target;  // size x size
};

// Sensor frame: center crop to a square, nearest resize to size x size.
// Ground truth: nearest resize to size x size, add N(0, noise_variance), clamp to [0, 1].
ReconPair preprocess_recon_pair(const Tensor& sensor, const Tensor& ground_truth, std::size_t size,
                                double noise_variance, std::uint64_t noise_seed);

struct ReconPairs {
  Tensor inputs;   // N x 1 x size x size
  Tensor targets;  // N x 1 x size x size
  std::vector<int> labels;
  std::size_t count() const { return labels.size(); }
};

// Pairs sensor[i] with objects[i]; the noise stream of item i is derived from (seed, i).
ReconPairs make_recon_pairs(const LabeledImageSet& sensor, const LabeledImageSet& objects,
                            std::size_t size, double noise_variance, std::uint64_t seed);

enum class Route { original, raw, reconstructed };

Route parse_route(const std::string& name);
std::string route_name(Route route);

struct ClassifierGeometry {
  std::size_t raw_h = 125, raw_w = 170;
  std::size_t original_h = 32, original_w = 32;
};

// raw -> raw_h x raw_w; original and reconstructed -> original_h x original_w
// (nearest; images already at that size pass through unchanged).
Tensor resize_for_classifier(const Tensor& image, Route route, const ClassifierGeometry& geometry);
LabeledImageSet resize_set_for_classifier(const LabeledImageSet& set, Route route,
                                          const ClassifierGeometry& geometry);

}  // namespace lenslearn::data
