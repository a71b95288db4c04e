#include "lenslearn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

#include "binary_io.hpp"
#include "lenslearn/io.hpp"
#include "lenslearn/rng.hpp"

namespace lenslearn::data {

std::string LabeledImageSet::content_hash() const {
  detail::Writer w;
  for (auto s : images.shape()) w.u32(static_cast<std::uint32_t>(s));
  w.bytes(images.data().data(), images.size() * sizeof(float));
  for (int l : labels) w.u32(static_cast<std::uint32_t>(l));
  return hex64(lenslearn::content_hash(w.buffer()));
}

void LabeledImageSet::validate() const {
  if (images.rank() != 4) {
    throw ValidationError(source + ": images must be count x C x H x W, got " +
                          shape_string(images.shape()));
  }
  if (images.dim(0) != labels.size()) {
    throw ValidationError(source + ": " + std::to_string(images.dim(0)) + " images but " +
                          std::to_string(labels.size()) + " labels");
  }
  if (num_classes == 0 && !labels.empty()) throw ValidationError(source + ": num_classes is 0");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ValidationError(source + ": label " + std::to_string(labels[i]) + " of item " +
                            std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!(images[i] >= 0.0f && images[i] <= 1.0f)) {
      throw ValidationError(source + ": value " + std::to_string(images[i]) + " at element " +
                            std::to_string(i) + " outside [0, 1]");
    }
  }
}

// IDX

LabeledImageSet parse_idx(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>& labels,
                          const std::string& images_source, const std::string& labels_source) {
  detail::Reader ri(images, images_source);
  const std::uint32_t image_magic = ri.u32_be("magic");
  if (image_magic != 0x00000803) {
    ri.fail_at(0, "bad image magic " + hex64(image_magic) + ", expected 0x00000803");
  }
  const std::uint32_t count = ri.u32_be("image count");
  const std::uint32_t rows = ri.u32_be("row count");
  const std::uint32_t cols = ri.u32_be("column count");

  detail::Reader rl(labels, labels_source);
  const std::uint32_t label_magic = rl.u32_be("magic");
  if (label_magic != 0x00000801) {
    rl.fail_at(0, "bad label magic " + hex64(label_magic) + ", expected 0x00000801");
  }
  const std::uint32_t label_count = rl.u32_be("label count");
  if (label_count != count) {
    rl.fail_at(4, "label count " + std::to_string(label_count) + " does not match image count " +
                      std::to_string(count));
  }

  const std::size_t pixels = std::size_t{count} * rows * cols;
  const std::uint8_t* px = ri.take(pixels, "pixel data");
  if (!ri.at_end()) ri.fail(std::to_string(ri.remaining()) + " trailing bytes after pixel data");
  const std::uint8_t* lb = rl.take(count, "label data");
  if (!rl.at_end()) rl.fail(std::to_string(rl.remaining()) + " trailing bytes after label data");

  LabeledImageSet set;
  set.source = images_source;
  std::vector<float> values(pixels);
  for (std::size_t i = 0; i < pixels; ++i) values[i] = static_cast<float>(px[i]) / 255.0f;
  set.images = Tensor({count, 1, rows, cols}, std::move(values));
  set.labels.assign(lb, lb + count);
  int max_label = -1;
  for (int l : set.labels) max_label = std::max(max_label, l);
  set.num_classes = static_cast<std::size_t>(max_label + 1);
  return set;
}

LabeledImageSet load_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path) {
  return parse_idx(read_maybe_gzip(images_path), read_maybe_gzip(labels_path), images_path.string(),
                   labels_path.string());
}

// Packed container

std::vector<std::uint8_t> encode_packed(const LabeledImageSet& set) {
  set.validate();
  detail::Writer w;
  w.text("LLDS");
  w.u32(kPackedVersion);
  w.u32(static_cast<std::uint32_t>(set.count()));
  for (std::size_t axis = 1; axis < 4; ++axis) w.u32(static_cast<std::uint32_t>(set.images.dim(axis)));
  w.u32(static_cast<std::uint32_t>(set.num_classes));
  w.bytes(set.images.data().data(), set.images.size() * sizeof(float));
  for (int l : set.labels) w.u16(static_cast<std::uint16_t>(l));
  return w.buffer();
}

LabeledImageSet decode_packed(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  detail::Reader r(bytes, source);
  if (r.text(4, "magic") != "LLDS") r.fail_at(0, "bad magic, expected \"LLDS\"");
  const std::uint32_t version = r.u32("version");
  if (version != kPackedVersion) r.fail_at(4, "unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32("count");
  const std::uint32_t channels = r.u32("channels");
  const std::uint32_t h = r.u32("height");
  const std::uint32_t w = r.u32("width");
  const std::uint32_t num_classes = r.u32("num_classes");

  LabeledImageSet set;
  set.source = source;
  set.num_classes = num_classes;
  const std::size_t n = std::size_t{count} * channels * h * w;
  const std::size_t values_offset = r.offset();
  std::vector<float> values(n);
  r.bytes(values.data(), n * sizeof(float), "image values");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(values[i] >= 0.0f && values[i] <= 1.0f)) {
      r.fail_at(values_offset + i * sizeof(float), "image value outside [0, 1]");
    }
  }
  set.images = Tensor({count, channels, h, w}, std::move(values));
  set.labels.resize(count);
  for (auto& l : set.labels) {
    const std::size_t at = r.offset();
    l = r.u16("label");
    if (static_cast<std::size_t>(l) >= num_classes) {
      r.fail_at(at, "label " + std::to_string(l) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  if (!r.at_end()) r.fail("payload length mismatch: " + std::to_string(r.remaining()) + " trailing bytes");
  return set;
}

void save_packed(const std::filesystem::path& path, const LabeledImageSet& set) {
  write_file(path, encode_packed(set));
}

LabeledImageSet load_packed(const std::filesystem::path& path) {
  return decode_packed(read_file(path), path.string());
}

// Selection

LabeledImageSet subset(const LabeledImageSet& set, const std::vector<std::size_t>& indices) {
  LabeledImageSet out;
  out.images = gather_batch(set.images, indices);
  out.labels.reserve(indices.size());
  for (auto i : indices) out.labels.push_back(set.labels.at(i));
  out.num_classes = set.num_classes;
  out.source = set.source;
  return out;
}

namespace {

template <typename CountFn>
LabeledImageSet subsample_first_classes(const LabeledImageSet& set, std::size_t classes,
                                        std::uint64_t seed, CountFn per_class) {
  if (set.num_classes < classes) {
    throw ValidationError(set.source + ": has " + std::to_string(set.num_classes) +
                          " classes, need at least " + std::to_string(classes));
  }
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < set.count(); ++i) {
    const int l = set.labels[i];
    if (l >= 0 && static_cast<std::size_t>(l) < classes) by_class[l].push_back(i);
  }
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < classes; ++c) {
    auto& idx = by_class[c];
    Rng rng(derive_seed(seed, {c}));
    rng.shuffle(std::span(idx));
    const std::size_t take = std::min(per_class(idx.size()), idx.size());
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(keep.begin(), keep.end());
  LabeledImageSet out = subset(set, keep);
  out.num_classes = classes;
  return out;
}

}  // namespace

LabeledImageSet subsample_mnist6(const LabeledImageSet& set, std::size_t target_per_class,
                                 std::uint64_t seed) {
  return subsample_first_classes(set, 6, seed, [&](std::size_t) { return target_per_class; });
}

LabeledImageSet subsample_mnist6_fraction(const LabeledImageSet& set, double fraction,
                                          std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("subsample fraction must be in [0, 1]");
  return subsample_first_classes(set, 6, seed, [&](std::size_t available) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(available) + 1e-9));
  });
}

std::pair<LabeledImageSet, LabeledImageSet> split_train_test(const LabeledImageSet& set,
                                                            const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie strictly between 0 and 1");
  }
  if (set.count() < 2) throw ValidationError(set.source + ": need at least 2 items to split");
  std::vector<std::size_t> order(set.count());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(spec.seed, {0x5b117}));
  rng.shuffle(std::span(order));
  const auto n_train =
      static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(set.count()) + 1e-9));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {subset(set, train), subset(set, test)};
}

// Image geometry

Tensor image_at(const LabeledImageSet& set, std::size_t index) {
  if (set.images.dim(1) != 1) {
    throw DimensionError(set.source + ": expected single-channel images, got " +
                         shape_string(set.images.shape()));
  }
  const std::size_t h = set.height(), w = set.width();
  auto begin = set.images.data().begin() + static_cast<std::ptrdiff_t>(index * h * w);
  return Tensor({h, w}, std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(h * w)));
}

namespace {
void require_image(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + ": expected H x W image, got " + shape_string(t.shape()));
}

LabeledImageSet map_images(const LabeledImageSet& set, const std::function<Tensor(const Tensor&)>& fn) {
  LabeledImageSet out;
  out.labels = set.labels;
  out.num_classes = set.num_classes;
  out.source = set.source;
  std::vector<float> values;
  Shape shape;
  for (std::size_t i = 0; i < set.count(); ++i) {
    Tensor img = fn(image_at(set, i));
    if (i == 0) shape = img.shape();
    values.insert(values.end(), img.data().begin(), img.data().end());
  }
  if (set.count() == 0) {
    shape = fn(Tensor({set.height(), set.width()})).shape();
  }
  out.images = Tensor({set.count(), 1, shape[0], shape[1]}, std::move(values));
  return out;
}
}  // namespace

Tensor resize_nearest(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  require_image(image, "resize_nearest");
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (out_h == 0 || out_w == 0) throw DimensionError("resize_nearest: target extent must be positive");
  if (h == out_h && w == out_w) return image;
  Tensor out({out_h, out_w});
  for (std::size_t y = 0; y < out_h; ++y) {
    const std::size_t sy = y * h / out_h;
    for (std::size_t x = 0; x < out_w; ++x) out[y * out_w + x] = image[sy * w + x * w / out_w];
  }
  return out;
}

Tensor center_crop(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  require_image(image, "center_crop");
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (out_h > h || out_w > w) {
    throw DimensionError("center_crop: cannot crop " + shape_string(image.shape()) + " to " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const std::size_t oy = (h - out_h) / 2, ox = (w - out_w) / 2;
  Tensor out({out_h, out_w});
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) out[y * out_w + x] = image[(y + oy) * w + x + ox];
  }
  return out;
}

Tensor pad_center(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  require_image(image, "pad_center");
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (out_h < h || out_w < w) {
    throw DimensionError("pad_center: cannot pad " + shape_string(image.shape()) + " to " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const std::size_t oy = (out_h - h) / 2, ox = (out_w - w) / 2;
  Tensor out({out_h, out_w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) out[(y + oy) * out_w + x + ox] = image[y * w + x];
  }
  return out;
}

LabeledImageSet pad_set(const LabeledImageSet& set, std::size_t out_h, std::size_t out_w) {
  return map_images(set, [&](const Tensor& img) { return pad_center(img, out_h, out_w); });
}

ReconPair preprocess_recon_pair(const Tensor& sensor, const Tensor& ground_truth, std::size_t size,
                                double noise_variance, std::uint64_t noise_seed) {
  require_image(sensor, "preprocess_recon_pair sensor");
  require_image(ground_truth, "preprocess_recon_pair ground truth");
  if (noise_variance < 0) throw ConfigError("noise variance must be non-negative");
  const std::size_t side = std::min(sensor.dim(0), sensor.dim(1));
  ReconPair pair;
  pair.input = resize_nearest(center_crop(sensor, side, side), size, size);
  pair.target = resize_nearest(ground_truth, size, size);
  if (noise_variance > 0) {
    Rng rng(noise_seed);
    const double sigma = std::sqrt(noise_variance);
    for (auto& v : pair.target.data()) {
      v = std::clamp(static_cast<float>(v + sigma * rng.normal()), 0.0f, 1.0f);
    }
  }
  return pair;
}

ReconPairs make_recon_pairs(const LabeledImageSet& sensor, const LabeledImageSet& objects,
                            std::size_t size, double noise_variance, std::uint64_t seed) {
  if (sensor.count() != objects.count()) {
    throw ValidationError("sensor set has " + std::to_string(sensor.count()) + " items, object set " +
                          std::to_string(objects.count()));
  }
  const std::size_t n = sensor.count(), px = size * size;
  ReconPairs pairs;
  pairs.inputs = Tensor({n, 1, size, size});
  pairs.targets = Tensor({n, 1, size, size});
  pairs.labels = objects.labels;
  for (std::size_t i = 0; i < n; ++i) {
    if (sensor.labels[i] != objects.labels[i]) {
      throw ValidationError("sensor and object labels differ at item " + std::to_string(i));
    }
    auto pair = preprocess_recon_pair(image_at(sensor, i), image_at(objects, i), size, noise_variance,
                                      derive_seed(seed, {i}));
    std::copy(pair.input.data().begin(), pair.input.data().end(), pairs.inputs.data().begin() + i * px);
    std::copy(pair.target.data().begin(), pair.target.data().end(), pairs.targets.data().begin() + i * px);
  }
  return pairs;
}

// Classifier routes

Route parse_route(const std::string& name) {
  if (name == "original") return Route::original;
  if (name == "raw") return Route::raw;
  if (name == "reconstructed") return Route::reconstructed;
  throw ConfigError("unknown route '" + name + "' (expected original, raw or reconstructed)");
}

std::string route_name(Route route) {
  switch (route) {
    case Route::original: return "original";
    case Route::raw: return "raw";
    case Route::reconstructed: return "reconstructed";
  }
  return "unknown";
}

Tensor resize_for_classifier(const Tensor& image, Route route, const ClassifierGeometry& geometry) {
  switch (route) {
    case Route::original:
      if (image.dim(0) == geometry.original_h && image.dim(1) == geometry.original_w) return image;
      return resize_nearest(image, geometry.original_h, geometry.original_w);
    case Route::raw: return resize_nearest(image, geometry.raw_h, geometry.raw_w);
    case Route::reconstructed: return resize_nearest(image, geometry.original_h, geometry.original_w);
  }
  throw ConfigError("unknown route");
}

LabeledImageSet resize_set_for_classifier(const LabeledImageSet& set, Route route,
                                          const ClassifierGeometry& geometry) {
  return map_images(set, [&](const Tensor& img) { return resize_for_classifier(img, route, geometry); });
}

}  // namespace lenslearn::data
