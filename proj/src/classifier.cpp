#include "lenslearn/classifier.hpp"

#include <algorithm>
#include <cmath>

namespace lenslearn::nn {

std::size_t ClassifierConfig::scaled(std::size_t width) const {
  const auto w = static_cast<std::size_t>(std::lround(static_cast<double>(width) * width_multiplier));
  return std::max<std::size_t>(w, 1);
}

std::pair<std::size_t, std::size_t> ClassifierConfig::final_map() const {
  std::size_t h = input_h, w = input_w;
  for (std::size_t s = 0; s < pooled_stages.size(); ++s) {
    h /= 2;
    w /= 2;
    if (h == 0 || w == 0) {
      throw ConfigError("classifier: a " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                        " input vanishes after pool " + std::to_string(s + 1));
    }
  }
  return {h, w};
}

std::size_t ClassifierConfig::conv_block_count() const {
  std::size_t n = final_stage.size();
  for (const auto& s : pooled_stages) n += s.size();
  return n;
}

namespace {
ClassifierConfig validated(ClassifierConfig cfg) {
  if (cfg.num_classes < 1) throw ConfigError("classifier: num_classes must be positive");
  if (!(cfg.width_multiplier > 0)) throw ConfigError("classifier: width_multiplier must be positive");
  if (cfg.input_h == 0 || cfg.input_w == 0 || cfg.in_channels == 0) {
    throw ConfigError("classifier: input extents must be positive");
  }
  cfg.final_map();
  return cfg;
}
}  // namespace

template <typename T>
Classifier<T>::Classifier(ClassifierConfig cfg) : cfg_(validated(std::move(cfg))) {
  std::size_t in = cfg_.in_channels;
  std::size_t block = 0;
  auto add_block = [&](std::size_t width) {
    const std::size_t out = cfg_.scaled(width);
    const std::string name = "block" + std::to_string(++block);
    body_.template add<Conv2d<T>>(name + ".conv", in, out, 3, 1);
    body_.template add<BatchNorm2d<T>>(name + ".bn", out);
    body_.template add<ReLU<T>>(name + ".relu");
    in = out;
  };
  for (std::size_t s = 0; s < cfg_.pooled_stages.size(); ++s) {
    for (auto width : cfg_.pooled_stages[s]) add_block(width);
    body_.template add<MaxPool2x2<T>>("pool" + std::to_string(s + 1), true);
  }
  for (auto width : cfg_.final_stage) add_block(width);
  body_.template add<GlobalAvgPool<T>>("gap");
  body_.template add<Linear<T>>("fc", in, cfg_.num_classes);
}

template <typename T>
BasicTensor<T> Classifier<T>::forward(const BasicTensor<T>& x, Mode mode) {
  require_rank4(x.shape(), "classifier input");
  if (x.dim(1) != cfg_.in_channels || x.dim(2) != cfg_.input_h || x.dim(3) != cfg_.input_w) {
    throw DimensionError("classifier: input " + shape_string(x.shape()) +
                         " does not match configured " + std::to_string(cfg_.in_channels) + "x" +
                         std::to_string(cfg_.input_h) + "x" + std::to_string(cfg_.input_w));
  }
  return body_.forward(x, mode);
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  if (logits.rank() != 2) throw DimensionError("softmax: expected N x K, got " + shape_string(logits.shape()));
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  BasicTensor<T> p(logits.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const T* row = logits.data().data() + n * K;
    const T m = *std::max_element(row, row + K);
    double z = 0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k] - m));
    for (std::size_t k = 0; k < K; ++k) {
      p[n * K + k] = static_cast<T>(std::exp(static_cast<double>(row[k] - m)) / z);
    }
  }
  return p;
}

Prediction predict_from_logits(const Tensor& logits) {
  Prediction out{softmax(logits), {}};
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  out.labels.resize(N);
  for (std::size_t n = 0; n < N; ++n) {
    const float* row = logits.data().data() + n * K;
    // max_element returns the first maximum
    out.labels[n] = static_cast<int>(std::max_element(row, row + K) - row);
  }
  return out;
}

Prediction predict(Classifier<float>& net, const Tensor& batch) {
  return predict_from_logits(net.forward(batch, Mode::eval));
}

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels,
                                 std::size_t num_classes) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("confusion_matrix: " + std::to_string(predictions.size()) +
                         " predictions for " + std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix m(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i], p = predictions[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes ||
        static_cast<std::size_t>(p) >= num_classes) {
      throw ValidationError("confusion_matrix: item " + std::to_string(i) + " has class (" +
                            std::to_string(t) + ", " + std::to_string(p) + ") outside [0, " +
                            std::to_string(num_classes) + ")");
    }
    ++m[t][p];
  }
  return m;
}

double accuracy(const ConfusionMatrix& m) {
  std::size_t trace = 0, total = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    trace += m[i][i];
    for (auto v : m[i]) total += v;
  }
  return total ? static_cast<double>(trace) / static_cast<double>(total) : 0.0;
}

template class Classifier<float>;
template class Classifier<double>;
template BasicTensor<float> softmax(const BasicTensor<float>&);
template BasicTensor<double> softmax(const BasicTensor<double>&);

}  // namespace lenslearn::nn
