#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lenslearn/nn.hpp"

namespace lenslearn::nn {

// SimpleNet pattern: 13 conv3x3 -> batchnorm -> ReLU blocks. The first four
// stages are each followed by a 2x2 max pool (floor mode, so odd extents such
// as 125 x 170 pool cleanly); the remaining blocks run at the final
// resolution, then global average pool and a linear layer to logits.
struct ClassifierConfig {
  std::size_t input_h = 32;
  std::size_t input_w = 32;
  std::size_t in_channels = 1;
  std::size_t num_classes = 6;
  double width_multiplier = 0.25;
  std::vector<std::vector<std::size_t>> pooled_stages = {
      {64, 128, 128, 128}, {128, 128, 256}, {256, 256}, {512}};
  std::vector<std::size_t> final_stage = {2048, 256, 256};
  std::uint64_t init_seed = 1;

  std::size_t scaled(std::size_t width) const;
  // Spatial extent entering the final stage; throws ConfigError on pooling underflow.
  std::pair<std::size_t, std::size_t> final_map() const;
  std::size_t conv_block_count() const;
};

template <typename T>
class Classifier : public Module<T> {
 public:
  explicit Classifier(ClassifierConfig cfg);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override { return body_.backward(grad_out); }
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) override {
    body_.collect(prefix, out);
  }

  const ClassifierConfig& config() const { return cfg_; }

 private:
  ClassifierConfig cfg_;
  Sequential<T> body_;
};

template <typename T>
Classifier<T> build_classifier(const ClassifierConfig& cfg) {
  Classifier<T> net(cfg);
  init_he_uniform(net, cfg.init_seed);
  return net;
}

struct Prediction {
  Tensor probabilities;     // N x K
  std::vector<int> labels;  // argmax, ties to the lowest index
};

// Row-wise softmax of N x K logits.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

Prediction predict(Classifier<float>& net, const Tensor& batch);
Prediction predict_from_logits(const Tensor& logits);

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

// entry [i][j] counts items of true class i predicted as class j.
ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels,
                                 std::size_t num_classes);
double accuracy(const ConfusionMatrix& m);

}  // namespace lenslearn::nn
