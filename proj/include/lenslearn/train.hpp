#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lenslearn/classifier.hpp"
#include "lenslearn/dataset.hpp"
#include "lenslearn/unet.hpp"

namespace lenslearn::train {

// Predictions are clamped to [kProbClamp, 1 - kProbClamp] inside the loss.
inline constexpr double kProbClamp = 1e-7;

// L = (1/N) sum_i -g_i log(p_i) - (1 - g_i) log(1 - p_i) over every element.
template <typename T>
double bce_pixel_loss(const BasicTensor<T>& p, const BasicTensor<T>& g);

// dL/dp_i = (p_i - g_i) / (p_i (1 - p_i) N) with p clamped.
template <typename T>
BasicTensor<T> bce_pixel_grad(const BasicTensor<T>& p, const BasicTensor<T>& g);

template <typename T>
struct LossGrad {
  double loss = 0;
  BasicTensor<T> grad;
};

// Pixel cross-entropy of sigmoid(z) against g with the gradient taken at the
// pre-activation: (sigmoid(z) - g) / N.
template <typename T>
LossGrad<T> bce_with_logits(const BasicTensor<T>& logits, const BasicTensor<T>& g);

// Mean over the batch of -log softmax(logits)[label]; grad = (softmax - onehot) / N.
template <typename T>
LossGrad<T> softmax_ce(const BasicTensor<T>& logits, std::span<const int> labels);

template <typename T>
struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<T>> m, v;
};

// One Adam update of every tensor from its gradient buffer. Moment buffers are
// created on the first call and must keep matching shapes afterwards.
template <typename T>
void adam_step(std::span<BasicTensor<T>* const> params, AdamState<T>& state);

template <typename T>
void adam_step(std::vector<nn::NamedTensor<T>>& params, AdamState<T>& state);

struct ErrorMetrics {
  double mae = 0;
  double mse = 0;
};

ErrorMetrics evaluate_mae_mse(const Tensor& prediction, const Tensor& target);

struct TrainPlan {
  std::size_t max_epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t shuffle_seed = 0;
  std::size_t checkpoint_every = 0;        // 0 disables periodic checkpoints
  std::filesystem::path checkpoint_dir;    // empty disables all checkpoint files
  bool record_timing = false;              // wall-clock seconds in records
};

struct MetricRecord {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0;
  std::optional<double> mae, mse, accuracy;
  double seconds = 0;
};

// Called after each epoch with that epoch's train and test records.
using EpochCallback = std::function<void(const MetricRecord& train, const MetricRecord& test)>;

struct ReconResult {
  std::vector<MetricRecord> records;
  std::size_t best_epoch = 0;
  double best_test_mae = 0;
};

// Eval-mode sigmoid outputs, batch by batch.
Tensor reconstruct_all(nn::UNet<float>& net, const Tensor& inputs, std::size_t batch_size);

// Eval-mode loss and error metrics over a paired set.
MetricRecord evaluate_reconstruction(nn::UNet<float>& net, const data::ReconPairs& pairs,
                                     std::size_t batch_size, std::size_t epoch, const std::string& split);

ReconResult train_reconstruction(nn::UNet<float>& net, const data::ReconPairs& train_set,
                                 const data::ReconPairs& test_set, const TrainPlan& plan,
                                 AdamState<float>& adam, const EpochCallback& on_epoch = {});

struct ClassifierResult {
  std::vector<MetricRecord> records;
  std::vector<nn::ConfusionMatrix> confusions;  // one per record
  nn::ConfusionMatrix confusion;  // final test split
  nn::ConfusionMatrix train_confusion;
  double test_accuracy = 0;
  double train_accuracy = 0;
};

struct ClassifierEval {
  MetricRecord record;
  nn::ConfusionMatrix confusion;
};

ClassifierEval evaluate_classifier(nn::Classifier<float>& net, const data::LabeledImageSet& set,
                                   std::size_t batch_size, std::size_t epoch, const std::string& split);

ClassifierResult train_classifier(nn::Classifier<float>& net, const data::LabeledImageSet& train_set,
                                  const data::LabeledImageSet& test_set, const TrainPlan& plan,
                                  AdamState<float>& adam, const EpochCallback& on_epoch = {});

// Columns: epoch,split,loss,mae,mse,accuracy,seconds. Missing values are empty.
std::string metrics_csv(const std::vector<MetricRecord>& records);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRecord>& records);
std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path);

}  // namespace lenslearn::train
