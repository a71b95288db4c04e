#include "lenslearn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lenslearn/checkpoint.hpp"
#include "lenslearn/io.hpp"
#include "lenslearn/rng.hpp"

namespace lenslearn::train {

namespace {

template <typename T>
void check_targets(const BasicTensor<T>& p, const BasicTensor<T>& g, const char* what) {
  require_same_shape(p.shape(), g.shape(), what);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] >= T(0) && g[i] <= T(1))) {
      throw ValidationError(std::string(what) + ": target " + std::to_string(g[i]) + " at element " +
                            std::to_string(i) + " outside [0, 1]");
    }
  }
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

}  // namespace

template <typename T>
double bce_pixel_loss(const BasicTensor<T>& p, const BasicTensor<T>& g) {
  check_targets(p, g, "bce_pixel_loss");
  if (p.size() == 0) return 0;
  double sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = clamp_prob(p[i]);
    sum += -g[i] * std::log(q) - (1.0 - g[i]) * std::log(1.0 - q);
  }
  return sum / static_cast<double>(p.size());
}

template <typename T>
BasicTensor<T> bce_pixel_grad(const BasicTensor<T>& p, const BasicTensor<T>& g) {
  check_targets(p, g, "bce_pixel_grad");
  BasicTensor<T> grad(p.shape());
  const double n = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = clamp_prob(p[i]);
    grad[i] = static_cast<T>((q - g[i]) / (q * (1.0 - q) * n));
  }
  return grad;
}

template <typename T>
LossGrad<T> bce_with_logits(const BasicTensor<T>& logits, const BasicTensor<T>& g) {
  check_targets(logits, g, "bce_with_logits");
  LossGrad<T> out{0, BasicTensor<T>(logits.shape())};
  if (logits.size() == 0) return out;
  const double n = static_cast<double>(logits.size());
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double s = ops::sigmoid(static_cast<double>(logits[i]));
    const double q = clamp_prob(s);
    sum += -g[i] * std::log(q) - (1.0 - g[i]) * std::log(1.0 - q);
    out.grad[i] = static_cast<T>((s - g[i]) / n);
  }
  out.loss = sum / n;
  return out;
}

template <typename T>
LossGrad<T> softmax_ce(const BasicTensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("softmax_ce: logits " + shape_string(logits.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  LossGrad<T> out{0, BasicTensor<T>(logits.shape())};
  if (N == 0) return out;
  double sum = 0;
  for (std::size_t n = 0; n < N; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= K) {
      throw ValidationError("softmax_ce: label " + std::to_string(label) + " outside [0, " +
                            std::to_string(K) + ")");
    }
    const T* row = logits.data().data() + n * K;
    const double m = *std::max_element(row, row + K);
    double z = 0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - m);
    const double log_z = m + std::log(z);
    sum += log_z - row[label];
    for (std::size_t k = 0; k < K; ++k) {
      const double p = std::exp(row[k] - log_z);
      out.grad[n * K + k] = static_cast<T>((p - (static_cast<int>(k) == label ? 1.0 : 0.0)) / N);
    }
  }
  out.loss = sum / static_cast<double>(N);
  return out;
}

template <typename T>
void adam_step(std::span<BasicTensor<T>* const> params, AdamState<T>& state) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->size(), T(0));
      state.v.emplace_back(p->size(), T(0));
    }
  }
  if (state.m.size() != params.size()) {
    throw DimensionError("adam_step: state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                         std::to_string(params.size()));
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    BasicTensor<T>& p = *params[k];
    if (!p.has_grad() || state.m[k].size() != p.size()) {
      throw DimensionError("adam_step: tensor " + std::to_string(k) + " " + shape_string(p.shape()) +
                           " has no gradient or does not match its moment buffers");
    }
    auto g = p.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / c1;
      const double v_hat = vi / c2;
      p[i] = static_cast<T>(p[i] - state.lr * m_hat / (std::sqrt(v_hat) + state.eps));
    }
  }
}

template <typename T>
void adam_step(std::vector<nn::NamedTensor<T>>& params, AdamState<T>& state) {
  std::vector<BasicTensor<T>*> ptrs;
  ptrs.reserve(params.size());
  for (auto& p : params) ptrs.push_back(p.tensor);
  adam_step(std::span<BasicTensor<T>* const>(ptrs), state);
}

ErrorMetrics evaluate_mae_mse(const Tensor& prediction, const Tensor& target) {
  require_same_shape(prediction.shape(), target.shape(), "evaluate_mae_mse");
  ErrorMetrics m;
  if (prediction.size() == 0) return m;
  double abs_sum = 0, sq_sum = 0, max_abs = 0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = static_cast<double>(prediction[i]) - target[i];
    abs_sum += std::abs(d);
    max_abs = std::max(max_abs, std::abs(d));
    sq_sum += d * d;
  }
  m.mae = abs_sum / static_cast<double>(prediction.size());
  m.mse = sq_sum / static_cast<double>(prediction.size());
  if (max_abs <= 1.0 && m.mse > m.mae * (1.0 + 1e-12)) {
    throw NumericError("evaluate_mae_mse: mse " + std::to_string(m.mse) + " exceeds mae " + std::to_string(m.mae));
  }
  return m;
}

// Training loops

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {epoch}));
  rng.shuffle(std::span(order));
  return order;
}

void check_plan(const TrainPlan& plan) {
  if (plan.max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (plan.batch_size < 1) throw ConfigError("batch_size must be at least 1");
}

std::filesystem::path epoch_checkpoint(const TrainPlan& plan, std::size_t epoch) {
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%03zu.lltn", epoch);
  return plan.checkpoint_dir / name;
}

}  // namespace

Tensor reconstruct_all(nn::UNet<float>& net, const Tensor& inputs, std::size_t batch_size) {
  Tensor out(inputs.shape());
  const std::size_t n = inputs.dim(0), item = n ? inputs.size() / n : 0;
  for (std::size_t b = 0; b < n; b += batch_size) {
    const std::size_t e = std::min(n, b + batch_size);
    Tensor pred = net.reconstruct(slice_batch(inputs, b, e), nn::Mode::eval);
    std::copy(pred.data().begin(), pred.data().end(), out.data().begin() + b * item);
  }
  return out;
}

MetricRecord evaluate_reconstruction(nn::UNet<float>& net, const data::ReconPairs& pairs,
                                     std::size_t batch_size, std::size_t epoch, const std::string& split) {
  MetricRecord r;
  r.epoch = epoch;
  r.split = split;
  const std::size_t n = pairs.count();
  double loss_sum = 0;
  for (std::size_t b = 0; b < n; b += batch_size) {
    const std::size_t e = std::min(n, b + batch_size);
    Tensor logits = net.forward(slice_batch(pairs.inputs, b, e), nn::Mode::eval);
    loss_sum += bce_with_logits(logits, slice_batch(pairs.targets, b, e)).loss * static_cast<double>(e - b);
  }
  r.loss = n ? loss_sum / static_cast<double>(n) : 0;
  const ErrorMetrics m = evaluate_mae_mse(reconstruct_all(net, pairs.inputs, batch_size), pairs.targets);
  r.mae = m.mae;
  r.mse = m.mse;
  return r;
}

ReconResult train_reconstruction(nn::UNet<float>& net, const data::ReconPairs& train_set,
                                 const data::ReconPairs& test_set, const TrainPlan& plan,
                                 AdamState<float>& adam, const EpochCallback& on_epoch) {
  check_plan(plan);
  if (train_set.count() == 0) throw ValidationError("reconstruction training set is empty");
  auto params = nn::parameters(net);
  ReconResult result;
  const auto start = Clock::now();
  double best = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= plan.max_epochs; ++epoch) {
    const auto order = epoch_order(train_set.count(), plan.shuffle_seed, epoch);
    std::size_t batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += plan.batch_size, ++batch_index) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(plan.batch_size, order.size() - b));
      Tensor x = gather_batch(train_set.inputs, idx);
      Tensor g = gather_batch(train_set.targets, idx);
      nn::zero_grad(net);
      Tensor logits = net.forward(x, nn::Mode::train);
      auto lg = bce_with_logits(logits, g);
      if (!std::isfinite(lg.loss)) {
        throw NumericError("non-finite reconstruction loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + " (lr " + std::to_string(adam.lr) + ")");
      }
      net.backward(lg.grad);
      adam_step(params, adam);
    }

    MetricRecord tr = evaluate_reconstruction(net, train_set, plan.batch_size, epoch, "train");
    MetricRecord te = test_set.count() ? evaluate_reconstruction(net, test_set, plan.batch_size, epoch, "test")
                                       : MetricRecord{epoch, "test", 0, 0.0, 0.0, std::nullopt, 0};
    if (!std::isfinite(tr.loss) || !std::isfinite(te.loss)) {
      throw NumericError("non-finite evaluation loss after epoch " + std::to_string(epoch) + " (lr " +
                         std::to_string(adam.lr) + ")");
    }
    if (plan.record_timing) {
      tr.seconds = te.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    }
    result.records.push_back(tr);
    result.records.push_back(te);

    if (!plan.checkpoint_dir.empty()) {
      if (plan.checkpoint_every && epoch % plan.checkpoint_every == 0) {
        save_checkpoint(epoch_checkpoint(plan, epoch), net);
      }
      if (*te.mae < best) save_checkpoint(plan.checkpoint_dir / "best.lltn", net);
    }
    if (*te.mae < best) {
      best = *te.mae;
      result.best_epoch = epoch;
      result.best_test_mae = best;
    }
    if (on_epoch) on_epoch(tr, te);
  }
  if (!plan.checkpoint_dir.empty()) save_checkpoint(plan.checkpoint_dir / "final.lltn", net);
  return result;
}

ClassifierEval evaluate_classifier(nn::Classifier<float>& net, const data::LabeledImageSet& set,
                                   std::size_t batch_size, std::size_t epoch, const std::string& split) {
  ClassifierEval out;
  out.record.epoch = epoch;
  out.record.split = split;
  const std::size_t n = set.count();
  std::vector<int> predicted;
  predicted.reserve(n);
  double loss_sum = 0;
  for (std::size_t b = 0; b < n; b += batch_size) {
    const std::size_t e = std::min(n, b + batch_size);
    Tensor logits = net.forward(slice_batch(set.images, b, e), nn::Mode::eval);
    const std::span<const int> labels(set.labels.data() + b, e - b);
    loss_sum += softmax_ce(logits, labels).loss * static_cast<double>(e - b);
    auto pred = nn::predict_from_logits(logits);
    predicted.insert(predicted.end(), pred.labels.begin(), pred.labels.end());
  }
  out.confusion = nn::confusion_matrix(predicted, set.labels, net.config().num_classes);
  out.record.loss = n ? loss_sum / static_cast<double>(n) : 0;
  out.record.accuracy = nn::accuracy(out.confusion);
  return out;
}

ClassifierResult train_classifier(nn::Classifier<float>& net, const data::LabeledImageSet& train_set,
                                  const data::LabeledImageSet& test_set, const TrainPlan& plan,
                                  AdamState<float>& adam, const EpochCallback& on_epoch) {
  check_plan(plan);
  if (train_set.count() == 0) throw ValidationError("classifier training set is empty");
  auto params = nn::parameters(net);
  ClassifierResult result;
  const auto start = Clock::now();
  double best = -1;

  for (std::size_t epoch = 1; epoch <= plan.max_epochs; ++epoch) {
    const auto order = epoch_order(train_set.count(), plan.shuffle_seed, epoch);
    std::size_t batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += plan.batch_size, ++batch_index) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(plan.batch_size, order.size() - b));
      Tensor x = gather_batch(train_set.images, idx);
      std::vector<int> labels;
      labels.reserve(idx.size());
      for (auto i : idx) labels.push_back(train_set.labels[i]);
      nn::zero_grad(net);
      Tensor logits = net.forward(x, nn::Mode::train);
      auto lg = softmax_ce(logits, labels);
      if (!std::isfinite(lg.loss)) {
        throw NumericError("non-finite classifier loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + " (lr " + std::to_string(adam.lr) + ")");
      }
      net.backward(lg.grad);
      adam_step(params, adam);
    }

    auto tr = evaluate_classifier(net, train_set, plan.batch_size, epoch, "train");
    auto te = evaluate_classifier(net, test_set, plan.batch_size, epoch, "test");
    if (plan.record_timing) {
      tr.record.seconds = te.record.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    }
    result.records.push_back(tr.record);
    result.records.push_back(te.record);
    result.confusions.push_back(tr.confusion);
    result.confusions.push_back(te.confusion);
    result.confusion = te.confusion;
    result.train_confusion = tr.confusion;
    result.test_accuracy = *te.record.accuracy;
    result.train_accuracy = *tr.record.accuracy;

    if (!plan.checkpoint_dir.empty()) {
      if (plan.checkpoint_every && epoch % plan.checkpoint_every == 0) {
        save_checkpoint(epoch_checkpoint(plan, epoch), net);
      }
      if (*te.record.accuracy > best) save_checkpoint(plan.checkpoint_dir / "best.lltn", net);
    }
    best = std::max(best, *te.record.accuracy);
    if (on_epoch) on_epoch(tr.record, te.record);
  }
  if (!plan.checkpoint_dir.empty()) save_checkpoint(plan.checkpoint_dir / "final.lltn", net);
  return result;
}

// CSV

namespace {
std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}
std::string opt(const std::optional<double>& v) { return v ? num(*v) : std::string(); }
std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}
}  // namespace

std::string metrics_csv(const std::vector<MetricRecord>& records) {
  std::string out = "epoch,split,loss,mae,mse,accuracy,seconds\n";
  for (const auto& r : records) {
    out += std::to_string(r.epoch) + "," + r.split + "," + num(r.loss) + "," + opt(r.mae) + "," + opt(r.mse) +
           "," + opt(r.accuracy) + "," + num(r.seconds) + "\n";
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRecord>& records) {
  write_text(path, metrics_csv(records));
}

std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open metrics file " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "epoch,split,loss,mae,mse,accuracy,seconds") {
    throw ParseError(path.string(), 0, "unexpected metrics header '" + line + "'");
  }
  std::vector<MetricRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 7) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + " has " +
                            std::to_string(f.size()) + " fields, expected 7");
    }
    MetricRecord r;
    r.epoch = std::stoul(f[0]);
    r.split = f[1];
    r.loss = std::stod(f[2]);
    r.mae = parse_opt(f[3]);
    r.mse = parse_opt(f[4]);
    r.accuracy = parse_opt(f[5]);
    r.seconds = std::stod(f[6]);
    records.push_back(r);
  }
  return records;
}

template double bce_pixel_loss(const BasicTensor<float>&, const BasicTensor<float>&);
template double bce_pixel_loss(const BasicTensor<double>&, const BasicTensor<double>&);
template BasicTensor<float> bce_pixel_grad(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> bce_pixel_grad(const BasicTensor<double>&, const BasicTensor<double>&);
template LossGrad<float> bce_with_logits(const BasicTensor<float>&, const BasicTensor<float>&);
template LossGrad<double> bce_with_logits(const BasicTensor<double>&, const BasicTensor<double>&);
template LossGrad<float> softmax_ce(const BasicTensor<float>&, std::span<const int>);
template LossGrad<double> softmax_ce(const BasicTensor<double>&, std::span<const int>);
template void adam_step(std::span<BasicTensor<float>* const>, AdamState<float>&);
template void adam_step(std::span<BasicTensor<double>* const>, AdamState<double>&);
template void adam_step(std::vector<nn::NamedTensor<float>>&, AdamState<float>&);
template void adam_step(std::vector<nn::NamedTensor<double>>&, AdamState<double>&);

}  // namespace lenslearn::train
