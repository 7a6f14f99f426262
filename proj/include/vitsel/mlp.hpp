#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vitsel/dataset.hpp"
#include "vitsel/error.hpp"
#include "vitsel/labels.hpp"
#include "vitsel/optim.hpp"
#include "vitsel/rng.hpp"
#include "vitsel/tnsr.hpp"

namespace vitsel {

// ---------------------------------------------------------------------------
// Class weights and the weighted cross-entropy

struct ClassWeights {
  std::array<std::size_t, kNumClasses> counts{};
  std::array<double, kNumClasses> weights{};
};

// w_c = max(counts) / counts_c, so the majority class gets exactly 1.
inline ClassWeights compute_class_weights(const std::array<std::size_t, kNumClasses>& counts) {
  ClassWeights cw;
  cw.counts = counts;
  const std::size_t largest = *std::max_element(counts.begin(), counts.end());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    require(counts[c] > 0, ErrorCode::kInvalidArgument,
            "class " + std::string(kClassNames[c]) + " has zero samples; its weight would divide by zero");
    cw.weights[c] = static_cast<double>(largest) / static_cast<double>(counts[c]);
  }
  return cw;
}

inline double class_weight(const std::optional<ClassWeights>& weights, int label) {
  return weights ? weights->weights[static_cast<std::size_t>(label)] : 1.0;
}

// -w_label * log softmax(logits)[label], evaluated with log-sum-exp.
inline double weighted_cross_entropy(std::span<const double> logits, int label,
                                     const std::optional<ClassWeights>& weights = std::nullopt) {
  require(label >= 0 && static_cast<std::size_t>(label) < logits.size(), ErrorCode::kInvalidArgument,
          "label outside logit range");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - peak);
  const double log_p = logits[static_cast<std::size_t>(label)] - peak - std::log(sum);
  return -class_weight(weights, label) * log_p;
}

// Row-wise softmax of an (N, C) logit matrix.
inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double peak = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - peak).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

// ---------------------------------------------------------------------------
// Network

enum class Activation { kRelu };

struct MLPParams {
  std::vector<std::size_t> sizes;        // [E_in, hidden..., 3]
  std::vector<Eigen::MatrixXd> weights;  // layer k: (sizes[k+1], sizes[k])
  std::vector<Eigen::MatrixXd> biases;   // layer k: (sizes[k+1], 1)
  Activation activation = Activation::kRelu;

  std::size_t input_width() const { return sizes.front(); }
  std::size_t layers() const { return weights.size(); }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (std::size_t k = 0; k < layers(); ++k)
      total += static_cast<std::size_t>(weights[k].size() + biases[k].size());
    return total;
  }

  std::vector<Eigen::MatrixXd*> mutable_tensors() {
    std::vector<Eigen::MatrixXd*> out;
    for (std::size_t k = 0; k < layers(); ++k) {
      out.push_back(&weights[k]);
      out.push_back(&biases[k]);
    }
    return out;
  }

  friend bool operator==(const MLPParams& a, const MLPParams& b) {
    if (a.sizes != b.sizes) return false;
    for (std::size_t k = 0; k < a.layers(); ++k)
      if (a.weights[k] != b.weights[k] || a.biases[k] != b.biases[k]) return false;
    return true;
  }
};

inline std::vector<std::size_t> mlp_sizes(std::size_t input_width, std::span<const std::size_t> hidden) {
  std::vector<std::size_t> sizes{input_width};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(kNumClasses);
  return sizes;
}

inline MLPParams zero_mlp(std::vector<std::size_t> sizes) {
  require(sizes.size() >= 2, ErrorCode::kInvalidArgument, "an MLP needs at least input and output sizes");
  MLPParams p;
  p.sizes = std::move(sizes);
  for (std::size_t k = 0; k + 1 < p.sizes.size(); ++k) {
    require(p.sizes[k] >= 1, ErrorCode::kInvalidArgument, "layer widths must be >= 1");
    const auto out = static_cast<Eigen::Index>(p.sizes[k + 1]);
    const auto in = static_cast<Eigen::Index>(p.sizes[k]);
    p.weights.push_back(Eigen::MatrixXd::Zero(out, in));
    p.biases.push_back(Eigen::MatrixXd::Zero(out, 1));
  }
  return p;
}

// He-style uniform init: U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)), zero bias.
inline MLPParams init_mlp(std::vector<std::size_t> sizes, std::uint64_t seed) {
  MLPParams p = zero_mlp(std::move(sizes));
  Rng rng(seed);
  for (auto& w : p.weights) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
  }
  return p;
}

struct MLPCache {
  std::vector<Eigen::MatrixXd> inputs;  // activation entering each layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
};

inline Eigen::MatrixXd mlp_logits(const MLPParams& p, const Eigen::MatrixXd& x, MLPCache* cache = nullptr) {
  require(static_cast<std::size_t>(x.cols()) == p.input_width(), ErrorCode::kShapeMismatch,
          "input width " + std::to_string(x.cols()) + " != network input " + std::to_string(p.input_width()));
  Eigen::MatrixXd a = x;
  for (std::size_t k = 0; k < p.layers(); ++k) {
    Eigen::MatrixXd z = a * p.weights[k].transpose();
    z.rowwise() += p.biases[k].col(0).transpose();
    if (cache) {
      cache->inputs.push_back(std::move(a));
      cache->pre.push_back(z);
    }
    if (k + 1 < p.layers()) {
      a = z.cwiseMax(0.0);
    } else {
      return z;
    }
  }
  return a;
}

struct LossAndGradient {
  double loss = 0.0;
  std::vector<Eigen::MatrixXd> grads;  // order of MLPParams::mutable_tensors()
};

// Batch objective: mean over rows of w_y * CE(row). Per-sample weights are
// averaged over the batch, not renormalised by their sum.
inline LossAndGradient mlp_loss_and_gradient(const MLPParams& p, const Eigen::MatrixXd& x,
                                             std::span<const int> labels,
                                             const std::optional<ClassWeights>& weights) {
  require(static_cast<std::size_t>(x.rows()) == labels.size() && !labels.empty(), ErrorCode::kShapeMismatch,
          "batch rows must match a non-empty label list");
  MLPCache cache;
  const Eigen::MatrixXd logits = mlp_logits(p, x, &cache);
  Eigen::MatrixXd delta = softmax_rows(logits);
  const double inv_b = 1.0 / static_cast<double>(labels.size());
  LossAndGradient out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double w = class_weight(weights, labels[i]);
    const Eigen::RowVectorXd z = logits.row(row);
    const double peak = z.maxCoeff();
    const double lse = peak + std::log((z.array() - peak).exp().sum());
    out.loss += w * (lse - z(labels[i])) * inv_b;
    delta(row, labels[i]) -= 1.0;
    delta.row(row) *= w * inv_b;
  }
  out.grads.resize(2 * p.layers());
  for (std::size_t k = p.layers(); k-- > 0;) {
    out.grads[2 * k] = delta.transpose() * cache.inputs[k];
    out.grads[2 * k + 1] = delta.colwise().sum().transpose();
    if (k > 0) {
      Eigen::MatrixXd back = delta * p.weights[k];
      delta = back.cwiseProduct((cache.pre[k - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

inline double mlp_loss(const MLPParams& p, const Eigen::MatrixXd& x, std::span<const int> labels,
                       const std::optional<ClassWeights>& weights) {
  const Eigen::MatrixXd logits = mlp_logits(p, x);
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const Eigen::RowVectorXd z = logits.row(row);
    const double peak = z.maxCoeff();
    const double lse = peak + std::log((z.array() - peak).exp().sum());
    loss += class_weight(weights, labels[i]) * (lse - z(labels[i]));
  }
  return loss / static_cast<double>(labels.size());
}

struct Prediction {
  LabelVector classes;
  Eigen::MatrixXd probabilities;  // (N, 3), rows sum to 1
};

// Argmax of the softmax; ties go to the lowest class index.
inline Prediction predict(const MLPParams& p, const Eigen::MatrixXd& x) {
  Prediction out;
  out.probabilities = softmax_rows(mlp_logits(p, x));
  std::vector<int> classes(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < static_cast<int>(kNumClasses); ++c)
      if (out.probabilities(i, c) > out.probabilities(i, best)) best = c;
    classes[static_cast<std::size_t>(i)] = best;
  }
  out.classes = LabelVector(std::move(classes));
  return out;
}

// Norm of the gradient each class contributes to the first layer at the
// given parameters; used to reason about how weighting shifts emphasis.
inline std::array<double, kNumClasses> per_class_gradient_norms(const MLPParams& p, const Dataset& data,
                                                               const std::optional<ClassWeights>& weights) {
  std::array<double, kNumClasses> norms{};
  const double scale = 1.0 / static_cast<double>(data.size());
  for (int c = 0; c < static_cast<int>(kNumClasses); ++c) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.labels[i] == c) rows.push_back(i);
    if (rows.empty()) continue;
    const Dataset part = subset(data, rows, data.split);
    const auto g = mlp_loss_and_gradient(p, part.features.matrix(), part.labels.values(), weights);
    // Rescale from the per-class batch mean to a share of the full-batch mean.
    double sq = 0.0;
    for (const auto& t : g.grads) sq += t.squaredNorm();
    norms[static_cast<std::size_t>(c)] = std::sqrt(sq) * static_cast<double>(rows.size()) * scale;
  }
  return norms;
}

// ---------------------------------------------------------------------------
// Training

struct MLPTrainConfig {
  std::vector<std::size_t> hidden = {1024, 512, 256};
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
  MLPParams best_params;
  MLPParams final_params;
};

inline TrainReport train_mlp(const Dataset& train, const Dataset& val, const MLPTrainConfig& config,
                             const std::optional<ClassWeights>& weights = std::nullopt) {
  require(config.epochs >= 1, ErrorCode::kInvalidArgument, "training needs at least one epoch");
  require(config.batch_size >= 1, ErrorCode::kInvalidArgument, "batch size must be >= 1");
  require(train.size() >= 1 && val.size() >= 1, ErrorCode::kInvalidArgument,
          "training and validation sets must be non-empty");
  require(train.width() == val.width(), ErrorCode::kShapeMismatch,
          "train width " + std::to_string(train.width()) + " != validation width " + std::to_string(val.width()));

  MLPParams params = init_mlp(mlp_sizes(train.width(), config.hidden), Rng::derive(config.seed, 0));
  Adam optimizer(AdamConfig{.learning_rate = config.learning_rate});
  Rng order_rng(Rng::derive(config.seed, 1));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const Eigen::MatrixXd& x = train.features.matrix();
  TrainReport report;
  report.best_params = params;
  double best_val = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd batch_x;
  std::vector<int> batch_y;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += config.batch_size, ++b) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch_x.resize(static_cast<Eigen::Index>(end - start), x.cols());
      batch_y.resize(end - start);
      for (std::size_t i = start; i < end; ++i) {
        batch_x.row(static_cast<Eigen::Index>(i - start)) = x.row(static_cast<Eigen::Index>(order[i]));
        batch_y[i - start] = train.labels[order[i]];
      }
      auto lg = mlp_loss_and_gradient(params, batch_x, batch_y, weights);
      require(std::isfinite(lg.loss), ErrorCode::kNumericalFailure,
              "non-finite training loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      epoch_loss += lg.loss * static_cast<double>(end - start);
      optimizer.step(params.mutable_tensors(), lg.grads);
    }
    const double val_loss = mlp_loss(params, val.features.matrix(), val.labels.values(), weights);
    require(std::isfinite(val_loss), ErrorCode::kNumericalFailure,
            "non-finite validation loss at epoch " + std::to_string(epoch));
    report.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));
    report.val_loss.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      report.best_epoch = epoch;
      report.best_params = params;
    }
  }
  report.final_params = std::move(params);
  return report;
}

// The single-affine-map head ([E_in, 3]) trained under the same protocol.
inline TrainReport baseline_head(const Dataset& train, const Dataset& val, MLPTrainConfig config,
                                 const std::optional<ClassWeights>& weights = std::nullopt) {
  config.hidden.clear();
  return train_mlp(train, val, config, weights);
}

// ---------------------------------------------------------------------------
// Persistence

inline std::vector<NamedMatrix> mlp_to_bundle(const MLPParams& p) {
  std::vector<NamedMatrix> items;
  for (std::size_t k = 0; k < p.layers(); ++k) {
    items.push_back({"layer" + std::to_string(k) + ".weight", p.weights[k]});
    items.push_back({"layer" + std::to_string(k) + ".bias", p.biases[k]});
  }
  return items;
}

inline MLPParams mlp_from_bundle(const std::vector<NamedMatrix>& items) {
  require(!items.empty() && items.size() % 2 == 0, ErrorCode::kShapeMismatch,
          "MLP bundle needs weight/bias pairs");
  MLPParams p;
  p.sizes.push_back(static_cast<std::size_t>(items[0].value.cols()));
  for (std::size_t k = 0; 2 * k < items.size(); ++k) {
    const auto& w = items[2 * k];
    const auto& b = items[2 * k + 1];
    require(w.name == "layer" + std::to_string(k) + ".weight" && b.name == "layer" + std::to_string(k) + ".bias",
            ErrorCode::kShapeMismatch, "unexpected MLP bundle entry order at layer " + std::to_string(k));
    require(static_cast<std::size_t>(w.value.cols()) == p.sizes.back() && b.value.rows() == w.value.rows() &&
                b.value.cols() == 1,
            ErrorCode::kShapeMismatch, "MLP bundle layer " + std::to_string(k) + " does not chain");
    p.sizes.push_back(static_cast<std::size_t>(w.value.rows()));
    p.weights.push_back(w.value);
    p.biases.push_back(b.value);
  }
  require(p.sizes.back() == kNumClasses, ErrorCode::kShapeMismatch, "MLP bundle output width must be 3");
  return p;
}

}  // namespace vitsel
