#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "vitsel/dataset.hpp"
#include "vitsel/error.hpp"
#include "vitsel/parallel.hpp"
#include "vitsel/rankers/selection.hpp"

namespace vitsel {

struct BoostingConfig {
  std::size_t rounds = 100;
  std::size_t max_depth = 2;
  double learning_rate = 0.1;
  std::size_t threads = 1;
};

struct RegTreeNode {
  int feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
};

struct RegTree {
  std::vector<RegTreeNode> nodes;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0)
      i = static_cast<std::size_t>(x(nodes[i].feature) <= nodes[i].threshold ? nodes[i].left : nodes[i].right);
    return nodes[i].value;
  }
};

// One binary log-loss ensemble per class (one-vs-rest).
struct BoostedEnsemble {
  double learning_rate = 0.1;
  std::array<double, kNumClasses> initial{};
  std::array<std::vector<RegTree>, kNumClasses> trees;
  Eigen::MatrixXd gain_per_class;  // (3, E) accumulated split gain
  std::vector<double> importances; // class-averaged gain, normalised to sum 1 (or all 0)
  std::vector<std::string> warnings;

  Eigen::MatrixXd raw_scores(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd f(x.rows(), static_cast<Eigen::Index>(kNumClasses));
    for (std::size_t c = 0; c < kNumClasses; ++c)
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double s = initial[c];
        for (const auto& t : trees[c]) s += learning_rate * t.predict(x.row(i));
        f(i, static_cast<Eigen::Index>(c)) = s;
      }
    return f;
  }
};

namespace detail {

// Fits a depth-limited least-squares tree to `residual`, with Newton leaf
// values sum(r) / sum(p(1-p)). Gains (SSE reductions) are added to `gain`.
class ResidualTreeFitter {
 public:
  ResidualTreeFitter(const Eigen::MatrixXd& x, const std::vector<std::vector<std::size_t>>& sorted)
      : x_(x), sorted_(sorted), in_node_(static_cast<std::size_t>(x.rows()), 0) {}

  RegTree fit(const std::vector<double>& residual, const std::vector<double>& hessian, std::size_t max_depth,
              std::vector<double>& gain) {
    RegTree tree;
    tree.nodes.emplace_back();
    std::vector<std::size_t> all(residual.size());
    std::iota(all.begin(), all.end(), 0);
    grow(tree, 0, all, 0, residual, hessian, max_depth, gain);
    return tree;
  }

 private:
  void grow(RegTree& tree, std::size_t node, const std::vector<std::size_t>& rows, std::size_t depth,
            const std::vector<double>& r, const std::vector<double>& h, std::size_t max_depth,
            std::vector<double>& gain) {
    double sum_r = 0.0;
    double sum_h = 0.0;
    for (std::size_t i : rows) {
      sum_r += r[i];
      sum_h += h[i];
    }
    tree.nodes[node].value = sum_h > 1e-12 ? sum_r / sum_h : 0.0;
    if (depth >= max_depth || rows.size() < 2) return;

    const double n = static_cast<double>(rows.size());
    ++stamp_;
    for (std::size_t i : rows) in_node_[i] = stamp_;
    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = 0.0;
    // SSE(node) - SSE(left) - SSE(right) = sl^2/nl + sr^2/nr - s^2/n.
    const double base = sum_r * sum_r / n;
    for (std::size_t f = 0; f < sorted_.size(); ++f) {
      double left_sum = 0.0;
      std::size_t left_n = 0;
      double prev_value = 0.0;
      bool have_prev = false;
      for (std::size_t i : sorted_[f]) {
        if (in_node_[i] != stamp_) continue;
        const double v = x_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f));
        if (have_prev && v != prev_value) {
          const double nl = static_cast<double>(left_n);
          const double nr = n - nl;
          const double right_sum = sum_r - left_sum;
          const double g = left_sum * left_sum / nl + right_sum * right_sum / nr - base;
          if (g > best_gain + 1e-15) {
            best_gain = g;
            best_feature = static_cast<int>(f);
            best_threshold = 0.5 * (prev_value + v);
          }
        }
        left_sum += r[i];
        ++left_n;
        prev_value = v;
        have_prev = true;
      }
    }
    if (best_feature < 0) return;
    gain[static_cast<std::size_t>(best_feature)] += best_gain;
    std::vector<std::size_t> left_rows;
    std::vector<std::size_t> right_rows;
    for (std::size_t i : rows)
      (x_(static_cast<Eigen::Index>(i), best_feature) <= best_threshold ? left_rows : right_rows).push_back(i);
    const auto left = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    tree.nodes[node].feature = best_feature;
    tree.nodes[node].threshold = best_threshold;
    tree.nodes[node].left = left;
    tree.nodes[node].right = left + 1;
    grow(tree, static_cast<std::size_t>(left), left_rows, depth + 1, r, h, max_depth, gain);
    grow(tree, static_cast<std::size_t>(left + 1), right_rows, depth + 1, r, h, max_depth, gain);
  }

  const Eigen::MatrixXd& x_;
  const std::vector<std::vector<std::size_t>>& sorted_;
  std::vector<std::size_t> in_node_;
  std::size_t stamp_ = 0;
};

}  // namespace detail

inline BoostedEnsemble train_gradient_boosting(const Dataset& data, const BoostingConfig& config = {}) {
  require(data.size() >= 1, ErrorCode::kInvalidArgument, "gradient boosting needs non-empty data");
  const Eigen::MatrixXd& x = data.features.matrix();
  const std::size_t n = data.size();
  const std::size_t width = data.width();

  // Row order per feature, sorted once and filtered per node.
  std::vector<std::vector<std::size_t>> sorted(width, std::vector<std::size_t>(n));
  for (std::size_t f = 0; f < width; ++f) {
    std::iota(sorted[f].begin(), sorted[f].end(), 0);
    std::stable_sort(sorted[f].begin(), sorted[f].end(), [&](std::size_t a, std::size_t b) {
      return x(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(f)) <
             x(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(f));
    });
  }

  BoostedEnsemble model;
  model.learning_rate = config.learning_rate;
  model.gain_per_class = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNumClasses), static_cast<Eigen::Index>(width));
  if (config.rounds == 0) model.warnings.push_back("0 boosting rounds: every importance is 0, selection keeps nothing");

  parallel_for(kNumClasses, config.threads, [&](std::size_t c) {
    std::vector<double> y(n);
    double positives = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = data.labels[i] == static_cast<int>(c) ? 1.0 : 0.0;
      positives += y[i];
    }
    const double prior = std::clamp(positives / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
    model.initial[c] = std::log(prior / (1.0 - prior));
    std::vector<double> score(n, model.initial[c]);
    std::vector<double> residual(n);
    std::vector<double> hessian(n);
    std::vector<double> gain(width, 0.0);
    detail::ResidualTreeFitter fitter(x, sorted);
    for (std::size_t round = 0; round < config.rounds; ++round) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = 1.0 / (1.0 + std::exp(-score[i]));
        residual[i] = y[i] - p;
        hessian[i] = p * (1.0 - p);
      }
      RegTree tree = fitter.fit(residual, hessian, config.max_depth, gain);
      for (std::size_t i = 0; i < n; ++i) score[i] += config.learning_rate * tree.predict(x.row(static_cast<Eigen::Index>(i)));
      model.trees[c].push_back(std::move(tree));
    }
    for (std::size_t e = 0; e < width; ++e) model.gain_per_class(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(e)) = gain[e];
  });

  model.importances = average_importance_across_classes(model.gain_per_class);
  const double sum = std::accumulate(model.importances.begin(), model.importances.end(), 0.0);
  if (sum > 0.0)
    for (double& v : model.importances) v /= sum;
  return model;
}

}  // namespace vitsel
