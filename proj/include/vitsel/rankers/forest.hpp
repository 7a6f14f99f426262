#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "vitsel/dataset.hpp"
#include "vitsel/error.hpp"
#include "vitsel/parallel.hpp"
#include "vitsel/rng.hpp"

namespace vitsel {

struct ForestConfig {
  std::size_t trees = 100;
  std::size_t max_depth = 8;
  std::size_t features_per_split = 0;  // 0 = floor(sqrt(E))
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct ClassTreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::array<double, kNumClasses> distribution{};
};

struct ClassTree {
  std::vector<ClassTreeNode> nodes;

  const std::array<double, kNumClasses>& leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0)
      i = static_cast<std::size_t>(x(nodes[i].feature) <= nodes[i].threshold ? nodes[i].left : nodes[i].right);
    return nodes[i].distribution;
  }
};

struct RandomForest {
  std::vector<ClassTree> trees;
  // Mean decrease in Gini impurity, normalised to sum 1 (all zero when no
  // tree split at all).
  std::vector<double> importances;

  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(x.rows(), static_cast<Eigen::Index>(kNumClasses));
    for (const auto& tree : trees)
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto& d = tree.leaf_for(x.row(i));
        for (std::size_t c = 0; c < kNumClasses; ++c) p(i, static_cast<Eigen::Index>(c)) += d[c];
      }
    return trees.empty() ? p : (p / static_cast<double>(trees.size())).eval();
  }
};

namespace detail {

inline double gini(const std::array<double, kNumClasses>& counts, double total) {
  if (total <= 0.0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += (c / total) * (c / total);
  return 1.0 - s;
}

struct ForestTreeBuilder {
  const Eigen::MatrixXd& x;
  std::span<const int> labels;
  const ForestConfig& config;
  std::size_t mtry;
  Rng rng;
  std::vector<double> importance;  // raw impurity decrease, weighted by node size
  ClassTree tree;

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  Split best_split(std::span<const std::size_t> rows, const std::array<double, kNumClasses>& counts) {
    const auto width = static_cast<std::size_t>(x.cols());
    std::vector<std::size_t> features(width);
    std::iota(features.begin(), features.end(), 0);
    for (std::size_t i = 0; i < mtry; ++i) {
      const std::size_t j = i + rng.index(width - i);
      std::swap(features[i], features[j]);
    }
    features.resize(mtry);
    std::sort(features.begin(), features.end());

    const double n = static_cast<double>(rows.size());
    const double parent = n * gini(counts, n);
    Split best;
    std::vector<std::pair<double, int>> column(rows.size());
    for (std::size_t f : features) {
      for (std::size_t i = 0; i < rows.size(); ++i)
        column[i] = {x(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(f)), labels[rows[i]]};
      std::sort(column.begin(), column.end());
      std::array<double, kNumClasses> left{};
      std::array<double, kNumClasses> right = counts;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        const auto c = static_cast<std::size_t>(column[i].second);
        left[c] += 1.0;
        right[c] -= 1.0;
        if (column[i].first == column[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = n - nl;
        const double gain = parent - nl * gini(left, nl) - nr * gini(right, nr);
        // Strict comparison: ties keep the lowest feature index, then the lowest threshold.
        if (gain > best.gain + 1e-12) {
          best = {static_cast<int>(f), 0.5 * (column[i].first + column[i + 1].first), gain};
        }
      }
    }
    return best;
  }

  void build(std::vector<std::size_t> root_rows) {
    struct Pending {
      std::size_t node;
      std::vector<std::size_t> rows;
      std::size_t depth;
    };
    const double total = static_cast<double>(root_rows.size());
    tree.nodes.emplace_back();
    std::vector<Pending> stack;
    stack.push_back({0, std::move(root_rows), 0});
    while (!stack.empty()) {
      Pending item = std::move(stack.back());
      stack.pop_back();
      std::array<double, kNumClasses> counts{};
      for (std::size_t r : item.rows) counts[static_cast<std::size_t>(labels[r])] += 1.0;
      const double n = static_cast<double>(item.rows.size());
      for (std::size_t c = 0; c < kNumClasses; ++c) tree.nodes[item.node].distribution[c] = counts[c] / n;
      if (item.depth >= config.max_depth || item.rows.size() < 2 || gini(counts, n) <= 0.0) continue;
      const Split split = best_split(item.rows, counts);
      if (split.feature < 0) continue;
      importance[static_cast<std::size_t>(split.feature)] += split.gain / total;
      std::vector<std::size_t> left_rows;
      std::vector<std::size_t> right_rows;
      for (std::size_t r : item.rows)
        (x(static_cast<Eigen::Index>(r), split.feature) <= split.threshold ? left_rows : right_rows).push_back(r);
      const auto left = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[item.node];
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = left;
      node.right = left + 1;
      stack.push_back({static_cast<std::size_t>(left + 1), std::move(right_rows), item.depth + 1});
      stack.push_back({static_cast<std::size_t>(left), std::move(left_rows), item.depth + 1});
    }
  }
};

}  // namespace detail

// Bagged CART classification trees with Gini splits. Each tree draws its own
// stream from (seed, tree index), so results do not depend on thread count.
inline RandomForest train_random_forest(const Dataset& data, const ForestConfig& config = {}) {
  require(data.size() >= 1, ErrorCode::kInvalidArgument, "random forest needs non-empty data");
  require(config.trees >= 1, ErrorCode::kInvalidArgument, "random forest needs at least one tree");
  const auto width = data.width();
  std::size_t mtry = config.features_per_split;
  if (mtry == 0) mtry = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(width))));
  mtry = std::clamp<std::size_t>(mtry, 1, width);

  RandomForest forest;
  forest.trees.resize(config.trees);
  std::vector<std::vector<double>> per_tree(config.trees);
  parallel_for(config.trees, config.threads, [&](std::size_t t) {
    detail::ForestTreeBuilder builder{data.features.matrix(), data.labels.values(), config, mtry,
                                      Rng(Rng::derive(config.seed, t)), std::vector<double>(width, 0.0), {}};
    std::vector<std::size_t> rows(data.size());
    for (auto& r : rows) r = builder.rng.index(data.size());
    builder.build(std::move(rows));
    forest.trees[t] = std::move(builder.tree);
    per_tree[t] = std::move(builder.importance);
  });

  forest.importances.assign(width, 0.0);
  for (const auto& imp : per_tree)
    for (std::size_t e = 0; e < width; ++e) forest.importances[e] += imp[e];
  const double sum = std::accumulate(forest.importances.begin(), forest.importances.end(), 0.0);
  if (sum > 0.0)
    for (double& v : forest.importances) v /= sum;
  return forest;
}

}  // namespace vitsel
