#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "vitsel/error.hpp"
#include "vitsel/labels.hpp"
#include "vitsel/rng.hpp"
#include "vitsel/tensor.hpp"

namespace vitsel {

enum class SplitTag : std::uint8_t { kTrain, kValidation, kTest };

struct Dataset {
  PooledFeatures features;
  LabelVector labels;
  SplitTag split = SplitTag::kTrain;

  Dataset() = default;
  Dataset(PooledFeatures f, LabelVector l, SplitTag s = SplitTag::kTrain)
      : features(std::move(f)), labels(std::move(l)), split(s) {
    require(features.rows() == labels.size(), ErrorCode::kShapeMismatch,
            "feature rows (" + std::to_string(features.rows()) + ") != label count (" +
                std::to_string(labels.size()) + ")");
  }

  std::size_t size() const { return labels.size(); }
  std::size_t width() const { return features.cols(); }
};

struct TokenDataset {
  TokenTensor tokens;
  LabelVector labels;
  SplitTag split = SplitTag::kTrain;

  TokenDataset(TokenTensor t, LabelVector l, SplitTag s = SplitTag::kTrain)
      : tokens(std::move(t)), labels(std::move(l)), split(s) {
    require(tokens.shape().n == labels.size(), ErrorCode::kShapeMismatch,
            "token rows != label count");
  }
};

inline Dataset subset(const Dataset& data, std::span<const std::size_t> rows, SplitTag split) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), data.features.matrix().cols());
  std::vector<int> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = data.features.matrix().row(static_cast<Eigen::Index>(rows[i]));
    y[i] = data.labels[rows[i]];
  }
  return Dataset(PooledFeatures(std::move(x)), LabelVector(std::move(y)), split);
}

// Stratified split: within each class a seeded shuffle, then the first
// round(fraction * count) rows go to validation (at least one when the class
// has two or more rows). Row order inside each output follows the source.
inline std::pair<Dataset, Dataset> stratified_split(const Dataset& data, double validation_fraction,
                                                    std::uint64_t seed) {
  require(validation_fraction > 0.0 && validation_fraction < 1.0, ErrorCode::kInvalidArgument,
          "validation fraction must lie in (0, 1)");
  Rng rng(seed);
  std::vector<bool> is_val(data.size(), false);
  for (int c = 0; c < static_cast<int>(kNumClasses); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.labels[i] == c) members.push_back(i);
    rng.shuffle(std::span<std::size_t>(members));
    std::size_t take = static_cast<std::size_t>(validation_fraction * static_cast<double>(members.size()) + 0.5);
    if (take == 0 && members.size() >= 2) take = 1;
    if (take >= members.size() && !members.empty()) take = members.size() - 1;
    for (std::size_t k = 0; k < take; ++k) is_val[members[k]] = true;
  }
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> val_rows;
  for (std::size_t i = 0; i < data.size(); ++i) (is_val[i] ? val_rows : train_rows).push_back(i);
  return {subset(data, train_rows, SplitTag::kTrain), subset(data, val_rows, SplitTag::kValidation)};
}

}  // namespace vitsel
