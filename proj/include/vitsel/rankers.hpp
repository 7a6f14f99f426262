#pragma once

#include <cstdint>
#include <vector>

#include "vitsel/dataset.hpp"
#include "vitsel/rankers/boosting.hpp"
#include "vitsel/rankers/forest.hpp"
#include "vitsel/rankers/logistic.hpp"
#include "vitsel/rankers/selection.hpp"

namespace vitsel {

struct RankerConfig {
  LogRegConfig logreg;
  ForestConfig forest;
  BoostingConfig boosting;
  double logreg_threshold = default_rule(SelectionMethod::kLogReg).threshold;
  double forest_threshold = default_rule(SelectionMethod::kRandForest).threshold;

  SelectionRule rule(SelectionMethod method) const {
    switch (method) {
      case SelectionMethod::kLogReg: return {method, logreg_threshold};
      case SelectionMethod::kRandForest: return {method, forest_threshold};
      default: return default_rule(method);
    }
  }
};

// Raw importance scores of one ranker on pooled training data. AllSelection
// has no model; its scores are all zero and the rule keeps everything.
inline std::vector<double> importance_scores(SelectionMethod method, const Dataset& data, const RankerConfig& config,
                                             std::uint64_t seed) {
  switch (method) {
    case SelectionMethod::kLogReg: return train_logreg(data, config.logreg).importance();
    case SelectionMethod::kRandForest: {
      ForestConfig fc = config.forest;
      fc.seed = seed;
      return train_random_forest(data, fc).importances;
    }
    case SelectionMethod::kGradBoost: return train_gradient_boosting(data, config.boosting).importances;
    case SelectionMethod::kAllSelection: return std::vector<double>(data.width(), 0.0);
  }
  return {};
}

inline ImportanceRanking rank_features(SelectionMethod method, const Dataset& data, const RankerConfig& config,
                                       std::uint64_t seed) {
  return apply_selection(importance_scores(method, data, config, seed), config.rule(method));
}

}  // namespace vitsel
