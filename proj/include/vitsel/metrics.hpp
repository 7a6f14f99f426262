#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "vitsel/error.hpp"
#include "vitsel/labels.hpp"

namespace vitsel {

// Rows are the true class, columns the predicted class.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& row : counts)
      for (std::size_t v : row) t += v;
    return t;
  }
};

struct F1Report {
  std::array<double, kNumClasses> per_class{};
  double macro = 0.0;
  ConfusionMatrix confusion;
  // Classes with neither true nor predicted members; their F1 is scored 0.
  std::vector<int> undefined_classes;
};

inline ConfusionMatrix confusion_matrix(const LabelVector& y_true, const LabelVector& y_pred) {
  require(y_true.size() == y_pred.size(), ErrorCode::kShapeMismatch,
          "y_true has " + std::to_string(y_true.size()) + " labels, y_pred has " + std::to_string(y_pred.size()));
  require(!y_true.empty(), ErrorCode::kInvalidArgument, "macro F1 of an empty label set is undefined");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < y_true.size(); ++i)
    ++cm.counts[static_cast<std::size_t>(y_true[i])][static_cast<std::size_t>(y_pred[i])];
  return cm;
}

inline F1Report macro_f1(const LabelVector& y_true, const LabelVector& y_pred) {
  F1Report report;
  report.confusion = confusion_matrix(y_true, y_pred);
  const auto& cm = report.confusion.counts;
  double sum = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::size_t predicted = 0;
    std::size_t actual = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      predicted += cm[k][c];
      actual += cm[c][k];
    }
    const double tp = static_cast<double>(cm[c][c]);
    // 2PR/(P+R) simplifies to 2TP/(predicted + actual).
    double f1 = 0.0;
    if (predicted + actual == 0) {
      report.undefined_classes.push_back(static_cast<int>(c));
    } else {
      f1 = 2.0 * tp / static_cast<double>(predicted + actual);
    }
    report.per_class[c] = f1;
    sum += f1;
  }
  report.macro = sum / static_cast<double>(kNumClasses);
  return report;
}

}  // namespace vitsel
