#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vitsel/error.hpp"
#include "vitsel/tensor.hpp"

namespace vitsel {

enum class SelectionMethod { kLogReg, kRandForest, kGradBoost, kAllSelection };

inline std::string_view to_string(SelectionMethod m) {
  switch (m) {
    case SelectionMethod::kLogReg: return "logreg";
    case SelectionMethod::kRandForest: return "randforest";
    case SelectionMethod::kGradBoost: return "gradboost";
    case SelectionMethod::kAllSelection: return "all";
  }
  return "unknown";
}

inline SelectionMethod parse_selection_method(std::string_view text) {
  if (text == "logreg") return SelectionMethod::kLogReg;
  if (text == "randforest") return SelectionMethod::kRandForest;
  if (text == "gradboost") return SelectionMethod::kGradBoost;
  if (text == "all") return SelectionMethod::kAllSelection;
  fail(ErrorCode::kInvalidArgument, "unknown selection method '" + std::string(text) +
                                        "' (expected logreg, randforest, gradboost or all)");
}

struct SelectionRule {
  SelectionMethod method = SelectionMethod::kAllSelection;
  double threshold = 0.0;
};

// Default cut-offs: |coef| above 1e-16 for logistic regression, impurity
// importance above 3e-6 for the forest, any positive gain for boosting.
inline SelectionRule default_rule(SelectionMethod method) {
  switch (method) {
    case SelectionMethod::kLogReg: return {method, 1e-16};
    case SelectionMethod::kRandForest: return {method, 3e-6};
    case SelectionMethod::kGradBoost: return {method, 0.0};
    case SelectionMethod::kAllSelection: return {method, 0.0};
  }
  return {method, 0.0};
}

struct ImportanceRanking {
  std::vector<double> scores;
  SelectionMethod method = SelectionMethod::kAllSelection;
  double threshold = 0.0;
  std::vector<bool> keep_mask;
  double filtered_fraction = 0.0;

  std::size_t kept() const { return static_cast<std::size_t>(std::count(keep_mask.begin(), keep_mask.end(), true)); }
};

// Mean over classes of |per_class(c, e)|; input is (3, E).
inline std::vector<double> average_importance_across_classes(const Eigen::MatrixXd& per_class) {
  require(per_class.rows() == 3, ErrorCode::kShapeMismatch, "per-class importance needs exactly 3 rows");
  std::vector<double> scores(static_cast<std::size_t>(per_class.cols()));
  for (Eigen::Index e = 0; e < per_class.cols(); ++e) scores[static_cast<std::size_t>(e)] = per_class.col(e).cwiseAbs().mean();
  return scores;
}

inline ImportanceRanking apply_selection(std::vector<double> scores, const SelectionRule& rule) {
  require(!scores.empty(), ErrorCode::kInvalidArgument, "cannot select from an empty score vector");
  require(rule.threshold >= 0.0, ErrorCode::kInvalidArgument, "selection threshold must be >= 0");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    require(std::isfinite(scores[i]) && scores[i] >= 0.0, ErrorCode::kInvalidArgument,
            "importance score " + std::to_string(i) + " must be finite and non-negative");
  }
  ImportanceRanking r;
  r.method = rule.method;
  r.threshold = rule.method == SelectionMethod::kGradBoost ? 0.0 : rule.threshold;
  r.keep_mask.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    r.keep_mask[i] = rule.method == SelectionMethod::kAllSelection || scores[i] > r.threshold;
  }
  r.scores = std::move(scores);
  const std::size_t removed = r.scores.size() - r.kept();
  r.filtered_fraction = static_cast<double>(removed) / static_cast<double>(r.scores.size());
  require(removed < r.scores.size(), ErrorCode::kInvalidArgument,
          std::string(to_string(rule.method)) + " selection removed every feature; the classifier needs at least one");
  return r;
}

inline PooledFeatures project_features(const PooledFeatures& x, const std::vector<bool>& mask) {
  require(mask.size() == x.cols(), ErrorCode::kShapeMismatch,
          "mask length " + std::to_string(mask.size()) + " != feature width " + std::to_string(x.cols()));
  std::vector<Eigen::Index> columns;
  for (std::size_t e = 0; e < mask.size(); ++e)
    if (mask[e]) columns.push_back(static_cast<Eigen::Index>(e));
  require(!columns.empty(), ErrorCode::kInvalidArgument, "projection mask keeps no features");
  Eigen::MatrixXd out(x.matrix().rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.matrix().col(columns[j]);
  return PooledFeatures(std::move(out));
}

// Ranking CSV: `feature_index,score,kept` rows followed by a summary line
// `# method=<m>,threshold=<t>,filtered_fraction=<f>`.
inline void write_ranking_csv(std::ostream& out, const ImportanceRanking& r) {
  char buf[64];
  out << "feature_index,score,kept\n";
  for (std::size_t e = 0; e < r.scores.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.17g", r.scores[e]);
    out << e << ',' << buf << ',' << (r.keep_mask[e] ? 1 : 0) << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.4f", r.filtered_fraction);
  char tbuf[32];
  std::snprintf(tbuf, sizeof tbuf, "%g", r.threshold);
  out << "# method=" << to_string(r.method) << ",threshold=" << tbuf << ",filtered_fraction=" << buf << '\n';
}

inline ImportanceRanking read_ranking_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == "feature_index,score,kept", ErrorCode::kBadMagic,
          "ranking CSV header must be 'feature_index,score,kept'");
  ImportanceRanking r;
  bool have_summary = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      std::istringstream fields(line.substr(2));
      std::string field;
      while (std::getline(fields, field, ',')) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "method") r.method = parse_selection_method(value);
        if (key == "threshold") r.threshold = std::stod(value);
      }
      have_summary = true;
      continue;
    }
    std::istringstream fields(line);
    std::string idx, score, kept;
    require(std::getline(fields, idx, ',') && std::getline(fields, score, ',') && std::getline(fields, kept, ','),
            ErrorCode::kInvalidArgument, "malformed ranking row '" + line + "'");
    require(std::stoul(idx) == r.scores.size(), ErrorCode::kInvalidArgument, "ranking rows out of order");
    r.scores.push_back(std::stod(score));
    r.keep_mask.push_back(kept == "1");
  }
  require(have_summary && !r.scores.empty(), ErrorCode::kTruncated, "ranking CSV lacks rows or summary line");
  r.filtered_fraction = static_cast<double>(r.scores.size() - r.kept()) / static_cast<double>(r.scores.size());
  return r;
}

// Text summary of the score distribution (quantiles and a log10 histogram)
// for picking thresholds by eye.
inline std::string score_distribution_report(const std::vector<double>& scores) {
  std::ostringstream out;
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  out << "features: " << sorted.size() << '\n';
  if (sorted.empty()) return out.str();
  char buf[96];
  for (double q : {0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0}) {
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1) + 0.5);
    std::snprintf(buf, sizeof buf, "q%03d: %.6g\n", static_cast<int>(q * 100 + 0.5), sorted[idx]);
    out << buf;
  }
  const auto zeros = static_cast<std::size_t>(std::count(sorted.begin(), sorted.end(), 0.0));
  out << "exact zeros: " << zeros << '\n';
  std::vector<std::size_t> bins(21, 0);  // decades 1e-20 .. 1e0
  for (double s : sorted) {
    if (s <= 0.0) continue;
    const int decade = std::clamp(static_cast<int>(std::floor(std::log10(s))), -20, 0);
    ++bins[static_cast<std::size_t>(decade + 20)];
  }
  for (int d = -20; d <= 0; ++d) {
    const std::size_t c = bins[static_cast<std::size_t>(d + 20)];
    if (c == 0) continue;
    std::snprintf(buf, sizeof buf, "[1e%d, 1e%d): %zu\n", d, d + 1, c);
    out << buf;
  }
  return out.str();
}

}  // namespace vitsel
