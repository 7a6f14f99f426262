#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vitsel/error.hpp"
#include "vitsel/parallel.hpp"
#include "vitsel/rng.hpp"
#include "vitsel/tensor.hpp"

namespace vitsel {

// Batch model: (rows, M) inputs -> (rows, outputs) scores. Must be safe for
// concurrent read-only calls.
using PredictFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

struct ShapExplanation {
  std::vector<double> phi;
  double base_value = 0.0;    // E_background[f(x)] for the target output
  double model_output = 0.0;  // f(instance) for the target output
  std::size_t instance_index = 0;
  int target = 0;
  bool exhaustive = false;     // every non-trivial coalition was used
  bool rank_deficient = false; // regression solved by least-norm
};

struct GlobalImportance {
  std::vector<double> mean_abs_phi;
  std::vector<std::size_t> rank_order;  // feature indices, most important first
  std::size_t top_feature = 0;
};

inline constexpr std::size_t kExactShapleyMaxFeatures = 16;

inline std::size_t default_shap_samples(std::size_t m) { return 2 * m + 2048; }

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

// (M - 1) / (C(M, s) * s * (M - s)); infinite for the empty and full
// coalitions, which the solver treats as equality constraints instead.
inline double shapley_kernel_weight(std::size_t m, std::size_t s) {
  require(m >= 1 && s <= m, ErrorCode::kInvalidArgument, "kernel weight needs 0 <= s <= M and M >= 1");
  if (s == 0 || s == m) return std::numeric_limits<double>::infinity();
  return static_cast<double>(m - 1) /
         (binomial(m, s) * static_cast<double>(s) * static_cast<double>(m - s));
}

namespace detail {

// v(S) = mean over background rows b of f(x_S, b_notS)[target], for a batch
// of coalitions given as 0/1 rows of `masks`.
class CoalitionValue {
 public:
  CoalitionValue(const PredictFn& model, const Eigen::MatrixXd& background, const Eigen::RowVectorXd& instance,
                 int target)
      : model_(model), background_(background), instance_(instance), target_(target) {}

  std::vector<double> operator()(const std::vector<std::vector<bool>>& masks) const {
    constexpr Eigen::Index kMaxRows = 1 << 14;
    const Eigen::Index bg = background_.rows();
    const Eigen::Index per_chunk = std::max<Eigen::Index>(1, kMaxRows / bg);
    std::vector<double> values(masks.size(), 0.0);
    for (std::size_t start = 0; start < masks.size(); start += static_cast<std::size_t>(per_chunk)) {
      const std::size_t end = std::min(masks.size(), start + static_cast<std::size_t>(per_chunk));
      Eigen::MatrixXd rows(static_cast<Eigen::Index>(end - start) * bg, background_.cols());
      for (std::size_t k = start; k < end; ++k) {
        const Eigen::Index base = static_cast<Eigen::Index>(k - start) * bg;
        rows.middleRows(base, bg) = background_;
        for (std::size_t j = 0; j < masks[k].size(); ++j)
          if (masks[k][j]) rows.col(static_cast<Eigen::Index>(j)).segment(base, bg).setConstant(instance_(static_cast<Eigen::Index>(j)));
      }
      const Eigen::MatrixXd out = model_(rows);
      require(target_ >= 0 && target_ < out.cols(), ErrorCode::kInvalidArgument, "target output out of range");
      for (std::size_t k = start; k < end; ++k) {
        const Eigen::Index base = static_cast<Eigen::Index>(k - start) * bg;
        values[k] = out.col(target_).segment(base, bg).mean();
      }
    }
    return values;
  }

 private:
  const PredictFn& model_;
  const Eigen::MatrixXd& background_;
  const Eigen::RowVectorXd& instance_;
  int target_;
};

inline void check_shap_inputs(const Eigen::MatrixXd& background, const Eigen::RowVectorXd& instance) {
  require(background.rows() >= 1, ErrorCode::kInvalidArgument, "SHAP background must be non-empty");
  require(instance.size() >= 1 && background.cols() == instance.size(), ErrorCode::kShapeMismatch,
          "instance width " + std::to_string(instance.size()) + " != background width " +
              std::to_string(background.cols()));
}

}  // namespace detail

// Kernel SHAP. With samples >= 2^M - 2 every non-trivial coalition is used
// once at its kernel weight; otherwise coalition sizes are drawn with
// probability proportional to the total kernel mass of that size, each draw
// paired with its complement, and the regression weight of a coalition is its
// draw count. The empty and full coalitions are imposed exactly
// (phi_0 = v(empty), sum phi = f(x) - v(empty)) by eliminating the last
// feature from the weighted least-squares problem.
inline ShapExplanation kernel_shap(const PredictFn& model, const Eigen::MatrixXd& background,
                                   const Eigen::RowVectorXd& instance, int target, std::size_t samples,
                                   std::uint64_t seed) {
  detail::check_shap_inputs(background, instance);
  const auto m = static_cast<std::size_t>(instance.size());
  require(samples >= m + 2, ErrorCode::kInvalidArgument,
          "kernel SHAP needs at least M + 2 = " + std::to_string(m + 2) + " samples");
  const detail::CoalitionValue value(model, background, instance, target);

  ShapExplanation out;
  out.target = target;
  {
    const auto ends = value({std::vector<bool>(m, false), std::vector<bool>(m, true)});
    out.base_value = ends[0];
    out.model_output = ends[1];
  }
  const double delta = out.model_output - out.base_value;
  if (m == 1) {
    out.phi = {delta};
    out.exhaustive = true;
    return out;
  }

  std::vector<std::vector<bool>> masks;
  std::vector<double> weights;
  const bool exhaustive = m < 31 && samples + 2 >= (std::size_t{1} << m);
  if (exhaustive) {
    out.exhaustive = true;
    for (std::uint64_t code = 1; code + 1 < (std::uint64_t{1} << m); ++code) {
      std::vector<bool> mask(m);
      std::size_t size = 0;
      for (std::size_t j = 0; j < m; ++j) {
        mask[j] = (code >> j) & 1U;
        size += mask[j] ? 1 : 0;
      }
      masks.push_back(std::move(mask));
      weights.push_back(shapley_kernel_weight(m, size));
    }
  } else {
    Rng rng(seed);
    std::vector<double> size_mass(m - 1);
    for (std::size_t s = 1; s < m; ++s)
      size_mass[s - 1] = static_cast<double>(m - 1) / (static_cast<double>(s) * static_cast<double>(m - s));
    const double total_mass = std::accumulate(size_mass.begin(), size_mass.end(), 0.0);
    std::map<std::vector<bool>, double> drawn;
    std::vector<std::size_t> features(m);
    for (std::size_t draw = 0; draw + 1 < samples; draw += 2) {
      double u = rng.uniform() * total_mass;
      std::size_t s = 1;
      while (s < m - 1 && u >= size_mass[s - 1]) u -= size_mass[s++ - 1];
      std::iota(features.begin(), features.end(), 0);
      std::vector<bool> mask(m, false);
      for (std::size_t i = 0; i < s; ++i) {
        const std::size_t j = i + rng.index(m - i);
        std::swap(features[i], features[j]);
        mask[features[i]] = true;
      }
      std::vector<bool> complement(m);
      for (std::size_t j = 0; j < m; ++j) complement[j] = !mask[j];
      drawn[mask] += 1.0;
      drawn[complement] += 1.0;
    }
    for (auto& [mask, count] : drawn) {
      masks.push_back(mask);
      weights.push_back(count);
    }
  }

  const std::vector<double> v = value(masks);
  const auto k = static_cast<Eigen::Index>(masks.size());
  const auto free = static_cast<Eigen::Index>(m - 1);
  Eigen::MatrixXd a(k, free);
  Eigen::VectorXd y(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    const auto& mask = masks[static_cast<std::size_t>(r)];
    const double last = mask[m - 1] ? 1.0 : 0.0;
    const double sw = std::sqrt(weights[static_cast<std::size_t>(r)]);
    for (Eigen::Index j = 0; j < free; ++j) a(r, j) = sw * ((mask[static_cast<std::size_t>(j)] ? 1.0 : 0.0) - last);
    y(r) = sw * (v[static_cast<std::size_t>(r)] - out.base_value - last * delta);
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> solver(a);
  out.rank_deficient = solver.rank() < free;
  const Eigen::VectorXd head = solver.solve(y);
  out.phi.assign(head.data(), head.data() + head.size());
  out.phi.push_back(delta - head.sum());
  return out;
}

// One explanation per requested row of x, run across threads. Row r uses
// target targets[i] and seed derive(seed, r), so results do not depend on the
// thread count. The model must tolerate concurrent calls.
inline std::vector<ShapExplanation> explain_rows(const PredictFn& model, const Eigen::MatrixXd& background,
                                                 const Eigen::MatrixXd& x, std::span<const std::size_t> rows,
                                                 std::span<const int> targets, std::size_t samples,
                                                 std::uint64_t seed, std::size_t threads = 1) {
  require(rows.size() == targets.size(), ErrorCode::kShapeMismatch, "one target per explained row is required");
  std::vector<ShapExplanation> out(rows.size());
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    require(rows[i] < static_cast<std::size_t>(x.rows()), ErrorCode::kInvalidArgument,
            "explained row " + std::to_string(rows[i]) + " outside the feature matrix");
    const Eigen::RowVectorXd instance = x.row(static_cast<Eigen::Index>(rows[i]));
    out[i] = kernel_shap(model, background, instance, targets[i], samples, Rng::derive(seed, rows[i]));
    out[i].instance_index = rows[i];
  });
  return out;
}

// Exact Shapley values by enumerating all 2^M coalitions, using the same
// coalition value as kernel_shap.
inline std::vector<double> exact_shapley(const PredictFn& model, const Eigen::MatrixXd& background,
                                         const Eigen::RowVectorXd& instance, int target) {
  detail::check_shap_inputs(background, instance);
  const auto m = static_cast<std::size_t>(instance.size());
  require(m <= kExactShapleyMaxFeatures, ErrorCode::kInvalidArgument,
          "exact Shapley enumeration is capped at " + std::to_string(kExactShapleyMaxFeatures) + " features, got " +
              std::to_string(m));
  const std::size_t count = std::size_t{1} << m;
  std::vector<std::vector<bool>> masks(count, std::vector<bool>(m));
  for (std::size_t code = 0; code < count; ++code)
    for (std::size_t j = 0; j < m; ++j) masks[code][j] = (code >> j) & 1U;
  const std::vector<double> v = detail::CoalitionValue(model, background, instance, target)(masks);

  // |S|! (M - |S| - 1)! / M! = 1 / (M * C(M - 1, |S|))
  std::vector<double> weight(m);
  for (std::size_t s = 0; s < m; ++s) weight[s] = 1.0 / (static_cast<double>(m) * binomial(m - 1, s));
  std::vector<double> phi(m, 0.0);
  for (std::size_t code = 0; code < count; ++code) {
    const auto size = static_cast<std::size_t>(std::popcount(code));
    for (std::size_t i = 0; i < m; ++i) {
      if ((code >> i) & 1U) continue;
      phi[i] += weight[size] * (v[code | (std::size_t{1} << i)] - v[code]);
    }
  }
  return phi;
}

inline GlobalImportance global_importance(std::span<const ShapExplanation> explanations) {
  require(!explanations.empty(), ErrorCode::kInvalidArgument, "global importance needs at least one explanation");
  const std::size_t m = explanations.front().phi.size();
  GlobalImportance g;
  g.mean_abs_phi.assign(m, 0.0);
  for (const auto& e : explanations) {
    require(e.phi.size() == m, ErrorCode::kShapeMismatch, "explanations have inconsistent widths");
    for (std::size_t j = 0; j < m; ++j) g.mean_abs_phi[j] += std::abs(e.phi[j]);
  }
  for (double& v : g.mean_abs_phi) v /= static_cast<double>(explanations.size());
  g.rank_order.resize(m);
  std::iota(g.rank_order.begin(), g.rank_order.end(), 0);
  std::stable_sort(g.rank_order.begin(), g.rank_order.end(),
                   [&](std::size_t a, std::size_t b) { return g.mean_abs_phi[a] > g.mean_abs_phi[b]; });
  g.top_feature = g.rank_order.front();
  return g;
}

struct ExtremeEntry {
  std::string id;
  double value = 0.0;
};

struct ExtremeValueReport {
  std::size_t feature = 0;
  std::vector<ExtremeEntry> high;  // largest values first
  std::vector<ExtremeEntry> low;   // smallest values first
};

// The k samples with the highest and the k with the lowest value of the
// globally top-ranked feature. Equal values keep sample order.
inline ExtremeValueReport extreme_value_report(const GlobalImportance& ranking, const PooledFeatures& features,
                                               std::span<const std::string> ids, std::size_t k) {
  require(ids.size() == features.rows(), ErrorCode::kShapeMismatch, "one identifier per sample is required");
  require(2 * k <= features.rows(), ErrorCode::kInvalidArgument, "k must not exceed N / 2");
  require(ranking.top_feature < features.cols(), ErrorCode::kShapeMismatch, "top feature outside feature width");
  const auto col = features.matrix().col(static_cast<Eigen::Index>(ranking.top_feature));
  std::vector<std::size_t> order(features.rows());
  std::iota(order.begin(), order.end(), 0);
  ExtremeValueReport report;
  report.feature = ranking.top_feature;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return col(static_cast<Eigen::Index>(a)) > col(static_cast<Eigen::Index>(b));
  });
  for (std::size_t i = 0; i < k; ++i) report.high.push_back({ids[order[i]], col(static_cast<Eigen::Index>(order[i]))});
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return col(static_cast<Eigen::Index>(a)) < col(static_cast<Eigen::Index>(b));
  });
  for (std::size_t i = 0; i < k; ++i) report.low.push_back({ids[order[i]], col(static_cast<Eigen::Index>(order[i]))});
  return report;
}

// Seeded sample of up to `count` distinct rows, kept in source order.
inline Eigen::MatrixXd sample_background(const Eigen::MatrixXd& x, std::size_t count, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n <= count) return x;
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) std::swap(rows[i], rows[i + rng.index(n - i)]);
  rows.resize(count);
  std::sort(rows.begin(), rows.end());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(count), x.cols());
  for (std::size_t i = 0; i < count; ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

inline void write_explanation_csv(std::ostream& out, const ShapExplanation& e) {
  char buf[64];
  out << "feature_index,phi\n";
  for (std::size_t j = 0; j < e.phi.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g", e.phi[j]);
    out << j << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.17g", e.base_value);
  out << "# instance=" << e.instance_index << ",target=" << e.target << ",base_value=" << buf;
  std::snprintf(buf, sizeof buf, "%.17g", e.model_output);
  out << ",model_output=" << buf << ",exhaustive=" << e.exhaustive << ",rank_deficient=" << e.rank_deficient << '\n';
}

inline void write_global_importance_csv(std::ostream& out, const GlobalImportance& g) {
  std::vector<std::size_t> rank(g.mean_abs_phi.size());
  for (std::size_t r = 0; r < g.rank_order.size(); ++r) rank[g.rank_order[r]] = r + 1;
  char buf[64];
  out << "feature_index,mean_abs_phi,rank\n";
  for (std::size_t j = 0; j < g.mean_abs_phi.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g", g.mean_abs_phi[j]);
    out << j << ',' << buf << ',' << rank[j] << '\n';
  }
}

inline void write_extreme_value_csv(std::ostream& out, const ExtremeValueReport& r) {
  char buf[64];
  out << "side,position,sample_id,feature_index,value\n";
  auto emit = [&](const char* side, const std::vector<ExtremeEntry>& entries) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.9g", entries[i].value);
      out << side << ',' << i << ',' << entries[i].id << ',' << r.feature << ',' << buf << '\n';
    }
  };
  emit("high", r.high);
  emit("low", r.low);
}

}  // namespace vitsel
