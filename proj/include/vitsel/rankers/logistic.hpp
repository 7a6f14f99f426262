#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vitsel/dataset.hpp"
#include "vitsel/error.hpp"
#include "vitsel/rankers/selection.hpp"

namespace vitsel {

struct LogRegConfig {
  double l2 = 1.0;
  std::size_t max_iterations = 5000;
  double tolerance = 1e-6;  // on the max-abs gradient entry
};

struct LogRegModel {
  Eigen::MatrixXd coefficients;  // (3, E)
  Eigen::VectorXd intercepts;    // (3)
  std::size_t iterations = 0;
  bool converged = false;
  double objective = 0.0;

  std::vector<double> importance() const { return average_importance_across_classes(coefficients); }
};

namespace detail {

// Objective (1/N) * sum CE + (l2 / 2N) * ||W||^2 with unpenalised intercepts,
// i.e. the usual C = 1 / l2 formulation divided through by N.
struct LogRegObjective {
  const Eigen::MatrixXd& x;
  const Eigen::MatrixXd& onehot;
  double l2;

  double value(const Eigen::MatrixXd& w, const Eigen::VectorXd& b) const {
    Eigen::MatrixXd z = x * w.transpose();
    z.rowwise() += b.transpose();
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double peak = z.row(i).maxCoeff();
      const double lse = peak + std::log((z.row(i).array() - peak).exp().sum());
      loss += lse - z.row(i).dot(onehot.row(i));
    }
    const auto n = static_cast<double>(x.rows());
    return loss / n + 0.5 * l2 * w.squaredNorm() / n;
  }

  void gradient(const Eigen::MatrixXd& w, const Eigen::VectorXd& b, Eigen::MatrixXd& gw, Eigen::VectorXd& gb) const {
    Eigen::MatrixXd z = x * w.transpose();
    z.rowwise() += b.transpose();
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double peak = z.row(i).maxCoeff();
      z.row(i) = (z.row(i).array() - peak).exp();
      z.row(i) /= z.row(i).sum();
    }
    z -= onehot;
    const auto n = static_cast<double>(x.rows());
    gw = (z.transpose() * x + l2 * w) / n;
    gb = z.colwise().sum().transpose() / n;
  }
};

}  // namespace detail

// Multinomial softmax regression fitted by full-batch gradient descent from
// zero, Armijo backtracking on the step size.
inline LogRegModel train_logreg(const Dataset& data, const LogRegConfig& config = {}) {
  require(data.size() >= 1, ErrorCode::kInvalidArgument, "logistic regression needs data");
  const auto counts = data.labels.counts();
  std::size_t present = 0;
  for (auto c : counts) present += c > 0 ? 1 : 0;
  require(present >= 2, ErrorCode::kInvalidArgument, "logistic regression needs at least two classes present");

  const Eigen::MatrixXd& x = data.features.matrix();
  const auto k = static_cast<Eigen::Index>(kNumClasses);
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(x.rows(), k);
  for (std::size_t i = 0; i < data.size(); ++i) onehot(static_cast<Eigen::Index>(i), data.labels[i]) = 1.0;
  const detail::LogRegObjective objective{x, onehot, config.l2};

  LogRegModel model;
  model.coefficients = Eigen::MatrixXd::Zero(k, x.cols());
  model.intercepts = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd gw;
  Eigen::VectorXd gb;
  double f = objective.value(model.coefficients, model.intercepts);
  double step = 1.0;
  for (model.iterations = 0; model.iterations < config.max_iterations; ++model.iterations) {
    objective.gradient(model.coefficients, model.intercepts, gw, gb);
    const double gmax = std::max(gw.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff());
    if (gmax < config.tolerance) {
      model.converged = true;
      break;
    }
    const double gsq = gw.squaredNorm() + gb.squaredNorm();
    step = std::min(step * 2.0, 1e6);
    Eigen::MatrixXd w_next;
    Eigen::VectorXd b_next;
    double f_next = 0.0;
    for (int tries = 0;; ++tries) {
      w_next = model.coefficients - step * gw;
      b_next = model.intercepts - step * gb;
      f_next = objective.value(w_next, b_next);
      if (f_next <= f - 0.5 * step * gsq) break;
      step *= 0.5;
      require(tries < 200, ErrorCode::kNumericalFailure, "logistic regression line search failed");
    }
    require(std::isfinite(f_next), ErrorCode::kNumericalFailure,
            "non-finite logistic objective at iteration " + std::to_string(model.iterations));
    model.coefficients = std::move(w_next);
    model.intercepts = std::move(b_next);
    f = f_next;
  }
  model.objective = f;
  return model;
}

}  // namespace vitsel
