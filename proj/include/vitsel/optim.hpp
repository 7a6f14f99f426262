#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "vitsel/error.hpp"

namespace vitsel {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Decoupled (AdamW-style) decay; 0 gives plain Adam.
  double weight_decay = 0.0;
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  double learning_rate() const { return config_.learning_rate; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  void step(std::span<Eigen::MatrixXd* const> params, std::span<const Eigen::MatrixXd> grads) {
    require(params.size() == grads.size(), ErrorCode::kShapeMismatch, "Adam: params/grads count mismatch");
    if (first_.empty()) {
      for (const auto* p : params) {
        first_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
        second_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const double lr = config_.learning_rate;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Eigen::MatrixXd& p = *params[i];
      const Eigen::MatrixXd& g = grads[i];
      if (config_.weight_decay != 0.0) p *= (1.0 - lr * config_.weight_decay);
      first_[i] = config_.beta1 * first_[i] + (1.0 - config_.beta1) * g;
      second_[i] = config_.beta2 * second_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
      p.array() -= lr * (first_[i].array() / c1) / ((second_[i].array() / c2).sqrt() + config_.epsilon);
    }
  }

 private:
  AdamConfig config_;
  std::vector<Eigen::MatrixXd> first_;
  std::vector<Eigen::MatrixXd> second_;
  long t_ = 0;
};

// Plateau scheduler on a minimised metric: once more than `patience`
// consecutive epochs fail to improve on the best value by the relative
// threshold, the rate is multiplied by `factor` and the counter resets.
class ReduceLrOnPlateau {
 public:
  ReduceLrOnPlateau(int patience, double factor, double threshold = 1e-4)
      : patience_(patience), factor_(factor), threshold_(threshold) {}

  // Returns the learning rate to use for the next epoch.
  double observe(double metric, double current_lr) {
    if (metric < best_ * (1.0 - threshold_)) {
      best_ = metric;
      bad_epochs_ = 0;
      return current_lr;
    }
    if (++bad_epochs_ > patience_) {
      bad_epochs_ = 0;
      ++reductions_;
      return current_lr * factor_;
    }
    return current_lr;
  }

  int reductions() const { return reductions_; }

 private:
  int patience_;
  double factor_;
  double threshold_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
  int reductions_ = 0;
};

}  // namespace vitsel
