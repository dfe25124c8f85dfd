#pragma once

#include <Eigen/Dense>

#include "fei/checkpoint.hpp"

namespace fei {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// L2 penalty added to the gradient (coupled weight decay).
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index size, AdamOptions options);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr);

  OptimizerState state() const;
  void load(const OptimizerState& s);
  long long steps() const { return steps_; }

 private:
  AdamOptions options_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long long steps_ = 0;
};

/// Constant for the first half of training, then scaled by
/// 0.5 (1 + cos(pi * epoch / total_epochs)).
double learning_rate(double base_lr, long long epoch, long long total_epochs);

}  // namespace fei
