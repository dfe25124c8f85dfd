#include "fei/optim.hpp"

#include <cmath>
#include <numbers>

#include "fei/errors.hpp"

namespace fei {

Adam::Adam(Eigen::Index size, AdamOptions options)
    : options_(options), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw InputError("adam: parameter count changed");
  }
  ++steps_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double g = grads[i] + options_.weight_decay * params[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + options_.epsilon);
  }
}

OptimizerState Adam::state() const { return {m_, v_, steps_}; }

void Adam::load(const OptimizerState& s) {
  if (s.first_moment.size() != m_.size()) throw LoadError("adam: state size mismatch");
  m_ = s.first_moment;
  v_ = s.second_moment;
  steps_ = s.steps;
}

double learning_rate(double base_lr, long long epoch, long long total_epochs) {
  if (total_epochs <= 0 || 2 * epoch < total_epochs) return base_lr;
  const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return base_lr * 0.5 * (1.0 + std::cos(t * std::numbers::pi));
}

}  // namespace fei
