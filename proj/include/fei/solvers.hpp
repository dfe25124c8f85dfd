#pragma once

#include <functional>
#include <string>

#include "fei/denoisers.hpp"
#include "fei/groups.hpp"
#include "fei/linops.hpp"

namespace fei {

enum class McLoss { l2, l1 };

McLoss parse_mc_loss(const std::string& name);

/// Gradient of the measurement-consistency term at u:
/// l2: A^T (A u - y)   (for 1/2 ||A u - y||^2),  l1: A^T sign(A u - y).
Image mc_gradient(const LinearOperator& op, const Measurement& y, const Image& u, McLoss loss);
double mc_value(const LinearOperator& op, const Measurement& y, const Image& u, McLoss loss);

/// min_u f_mc(y, A u) + lambda/2 ||u - anchor||^2.
struct QuadraticSubproblem {
  const LinearOperator* op = nullptr;
  Measurement y;
  Image anchor;
  double lambda = 1.0;
  McLoss loss = McLoss::l2;

  double objective(const Image& u) const;
  Image gradient(const Image& u) const;
  void validate() const;
};

struct NagResult {
  Image u;
  Image velocity;
};

using GradientFn = std::function<Image(const Image&)>;
using IterationObserver = std::function<void(int iteration, const Image& u)>;

/// Nesterov accelerated gradient with look-ahead evaluation, exactly
/// `iterations` steps:
///   g = grad(u - beta v);  v <- beta v + eta g;  u <- u - v.
/// `observer` (optional) sees every iterate u_{j+1}.
NagResult nag_minimize(const GradientFn& gradient, int iterations, Image u0, Image v0,
                       double beta, double eta, const IterationObserver& observer = {});

enum class QuadraticMethod { automatic, dense, conjugate_gradient };

struct QuadraticSolveOptions {
  QuadraticMethod method = QuadraticMethod::automatic;
  double tolerance = 1e-8;
  /// 0 selects 10 * n.
  int max_iterations = 0;
};

/// (A^T A + lambda I)^{-1} (A^T y + lambda anchor), l2 loss only.
/// Dense Cholesky for small or dense operators, otherwise matrix-free CG.
Image solve_quadratic_exact(const QuadraticSubproblem& p, const QuadraticSolveOptions& options = {});

/// D(u - gamma [grad f_mc(y, A u) + lambda (u - anchor - L)]); with an
/// action the denoiser is conjugated, T^-1 D(T .).
Image pnp_latent_step(const Image& u, const QuadraticSubproblem& p, const Image& multiplier,
                      double gamma, const Denoiser& denoiser, const GroupAction* action = nullptr);

/// L - u_next + G(y).
Image update_multiplier(const Image& multiplier, const Image& u_next, const Image& g_of_y);

}  // namespace fei
