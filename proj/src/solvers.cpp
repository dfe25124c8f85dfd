#include "fei/solvers.hpp"

#include <cmath>

#include "fei/errors.hpp"

namespace fei {

McLoss parse_mc_loss(const std::string& name) {
  if (name == "l2") return McLoss::l2;
  if (name == "l1") return McLoss::l1;
  throw ConfigError("unknown measurement-consistency loss '" + name + "' (expected l2 | l1)");
}

Image mc_gradient(const LinearOperator& op, const Measurement& y, const Image& u, McLoss loss) {
  Measurement r = op.apply(u) - y;
  if (loss == McLoss::l1) r = r.sign();
  return op.adjoint(r);
}

double mc_value(const LinearOperator& op, const Measurement& y, const Image& u, McLoss loss) {
  const Measurement r = op.apply(u) - y;
  return loss == McLoss::l1 ? r.abs().sum() : 0.5 * r.square().sum();
}

void QuadraticSubproblem::validate() const {
  if (!op) throw InputError("quadratic subproblem: missing operator");
  if (!(lambda > 0.0)) throw InputError("quadratic subproblem: lambda must be > 0");
  if (shape_of(y) != op->out_shape()) throw InputError("quadratic subproblem: y shape mismatch");
  if (shape_of(anchor) != op->in_shape()) {
    throw InputError("quadratic subproblem: anchor shape mismatch");
  }
}

double QuadraticSubproblem::objective(const Image& u) const {
  return mc_value(*op, y, u, loss) + 0.5 * lambda * (u - anchor).square().sum();
}

Image QuadraticSubproblem::gradient(const Image& u) const {
  return mc_gradient(*op, y, u, loss) + lambda * (u - anchor);
}

NagResult nag_minimize(const GradientFn& gradient, int iterations, Image u0, Image v0,
                       double beta, double eta, const IterationObserver& observer) {
  if (iterations < 0) throw InputError("nag: iteration count must be >= 0");
  if (!(beta >= 0.0 && beta < 1.0)) throw InputError("nag: beta must lie in [0, 1)");
  if (!(eta > 0.0)) throw InputError("nag: eta must be > 0");
  if (shape_of(u0) != shape_of(v0)) throw InputError("nag: u0 and v0 shapes differ");
  NagResult r{std::move(u0), std::move(v0)};
  for (int j = 0; j < iterations; ++j) {
    const Image ahead = r.u - beta * r.velocity;
    const Image g = gradient(ahead);
    if (!g.allFinite()) throw DivergenceError("nag: non-finite gradient", static_cast<std::size_t>(j));
    r.velocity = beta * r.velocity + eta * g;
    r.u -= r.velocity;
    if (!r.u.allFinite()) throw DivergenceError("nag: non-finite iterate", static_cast<std::size_t>(j));
    if (observer) observer(j, r.u);
  }
  return r;
}

namespace {

bool prefer_dense(const QuadraticSubproblem& p) {
  return dynamic_cast<const DenseOperator*>(p.op) != nullptr || p.op->in_shape().size() <= 1024;
}

Image solve_dense(const QuadraticSubproblem& p) {
  Eigen::MatrixXd a;
  if (const auto* dense = dynamic_cast<const DenseOperator*>(p.op)) {
    a = dense->matrix();
  } else {
    a = materialize(*p.op);
  }
  const Eigen::Index n = a.cols();
  Eigen::MatrixXd normal = a.transpose() * a;
  normal.diagonal().array() += p.lambda;
  const Image rhs = p.op->adjoint(p.y) + p.lambda * p.anchor;
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(rhs.data(), n);
  const Eigen::VectorXd x = normal.llt().solve(b);
  Image out(p.anchor.rows(), p.anchor.cols());
  Eigen::Map<Eigen::VectorXd>(out.data(), n) = x;
  return out;
}

Image solve_cg(const QuadraticSubproblem& p, const QuadraticSolveOptions& options) {
  const auto normal = [&](const Image& v) -> Image {
    return p.op->adjoint(p.op->apply(v)) + p.lambda * v;
  };
  const Image rhs = p.op->adjoint(p.y) + p.lambda * p.anchor;
  const double rhs_norm = norm(rhs);
  if (rhs_norm == 0.0) return zeros(shape_of(rhs));
  const int max_it = options.max_iterations > 0 ? options.max_iterations
                                                : static_cast<int>(10 * rhs.size());
  Image x = p.anchor;
  Image r = rhs - normal(x);
  Image d = r;
  double rr = r.square().sum();
  for (int it = 0; it < max_it; ++it) {
    if (std::sqrt(rr) <= options.tolerance * rhs_norm) return x;
    const Image q = normal(d);
    const double alpha = rr / dot(d, q);
    x += alpha * d;
    r -= alpha * q;
    const double rr_next = r.square().sum();
    d = r + (rr_next / rr) * d;
    rr = rr_next;
  }
  const double rel = std::sqrt(rr) / rhs_norm;
  if (rel <= options.tolerance) return x;
  throw SolverError("conjugate gradient did not converge", rel);
}

}  // namespace

Image solve_quadratic_exact(const QuadraticSubproblem& p, const QuadraticSolveOptions& options) {
  p.validate();
  if (p.loss != McLoss::l2) throw InputError("exact quadratic solve requires the l2 loss");
  switch (options.method) {
    case QuadraticMethod::dense: return solve_dense(p);
    case QuadraticMethod::conjugate_gradient: return solve_cg(p, options);
    case QuadraticMethod::automatic: return prefer_dense(p) ? solve_dense(p) : solve_cg(p, options);
  }
  return solve_cg(p, options);
}

Image pnp_latent_step(const Image& u, const QuadraticSubproblem& p, const Image& multiplier,
                      double gamma, const Denoiser& denoiser, const GroupAction* action) {
  p.validate();
  if (!(gamma >= 0.0)) throw InputError("pnp step: gamma must be >= 0");
  if (shape_of(multiplier) != shape_of(u)) throw InputError("pnp step: multiplier shape mismatch");
  const Image step =
      u - gamma * (mc_gradient(*p.op, p.y, u, p.loss) + p.lambda * (u - p.anchor - multiplier));
  if (!step.allFinite()) throw DivergenceError("pnp step: non-finite gradient step", 0);
  Image out = action ? equivariant_denoise(denoiser, *action, step) : denoiser.denoise(step);
  if (!out.allFinite()) throw DivergenceError("pnp step: non-finite denoiser output", 0);
  return out;
}

Image update_multiplier(const Image& multiplier, const Image& u_next, const Image& g_of_y) {
  if (shape_of(multiplier) != shape_of(u_next) || shape_of(u_next) != shape_of(g_of_y)) {
    throw InputError("update_multiplier: shape mismatch");
  }
  return multiplier - u_next + g_of_y;
}

}  // namespace fei
