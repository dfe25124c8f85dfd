#include "fei/trainers.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "fei/checkpoint.hpp"
#include "fei/errors.hpp"

namespace fei {

std::string to_string(TrainerKind k) {
  switch (k) {
    case TrainerKind::mc: return "mc";
    case TrainerKind::ei: return "ei";
    case TrainerKind::fei: return "fei";
    case TrainerKind::pnp_fei: return "pnp_fei";
    case TrainerKind::eqpnp_fei: return "eqpnp_fei";
    case TrainerKind::supervised: return "supervised";
  }
  return "unknown";
}

TrainerKind parse_trainer_kind(const std::string& name) {
  for (auto k : {TrainerKind::mc, TrainerKind::ei, TrainerKind::fei, TrainerKind::pnp_fei,
                 TrainerKind::eqpnp_fei, TrainerKind::supervised}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown trainer kind '" + name + "'");
}

TrainerSettings settings_from_config(const ExperimentConfig& cfg) {
  TrainerSettings s;
  s.kind = parse_trainer_kind(cfg.trainer.kind);
  s.alpha = cfg.trainer.alpha;
  s.lambda = cfg.trainer.lambda;
  s.mc_loss = parse_mc_loss(cfg.trainer.mc_loss);
  s.eq_samples = cfg.trainer.eq_samples;
  s.nag_beta = cfg.nag.beta;
  s.nag_eta = cfg.nag.eta;
  s.nag_iterations = cfg.nag.J;
  s.persist_velocity = cfg.nag.persist_velocity;
  s.gamma = cfg.pnp.gamma;
  s.group.family = parse_group_family(cfg.group.family);
  s.group.angles = cfg.group.angles;
  s.group.max_shift = cfg.group.max_shift;
  return s;
}

TrainState TrainState::create(std::unique_ptr<ReconstructionNet> model, const AdamOptions& adam,
                              double learning_rate, std::uint64_t group_seed) {
  TrainState s;
  s.optimizer = Adam(model->parameters().size(), adam);
  s.model = std::move(model);
  s.learning_rate = learning_rate;
  s.group_rng.seed(group_seed);
  return s;
}

// ---------------------------------------------------------------------------
// Losses

namespace {

double mean_square(const Array2D& a) { return a.square().mean(); }

const LinearOperator& require_op(const TrainerContext& ctx) {
  if (!ctx.op) throw InvariantError("trainer context has no operator");
  return *ctx.op;
}

// alpha/s * sum_s mean((T_s x - G(A T_s x))^2). Accumulates theta-gradients
// and, when grad_x is given, adds d/dx.
double equivariance_term(ReconstructionNet& model, const LinearOperator& op, const Image& x,
                         const std::vector<GroupAction>& actions, double alpha, bool accumulate,
                         Image* grad_x) {
  if (actions.empty() || alpha == 0.0) return 0.0;
  const double n = static_cast<double>(x.size());
  const double weight = alpha / static_cast<double>(actions.size());
  double total = 0.0;
  for (const auto& t : actions) {
    const Image x2 = t.apply(x);
    const Image p3 = op.pinv(op.apply(x2));
    Forward f3 = model.forward(p3, nn::Pass::train, accumulate);
    const Image e = x2 - f3.output;
    total += mean_square(e);
    if (accumulate) {
      const Image g_x3 = (-2.0 * weight / n) * e;
      const Image g_p3 = model.backward(*f3.tape, g_x3);
      if (grad_x) {
        const Image g_x2 = (2.0 * weight / n) * e + op.adjoint(op.pinv_adjoint(g_p3));
        *grad_x += t.transpose(g_x2);
      }
    }
  }
  return total / static_cast<double>(actions.size());
}

LossReport pseudo_from_forward(ReconstructionNet& model, const TrainerContext& ctx,
                               const Forward& f0, const Image& target, const Image& x1,
                               const std::vector<GroupAction>& actions, bool accumulate) {
  const auto& op = require_op(ctx);
  if (shape_of(target) != shape_of(f0.output) || shape_of(x1) != shape_of(f0.output)) {
    throw InputError("pseudo-supervised loss: shape mismatch");
  }
  LossReport r;
  const Image d = f0.output - target;
  r.mc_or_pseudo = mean_square(d);
  r.equivariance =
      equivariance_term(model, op, x1, actions, ctx.settings.alpha, accumulate, nullptr);
  r.total = r.mc_or_pseudo + ctx.settings.alpha * r.equivariance;
  if (accumulate) {
    model.backward(*f0.tape, (2.0 / static_cast<double>(d.size())) * d);
  }
  return r;
}

LossReport ei_from_forward(ReconstructionNet& model, const TrainerContext& ctx,
                           const Measurement& y, const Forward& f0,
                           const std::vector<GroupAction>& actions, bool accumulate) {
  const auto& op = require_op(ctx);
  LossReport r;
  const Measurement res = op.apply(f0.output) - y;
  const double m = static_cast<double>(res.size());
  Image grad_x0;
  if (ctx.settings.mc_loss == McLoss::l2) {
    r.mc_or_pseudo = mean_square(res);
    if (accumulate) grad_x0 = op.adjoint((2.0 / m) * res);
  } else {
    r.mc_or_pseudo = res.abs().mean();
    if (accumulate) grad_x0 = op.adjoint(res.sign() / m);
  }
  r.equivariance = equivariance_term(model, op, f0.output, actions, ctx.settings.alpha,
                                     accumulate, accumulate ? &grad_x0 : nullptr);
  r.total = r.mc_or_pseudo + ctx.settings.alpha * r.equivariance;
  if (accumulate) model.backward(*f0.tape, grad_x0);
  return r;
}

Forward forward_x0(ReconstructionNet& model, const LinearOperator& op, const Measurement& y,
                   bool record) {
  if (shape_of(y) != op.out_shape()) {
    throw InputError(fmt::format("measurement shape {} does not match operator output {}",
                                 shape_of(y).str(), op.out_shape().str()));
  }
  return model.forward(op.pinv(y), nn::Pass::train, record);
}

}  // namespace

LossReport ei_loss(ReconstructionNet& model, const TrainerContext& ctx, const Measurement& y,
                   const std::vector<GroupAction>& actions, bool accumulate) {
  const Forward f0 = forward_x0(model, require_op(ctx), y, accumulate);
  return ei_from_forward(model, ctx, y, f0, actions, accumulate);
}

LossReport pseudo_supervised_loss(ReconstructionNet& model, const TrainerContext& ctx,
                                  const Measurement& y, const Image& target, const Image& x1,
                                  const std::vector<GroupAction>& actions, bool accumulate) {
  const Forward f0 = forward_x0(model, require_op(ctx), y, accumulate);
  return pseudo_from_forward(model, ctx, f0, target, x1, actions, accumulate);
}

LossReport supervised_loss(ReconstructionNet& model, const TrainerContext& ctx,
                           const Measurement& y, const Image& truth, bool accumulate) {
  const Forward f0 = forward_x0(model, require_op(ctx), y, accumulate);
  if (shape_of(truth) != shape_of(f0.output)) throw InputError("supervised loss: shape mismatch");
  LossReport r;
  const Image d = f0.output - truth;
  r.mc_or_pseudo = mean_square(d);
  r.total = r.mc_or_pseudo;
  if (accumulate) model.backward(*f0.tape, (2.0 / static_cast<double>(d.size())) * d);
  return r;
}

NagResult fei_latent(const TrainerContext& ctx, const Measurement& y, const Image& x0,
                     const Image& velocity) {
  QuadraticSubproblem p;
  p.op = &require_op(ctx);
  p.y = y;
  p.anchor = x0;
  p.lambda = ctx.settings.lambda;
  p.loss = ctx.settings.mc_loss;
  p.validate();
  return nag_minimize([&p](const Image& u) { return p.gradient(u); },
                      ctx.settings.nag_iterations, x0, velocity, ctx.settings.nag_beta,
                      ctx.settings.nag_eta);
}

// ---------------------------------------------------------------------------
// Steps

namespace {

void apply_update(TrainState& state, const LossReport& r, const char* trainer) {
  if (!std::isfinite(r.total) || !state.model->grads().allFinite()) {
    throw DivergenceError(
        fmt::format("{}: non-finite loss at step {} (mc/pseudo {}, equivariance {})", trainer,
                    state.step, r.mc_or_pseudo, r.equivariance),
        state.step);
  }
  state.optimizer.step(state.model->parameters(), state.model->grads(), state.learning_rate);
  ++state.step;
}

void fill_trace(StepTrace* trace, const TrainState& state, const std::string& id,
                const Image& x0, const LossReport& r) {
  if (!trace) return;
  trace->sample_id = id;
  trace->step = state.step;
  trace->x0 = x0;
  trace->report = r;
}

Image& velocity_slot(TrainState& state, const std::string& id, Shape shape, bool persist,
                     Image& scratch) {
  if (persist) {
    auto it = state.nag_velocity.find(id);
    if (it == state.nag_velocity.end()) it = state.nag_velocity.emplace(id, zeros(shape)).first;
    return it->second;
  }
  scratch = zeros(shape);
  return scratch;
}

LossReport pnp_common(TrainState& state, const TrainerContext& ctx, const Measurement& y,
                      const std::string& sample_id, const std::vector<GroupAction>& actions,
                      const GroupAction* action2, StepTrace* trace, const char* name) {
  const auto& op = require_op(ctx);
  if (!ctx.denoiser) throw InvariantError(std::string(name) + ": no denoiser configured");
  if (sample_id.empty()) throw InvariantError(std::string(name) + ": missing sample id");
  auto it = state.multipliers.find(sample_id);
  if (it == state.multipliers.end()) {
    it = state.multipliers.emplace(sample_id, zeros(op.in_shape())).first;
  }
  const Image multiplier = it->second;

  state.model->zero_grad();
  const Forward f0 = forward_x0(*state.model, op, y, true);
  QuadraticSubproblem p;
  p.op = &op;
  p.y = y;
  p.anchor = f0.output;
  p.lambda = ctx.settings.lambda;
  p.loss = ctx.settings.mc_loss;
  Image x1;
  try {
    x1 = pnp_latent_step(f0.output, p, multiplier, ctx.settings.gamma, *ctx.denoiser, action2);
  } catch (const DivergenceError& e) {
    throw DivergenceError(fmt::format("{} at step {}: {}", name, state.step, e.what()),
                          state.step);
  }
  const Image target = x1 - multiplier;
  const LossReport r = pseudo_from_forward(*state.model, ctx, f0, target, x1, actions, true);
  fill_trace(trace, state, sample_id, f0.output, r);
  apply_update(state, r, name);

  const Image g_next = reconstruct(*state.model, y, op);
  it->second = update_multiplier(multiplier, x1, g_next);
  if (trace) {
    trace->x1 = x1;
    trace->multiplier_before = multiplier;
    trace->multiplier_after = it->second;
    trace->g_next = g_next;
  }
  return r;
}

}  // namespace

LossReport mc_only_step(TrainState& state, const TrainerContext& ctx, const Measurement& y,
                        StepTrace* trace) {
  state.model->zero_grad();
  const Forward f0 = forward_x0(*state.model, require_op(ctx), y, true);
  LossReport r = ei_from_forward(*state.model, ctx, y, f0, {}, true);
  r.equivariance = 0.0;
  r.total = r.mc_or_pseudo;
  fill_trace(trace, state, "", f0.output, r);
  apply_update(state, r, "mc");
  return r;
}

LossReport ei_step(TrainState& state, const TrainerContext& ctx, const Measurement& y,
                   const std::vector<GroupAction>& actions, StepTrace* trace) {
  state.model->zero_grad();
  const Forward f0 = forward_x0(*state.model, require_op(ctx), y, true);
  const LossReport r = ei_from_forward(*state.model, ctx, y, f0, actions, true);
  fill_trace(trace, state, "", f0.output, r);
  apply_update(state, r, "ei");
  return r;
}

LossReport fei_step(TrainState& state, const TrainerContext& ctx, const Measurement& y,
                    const std::string& sample_id, const std::vector<GroupAction>& actions,
                    StepTrace* trace) {
  const auto& op = require_op(ctx);
  state.model->zero_grad();
  const Forward f0 = forward_x0(*state.model, op, y, true);
  Image scratch;
  Image& velocity = velocity_slot(state, sample_id, op.in_shape(),
                                  ctx.settings.persist_velocity, scratch);
  NagResult nag;
  try {
    nag = fei_latent(ctx, y, f0.output, velocity);
  } catch (const DivergenceError& e) {
    throw DivergenceError(
        fmt::format("fei at step {}: latent solver diverged at NAG iteration {}: {}", state.step,
                    e.iteration(), e.what()),
        state.step);
  }
  const LossReport r = pseudo_from_forward(*state.model, ctx, f0, nag.u, nag.u, actions, true);
  fill_trace(trace, state, sample_id, f0.output, r);
  apply_update(state, r, "fei");
  if (ctx.settings.persist_velocity) velocity = nag.velocity;
  if (trace) trace->x1 = nag.u;
  return r;
}

LossReport pnp_fei_step(TrainState& state, const TrainerContext& ctx, const Measurement& y,
                        const std::string& sample_id, const std::vector<GroupAction>& actions,
                        StepTrace* trace) {
  return pnp_common(state, ctx, y, sample_id, actions, nullptr, trace, "pnp_fei");
}

LossReport eqpnp_fei_step(TrainState& state, const TrainerContext& ctx, const Measurement& y,
                          const std::string& sample_id, const std::vector<GroupAction>& actions,
                          const GroupAction& action2, StepTrace* trace) {
  return pnp_common(state, ctx, y, sample_id, actions, &action2, trace, "eqpnp_fei");
}

LossReport supervised_step(TrainState& state, const TrainerContext& ctx, const Image& x_truth,
                           const Measurement& y, StepTrace* trace) {
  state.model->zero_grad();
  const Forward f0 = forward_x0(*state.model, require_op(ctx), y, true);
  if (shape_of(x_truth) != shape_of(f0.output)) {
    throw InputError("supervised step: truth shape mismatch");
  }
  LossReport r;
  const Image d = f0.output - x_truth;
  r.mc_or_pseudo = mean_square(d);
  r.total = r.mc_or_pseudo;
  state.model->backward(*f0.tape, (2.0 / static_cast<double>(d.size())) * d);
  fill_trace(trace, state, "", f0.output, r);
  apply_update(state, r, "supervised");
  return r;
}

// ---------------------------------------------------------------------------
// Monitor

PsnrMonitor::PsnrMonitor(const std::vector<std::string>& ids, const std::vector<Image>& truth,
                         double ema_decay)
    : decay_(ema_decay) {
  if (ids.size() != truth.size()) throw InputError("monitor: ids/truth size mismatch");
  for (std::size_t i = 0; i < ids.size(); ++i) truth_[ids[i]] = truth[i];
}

void PsnrMonitor::observe(const std::string& id, const Image& reconstruction) {
  if (!truth_.count(id)) throw InputError("monitor: unknown sample id '" + id + "'");
  latest_[id] = reconstruction;
  auto it = ema_.find(id);
  if (it == ema_.end()) {
    ema_[id] = ema_update(std::nullopt, reconstruction, decay_);
  } else {
    it->second = ema_update(it->second, reconstruction, decay_);
  }
}

std::array<double, 3> PsnrMonitor::current() const {
  std::array<double, 3> out{0.0, 0.0, 0.0};
  if (latest_.empty()) return out;
  for (const auto& [id, x] : latest_) {
    const Image& ref = truth_.at(id);
    out[0] += psnr(x, ref);
    out[1] += mse(x, ref);
    out[2] += psnr(ema_.at(id), ref);
  }
  const double k = static_cast<double>(latest_.size());
  for (auto& v : out) v /= k;
  return out;
}

// ---------------------------------------------------------------------------
// Builders

OperatorPtr build_operator(const ExperimentConfig& cfg) {
  const int n = cfg.data.size;
  if (cfg.physics.kind == "radon") {
    return make_radon_operator(n, cfg.physics.angles, cfg.physics.angle_list, cfg.physics.scale);
  }
  if (cfg.physics.kind == "inpainting") {
    std::mt19937_64 rng(derive_seed(cfg.seed.data, fnv1a("inpainting-mask")));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image mask(n, n);
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      mask(i) = u(rng) < cfg.physics.keep_fraction ? 1.0 : 0.0;
    }
    return make_inpainting_operator(n, mask);
  }
  if (cfg.physics.kind == "gaussian") {
    const Eigen::Index m = cfg.physics.measurements > 0 ? cfg.physics.measurements : n * n / 4;
    return make_gaussian_operator(m, Shape{n, n}, derive_seed(cfg.seed.data, fnv1a("gaussian-op")));
  }
  throw ConfigError("physics.kind: unknown operator '" + cfg.physics.kind + "'");
}

ModelSpec model_spec_from_config(const ExperimentConfig& cfg) {
  ModelSpec spec;
  spec.arch = parse_architecture(cfg.model.arch);
  spec.image = Shape{cfg.data.size, cfg.data.size};
  spec.channels = cfg.model.channels;
  spec.width = cfg.model.width;
  spec.init = cfg.model.init;
  spec.zero_last = cfg.model.zero_last;
  return spec;
}

DenoiserOptions denoiser_options_from_config(const ExperimentConfig& cfg) {
  DenoiserOptions o;
  o.weights_path = cfg.denoiser.weights_path;
  o.plugin_command = cfg.denoiser.plugin;
  o.median_radius = cfg.denoiser.median_radius;
  o.tv_iterations = cfg.denoiser.tv_iterations;
  return o;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

nlohmann::json image_to_json(const Image& x) {
  return {{"rows", x.rows()},
          {"cols", x.cols()},
          {"data", std::vector<double>(x.data(), x.data() + x.size())}};
}

Image image_from_json(const nlohmann::json& j) {
  Image x(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != x.size()) {
    throw LoadError("checkpoint: malformed image record");
  }
  std::copy(data.begin(), data.end(), x.data());
  return x;
}

nlohmann::json images_to_json(const std::map<std::string, Image>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : m) j[k] = image_to_json(v);
  return j;
}

std::map<std::string, Image> images_from_json(const nlohmann::json& j) {
  std::map<std::string, Image> m;
  for (auto it = j.begin(); it != j.end(); ++it) m[it.key()] = image_from_json(it.value());
  return m;
}

struct Position {
  long long epoch = 0;
  std::size_t sample = 0;
};

void save_state(const std::filesystem::path& path, const TrainState& state,
                const ExperimentConfig& cfg, Position next, const PsnrMonitor* monitor) {
  Checkpoint ckpt = snapshot(*state.model);
  ckpt.step = state.step;
  ckpt.epoch = next.epoch;
  ckpt.optimizer = state.optimizer.state();
  ckpt.multipliers = state.multipliers;
  std::ostringstream rng;
  rng << state.group_rng;
  ckpt.extra["trainer"] = cfg.trainer.kind;
  ckpt.extra["config_hash"] = cfg.hash();
  ckpt.extra["next_epoch"] = next.epoch;
  ckpt.extra["next_sample"] = next.sample;
  ckpt.extra["group_rng"] = rng.str();
  ckpt.extra["nag_velocity"] = images_to_json(state.nag_velocity);
  if (monitor) {
    ckpt.extra["monitor_latest"] = images_to_json(monitor->latest());
    ckpt.extra["monitor_ema"] = images_to_json(monitor->ema());
  }
  save_checkpoint(path, ckpt);
}

}  // namespace

TrainingResult run_training(const ExperimentConfig& cfg, const LinearOperator& op,
                            const MeasurementSet& train, const TrainingOptions& options) {
  cfg.validate();
  if (train.size() == 0) throw InputError("run_training: empty training set");
  if (train.ids.size() != train.y.size()) throw InputError("run_training: ids/y size mismatch");

  TrainerContext ctx;
  ctx.op = &op;
  ctx.settings = settings_from_config(cfg);
  const TrainerKind kind = ctx.settings.kind;
  std::unique_ptr<Denoiser> denoiser;
  if (kind == TrainerKind::pnp_fei || kind == TrainerKind::eqpnp_fei) {
    denoiser = get_denoiser(cfg.denoiser.name, cfg.trainer.lambda,
                            denoiser_options_from_config(cfg));
    ctx.denoiser = denoiser.get();
  }
  if (kind == TrainerKind::supervised) {
    if (!options.supervision) throw ConfigError("trainer.kind=supervised requires ground truth");
    for (const auto& id : train.ids) {
      if (!options.supervision->count(id)) {
        throw InputError("supervised training: no ground truth for sample '" + id + "'");
      }
    }
  }

  AdamOptions adam;
  adam.weight_decay = cfg.optim.weight_decay;
  TrainingResult result;
  result.state = TrainState::create(build_model(model_spec_from_config(cfg), cfg.model.seed),
                                    adam, cfg.optim.lr, cfg.seed.group);
  TrainState& state = result.state;
  if (state.model->spec().image != op.in_shape()) {
    throw ConfigError(fmt::format("model image shape {} does not match operator input {}",
                                  state.model->spec().image.str(), op.in_shape().str()));
  }
  const std::string run_id =
      cfg.output.run_id.empty() ? cfg.trainer.kind + "-" + cfg.hash() : cfg.output.run_id;
  result.log = MetricLog(run_id, cfg.hash());

  Position pos;
  double wall = 0.0;
  if (options.resume_from) {
    const Checkpoint ckpt = load_checkpoint(*options.resume_from);
    if (ckpt.extra.value("config_hash", "") != cfg.hash()) {
      throw ConfigError("resume: checkpoint was written by a different configuration");
    }
    state.model = restore(ckpt);
    if (ckpt.optimizer) state.optimizer.load(*ckpt.optimizer);
    state.step = ckpt.step;
    state.multipliers = ckpt.multipliers;
    std::istringstream rng(ckpt.extra.at("group_rng").get<std::string>());
    rng >> state.group_rng;
    state.nag_velocity = images_from_json(ckpt.extra.at("nag_velocity"));
    pos.epoch = ckpt.extra.at("next_epoch").get<long long>();
    pos.sample = ckpt.extra.at("next_sample").get<std::size_t>();
    if (options.monitor && ckpt.extra.contains("monitor_ema")) {
      options.monitor->restore_latest(images_from_json(ckpt.extra.at("monitor_latest")));
      options.monitor->restore_ema(images_from_json(ckpt.extra.at("monitor_ema")));
    }
    if (!options.run_dir.empty() && std::filesystem::exists(options.run_dir / "metrics.csv")) {
      const MetricLog old = MetricLog::read(options.run_dir);
      for (const auto& row : old.rows()) {
        if (row.step <= state.step) {
          result.log.append(row);
          wall = row.wall_time_s;
        }
      }
    }
  }

  const auto checkpoint_path = options.run_dir / "checkpoint.ckpt";
  auto persist = [&](Position next) {
    if (options.run_dir.empty()) return;
    std::filesystem::create_directories(options.run_dir);
    save_state(checkpoint_path, state, cfg, next, options.monitor);
    result.log.write(options.run_dir);
  };

  const long long epochs = cfg.optim.epochs;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  bool stop = false;
  Position stop_pos;
  result.epochs_completed = pos.epoch;
  for (long long epoch = pos.epoch; epoch < epochs && !stop; ++epoch) {
    state.learning_rate = learning_rate(cfg.optim.lr, epoch, epochs);
    const std::size_t first = epoch == pos.epoch ? pos.sample : 0;
    for (std::size_t i = first; i < train.size(); ++i) {
      if (options.max_steps > 0 && state.step >= options.max_steps) {
        stop = true;
        stop_pos = Position{epoch, i};
        break;
      }
      const std::string& id = train.ids[i];
      const Measurement& y = train.y[i];
      std::vector<GroupAction> actions;
      if (kind != TrainerKind::mc && kind != TrainerKind::supervised) {
        for (int s = 0; s < ctx.settings.eq_samples; ++s) {
          actions.push_back(sample_group(ctx.settings.group, state.group_rng));
        }
      }
      StepTrace trace;
      LossReport report;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        switch (kind) {
          case TrainerKind::mc: report = mc_only_step(state, ctx, y, &trace); break;
          case TrainerKind::ei: report = ei_step(state, ctx, y, actions, &trace); break;
          case TrainerKind::fei: report = fei_step(state, ctx, y, id, actions, &trace); break;
          case TrainerKind::pnp_fei:
            report = pnp_fei_step(state, ctx, y, id, actions, &trace);
            break;
          case TrainerKind::eqpnp_fei: {
            const GroupAction action2 = sample_group(ctx.settings.group, state.group_rng);
            report = eqpnp_fei_step(state, ctx, y, id, actions, action2, &trace);
            break;
          }
          case TrainerKind::supervised:
            report = supervised_step(state, ctx, options.supervision->at(id), y, &trace);
            break;
        }
      } catch (const DivergenceError&) {
        persist(Position{epoch, i});
        throw;
      }
      const auto t1 = std::chrono::steady_clock::now();
      wall += std::chrono::duration<double>(t1 - t0).count();
      trace.sample_id = id;

      MetricRow row;
      row.step = state.step;
      row.epoch = epoch;
      row.wall_time_s = wall;
      row.loss_mc = report.mc_or_pseudo;
      row.loss_eq = report.equivariance;
      row.loss_total = report.total;
      row.psnr_train = row.mse_train = row.psnr_ema = nan;
      if (options.monitor) {
        options.monitor->observe(id, trace.x0);
        const auto m = options.monitor->current();
        row.psnr_train = m[0];
        row.mse_train = m[1];
        row.psnr_ema = m[2];
      }
      result.log.append(row);
      if (options.on_step) options.on_step(trace);
    }
    if (!stop) {
      result.epochs_completed = epoch + 1;
      const long long every = cfg.output.checkpoint_every;
      if (every > 0 && (epoch + 1) % every == 0 && epoch + 1 < epochs) {
        persist(Position{epoch + 1, 0});
      }
    }
  }
  persist(stop ? stop_pos : Position{result.epochs_completed, 0});
  return result;
}

}  // namespace fei
