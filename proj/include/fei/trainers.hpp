#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fei/config.hpp"
#include "fei/data.hpp"
#include "fei/denoisers.hpp"
#include "fei/groups.hpp"
#include "fei/linops.hpp"
#include "fei/metrics.hpp"
#include "fei/models.hpp"
#include "fei/optim.hpp"
#include "fei/solvers.hpp"

namespace fei {

enum class TrainerKind { mc, ei, fei, pnp_fei, eqpnp_fei, supervised };

std::string to_string(TrainerKind k);
TrainerKind parse_trainer_kind(const std::string& name);

/// total = mc_or_pseudo + alpha * equivariance.
///
/// All terms are mean-reduced squared errors (mean absolute error for the
/// l1 consistency loss): MC-only/EI report mean((A G(y) - y)^2), the FEI
/// family reports the pseudo-supervision term mean((x0 + L - x1)^2).
struct LossReport {
  double mc_or_pseudo = 0.0;
  double equivariance = 0.0;
  double total = 0.0;
};

/// Hyperparameters shared by every step function.
struct TrainerSettings {
  TrainerKind kind = TrainerKind::fei;
  double alpha = 100.0;
  double lambda = 1.0;
  McLoss mc_loss = McLoss::l2;
  int eq_samples = 1;
  double nag_beta = 0.1;
  double nag_eta = 0.01;
  int nag_iterations = 10;
  /// Carry the NAG velocity of each sample across visits instead of
  /// restarting from zero.
  bool persist_velocity = false;
  double gamma = 0.01;
  GroupSpec group;
};

TrainerSettings settings_from_config(const ExperimentConfig& cfg);

/// Physics, hyperparameters and (for PnP) the denoiser a step needs.
struct TrainerContext {
  const LinearOperator* op = nullptr;
  TrainerSettings settings;
  const Denoiser* denoiser = nullptr;
};

/// Mutable training state; owned by one training loop.
struct TrainState {
  std::unique_ptr<ReconstructionNet> model;
  Adam optimizer;
  double learning_rate = 1e-3;
  /// Number of processed samples.
  long long step = 0;
  /// Per-sample multiplier L^(y) (PnP variants).
  std::map<std::string, Image> multipliers;
  /// Per-sample NAG velocity when persisted.
  std::map<std::string, Image> nag_velocity;
  std::mt19937_64 group_rng;

  static TrainState create(std::unique_ptr<ReconstructionNet> model, const AdamOptions& adam,
                           double learning_rate, std::uint64_t group_seed);
};

/// Intermediates of one step, exposed for replay checks and monitoring.
struct StepTrace {
  std::string sample_id;
  long long step = 0;
  Image x0;  // G_{theta_k}(y)
  Image x1;  // latent reconstruction u
  /// PnP variants: multiplier before/after and G_{theta_{k+1}}(y).
  Image multiplier_before;
  Image multiplier_after;
  Image g_next;
  LossReport report;
};

// -- Loss functions ---------------------------------------------------------
// Each evaluates the theta-loss of one sample with a train-mode forward pass.
// With `accumulate` the gradient is added to model.grads().

/// mean_mc(A G(y), y) + alpha * mean_s mean((T_s x0 - G(A T_s x0))^2),
/// x0 = G(y); gradients flow through every G evaluation and through x0.
/// With alpha = 0 (or no actions) only the MC term is evaluated.
LossReport ei_loss(ReconstructionNet& model, const TrainerContext& ctx, const Measurement& y,
                   const std::vector<GroupAction>& actions, bool accumulate);

/// mean((x0 - target)^2) + alpha * mean_s mean((T_s x1 - G(A T_s x1))^2),
/// x0 = G(y), with target and x1 held constant.
LossReport pseudo_supervised_loss(ReconstructionNet& model, const TrainerContext& ctx,
                                  const Measurement& y, const Image& target, const Image& x1,
                                  const std::vector<GroupAction>& actions, bool accumulate);

/// mean((G(y) - truth)^2).
LossReport supervised_loss(ReconstructionNet& model, const TrainerContext& ctx,
                           const Measurement& y, const Image& truth, bool accumulate);

/// u = NAG(J steps) on f_mc(y, A u) + lambda/2 ||u - x0||^2 starting at x0.
NagResult fei_latent(const TrainerContext& ctx, const Measurement& y, const Image& x0,
                     const Image& velocity);

// -- Steps --------------------------------------------------------------------
// One sample, one optimizer update, step += 1. A non-finite loss raises
// DivergenceError carrying the step index before any state is modified.

LossReport mc_only_step(TrainState& state, const TrainerContext& ctx, const Measurement& y,
                        StepTrace* trace = nullptr);

LossReport ei_step(TrainState& state, const TrainerContext& ctx, const Measurement& y,
                   const std::vector<GroupAction>& actions, StepTrace* trace = nullptr);

LossReport fei_step(TrainState& state, const TrainerContext& ctx, const Measurement& y,
                    const std::string& sample_id, const std::vector<GroupAction>& actions,
                    StepTrace* trace = nullptr);

LossReport pnp_fei_step(TrainState& state, const TrainerContext& ctx, const Measurement& y,
                        const std::string& sample_id, const std::vector<GroupAction>& actions,
                        StepTrace* trace = nullptr);

/// pnp_fei_step with the conjugated denoiser T_{g'}^-1 D T_{g'}.
LossReport eqpnp_fei_step(TrainState& state, const TrainerContext& ctx, const Measurement& y,
                          const std::string& sample_id, const std::vector<GroupAction>& actions,
                          const GroupAction& action2, StepTrace* trace = nullptr);

LossReport supervised_step(TrainState& state, const TrainerContext& ctx, const Image& x_truth,
                           const Measurement& y, StepTrace* trace = nullptr);

// -- Training loop ------------------------------------------------------------

/// Scores the latest reconstruction of each training sample against the
/// ground truth. The trainer never sees the truth; it only hands
/// reconstructions to the monitor.
class PsnrMonitor {
 public:
  PsnrMonitor(const std::vector<std::string>& ids, const std::vector<Image>& truth,
              double ema_decay);

  void observe(const std::string& id, const Image& reconstruction);
  /// Means over samples seen so far: {psnr_raw, mse_raw, psnr_ema}.
  std::array<double, 3> current() const;

  const std::map<std::string, Image>& ema() const { return ema_; }
  void restore_ema(std::map<std::string, Image> ema) { ema_ = std::move(ema); }
  void restore_latest(std::map<std::string, Image> latest) { latest_ = std::move(latest); }
  const std::map<std::string, Image>& latest() const { return latest_; }

 private:
  std::map<std::string, Image> truth_;
  std::map<std::string, Image> latest_;
  std::map<std::string, Image> ema_;
  double decay_;
};

struct TrainingOptions {
  /// Directory for checkpoints and logs; empty keeps everything in memory.
  std::filesystem::path run_dir;
  std::optional<std::filesystem::path> resume_from;
  PsnrMonitor* monitor = nullptr;
  /// Ground truth for the supervised reference, by sample id.
  const std::map<std::string, Image>* supervision = nullptr;
  std::function<void(const StepTrace&)> on_step;
  /// Stop after this many steps (0 = run all epochs).
  long long max_steps = 0;
};

struct TrainingResult {
  TrainState state;
  MetricLog log;
  long long epochs_completed = 0;
};

/// Epoch loop over the training measurements in id order with the
/// half-constant / half-cosine learning-rate schedule. Writes
/// `checkpoint.ckpt` every `output.checkpoint_every` epochs and at the end;
/// on divergence it writes the last consistent state and rethrows.
TrainingResult run_training(const ExperimentConfig& cfg, const LinearOperator& op,
                            const MeasurementSet& train, const TrainingOptions& options = {});

/// Operator described by the physics section (image size from data.size).
OperatorPtr build_operator(const ExperimentConfig& cfg);
ModelSpec model_spec_from_config(const ExperimentConfig& cfg);
DenoiserOptions denoiser_options_from_config(const ExperimentConfig& cfg);

}  // namespace fei
