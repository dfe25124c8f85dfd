#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fei/config.hpp"
#include "fei/data.hpp"
#include "fei/metrics.hpp"
#include "fei/models.hpp"
#include "fei/trainers.hpp"

namespace fei {

/// Name of the environment variable that roots relative `output.dir` paths.
inline constexpr const char* kOutputRootEnv = "FEI_OUTPUT_ROOT";

/// Datasets, operator and measurements described by a config.
struct ExperimentData {
  OperatorPtr op;
  EvaluationSet train;
  EvaluationSet test;
};

ExperimentData prepare_data(const ExperimentConfig& cfg);

/// `output.dir`, prefixed by $FEI_OUTPUT_ROOT when that is set and the
/// configured directory is relative.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);
std::string run_id_of(const ExperimentConfig& cfg);

struct EvalReport {
  std::string method;
  std::vector<std::string> ids;
  std::vector<double> psnr;
  ScoreSummary summary;
};

/// Reconstructs every sample with G(y) = net(pinv(y)), or with pinv(y)
/// alone when `model` is null (the FBP baseline), and scores it.
EvalReport evaluate(ReconstructionNet* model, const LinearOperator& op, const EvaluationSet& set,
                    const std::string& method);

struct RunOutcome {
  std::filesystem::path run_dir;
  TrainingResult training;
  EvalReport train_eval;
  EvalReport test_eval;
  EvalReport fbp_test;
};

/// Trains per the config and writes into `<output dir>/<run id>/`:
/// config.snapshot, metrics.csv, timing.csv, checkpoint.ckpt, summary.csv,
/// curves_iter.png and curves_time.png.
RunOutcome run_experiment(const ExperimentConfig& cfg, bool resume = false);

struct BenchmarkMember {
  std::string kind;
  bool ok = false;
  std::string error;
  std::filesystem::path run_dir;
  long long total_steps = 0;
  double final_psnr = 0.0;  // final psnr_ema
  double wall_time_s = 0.0;
  std::optional<long long> steps_to_threshold;
  std::optional<double> time_to_threshold;
  double test_psnr = 0.0;
};

struct BenchmarkReport {
  std::filesystem::path dir;
  /// Final psnr_ema of the first successful member (the reference).
  double threshold = 0.0;
  std::string reference;
  /// Mean test PSNR of the pseudo-inverse baseline (shared by all members).
  double fbp_test_psnr = 0.0;
  std::vector<BenchmarkMember> members;

  /// Reference steps-to-threshold divided by the member's, when both exist.
  std::optional<double> speedup(const BenchmarkMember& m) const;
  std::string table() const;
};

/// Runs each trainer kind of the suite on the same data, physics and seeds.
/// A failing member is reported as failed; the others still run.
BenchmarkReport run_benchmark(const ExperimentConfig& base, const std::vector<std::string>& suite,
                              const std::string& name = "benchmark");

}  // namespace fei
