#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"

#include "fei/models.hpp"

namespace fei {

struct OptimizerState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  long long steps = 0;
};

/// Everything needed to rebuild a network and resume training.
///
/// On-disk layout (all integers/floats little-endian):
///   line 1: "FEICKPT 1"
///   line 2: byte length L of the JSON header
///   L bytes: JSON header {model, step, epoch, num_params, num_buffers,
///            optimizer_steps | null, multiplier_ids, multiplier_shape, extra}
///   float64 blocks in order: parameters, buffers, [first moment, second
///   moment], then one image per multiplier id (row-major).
struct Checkpoint {
  ModelSpec model;
  Eigen::VectorXd parameters;
  Eigen::VectorXd buffers;
  long long step = 0;
  long long epoch = 0;
  std::optional<OptimizerState> optimizer;
  std::map<std::string, Image> multipliers;
  nlohmann::json extra = nlohmann::json::object();
};

Checkpoint snapshot(const ReconstructionNet& net);
std::unique_ptr<ReconstructionNet> restore(const Checkpoint& ckpt);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws LoadError naming the path when the file is missing or malformed.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fei
