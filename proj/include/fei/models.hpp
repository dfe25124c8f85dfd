#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "fei/linops.hpp"
#include "fei/nn.hpp"
#include "fei/types.hpp"

namespace fei {

enum class Architecture { unet_residual, small_cnn, linear };

std::string to_string(Architecture a);
Architecture parse_architecture(const std::string& name);

/// Architecture descriptor; stored verbatim in checkpoints.
struct ModelSpec {
  Architecture arch = Architecture::small_cnn;
  Shape image{64, 64};
  /// Encoder widths for unet_residual (one entry per depth level).
  std::vector<int> channels{64, 128, 256, 512};
  /// Hidden width for small_cnn.
  int width = 16;
  /// "default" (He init, zero biases), "identity" (linear only), or "zero".
  std::string init = "default";
  /// Zero-initialize the last layer so a residual net starts as the identity.
  bool zero_last = false;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

/// Backward-pass record of one forward evaluation.
class Tape {
 public:
  virtual ~Tape() = default;
};

struct Forward {
  Image output;
  std::unique_ptr<Tape> tape;
};

/// The image-to-image network G_theta.
///
/// `forward` with `record = true` returns a tape; `backward` consumes it,
/// accumulates dL/dtheta into `grads()` and returns dL/dinput. Several tapes
/// can be alive at once (the equivariance loss evaluates the net twice).
class ReconstructionNet {
 public:
  explicit ReconstructionNet(ModelSpec spec) : spec_(std::move(spec)) {}
  virtual ~ReconstructionNet() = default;

  const ModelSpec& spec() const { return spec_; }

  virtual Forward forward(const Image& x, nn::Pass pass, bool record) = 0;
  virtual Image backward(const Tape& tape, const Image& grad_output) = 0;

  /// Evaluation-mode forward pass without a tape.
  Image infer(const Image& x) { return forward(x, nn::Pass::eval, false).output; }

  Eigen::VectorXd& parameters() { return store_.values(); }
  const Eigen::VectorXd& parameters() const { return store_.values(); }
  Eigen::VectorXd& grads() { return store_.grads(); }
  const Eigen::VectorXd& grads() const { return store_.grads(); }
  Eigen::VectorXd& buffers() { return store_.buffers(); }
  const Eigen::VectorXd& buffers() const { return store_.buffers(); }
  void zero_grad() { store_.zero_grad(); }

  /// FNV-1a digest of parameters and buffers.
  std::uint64_t checksum() const;

 protected:
  void check_input(const Image& x) const;

  ModelSpec spec_;
  nn::ParameterStore store_;
};

std::unique_ptr<ReconstructionNet> build_model(const ModelSpec& spec, std::uint64_t seed);

/// G(y) = net(pinv(y)): the network always consumes the back-projected image.
Image reconstruct(ReconstructionNet& model, const Measurement& y, const LinearOperator& op);

}  // namespace fei
