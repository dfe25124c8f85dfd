#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "fei/groups.hpp"
#include "fei/types.hpp"

namespace fei {

class ReconstructionNet;

/// Plug-in image denoiser D with a declared noise level.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual std::string name() const = 0;
  double sigma() const { return sigma_; }
  virtual Image denoise(const Image& x) const = 0;

 protected:
  explicit Denoiser(double sigma) : sigma_(sigma) {}

 private:
  double sigma_;
};

struct DenoiserOptions {
  /// Checkpoint for `cnn_pretrained`.
  std::filesystem::path weights_path;
  /// Executable for `bm3d_external`; falls back to $FEI_BM3D_PLUGIN.
  /// Invoked as `<cmd> <input.npy> <output.npy> <sigma>`.
  std::string plugin_command;
  int median_radius = 1;
  int tv_iterations = 50;
};

/// Builds a registered denoiser with sigma = 1 / lambda.
///
/// Names: identity, median (square window, periodic borders), tv
/// (Chambolle's projection with weight sigma^2, periodic borders),
/// cnn_pretrained (a saved network applied directly to the image) and
/// bm3d_external (out-of-process plugin; PluginUnavailable when missing).
std::unique_ptr<Denoiser> get_denoiser(const std::string& name, double lambda,
                                       const DenoiserOptions& options = {});

/// T^-1 D(T x).
Image equivariant_denoise(const Denoiser& d, const GroupAction& action, const Image& x);

Image median_filter(const Image& x, int radius);
Image tv_denoise(const Image& x, double weight, int iterations);

}  // namespace fei
