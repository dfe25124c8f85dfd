#include "fei/denoisers.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <mutex>
#include <random>
#include <vector>

#include "fei/checkpoint.hpp"
#include "fei/errors.hpp"
#include "fei/io.hpp"

namespace fei {

Image median_filter(const Image& x, int radius) {
  const Eigen::Index h = x.rows();
  const Eigen::Index w = x.cols();
  const int side = 2 * radius + 1;
  std::vector<double> window(static_cast<std::size_t>(side * side));
  Image out(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      std::size_t k = 0;
      for (int dr = -radius; dr <= radius; ++dr) {
        const Eigen::Index rr = ((r + dr) % h + h) % h;
        for (int dc = -radius; dc <= radius; ++dc) {
          window[k++] = x(rr, ((c + dc) % w + w) % w);
        }
      }
      auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
      std::nth_element(window.begin(), mid, window.end());
      out(r, c) = *mid;
    }
  }
  return out;
}

Image tv_denoise(const Image& f, double weight, int iterations) {
  if (weight <= 0.0) return f;
  const Eigen::Index h = f.rows();
  const Eigen::Index w = f.cols();
  constexpr double tau = 0.248;
  Image px = Image::Zero(h, w);
  Image py = Image::Zero(h, w);
  Image div(h, w);
  auto divergence = [&]() {
    for (Eigen::Index r = 0; r < h; ++r) {
      const Eigen::Index rp = (r + h - 1) % h;
      for (Eigen::Index c = 0; c < w; ++c) {
        const Eigen::Index cp = (c + w - 1) % w;
        div(r, c) = px(r, c) - px(r, cp) + py(r, c) - py(rp, c);
      }
    }
  };
  for (int it = 0; it < iterations; ++it) {
    divergence();
    const Image v = div - f / weight;
    for (Eigen::Index r = 0; r < h; ++r) {
      const Eigen::Index rn = (r + 1) % h;
      for (Eigen::Index c = 0; c < w; ++c) {
        const Eigen::Index cn = (c + 1) % w;
        const double gx = v(r, cn) - v(r, c);
        const double gy = v(rn, c) - v(r, c);
        const double mag = std::sqrt(gx * gx + gy * gy);
        px(r, c) = (px(r, c) + tau * gx) / (1.0 + tau * mag);
        py(r, c) = (py(r, c) + tau * gy) / (1.0 + tau * mag);
      }
    }
  }
  divergence();
  return f - weight * div;
}

namespace {

class IdentityDenoiser final : public Denoiser {
 public:
  explicit IdentityDenoiser(double sigma) : Denoiser(sigma) {}
  std::string name() const override { return "identity"; }
  Image denoise(const Image& x) const override { return x; }
};

class MedianDenoiser final : public Denoiser {
 public:
  MedianDenoiser(double sigma, int radius) : Denoiser(sigma), radius_(radius) {}
  std::string name() const override { return "median"; }
  Image denoise(const Image& x) const override { return median_filter(x, radius_); }

 private:
  int radius_;
};

class TvDenoiser final : public Denoiser {
 public:
  TvDenoiser(double sigma, int iterations) : Denoiser(sigma), iterations_(iterations) {}
  std::string name() const override { return "tv"; }
  Image denoise(const Image& x) const override {
    return tv_denoise(x, sigma() * sigma(), iterations_);
  }

 private:
  int iterations_;
};

class CnnDenoiser final : public Denoiser {
 public:
  CnnDenoiser(double sigma, const std::filesystem::path& weights) : Denoiser(sigma) {
    if (weights.empty()) throw ConfigError("cnn_pretrained: denoiser.weights_path is not set");
    if (!std::filesystem::exists(weights)) {
      throw LoadError("cnn_pretrained: weights file not found: " + weights.string());
    }
    net_ = restore(load_checkpoint(weights));
  }
  std::string name() const override { return "cnn_pretrained"; }
  Image denoise(const Image& x) const override {
    std::lock_guard lock(mutex_);
    return net_->infer(x);
  }

 private:
  mutable std::mutex mutex_;
  std::unique_ptr<ReconstructionNet> net_;
};

class ExternalDenoiser final : public Denoiser {
 public:
  ExternalDenoiser(double sigma, std::string command)
      : Denoiser(sigma), command_(std::move(command)) {}
  std::string name() const override { return "bm3d_external"; }

  Image denoise(const Image& x) const override {
    namespace fs = std::filesystem;
    std::random_device rd;
    const fs::path dir = fs::temp_directory_path() / ("fei_bm3d_" + std::to_string(rd()));
    fs::create_directories(dir);
    const fs::path in = dir / "in.npy";
    const fs::path out = dir / "out.npy";
    io::save_array(in, x);
    const std::string cmd = command_ + " '" + in.string() + "' '" + out.string() + "' " +
                            std::to_string(sigma());
    const int rc = std::system(cmd.c_str());
    if (rc != 0 || !fs::exists(out)) {
      fs::remove_all(dir);
      throw PluginUnavailable("bm3d_external: plugin '" + command_ + "' failed");
    }
    Image result = io::load_array(out);
    fs::remove_all(dir);
    if (shape_of(result) != shape_of(x)) throw InputError("bm3d_external: plugin changed shape");
    return result;
  }

 private:
  std::string command_;
};

}  // namespace

std::unique_ptr<Denoiser> get_denoiser(const std::string& name, double lambda,
                                       const DenoiserOptions& options) {
  if (!(lambda > 0.0)) throw ConfigError("denoiser: lambda must be > 0");
  const double sigma = 1.0 / lambda;
  if (name == "identity") return std::make_unique<IdentityDenoiser>(sigma);
  if (name == "median") {
    if (options.median_radius < 1) throw ConfigError("median: radius must be >= 1");
    return std::make_unique<MedianDenoiser>(sigma, options.median_radius);
  }
  if (name == "tv") {
    if (options.tv_iterations < 1) throw ConfigError("tv: iterations must be >= 1");
    return std::make_unique<TvDenoiser>(sigma, options.tv_iterations);
  }
  if (name == "cnn_pretrained") return std::make_unique<CnnDenoiser>(sigma, options.weights_path);
  if (name == "bm3d_external") {
    std::string cmd = options.plugin_command;
    if (cmd.empty()) {
      if (const char* env = std::getenv("FEI_BM3D_PLUGIN")) cmd = env;
    }
    if (cmd.empty()) {
      throw PluginUnavailable("bm3d_external: no plugin configured (set FEI_BM3D_PLUGIN)");
    }
    return std::make_unique<ExternalDenoiser>(sigma, cmd);
  }
  throw ConfigError("unknown denoiser '" + name +
                    "' (expected identity | median | tv | cnn_pretrained | bm3d_external)");
}

Image equivariant_denoise(const Denoiser& d, const GroupAction& action, const Image& x) {
  return action.apply_inverse(d.denoise(action.apply(x)));
}

}  // namespace fei
