#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "json.hpp"

#include "fei/types.hpp"

namespace fei {

/// Linear forward model A with its adjoint and an approximate pseudo-inverse.
///
/// Implementations are immutable after construction, so a single instance can
/// be shared between threads. `pinv_adjoint` is the exact transpose of `pinv`;
/// trainers need it to backpropagate through G(y) = net(pinv(y)).
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;

  virtual std::string kind() const = 0;
  virtual Shape in_shape() const = 0;
  virtual Shape out_shape() const = 0;

  virtual Measurement apply(const Image& x) const = 0;
  virtual Image adjoint(const Measurement& y) const = 0;
  virtual Image pinv(const Measurement& y) const = 0;
  virtual Measurement pinv_adjoint(const Image& x) const = 0;

  /// Discretization details (detector count, filter, ...) for run manifests.
  virtual nlohmann::json metadata() const { return {{"kind", kind()}}; }

 protected:
  void check_in(const Image& x, const char* op) const;
  void check_out(const Measurement& y, const char* op) const;
};

using OperatorPtr = std::shared_ptr<const LinearOperator>;

/// Dense matrix operator acting on images flattened in row-major order.
class DenseOperator final : public LinearOperator {
 public:
  DenseOperator(Eigen::MatrixXd matrix, Shape in_shape);

  std::string kind() const override { return "dense"; }
  Shape in_shape() const override { return in_shape_; }
  Shape out_shape() const override { return {matrix_.rows(), 1}; }

  Measurement apply(const Image& x) const override;
  Image adjoint(const Measurement& y) const override;
  Image pinv(const Measurement& y) const override;
  Measurement pinv_adjoint(const Image& x) const override;

  const Eigen::MatrixXd& matrix() const { return matrix_; }

 private:
  Eigen::MatrixXd matrix_;
  Eigen::MatrixXd pseudo_inverse_;
  Shape in_shape_;
};

/// Parallel-beam discrete Radon transform.
///
/// Rays are sampled at unit (pixel) spacing with bilinear interpolation and
/// the detector has ceil(sqrt(2) * N) unit-spaced bins centered on the image
/// center. The adjoint is the exact transpose (unfiltered back-projection).
/// `pinv` is filtered back-projection with a Ram-Lak ramp filter.
/// All outputs are multiplied by `scale`; pinv compensates with 1/scale.
class RadonOperator final : public LinearOperator {
 public:
  RadonOperator(int image_size, std::vector<double> angles_deg, double scale = 1.0);

  std::string kind() const override { return "radon"; }
  Shape in_shape() const override { return {size_, size_}; }
  Shape out_shape() const override {
    return {static_cast<Eigen::Index>(angles_.size()), detectors_};
  }

  Measurement apply(const Image& x) const override;
  Image adjoint(const Measurement& y) const override;
  Image pinv(const Measurement& y) const override;
  Measurement pinv_adjoint(const Image& x) const override;
  nlohmann::json metadata() const override;

  const std::vector<double>& angles() const { return angles_; }
  int detector_count() const { return detectors_; }
  double scale() const { return scale_; }

  /// Ramp-filters every sinogram row (zero-padded linear convolution).
  Measurement ramp_filter(const Measurement& sino) const;

 private:
  template <typename Visit>
  void walk_rays(Visit&& visit) const;

  int size_;
  int detectors_;
  double scale_;
  std::vector<double> angles_;
  std::vector<double> ramp_;  // ramp_[k] = h(k), k >= 0
  // Ray weights (times scale) cached as sparse matrices for fast products.
  Eigen::SparseMatrix<double, Eigen::RowMajor> forward_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> backward_;
};

/// Pixel mask: keeps pixels where mask == 1 and zeroes the rest.
class InpaintingOperator final : public LinearOperator {
 public:
  explicit InpaintingOperator(Image mask);

  std::string kind() const override { return "inpainting"; }
  Shape in_shape() const override { return shape_of(mask_); }
  Shape out_shape() const override { return shape_of(mask_); }

  Measurement apply(const Image& x) const override;
  Image adjoint(const Measurement& y) const override;
  Image pinv(const Measurement& y) const override;
  Measurement pinv_adjoint(const Image& x) const override;
  nlohmann::json metadata() const override;

  const Image& mask() const { return mask_; }

 private:
  Image mask_;
};

std::vector<double> uniform_angles(int num_angles);

OperatorPtr make_dense_operator(const Eigen::MatrixXd& matrix);
OperatorPtr make_dense_operator(const Eigen::MatrixXd& matrix, Shape in_shape);
/// Compressive-sensing operator with i.i.d. N(0, 1/m) entries.
OperatorPtr make_gaussian_operator(Eigen::Index m, Shape in_shape, std::uint64_t seed);
/// Empty `angles_deg` selects `num_angles` uniformly spaced angles in [0, 180).
OperatorPtr make_radon_operator(int image_size, int num_angles,
                                std::vector<double> angles_deg = {}, double scale = 1.0);
OperatorPtr make_inpainting_operator(int image_size, const Image& mask);

/// Dense matrix of any operator, built column by column (test scale only).
Eigen::MatrixXd materialize(const LinearOperator& op);

struct MeasurementModel {
  OperatorPtr op;
  double noise_std = 0.0;
};

/// y = A x + noise_std * N(0, 1), deterministic in (x, seed).
Measurement measure(const MeasurementModel& model, const Image& x, std::uint64_t seed);

}  // namespace fei
