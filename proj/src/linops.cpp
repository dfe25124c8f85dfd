#include "fei/linops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fei/errors.hpp"

namespace fei {

void LinearOperator::check_in(const Image& x, const char* op) const {
  if (shape_of(x) != in_shape()) {
    throw InputError(kind() + "::" + op + ": expected image " + in_shape().str() + ", got " +
                     shape_of(x).str());
  }
}

void LinearOperator::check_out(const Measurement& y, const char* op) const {
  if (shape_of(y) != out_shape()) {
    throw InputError(kind() + "::" + op + ": expected measurement " + out_shape().str() +
                     ", got " + shape_of(y).str());
  }
}

namespace {

Eigen::Map<const Eigen::VectorXd> flat(const Array2D& a) {
  return {a.data(), a.size()};
}

Array2D reshape(const Eigen::VectorXd& v, Shape s) {
  Array2D out(s.rows, s.cols);
  Eigen::Map<Eigen::VectorXd>(out.data(), out.size()) = v;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dense

DenseOperator::DenseOperator(Eigen::MatrixXd matrix, Shape in_shape)
    : matrix_(std::move(matrix)), in_shape_(in_shape) {
  if (!matrix_.allFinite()) throw InputError("dense operator: matrix has non-finite entries");
  if (in_shape_.size() != matrix_.cols()) {
    throw InputError("dense operator: image shape " + in_shape_.str() + " does not match " +
                     std::to_string(matrix_.cols()) + " columns");
  }
  pseudo_inverse_ = matrix_.completeOrthogonalDecomposition().pseudoInverse();
}

Measurement DenseOperator::apply(const Image& x) const {
  check_in(x, "apply");
  return reshape(matrix_ * flat(x), out_shape());
}

Image DenseOperator::adjoint(const Measurement& y) const {
  check_out(y, "adjoint");
  return reshape(matrix_.transpose() * flat(y), in_shape_);
}

Image DenseOperator::pinv(const Measurement& y) const {
  check_out(y, "pinv");
  return reshape(pseudo_inverse_ * flat(y), in_shape_);
}

Measurement DenseOperator::pinv_adjoint(const Image& x) const {
  check_in(x, "pinv_adjoint");
  return reshape(pseudo_inverse_.transpose() * flat(x), out_shape());
}

// ---------------------------------------------------------------------------
// Radon

RadonOperator::RadonOperator(int image_size, std::vector<double> angles_deg, double scale)
    : size_(image_size), scale_(scale), angles_(std::move(angles_deg)) {
  if (size_ < 8) throw ConfigError("radon: image_size must be >= 8");
  if (angles_.empty()) throw ConfigError("radon: at least one angle is required");
  if (!(scale_ > 0.0) || !std::isfinite(scale_)) throw ConfigError("radon: scale must be > 0");
  for (double a : angles_) {
    if (!(a >= 0.0 && a < 180.0)) throw ConfigError("radon: angles must lie in [0, 180)");
  }
  detectors_ = static_cast<int>(std::ceil(std::sqrt(2.0) * size_));
  // Ram-Lak kernel sampled at unit detector spacing.
  ramp_.assign(static_cast<std::size_t>(detectors_), 0.0);
  ramp_[0] = 0.25;
  for (int k = 1; k < detectors_; k += 2) {
    ramp_[static_cast<std::size_t>(k)] = -1.0 / (std::numbers::pi * std::numbers::pi * k * k);
  }
  std::vector<Eigen::Triplet<double>> entries;
  walk_rays([&](Eigen::Index bin, Eigen::Index pixel, double w) {
    entries.emplace_back(bin, pixel, w * scale_);
  });
  const Shape out = out_shape();
  forward_.resize(out.size(), in_shape().size());
  forward_.setFromTriplets(entries.begin(), entries.end());
  backward_ = forward_.transpose();
}

template <typename Visit>
void RadonOperator::walk_rays(Visit&& visit) const {
  const double center = 0.5 * (size_ - 1);
  const double half = 0.5 * (detectors_ - 1);
  const int samples = detectors_;
  for (std::size_t a = 0; a < angles_.size(); ++a) {
    const double phi = angles_[a] * std::numbers::pi / 180.0;
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    for (int j = 0; j < detectors_; ++j) {
      const double t = j - half;
      const Eigen::Index bin = static_cast<Eigen::Index>(a) * detectors_ + j;
      for (int k = 0; k < samples; ++k) {
        const double r = k - half;
        // x to the right, y up; pixel (row, col) = (center - y, center + x).
        const double col = center + t * c - r * s;
        const double row = center - (t * s + r * c);
        if (col <= -1.0 || row <= -1.0 || col >= size_ || row >= size_) continue;
        const int c0 = static_cast<int>(std::floor(col));
        const int r0 = static_cast<int>(std::floor(row));
        const double fc = col - c0;
        const double fr = row - r0;
        const double w[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
        const int rr[4] = {r0, r0, r0 + 1, r0 + 1};
        const int cc[4] = {c0, c0 + 1, c0, c0 + 1};
        for (int q = 0; q < 4; ++q) {
          if (rr[q] < 0 || cc[q] < 0 || rr[q] >= size_ || cc[q] >= size_) continue;
          visit(bin, static_cast<Eigen::Index>(rr[q]) * size_ + cc[q], w[q]);
        }
      }
    }
  }
}

Measurement RadonOperator::apply(const Image& x) const {
  check_in(x, "apply");
  Measurement y(out_shape().rows, out_shape().cols);
  Eigen::Map<Eigen::VectorXd>(y.data(), y.size()) =
      forward_ * Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
  return y;
}

Image RadonOperator::adjoint(const Measurement& y) const {
  check_out(y, "adjoint");
  Image x(size_, size_);
  Eigen::Map<Eigen::VectorXd>(x.data(), x.size()) =
      backward_ * Eigen::Map<const Eigen::VectorXd>(y.data(), y.size());
  return x;
}

Measurement RadonOperator::ramp_filter(const Measurement& sino) const {
  check_out(sino, "ramp_filter");
  Measurement out = zeros(out_shape());
  for (Eigen::Index a = 0; a < sino.rows(); ++a) {
    for (int j = 0; j < detectors_; ++j) {
      double acc = 0.0;
      for (int i = 0; i < detectors_; ++i) {
        acc += ramp_[static_cast<std::size_t>(std::abs(j - i))] * sino(a, i);
      }
      out(a, j) = acc;
    }
  }
  return out;
}

Image RadonOperator::pinv(const Measurement& y) const {
  const double weight = std::numbers::pi / static_cast<double>(angles_.size()) / (scale_ * scale_);
  return adjoint(ramp_filter(y)) * weight;
}

// The ramp kernel is even, so the filter matrix is symmetric.
Measurement RadonOperator::pinv_adjoint(const Image& x) const {
  const double weight = std::numbers::pi / static_cast<double>(angles_.size()) / (scale_ * scale_);
  return ramp_filter(apply(x)) * weight;
}

nlohmann::json RadonOperator::metadata() const {
  return {{"kind", "radon"},
          {"geometry", "parallel"},
          {"image_size", size_},
          {"detectors", detectors_},
          {"angles_deg", angles_},
          {"interpolation", "bilinear"},
          {"ray_step_px", 1.0},
          {"filter", "ram-lak"},
          {"scale", scale_}};
}

// ---------------------------------------------------------------------------
// Inpainting

InpaintingOperator::InpaintingOperator(Image mask) : mask_(std::move(mask)) {
  if (!((mask_ == 0.0) || (mask_ == 1.0)).all()) {
    throw ConfigError("inpainting: mask must be binary");
  }
}

Measurement InpaintingOperator::apply(const Image& x) const {
  check_in(x, "apply");
  return x * mask_;
}

Image InpaintingOperator::adjoint(const Measurement& y) const {
  check_out(y, "adjoint");
  return y * mask_;
}

Image InpaintingOperator::pinv(const Measurement& y) const { return adjoint(y); }

Measurement InpaintingOperator::pinv_adjoint(const Image& x) const { return apply(x); }

nlohmann::json InpaintingOperator::metadata() const {
  return {{"kind", "inpainting"}, {"shape", {mask_.rows(), mask_.cols()}},
          {"kept_fraction", mask_.mean()}};
}

// ---------------------------------------------------------------------------
// Factories

std::vector<double> uniform_angles(int num_angles) {
  if (num_angles <= 0) throw ConfigError("radon: num_angles must be positive");
  std::vector<double> out(static_cast<std::size_t>(num_angles));
  for (int i = 0; i < num_angles; ++i) out[static_cast<std::size_t>(i)] = 180.0 * i / num_angles;
  return out;
}

OperatorPtr make_dense_operator(const Eigen::MatrixXd& matrix) {
  return make_dense_operator(matrix, {matrix.cols(), 1});
}

OperatorPtr make_dense_operator(const Eigen::MatrixXd& matrix, Shape in_shape) {
  return std::make_shared<DenseOperator>(matrix, in_shape);
}

OperatorPtr make_gaussian_operator(Eigen::Index m, Shape in_shape, std::uint64_t seed) {
  if (m <= 0 || in_shape.size() <= 0) throw ConfigError("gaussian operator: empty dimensions");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
  Eigen::MatrixXd a(m, in_shape.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  return make_dense_operator(a, in_shape);
}

OperatorPtr make_radon_operator(int image_size, int num_angles, std::vector<double> angles_deg,
                                double scale) {
  if (image_size <= 0) throw ConfigError("radon: image_size must be positive");
  if (num_angles <= 0) throw ConfigError("radon: num_angles must be positive");
  if (angles_deg.empty()) angles_deg = uniform_angles(num_angles);
  return std::make_shared<RadonOperator>(image_size, std::move(angles_deg), scale);
}

OperatorPtr make_inpainting_operator(int image_size, const Image& mask) {
  if (mask.rows() != image_size || mask.cols() != image_size) {
    throw ConfigError("inpainting: mask shape " + shape_of(mask).str() +
                      " does not match image size " + std::to_string(image_size));
  }
  return std::make_shared<InpaintingOperator>(mask);
}

Eigen::MatrixXd materialize(const LinearOperator& op) {
  const Shape in = op.in_shape();
  Eigen::MatrixXd out(op.out_shape().size(), in.size());
  Image e = zeros(in);
  for (Eigen::Index j = 0; j < in.size(); ++j) {
    e.data()[j] = 1.0;
    const Measurement col = op.apply(e);
    out.col(j) = flat(col);
    e.data()[j] = 0.0;
  }
  return out;
}

Measurement measure(const MeasurementModel& model, const Image& x, std::uint64_t seed) {
  if (!model.op) throw InputError("measure: measurement model has no operator");
  if (!(model.noise_std >= 0.0)) throw InputError("measure: noise_std must be >= 0");
  Measurement y = model.op->apply(x);
  if (model.noise_std > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] += model.noise_std * normal(rng);
  }
  return y;
}

}  // namespace fei
