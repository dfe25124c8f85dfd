#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace fei::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Single-sample feature map: one row per channel, each row a row-major plane.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  RowMatrix data;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w), data(RowMatrix::Zero(c, h * w)) {}

  Eigen::Index plane() const { return static_cast<Eigen::Index>(height) * width; }
};

/// Train passes normalize with batch statistics; eval passes use running ones.
enum class Pass { train, eval };

/// Flat storage for trainable parameters, their gradients and
/// non-trainable buffers (batch-norm running statistics).
class ParameterStore {
 public:
  Eigen::Index allocate(Eigen::Index n);
  Eigen::Index allocate_buffer(Eigen::Index n, double fill);

  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& grads() { return grads_; }
  const Eigen::VectorXd& grads() const { return grads_; }
  Eigen::VectorXd& buffers() { return buffers_; }
  const Eigen::VectorXd& buffers() const { return buffers_; }

  void zero_grad() { grads_.setZero(); }

 private:
  Eigen::VectorXd values_;
  Eigen::VectorXd grads_;
  Eigen::VectorXd buffers_;
};

struct ConvCache {
  RowMatrix columns;  // im2col of the input (or the input itself for 1x1)
  int height = 0;
  int width = 0;
};

/// Stride-1 convolution with zero "same" padding and a bias.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore& store, int in_channels, int out_channels, int kernel);

  void init_he(ParameterStore& store, std::mt19937_64& rng) const;
  void init_zero(ParameterStore& store) const;

  Tensor forward(const ParameterStore& store, const Tensor& x, ConvCache* cache) const;
  Tensor backward(ParameterStore& store, const ConvCache& cache, const Tensor& dy) const;

  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }

 private:
  int cin_ = 0;
  int cout_ = 0;
  int kernel_ = 0;
  Eigen::Index weight_ = 0;
  Eigen::Index bias_ = 0;
};

struct BatchNormCache {
  RowMatrix normalized;
  Eigen::VectorXd inv_std;
  Pass pass = Pass::train;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParameterStore& store, int channels);

  void init(ParameterStore& store) const;

  Tensor forward(ParameterStore& store, const Tensor& x, Pass pass, BatchNormCache* cache) const;
  Tensor backward(ParameterStore& store, const BatchNormCache& cache, const Tensor& dy) const;

  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  int channels_ = 0;
  Eigen::Index gamma_ = 0;
  Eigen::Index beta_ = 0;
  Eigen::Index running_mean_ = 0;
  Eigen::Index running_var_ = 0;
};

Tensor relu(const Tensor& x, std::vector<std::uint8_t>* mask);
Tensor relu_backward(const std::vector<std::uint8_t>& mask, const Tensor& dy);

/// 2x2 max pooling, stride 2 (odd trailing rows/cols are dropped).
Tensor max_pool2(const Tensor& x, std::vector<Eigen::Index>* argmax);
Tensor max_pool2_backward(const std::vector<Eigen::Index>& argmax, const Tensor& dy, int height,
                          int width);

/// Nearest-neighbour 2x upsampling.
Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& dy);

Tensor concat(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split(const Tensor& x, int first_channels);

}  // namespace fei::nn
