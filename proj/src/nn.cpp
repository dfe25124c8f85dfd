#include "fei/nn.hpp"

#include <cmath>
#include <limits>

#include "fei/errors.hpp"

namespace fei::nn {

Eigen::Index ParameterStore::allocate(Eigen::Index n) {
  const Eigen::Index offset = values_.size();
  values_.conservativeResize(offset + n);
  values_.tail(n).setZero();
  grads_ = Eigen::VectorXd::Zero(values_.size());
  return offset;
}

Eigen::Index ParameterStore::allocate_buffer(Eigen::Index n, double fill) {
  const Eigen::Index offset = buffers_.size();
  buffers_.conservativeResize(offset + n);
  buffers_.tail(n).setConstant(fill);
  return offset;
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(ParameterStore& store, int in_channels, int out_channels, int kernel)
    : cin_(in_channels), cout_(out_channels), kernel_(kernel) {
  if (kernel % 2 == 0) throw ConfigError("conv2d: kernel size must be odd");
  weight_ = store.allocate(static_cast<Eigen::Index>(cout_) * cin_ * kernel_ * kernel_);
  bias_ = store.allocate(cout_);
}

void Conv2d::init_he(ParameterStore& store, std::mt19937_64& rng) const {
  const Eigen::Index fan_in = static_cast<Eigen::Index>(cin_) * kernel_ * kernel_;
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  auto w = store.values().segment(weight_, fan_in * cout_);
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = normal(rng);
  store.values().segment(bias_, cout_).setZero();
}

void Conv2d::init_zero(ParameterStore& store) const {
  store.values().segment(weight_, static_cast<Eigen::Index>(cout_) * cin_ * kernel_ * kernel_).setZero();
  store.values().segment(bias_, cout_).setZero();
}

namespace {

RowMatrix im2col(const Tensor& x, int k) {
  const int pad = k / 2;
  const int h = x.height;
  const int w = x.width;
  RowMatrix col = RowMatrix::Zero(static_cast<Eigen::Index>(x.channels) * k * k, x.plane());
  for (int ci = 0; ci < x.channels; ++ci) {
    const double* src = x.data.row(ci).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* dst = col.row((static_cast<Eigen::Index>(ci) * k + ky) * k + kx).data();
        const int dy = ky - pad;
        const int dx = kx - pad;
        const int c_lo = std::max(0, -dx);
        const int c_hi = std::min(w, w - dx);
        for (int r = 0; r < h; ++r) {
          const int rs = r + dy;
          if (rs < 0 || rs >= h) continue;
          const double* srow = src + static_cast<std::ptrdiff_t>(rs) * w + dx;
          double* drow = dst + static_cast<std::ptrdiff_t>(r) * w;
          for (int c = c_lo; c < c_hi; ++c) drow[c] = srow[c];
        }
      }
    }
  }
  return col;
}

Tensor col2im(const RowMatrix& col, int channels, int h, int w, int k) {
  const int pad = k / 2;
  Tensor out(channels, h, w);
  for (int ci = 0; ci < channels; ++ci) {
    double* dst = out.data.row(ci).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* src = col.row((static_cast<Eigen::Index>(ci) * k + ky) * k + kx).data();
        const int dy = ky - pad;
        const int dx = kx - pad;
        const int c_lo = std::max(0, -dx);
        const int c_hi = std::min(w, w - dx);
        for (int r = 0; r < h; ++r) {
          const int rs = r + dy;
          if (rs < 0 || rs >= h) continue;
          double* drow = dst + static_cast<std::ptrdiff_t>(rs) * w + dx;
          const double* srow = src + static_cast<std::ptrdiff_t>(r) * w;
          for (int c = c_lo; c < c_hi; ++c) drow[c] += srow[c];
        }
      }
    }
  }
  return out;
}

}  // namespace

Tensor Conv2d::forward(const ParameterStore& store, const Tensor& x, ConvCache* cache) const {
  if (x.channels != cin_) {
    throw InputError("conv2d: expected " + std::to_string(cin_) + " channels, got " +
                     std::to_string(x.channels));
  }
  const Eigen::Index fan_in = static_cast<Eigen::Index>(cin_) * kernel_ * kernel_;
  Eigen::Map<const RowMatrix> weight(store.values().data() + weight_, cout_, fan_in);
  Eigen::Map<const Eigen::VectorXd> bias(store.values().data() + bias_, cout_);

  Tensor y(cout_, x.height, x.width);
  if (kernel_ == 1) {
    y.data.noalias() = weight * x.data;
    if (cache) cache->columns = x.data;
  } else {
    RowMatrix col = im2col(x, kernel_);
    y.data.noalias() = weight * col;
    if (cache) cache->columns = std::move(col);
  }
  y.data.colwise() += bias;
  if (cache) {
    cache->height = x.height;
    cache->width = x.width;
  }
  return y;
}

Tensor Conv2d::backward(ParameterStore& store, const ConvCache& cache, const Tensor& dy) const {
  const Eigen::Index fan_in = static_cast<Eigen::Index>(cin_) * kernel_ * kernel_;
  Eigen::Map<const RowMatrix> weight(store.values().data() + weight_, cout_, fan_in);
  Eigen::Map<RowMatrix> dweight(store.grads().data() + weight_, cout_, fan_in);
  Eigen::Map<Eigen::VectorXd> dbias(store.grads().data() + bias_, cout_);

  dweight.noalias() += dy.data * cache.columns.transpose();
  dbias += dy.data.rowwise().sum();
  RowMatrix dcol = weight.transpose() * dy.data;
  if (kernel_ == 1) {
    Tensor dx(cin_, cache.height, cache.width);
    dx.data = std::move(dcol);
    return dx;
  }
  return col2im(dcol, cin_, cache.height, cache.width, kernel_);
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(ParameterStore& store, int channels) : channels_(channels) {
  gamma_ = store.allocate(channels);
  beta_ = store.allocate(channels);
  running_mean_ = store.allocate_buffer(channels, 0.0);
  running_var_ = store.allocate_buffer(channels, 1.0);
  init(store);
}

void BatchNorm2d::init(ParameterStore& store) const {
  store.values().segment(gamma_, channels_).setOnes();
  store.values().segment(beta_, channels_).setZero();
  store.buffers().segment(running_mean_, channels_).setZero();
  store.buffers().segment(running_var_, channels_).setOnes();
}

Tensor BatchNorm2d::forward(ParameterStore& store, const Tensor& x, Pass pass,
                            BatchNormCache* cache) const {
  const auto n = static_cast<double>(x.plane());
  auto gamma = store.values().segment(gamma_, channels_);
  auto beta = store.values().segment(beta_, channels_);
  auto running_mean = store.buffers().segment(running_mean_, channels_);
  auto running_var = store.buffers().segment(running_var_, channels_);

  Eigen::VectorXd mean(channels_);
  Eigen::VectorXd var(channels_);
  if (pass == Pass::train) {
    mean = x.data.rowwise().mean();
    for (int c = 0; c < channels_; ++c) {
      var[c] = (x.data.row(c).array() - mean[c]).square().sum() / n;
    }
    const double unbiased = n > 1 ? n / (n - 1) : 1.0;
    running_mean = (1 - kMomentum) * running_mean + kMomentum * mean;
    running_var = (1 - kMomentum) * running_var + kMomentum * unbiased * var;
  } else {
    mean = running_mean;
    var = running_var;
  }

  Eigen::VectorXd inv_std = (var.array() + kEpsilon).rsqrt();
  RowMatrix normalized = (x.data.colwise() - mean).array().colwise() * inv_std.array();
  Tensor y(channels_, x.height, x.width);
  y.data = (normalized.array().colwise() * gamma.array()).colwise() + beta.array();
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->pass = pass;
  }
  return y;
}

Tensor BatchNorm2d::backward(ParameterStore& store, const BatchNormCache& cache,
                             const Tensor& dy) const {
  auto gamma = store.values().segment(gamma_, channels_);
  store.grads().segment(gamma_, channels_) +=
      (dy.data.array() * cache.normalized.array()).rowwise().sum().matrix();
  store.grads().segment(beta_, channels_) += dy.data.rowwise().sum();

  Tensor dx(channels_, dy.height, dy.width);
  const auto n = static_cast<double>(dy.plane());
  for (int c = 0; c < channels_; ++c) {
    const double scale = gamma[c] * cache.inv_std[c];
    if (cache.pass == Pass::eval) {
      dx.data.row(c) = dy.data.row(c) * scale;
      continue;
    }
    const double sum_dy = dy.data.row(c).sum();
    const double sum_dy_xhat = dy.data.row(c).dot(cache.normalized.row(c));
    dx.data.row(c) = (scale / n) * (n * dy.data.row(c).array() - sum_dy -
                                    cache.normalized.row(c).array() * sum_dy_xhat)
                                       .matrix();
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Elementwise and resampling ops

Tensor relu(const Tensor& x, std::vector<std::uint8_t>* mask) {
  Tensor y = x;
  if (mask) mask->assign(static_cast<std::size_t>(x.data.size()), 0);
  double* d = y.data.data();
  for (Eigen::Index i = 0; i < y.data.size(); ++i) {
    if (d[i] > 0.0) {
      if (mask) (*mask)[static_cast<std::size_t>(i)] = 1;
    } else {
      d[i] = 0.0;
    }
  }
  return y;
}

Tensor relu_backward(const std::vector<std::uint8_t>& mask, const Tensor& dy) {
  Tensor dx = dy;
  double* d = dx.data.data();
  for (Eigen::Index i = 0; i < dx.data.size(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) d[i] = 0.0;
  }
  return dx;
}

Tensor max_pool2(const Tensor& x, std::vector<Eigen::Index>* argmax) {
  const int h = x.height / 2;
  const int w = x.width / 2;
  Tensor y(x.channels, h, w);
  if (argmax) argmax->assign(static_cast<std::size_t>(y.data.size()), 0);
  for (int c = 0; c < x.channels; ++c) {
    for (int r = 0; r < h; ++r) {
      for (int q = 0; q < w; ++q) {
        double best = -std::numeric_limits<double>::infinity();
        Eigen::Index best_idx = 0;
        for (int dr = 0; dr < 2; ++dr) {
          for (int dq = 0; dq < 2; ++dq) {
            const Eigen::Index idx = static_cast<Eigen::Index>(2 * r + dr) * x.width + 2 * q + dq;
            const double v = x.data(c, idx);
            if (v > best) {
              best = v;
              best_idx = idx;
            }
          }
        }
        const Eigen::Index o = static_cast<Eigen::Index>(r) * w + q;
        y.data(c, o) = best;
        if (argmax) (*argmax)[static_cast<std::size_t>(c * y.plane() + o)] = best_idx;
      }
    }
  }
  return y;
}

Tensor max_pool2_backward(const std::vector<Eigen::Index>& argmax, const Tensor& dy, int height,
                          int width) {
  Tensor dx(dy.channels, height, width);
  for (int c = 0; c < dy.channels; ++c) {
    for (Eigen::Index o = 0; o < dy.plane(); ++o) {
      dx.data(c, argmax[static_cast<std::size_t>(c * dy.plane() + o)]) += dy.data(c, o);
    }
  }
  return dx;
}

Tensor upsample2(const Tensor& x) {
  Tensor y(x.channels, 2 * x.height, 2 * x.width);
  for (int c = 0; c < x.channels; ++c) {
    for (int r = 0; r < y.height; ++r) {
      for (int q = 0; q < y.width; ++q) {
        y.data(c, static_cast<Eigen::Index>(r) * y.width + q) =
            x.data(c, static_cast<Eigen::Index>(r / 2) * x.width + q / 2);
      }
    }
  }
  return y;
}

Tensor upsample2_backward(const Tensor& dy) {
  Tensor dx(dy.channels, dy.height / 2, dy.width / 2);
  for (int c = 0; c < dy.channels; ++c) {
    for (int r = 0; r < dy.height; ++r) {
      for (int q = 0; q < dy.width; ++q) {
        dx.data(c, static_cast<Eigen::Index>(r / 2) * dx.width + q / 2) +=
            dy.data(c, static_cast<Eigen::Index>(r) * dy.width + q);
      }
    }
  }
  return dx;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.height != b.height || a.width != b.width) throw InputError("concat: spatial mismatch");
  Tensor y(a.channels + b.channels, a.height, a.width);
  y.data.topRows(a.channels) = a.data;
  y.data.bottomRows(b.channels) = b.data;
  return y;
}

std::pair<Tensor, Tensor> split(const Tensor& x, int first_channels) {
  Tensor a(first_channels, x.height, x.width);
  Tensor b(x.channels - first_channels, x.height, x.width);
  a.data = x.data.topRows(first_channels);
  b.data = x.data.bottomRows(x.channels - first_channels);
  return {std::move(a), std::move(b)};
}

}  // namespace fei::nn
