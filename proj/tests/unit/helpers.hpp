#pragma once

#include <random>

#include "fei/types.hpp"

namespace fei::test {

inline Image random_image(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Image x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = n(rng);
  return x;
}

inline Image random_uniform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = u(rng);
  return x;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index m, Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Eigen::MatrixXd a(m, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = d(rng);
  return a;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline double rel_err(const Image& a, const Image& b) { return (a - b).matrix().norm() / b.matrix().norm(); }

inline bool bit_equal(const Image& a, const Image& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a == b).all();
}

}  // namespace fei::test
