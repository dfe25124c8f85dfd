#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

namespace fei {

/// Row-major 2-D array used for images, sinograms and flat measurements.
using Array2D = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Image = Array2D;
using Measurement = Array2D;

struct Shape {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const { return std::to_string(rows) + "x" + std::to_string(cols); }
};

inline Shape shape_of(const Array2D& a) { return {a.rows(), a.cols()}; }

inline double dot(const Array2D& a, const Array2D& b) { return (a * b).sum(); }

inline double norm(const Array2D& a) { return std::sqrt(a.square().sum()); }

inline Array2D zeros(Shape s) { return Array2D::Zero(s.rows, s.cols); }

}  // namespace fei
