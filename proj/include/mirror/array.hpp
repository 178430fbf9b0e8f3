#pragma once

#include <Eigen/Core>
#include <Eigen/StdVector>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mirror {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major array of doubles. Rank 1 arrays behave as a single row
// when viewed as a matrix. Storage is always SIMD-aligned so that Eigen takes
// the same vectorization path, and produces the same rounding, on every run.
class Array {
 public:
  using Shape = std::vector<std::size_t>;

  Array() = default;
  explicit Array(Shape shape, double fill = 0.0);
  Array(Shape shape, std::vector<double> values);

  static Array zeros(std::size_t rows, std::size_t cols) { return Array({rows, cols}); }
  static Array scalar(double v) { return Array({1, 1}, v); }
  static Array row(std::initializer_list<double> v);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  MatrixMap matrix() { return {values_.data(), Eigen::Index(rows()), Eigen::Index(cols())}; }
  ConstMatrixMap matrix() const {
    return {values_.data(), Eigen::Index(rows()), Eigen::Index(cols())};
  }

  bool same_shape(const Array& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double v);

  std::string shape_string() const;

 private:
  Shape shape_;
  std::vector<double, Eigen::aligned_allocator<double>> values_;
};

}  // namespace mirror
