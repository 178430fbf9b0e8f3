#include "mirror/array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace mirror {

namespace {

std::size_t extent_product(const Array::Shape& shape) {
  if (shape.empty()) throw ShapeError("array: empty shape");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("array: zero extent");
  }
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Array::Array(Shape shape, double fill)
    : shape_(std::move(shape)), values_(extent_product(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (values_.size() != extent_product(shape_)) {
    throw ShapeError("array: value count " + std::to_string(values_.size()) +
                     " does not match shape " + shape_string());
  }
}

Array Array::row(std::initializer_list<double> v) {
  return Array({1, v.size()}, std::vector<double>(v));
}

std::size_t Array::rows() const {
  if (shape_.size() < 2) return 1;
  return values_.size() / shape_.back();
}

std::size_t Array::cols() const { return shape_.empty() ? 0 : shape_.back(); }

bool Array::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Array::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

std::string Array::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

}  // namespace mirror
