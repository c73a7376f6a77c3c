#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace csepose::diff {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);

// Dense row-major array of doubles. Scalars are shape {1}.
struct NdArray {
  Shape shape;
  std::vector<double> data;

  NdArray() = default;
  NdArray(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != static_cast<std::int64_t>(data.size())) {
      throw std::invalid_argument("NdArray: shape " + shape_str(shape) + " does not match data size " +
                                  std::to_string(data.size()));
    }
  }

  static std::int64_t numel_of(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) {
      if (d <= 0) throw std::invalid_argument("NdArray: nonpositive dim in " + shape_str(s));
      n *= d;
    }
    return n;
  }

  static NdArray zeros(Shape s) {
    std::int64_t n = numel_of(s);
    return NdArray(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  }
  static NdArray full(Shape s, double v) {
    std::int64_t n = numel_of(s);
    return NdArray(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v));
  }
  static NdArray scalar(double v) { return NdArray({1}, {v}); }
  static NdArray from_vector(std::vector<double> v) {
    auto n = static_cast<std::int64_t>(v.size());
    return NdArray({n}, std::move(v));
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t dim(int axis) const { return shape.at(static_cast<std::size_t>(axis)); }

  // Row count / row width treating the array as 2-D (leading axis x rest).
  std::int64_t rows0() const { return shape.empty() ? 0 : shape[0]; }
  std::int64_t rowlen0() const { return shape.empty() ? 0 : numel() / shape[0]; }

  double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  double& at2(std::int64_t r, std::int64_t c) { return data[static_cast<std::size_t>(r * shape[1] + c)]; }
  double at2(std::int64_t r, std::int64_t c) const { return data[static_cast<std::size_t>(r * shape[1] + c)]; }

  bool all_finite() const;
  bool same_shape(const NdArray& o) const { return shape == o.shape; }
};

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

// 2-D Eigen view with explicit dimensions (caller picks the factorization).
inline EMap mat_view(NdArray& a, std::int64_t r, std::int64_t c) { return EMap(a.data.data(), r, c); }
inline ECMap mat_view(const NdArray& a, std::int64_t r, std::int64_t c) {
  return ECMap(a.data.data(), r, c);
}
inline EMap mat2(NdArray& a) {
  if (a.rank() != 2) throw std::invalid_argument("mat2: array is not 2-D: " + shape_str(a.shape));
  return mat_view(a, a.shape[0], a.shape[1]);
}
inline ECMap mat2(const NdArray& a) {
  if (a.rank() != 2) throw std::invalid_argument("mat2: array is not 2-D: " + shape_str(a.shape));
  return mat_view(a, a.shape[0], a.shape[1]);
}

}  // namespace csepose::diff
