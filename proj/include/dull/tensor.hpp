#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

namespace dull {

// Dense row-major double tensor. Small by design: the nets here are
// desk-scale and everything runs in 64-bit for reproducibility and
// finite-difference friendliness.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(count(shape)), 0.0);
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static std::int64_t count(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // 2-D accessors (row-major).
  double& at(int r, int c) {
    return data[static_cast<std::size_t>(r) * dim(1) + c];
  }
  double at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * dim(1) + c];
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool operator==(const Tensor& o) const {
    return shape == o.shape && data == o.data;
  }
};

}  // namespace dull
