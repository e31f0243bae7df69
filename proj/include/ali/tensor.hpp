#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ali {

// Dense row-major tensor of 64-bit floats. Invariant: numel(shape) == data.size().
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size())
      throw std::invalid_argument("Tensor: shape/data size mismatch");
  }

  static std::size_t numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

  double scalar() const {
    if (data.size() != 1)
      throw std::invalid_argument("Tensor::scalar: tensor has " + std::to_string(data.size()) +
                                  " elements");
    return data[0];
  }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  bool is_scalar() const { return data.size() == 1; }

  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape[i]);
    return s + ")";
  }
};

// C = A(n x k) * B(k x m). C must be preset to the right size; it is overwritten.
inline void matmul_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k || c.rows() != n || c.cols() != m)
    throw std::invalid_argument("matmul_nn: shape mismatch " + a.shape_str() + " * " +
                                b.shape_str() + " -> " + c.shape_str());
  std::fill(c.data.begin(), c.data.end(), 0.0);
  const double* __restrict ap = a.data.data();
  const double* __restrict bp = b.data.data();
  double* __restrict cp = c.data.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double av = ap[i * k + l];
      const double* __restrict brow = bp + l * m;
      double* __restrict crow = cp + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// C = A(n x k) * B^T where B is (m x k).
inline void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (b.cols() != k || c.rows() != n || c.cols() != m)
    throw std::invalid_argument("matmul_nt: shape mismatch " + a.shape_str() + " * " +
                                b.shape_str() + "^T -> " + c.shape_str());
  const double* __restrict ap = a.data.data();
  const double* __restrict bp = b.data.data();
  double* __restrict cp = c.data.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* __restrict arow = ap + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* __restrict brow = bp + j * k;
      double s = 0.0;
      for (std::size_t l = 0; l < k; ++l) s += arow[l] * brow[l];
      cp[i * m + j] = s;
    }
  }
}

// C = A^T * B where A is (n x k), B is (n x m); C is (k x m).
inline void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != n || c.rows() != k || c.cols() != m)
    throw std::invalid_argument("matmul_tn: shape mismatch " + a.shape_str() + "^T * " +
                                b.shape_str() + " -> " + c.shape_str());
  std::fill(c.data.begin(), c.data.end(), 0.0);
  const double* __restrict ap = a.data.data();
  const double* __restrict bp = b.data.data();
  double* __restrict cp = c.data.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* __restrict arow = ap + i * k;
    const double* __restrict brow = bp + i * m;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      double* __restrict crow = cp + l * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

inline double squared_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v * v;
  return s;
}

inline double sq_dist_rows(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  const std::size_t d = a.cols();
  double s = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const double diff = a.at(i, c) - b.at(j, c);
    s += diff * diff;
  }
  return s;
}

// Euclidean distance between rows, overflow-free: the largest coordinate
// difference is factored out so the squares stay in range even for
// magnitudes near the double limit.
inline double dist_rows(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  const std::size_t d = a.cols();
  double m = 0.0;
  for (std::size_t c = 0; c < d; ++c) m = std::max(m, std::abs(a.at(i, c) - b.at(j, c)));
  if (m == 0.0 || std::isinf(m)) return m;
  double s = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const double r = (a.at(i, c) - b.at(j, c)) / m;
    s += r * r;
  }
  return m * std::sqrt(s);
}

}  // namespace ali
