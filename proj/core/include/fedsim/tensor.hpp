#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fedsim {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool empty() const noexcept { return rows == 0; }

  // Copies the listed rows, in order, into a new matrix.
  Matrix select_rows(std::span<const std::size_t> indices) const;
  void append_row(std::span<const double> values);

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Flat model parameter vector. Layout is defined by the owning ModelSpec.
struct ParamVector {
  std::vector<double> values;

  ParamVector() = default;
  explicit ParamVector(std::size_t n, double fill = 0.0) : values(n, fill) {}
  explicit ParamVector(std::vector<double> v) : values(std::move(v)) {}
  ParamVector(std::initializer_list<double> v) : values(v) {}

  std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  std::span<const double> span() const noexcept { return values; }

  bool all_finite() const noexcept;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

double dot(const ParamVector& a, const ParamVector& b);
double norm(const ParamVector& a);
double squared_distance(const ParamVector& a, const ParamVector& b);
// y += alpha * x
void axpy(double alpha, const ParamVector& x, ParamVector& y);
ParamVector operator-(const ParamVector& a, const ParamVector& b);

}  // namespace fedsim
