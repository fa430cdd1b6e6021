#include "fedsim/tensor.hpp"

#include <cmath>

#include "fedsim/error.hpp"

namespace fedsim {

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) throw ShapeError("row index out of range");
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void Matrix::append_row(std::span<const double> values) {
  if (rows == 0 && cols == 0) cols = values.size();
  if (values.size() != cols) throw ShapeError("appended row has wrong width");
  data.insert(data.end(), values.begin(), values.end());
  ++rows;
}

bool ParamVector::all_finite() const noexcept {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {
void require_same(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size())
    throw ShapeError("parameter vectors differ in length (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
}
}  // namespace

double dot(const ParamVector& a, const ParamVector& b) {
  require_same(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const ParamVector& a) { return std::sqrt(dot(a, a)); }

double squared_distance(const ParamVector& a, const ParamVector& b) {
  require_same(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy(double alpha, const ParamVector& x, ParamVector& y) {
  require_same(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

ParamVector operator-(const ParamVector& a, const ParamVector& b) {
  require_same(a, b);
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

}  // namespace fedsim
