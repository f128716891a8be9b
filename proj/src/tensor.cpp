#include "odx/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "odx/error.hpp"

namespace odx {

std::size_t dims_product(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string dims_to_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

DenseTensor::DenseTensor(Dims dims, double fill)
    : dims_(std::move(dims)), values_(dims_product(dims_), fill) {}

DenseTensor::DenseTensor(Dims dims, std::vector<double> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
  if (dims_product(dims_) != values_.size()) {
    throw ShapeError("tensor dims " + dims_to_string(dims_) + " do not match " +
                     std::to_string(values_.size()) + " values");
  }
}

DenseTensor DenseTensor::vector(std::initializer_list<double> values) {
  return DenseTensor({values.size()}, std::vector<double>(values));
}

DenseTensor DenseTensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(m * n);
  for (const auto& row : rows) {
    if (row.size() != n) throw ShapeError("ragged matrix literal");
    v.insert(v.end(), row.begin(), row.end());
  }
  return DenseTensor({m, n}, std::move(v));
}

DenseTensor DenseTensor::identity(std::size_t n) {
  DenseTensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t[i * n + i] = 1.0;
  return t;
}

std::size_t DenseTensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != dims_.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) + " for tensor " +
                     dims_to_string(dims_));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= dims_[axis]) {
      throw ShapeError("index " + std::to_string(i) + " out of range on axis " +
                       std::to_string(axis) + " of " + dims_to_string(dims_));
    }
    off = off * dims_[axis] + i;
    ++axis;
  }
  return off;
}

DenseTensor DenseTensor::reshaped(Dims dims) const {
  if (dims_product(dims) != size()) {
    throw ShapeError("cannot reshape " + dims_to_string(dims_) + " to " + dims_to_string(dims));
  }
  return DenseTensor(std::move(dims), values_);
}

bool DenseTensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void DenseTensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void require_same_dims(const DenseTensor& a, const DenseTensor& b, const char* what) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(what) + ": dims " + dims_to_string(a.dims()) + " vs " +
                     dims_to_string(b.dims()));
  }
}

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 operands, got " + dims_to_string(a.dims()) + " and " +
                     dims_to_string(b.dims()));
  }
  const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(1);
  if (b.dim(0) != n) {
    throw ShapeError("matmul inner dims differ: " + dims_to_string(a.dims()) + " x " +
                     dims_to_string(b.dims()));
  }
  DenseTensor c({m, p});
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  // i-k-j order: each C(i,j) still accumulates in increasing k from 0.
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = A[i * n + k];
      const double* brow = B + k * p;
      double* crow = C + i * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

DenseTensor transpose(const DenseTensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose expects rank 2, got " + dims_to_string(a.dims()));
  return permute(a, {1, 0});
}

DenseTensor softmax_lastdim(const DenseTensor& t) {
  if (t.rank() == 0 || t.dims().back() == 0) {
    throw ShapeError("softmax_lastdim needs a non-empty last dim, got " + dims_to_string(t.dims()));
  }
  DenseTensor out(t.dims());
  const std::size_t k = t.dims().back();
  const std::size_t rows = t.size() / k;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = t.data() + r * k;
    double* o = out.data() + r * k;
    const double mx = *std::max_element(in, in + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < k; ++j) o[j] /= sum;
  }
  return out;
}

double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

DenseTensor elementwise(Elementwise kind, const DenseTensor& a, const DenseTensor* b) {
  DenseTensor out(a.dims());
  switch (kind) {
    case Elementwise::relu:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
      break;
    case Elementwise::sigmoid:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = sigmoid(a[i]);
      break;
    case Elementwise::tanh:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a[i]);
      break;
    case Elementwise::hadamard:
      if (b == nullptr) throw ShapeError("hadamard needs a second operand");
      require_same_dims(a, *b, "hadamard");
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * (*b)[i];
      break;
  }
  return out;
}

DenseTensor permute(const DenseTensor& a, const std::vector<std::size_t>& axes) {
  const std::size_t r = a.rank();
  if (axes.size() != r) throw ShapeError("permute axes rank mismatch for " + dims_to_string(a.dims()));
  std::vector<bool> seen(r, false);
  Dims out_dims(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (axes[i] >= r || seen[axes[i]]) throw ShapeError("permute axes are not a permutation");
    seen[axes[i]] = true;
    out_dims[i] = a.dim(axes[i]);
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.dim(i);
  DenseTensor out(out_dims);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += idx[i] * in_strides[axes[i]];
    out[flat] = a[src];
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_dims[i]) break;
      idx[i] = 0;
    }
  }
  return out;
}

}  // namespace odx
