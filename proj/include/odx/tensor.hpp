#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace odx {

using Dims = std::vector<std::size_t>;

std::size_t dims_product(const Dims& dims);
std::string dims_to_string(const Dims& dims);

// Dense row-major tensor of doubles. Element (i,j,k) of an a×b×c tensor lives
// at flat index i*b*c + j*c + k.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Dims dims, double fill = 0.0);
  DenseTensor(Dims dims, std::vector<double> values);

  static DenseTensor vector(std::initializer_list<double> values);
  static DenseTensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static DenseTensor identity(std::size_t n);

  const Dims& dims() const noexcept { return dims_; }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  std::size_t offset(std::initializer_list<std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index) { return values_[offset(index)]; }
  double at(std::initializer_list<std::size_t> index) const { return values_[offset(index)]; }

  // Same values, new dims; product must agree.
  DenseTensor reshaped(Dims dims) const;

  bool all_finite() const noexcept;
  void fill(double v);

  friend bool operator==(const DenseTensor& a, const DenseTensor& b) {
    return a.dims_ == b.dims_ && a.values_ == b.values_;
  }

 private:
  Dims dims_;
  std::vector<double> values_;
};

// Throws ShapeError naming both shapes when they differ.
void require_same_dims(const DenseTensor& a, const DenseTensor& b, const char* what);

// Plain (non-differentiable) kernels. The autodiff tape reuses these for
// forward values.
DenseTensor matmul(const DenseTensor& a, const DenseTensor& b);
DenseTensor transpose(const DenseTensor& a);
DenseTensor softmax_lastdim(const DenseTensor& t);

enum class Elementwise { relu, sigmoid, tanh, hadamard };
DenseTensor elementwise(Elementwise kind, const DenseTensor& a, const DenseTensor* b = nullptr);

DenseTensor permute(const DenseTensor& a, const std::vector<std::size_t>& axes);
double sigmoid(double x) noexcept;

}  // namespace odx
