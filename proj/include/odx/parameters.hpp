#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "odx/tensor.hpp"

namespace odx {

struct Parameter {
  std::string name;
  DenseTensor value;
  DenseTensor grad;  // same dims as value
};

// Named, ordered collection of trainable tensors. Index order is the
// serialization order and the order gradients are merged in.
class ParameterSet {
 public:
  std::size_t add(std::string name, Dims dims);
  std::size_t add(std::string name, DenseTensor value);

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_.at(i); }
  const Parameter& operator[](std::size_t i) const { return params_.at(i); }

  std::size_t index_of(const std::string& name) const;
  const Parameter* find(const std::string& name) const;

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

  std::size_t scalar_count() const noexcept;
  void zero_grad();
  void scale_grad(double factor);
  bool grads_finite() const noexcept;

  // Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) for parameter `index`.
  void init_uniform(std::size_t index, std::size_t fan_in, std::mt19937_64& rng);

  // Copies values only; names and dims must agree.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<Parameter> params_;
};

}  // namespace odx
