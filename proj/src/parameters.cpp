#include "odx/parameters.hpp"

#include <algorithm>
#include <cmath>

#include "odx/error.hpp"

namespace odx {

std::size_t ParameterSet::add(std::string name, Dims dims) {
  DenseTensor value(std::move(dims));
  return add(std::move(name), std::move(value));
}

std::size_t ParameterSet::add(std::string name, DenseTensor value) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
  DenseTensor grad(value.dims());
  params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
  return params_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw ConfigError("no parameter named '" + name + "'");
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t ParameterSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

void ParameterSet::scale_grad(double factor) {
  for (auto& p : params_) {
    for (double& g : p.grad.values()) g *= factor;
  }
}

bool ParameterSet::grads_finite() const noexcept {
  return std::all_of(params_.begin(), params_.end(),
                     [](const Parameter& p) { return p.grad.all_finite(); });
}

void ParameterSet::init_uniform(std::size_t index, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : params_.at(index).value.values()) v = dist(rng);
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  if (other.size() != size()) throw CompatibilityError("parameter sets differ in size");
  for (std::size_t i = 0; i < size(); ++i) {
    if (params_[i].name != other.params_[i].name) {
      throw CompatibilityError("parameter '" + params_[i].name + "' vs '" + other.params_[i].name + "'");
    }
    require_same_dims(params_[i].value, other.params_[i].value, params_[i].name.c_str());
    params_[i].value = other.params_[i].value;
  }
}

}  // namespace odx
