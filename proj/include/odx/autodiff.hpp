#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "odx/parameters.hpp"
#include "odx/tensor.hpp"

namespace odx {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const DenseTensor& value() const;
  const Dims& dims() const { return value().dims(); }
  std::size_t size() const { return value().size(); }
};

// Reverse-mode tape. Every recorded node owns (or references) its forward value;
// gradients are allocated lazily on the backward pass. Nodes only keep a
// backward closure when at least one input requires a gradient.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var constant(DenseTensor value);
  // No copy; `value` must outlive the tape.
  Var constant_ref(const DenseTensor& value);
  // Leaf bound to a parameter; repeated calls return the same node.
  Var parameter(ParameterSet& set, std::size_t index);

  Var record(DenseTensor value, std::initializer_list<Var> inputs, Backward backward);

  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  const DenseTensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.owned;
  }
  // Gradient buffer of node `id`, zero-initialised on first use.
  std::vector<double>& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  // Seeds d(root)/d(root) = 1 on a single-element node and propagates.
  void backward(Var root);
  // Adds scale * leaf gradients into the bound parameters' grad tensors.
  void accumulate_into(ParameterSet& set, double scale = 1.0) const;

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    DenseTensor owned;
    const DenseTensor* external = nullptr;
    std::vector<double> grad;
    Backward backward;
    bool requires_grad = false;
    const ParameterSet* set = nullptr;
    std::size_t param_index = 0;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<const ParameterSet*, std::vector<std::ptrdiff_t>>> param_nodes_;
};

inline const DenseTensor& Var::value() const { return tape->value(id); }

namespace ad {

Var matmul(Var a, Var b);
// W (m×n) · x (n) + b (m)
Var linear(Var w, Var x, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double c);
Var one_minus(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var softmax_lastdim(Var a);
Var reshape(Var a, Dims dims);
Var permute(Var a, std::vector<std::size_t> axes);
// Concatenate along the last axis; leading dims must agree.
Var concat_last(Var a, Var b);
Var sum_squares(Var a);
// sum over cells with mask(cell)=1 of ||truth(cell,:) - pred(cell,:)||^2.
// mask dims are pred dims without the last axis.
Var masked_squared_error(Var pred, const DenseTensor& truth, const DenseTensor& mask);
// trace(X^T L X) for X (n×f) and constant L (n×n).
Var dirichlet(Var x, const DenseTensor& laplacian);
// out(o,d,k) = sum_b r(o,b,k) * c(b,d,k)
Var bucket_product(Var r, Var c);
Var add_scalars(const std::vector<Var>& terms);

}  // namespace ad
}  // namespace odx
