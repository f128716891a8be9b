#include "odx/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "odx/error.hpp"

namespace odx {

Var Tape::constant(DenseTensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant_ref(const DenseTensor& value) {
  Node n;
  n.external = &value;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(ParameterSet& set, std::size_t index) {
  auto it = std::find_if(param_nodes_.begin(), param_nodes_.end(),
                         [&](const auto& e) { return e.first == &set; });
  if (it == param_nodes_.end()) {
    param_nodes_.emplace_back(&set, std::vector<std::ptrdiff_t>(set.size(), -1));
    it = std::prev(param_nodes_.end());
  }
  auto& slot = it->second.at(index);
  if (slot >= 0) return Var{this, static_cast<std::size_t>(slot)};
  Node n;
  n.external = &set[index].value;
  n.requires_grad = true;
  n.set = &set;
  n.param_index = index;
  nodes_.push_back(std::move(n));
  slot = static_cast<std::ptrdiff_t>(nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(DenseTensor value, std::initializer_list<Var> inputs, Backward backward) {
  Node n;
  n.owned = std::move(value);
  for (const Var& v : inputs) {
    if (nodes_[v.id].requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

std::vector<double>& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(value(id).size(), 0.0);
  return n.grad;
}

void Tape::backward(Var root) {
  if (value(root.id).size() != 1) {
    throw ShapeError("backward root must be a scalar, got " + dims_to_string(value(root.id).dims()));
  }
  if (!nodes_[root.id].requires_grad) return;
  grad(root.id)[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, i);
  }
}

void Tape::accumulate_into(ParameterSet& set, double scale) const {
  for (const Node& n : nodes_) {
    if (n.set != &set || n.grad.empty()) continue;
    auto g = set[n.param_index].grad.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * n.grad[i];
  }
}

namespace ad {
namespace {

bool needs(const Tape& t, Var v) { return t.requires_grad(v); }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  DenseTensor out = odx::matmul(a.value(), b.value());
  const std::size_t m = a.dims()[0], n = a.dims()[1], p = b.dims()[1];
  return t.record(std::move(out), {a, b}, [a, b, m, n, p](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const double* A = t.value(a.id).data();
    const double* B = t.value(b.id).data();
    if (needs(t, a)) {
      auto& ga = t.grad(a.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < n; ++k) {
          double s = 0.0;
          for (std::size_t j = 0; j < p; ++j) s += g[i * p + j] * B[k * p + j];
          ga[i * n + k] += s;
        }
    }
    if (needs(t, b)) {
      auto& gb = t.grad(b.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < n; ++k) {
          const double aik = A[i * n + k];
          for (std::size_t j = 0; j < p; ++j) gb[k * p + j] += aik * g[i * p + j];
        }
    }
  });
}

Var linear(Var w, Var x, Var b) {
  Tape& t = *w.tape;
  const auto& W = w.value();
  const auto& X = x.value();
  const auto& Bv = b.value();
  if (W.rank() != 2 || X.rank() != 1 || Bv.rank() != 1 || W.dim(1) != X.dim(0) ||
      W.dim(0) != Bv.dim(0)) {
    throw ShapeError("linear: weight " + dims_to_string(W.dims()) + ", input " +
                     dims_to_string(X.dims()) + ", bias " + dims_to_string(Bv.dims()));
  }
  const std::size_t m = W.dim(0), n = W.dim(1);
  DenseTensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = W.data() + i * n;
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += row[k] * X[k];
    out[i] = s + Bv[i];
  }
  return t.record(std::move(out), {w, x, b}, [w, x, b, m, n](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (needs(t, w)) {
      auto& gw = t.grad(w.id);
      const double* X = t.value(x.id).data();
      for (std::size_t i = 0; i < m; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        double* row = gw.data() + i * n;
        for (std::size_t k = 0; k < n; ++k) row[k] += gi * X[k];
      }
    }
    if (needs(t, x)) {
      auto& gx = t.grad(x.id);
      const double* W = t.value(w.id).data();
      for (std::size_t i = 0; i < m; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        const double* row = W + i * n;
        for (std::size_t k = 0; k < n; ++k) gx[k] += gi * row[k];
      }
    }
    if (needs(t, b)) {
      auto& gb = t.grad(b.id);
      for (std::size_t i = 0; i < m; ++i) gb[i] += g[i];
    }
  });
}

Var add(Var a, Var b) {
  require_same_dims(a.value(), b.value(), "add");
  DenseTensor out(a.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (Var v : {a, b}) {
      if (!needs(t, v)) continue;
      auto& gv = t.grad(v.id);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_dims(a.value(), b.value(), "sub");
  DenseTensor out(a.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (needs(t, a)) {
      auto& ga = t.grad(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (needs(t, b)) {
      auto& gb = t.grad(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var hadamard(Var a, Var b) {
  DenseTensor out = elementwise(Elementwise::hadamard, a.value(), &b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (needs(t, a)) {
      auto& ga = t.grad(a.id);
      const auto& B = t.value(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    }
    if (needs(t, b)) {
      auto& gb = t.grad(b.id);
      const auto& A = t.value(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
    }
  });
}

Var scale(Var a, double c) {
  DenseTensor out(a.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a.value()[i];
  return a.tape->record(std::move(out), {a}, [a, c](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var one_minus(Var a) {
  DenseTensor out(a.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - a.value()[i];
  return a.tape->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
  });
}

Var relu(Var a) {
  DenseTensor out = elementwise(Elementwise::relu, a.value());
  return a.tape->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& A = t.value(a.id);
    auto& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (A[i] > 0.0) ga[i] += g[i];
  });
}

Var sigmoid(Var a) {
  DenseTensor out = elementwise(Elementwise::sigmoid, a.value());
  return a.tape->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh(Var a) {
  DenseTensor out = elementwise(Elementwise::tanh, a.value());
  return a.tape->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var softmax_lastdim(Var a) {
  DenseTensor out = odx::softmax_lastdim(a.value());
  const std::size_t k = a.dims().back();
  return a.tape->record(std::move(out), {a}, [a, k](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& ga = t.grad(a.id);
    for (std::size_t r = 0; r < g.size() / k; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * y[r * k + j];
      for (std::size_t j = 0; j < k; ++j) ga[r * k + j] += y[r * k + j] * (g[r * k + j] - dot);
    }
  });
}

Var reshape(Var a, Dims dims) {
  DenseTensor out = a.value().reshaped(std::move(dims));
  return a.tape->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var permute(Var a, std::vector<std::size_t> axes) {
  DenseTensor out = odx::permute(a.value(), axes);
  std::vector<std::size_t> inverse(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) inverse[axes[i]] = i;
  const Dims out_dims = out.dims();
  return a.tape->record(std::move(out), {a}, [a, inverse, out_dims](Tape& t, std::size_t self) {
    DenseTensor g(out_dims, t.grad(self));
    DenseTensor back = odx::permute(g, inverse);
    auto& ga = t.grad(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += back[i];
  });
}

Var concat_last(Var a, Var b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.rank() != B.rank() || A.rank() == 0 ||
      !std::equal(A.dims().begin(), A.dims().end() - 1, B.dims().begin())) {
    throw ShapeError("concat_last: " + dims_to_string(A.dims()) + " vs " + dims_to_string(B.dims()));
  }
  const std::size_t fa = A.dims().back(), fb = B.dims().back();
  const std::size_t rows = fa ? A.size() / fa : B.size() / fb;
  Dims dims = A.dims();
  dims.back() = fa + fb;
  DenseTensor out(dims);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(A.data() + r * fa, fa, out.data() + r * (fa + fb));
    std::copy_n(B.data() + r * fb, fb, out.data() + r * (fa + fb) + fa);
  }
  return a.tape->record(std::move(out), {a, b}, [a, b, fa, fb, rows](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (needs(t, a)) {
      auto& ga = t.grad(a.id);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < fa; ++j) ga[r * fa + j] += g[r * (fa + fb) + j];
    }
    if (needs(t, b)) {
      auto& gb = t.grad(b.id);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < fb; ++j) gb[r * fb + j] += g[r * (fa + fb) + fa + j];
    }
  });
}

Var sum_squares(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  return a.tape->record(DenseTensor({1}, {s}), {a}, [a](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const auto& A = t.value(a.id);
    auto& ga = t.grad(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * g * A[i];
  });
}

Var masked_squared_error(Var pred, const DenseTensor& truth, const DenseTensor& mask) {
  require_same_dims(pred.value(), truth, "masked_squared_error");
  const std::size_t k = truth.dims().back();
  if (mask.size() * k != truth.size()) {
    throw ShapeError("masked_squared_error: mask " + dims_to_string(mask.dims()) + " vs tensor " +
                     dims_to_string(truth.dims()));
  }
  std::vector<double> diff(truth.size(), 0.0);
  double s = 0.0;
  const auto& P = pred.value();
  for (std::size_t c = 0; c < mask.size(); ++c) {
    if (mask[c] == 0.0) continue;
    for (std::size_t j = 0; j < k; ++j) {
      const double d = P[c * k + j] - truth[c * k + j];
      diff[c * k + j] = mask[c] * d;
      s += mask[c] * d * d;
    }
  }
  return pred.tape->record(DenseTensor({1}, {s}), {pred},
                           [pred, diff = std::move(diff)](Tape& t, std::size_t self) {
                             const double g = t.grad(self)[0];
                             auto& gp = t.grad(pred.id);
                             for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += 2.0 * g * diff[i];
                           });
}

Var dirichlet(Var x, const DenseTensor& laplacian) {
  const auto& X = x.value();
  if (X.rank() != 2 || laplacian.rank() != 2 || laplacian.dim(0) != X.dim(0) ||
      laplacian.dim(1) != X.dim(0)) {
    throw ShapeError("dirichlet: features " + dims_to_string(X.dims()) + ", laplacian " +
                     dims_to_string(laplacian.dims()));
  }
  DenseTensor lx = odx::matmul(laplacian, X);
  double s = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) s += X[i] * lx[i];
  DenseTensor sym(laplacian.dims());
  const std::size_t n = laplacian.dim(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sym[i * n + j] = laplacian[i * n + j] + laplacian[j * n + i];
  return x.tape->record(DenseTensor({1}, {s}), {x}, [x, sym = std::move(sym)](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    DenseTensor grad_x = odx::matmul(sym, t.value(x.id));
    auto& gx = t.grad(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * grad_x[i];
  });
}

Var bucket_product(Var r, Var c) {
  const auto& R = r.value();
  const auto& C = c.value();
  if (R.rank() != 3 || C.rank() != 3 || R.dim(1) != C.dim(0) || R.dim(2) != C.dim(2)) {
    throw ShapeError("bucket_product: R " + dims_to_string(R.dims()) + ", C " + dims_to_string(C.dims()));
  }
  const std::size_t n = R.dim(0), beta = R.dim(1), k = R.dim(2), m = C.dim(1);
  DenseTensor out({n, m, k});
  for (std::size_t o = 0; o < n; ++o)
    for (std::size_t d = 0; d < m; ++d)
      for (std::size_t b = 0; b < k; ++b) {
        double s = 0.0;
        for (std::size_t q = 0; q < beta; ++q) s += R[(o * beta + q) * k + b] * C[(q * m + d) * k + b];
        out[(o * m + d) * k + b] = s;
      }
  return r.tape->record(std::move(out), {r, c}, [r, c, n, beta, k, m](Tape& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& R = t.value(r.id);
    const auto& C = t.value(c.id);
    const bool gr_needed = needs(t, r), gc_needed = needs(t, c);
    std::vector<double>* gr = gr_needed ? &t.grad(r.id) : nullptr;
    std::vector<double>* gc = gc_needed ? &t.grad(c.id) : nullptr;
    for (std::size_t o = 0; o < n; ++o)
      for (std::size_t d = 0; d < m; ++d)
        for (std::size_t b = 0; b < k; ++b) {
          const double gv = g[(o * m + d) * k + b];
          for (std::size_t q = 0; q < beta; ++q) {
            if (gr) (*gr)[(o * beta + q) * k + b] += gv * C[(q * m + d) * k + b];
            if (gc) (*gc)[(q * m + d) * k + b] += gv * R[(o * beta + q) * k + b];
          }
        }
  });
}

Var add_scalars(const std::vector<Var>& terms) {
  if (terms.empty()) throw ShapeError("add_scalars: no terms");
  Var acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

}  // namespace ad
}  // namespace odx
