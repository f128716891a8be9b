#include "odx/graph_ops.hpp"

#include <limits>

#include "odx/error.hpp"

namespace odx::ad {
namespace {

struct GraphShape {
  std::size_t batch = 1;
  std::size_t nodes = 0;
  std::size_t channels = 0;
};

GraphShape graph_shape(const DenseTensor& x, const char* what) {
  if (x.rank() < 2) throw ShapeError(std::string(what) + ": expected (..., nodes, channels), got " +
                                     dims_to_string(x.dims()));
  GraphShape g;
  g.nodes = x.dims()[x.rank() - 2];
  g.channels = x.dims()[x.rank() - 1];
  for (std::size_t i = 0; i + 2 < x.rank(); ++i) g.batch *= x.dim(i);
  return g;
}

void require_laplacian(const DenseTensor& lhat, std::size_t n, const char* what) {
  if (lhat.rank() != 2 || lhat.dim(0) != n || lhat.dim(1) != n) {
    throw ShapeError(std::string(what) + ": graph has " + std::to_string(n) + " nodes but Lhat is " +
                     dims_to_string(lhat.dims()));
  }
}

// out_b = Lhat * in_b for each (n × c) batch slice.
void apply_lhat(const DenseTensor& lhat, const double* in, double* out, const GraphShape& g) {
  const std::size_t n = g.nodes, c = g.channels;
  const double* L = lhat.data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    const double* xin = in + b * n * c;
    double* xo = out + b * n * c;
    std::fill(xo, xo + n * c, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) {
        const double lik = L[i * n + k];
        if (lik == 0.0) continue;
        for (std::size_t j = 0; j < c; ++j) xo[i * c + j] += lik * xin[k * c + j];
      }
  }
}

std::vector<std::vector<double>> chebyshev_basis(const DenseTensor& lhat, const DenseTensor& x,
                                                 const GraphShape& g, std::size_t order) {
  std::vector<std::vector<double>> z(order);
  const std::size_t total = x.size();
  z[0].assign(x.data(), x.data() + total);
  if (order > 1) {
    z[1].resize(total);
    apply_lhat(lhat, z[0].data(), z[1].data(), g);
  }
  for (std::size_t s = 2; s < order; ++s) {
    z[s].resize(total);
    apply_lhat(lhat, z[s - 1].data(), z[s].data(), g);
    for (std::size_t i = 0; i < total; ++i) z[s][i] = 2.0 * z[s][i] - z[s - 2][i];
  }
  return z;
}

// Clenshaw recurrence for sum_s T_s(Lhat) y_s (Lhat symmetric, so this is the
// adjoint of the basis map).
std::vector<double> chebyshev_adjoint(const DenseTensor& lhat, const std::vector<std::vector<double>>& y,
                                      const GraphShape& g) {
  const std::size_t order = y.size();
  const std::size_t total = y[0].size();
  if (order == 1) return y[0];
  std::vector<double> b1(total, 0.0), b2(total, 0.0), tmp(total, 0.0);
  for (std::size_t d = order - 1; d >= 1; --d) {
    apply_lhat(lhat, b1.data(), tmp.data(), g);
    for (std::size_t i = 0; i < total; ++i) tmp[i] = y[d][i] + 2.0 * tmp[i] - b2[i];
    b2.swap(b1);
    b1.swap(tmp);
  }
  apply_lhat(lhat, b1.data(), tmp.data(), g);
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = y[0][i] + tmp[i] - b2[i];
  return out;
}

}  // namespace

Var gather_slots(Var x, const std::vector<std::ptrdiff_t>& slot_to_node) {
  const GraphShape g = graph_shape(x.value(), "gather_slots");
  for (auto s : slot_to_node)
    if (s >= static_cast<std::ptrdiff_t>(g.nodes)) throw ShapeError("gather_slots: slot refers past the node count");
  const std::size_t ns = slot_to_node.size(), c = g.channels;
  Dims dims = x.dims();
  dims[dims.size() - 2] = ns;
  DenseTensor out(dims);
  const auto& X = x.value();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t s = 0; s < ns; ++s) {
      if (slot_to_node[s] < 0) continue;
      const std::size_t v = static_cast<std::size_t>(slot_to_node[s]);
      std::copy_n(X.data() + (b * g.nodes + v) * c, c, out.data() + (b * ns + s) * c);
    }
  return x.tape->record(std::move(out), {x}, [x, slot_to_node, g, ns](Tape& t, std::size_t self) {
    const auto& go = t.grad(self);
    auto& gx = t.grad(x.id);
    const std::size_t c = g.channels;
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t s = 0; s < ns; ++s) {
        if (slot_to_node[s] < 0) continue;
        const std::size_t v = static_cast<std::size_t>(slot_to_node[s]);
        for (std::size_t j = 0; j < c; ++j) gx[(b * g.nodes + v) * c + j] += go[(b * ns + s) * c + j];
      }
  });
}

Var chebyshev_filter_sum(Var x, const DenseTensor& lhat, Var filters, Var bias) {
  const GraphShape g = graph_shape(x.value(), "chebyshev_filter_sum");
  require_laplacian(lhat, g.nodes, "chebyshev_filter_sum");
  const auto& G = filters.value();
  if (G.rank() != 3 || (G.dim(1) != g.channels && G.dim(1) != 1) || G.dim(2) == 0) {
    throw ShapeError("chebyshev_filter_sum: filters " + dims_to_string(G.dims()) + " for " +
                     std::to_string(g.channels) + " input channels");
  }
  const std::size_t q_out = G.dim(0), cg = G.dim(1), order = G.dim(2);
  if (bias.dims() != Dims{g.nodes, q_out}) {
    throw ShapeError("chebyshev_filter_sum: bias " + dims_to_string(bias.dims()) + ", expected " +
                     dims_to_string({g.nodes, q_out}));
  }
  auto z = chebyshev_basis(lhat, x.value(), g, order);
  const std::size_t n = g.nodes, c = g.channels;
  const auto& Bv = bias.value();
  Dims dims = x.dims();
  dims.back() = q_out;
  DenseTensor out(dims);
  std::vector<char> active(g.batch * n * c * q_out, 0);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t zi = (b * n + v) * c + ch;
        const std::size_t gc = (cg == 1) ? 0 : ch;
        for (std::size_t q = 0; q < q_out; ++q) {
          const double* gq = G.data() + (q * cg + gc) * order;
          double pre = 0.0;
          for (std::size_t s = 0; s < order; ++s) pre += z[s][zi] * gq[s];
          pre += Bv[v * q_out + q];
          if (pre > 0.0) {
            out[(b * n + v) * q_out + q] += pre;
            active[zi * q_out + q] = 1;
          }
        }
      }
  return x.tape->record(
      std::move(out), {x, filters, bias},
      [x, filters, bias, &lhat, g, q_out, cg, order, z = std::move(z), active = std::move(active)](
          Tape& t, std::size_t self) {
        const auto& go = t.grad(self);
        const std::size_t n = g.nodes, c = g.channels;
        const auto& G = t.value(filters.id);
        const bool need_x = t.requires_grad(x), need_g = t.requires_grad(filters),
                   need_b = t.requires_grad(bias);
        std::vector<std::vector<double>> gz;
        if (need_x) gz.assign(order, std::vector<double>(z[0].size(), 0.0));
        std::vector<double>* gG = need_g ? &t.grad(filters.id) : nullptr;
        std::vector<double>* gB = need_b ? &t.grad(bias.id) : nullptr;
        for (std::size_t b = 0; b < g.batch; ++b)
          for (std::size_t v = 0; v < n; ++v)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t zi = (b * n + v) * c + ch;
              const std::size_t gc = (cg == 1) ? 0 : ch;
              for (std::size_t q = 0; q < q_out; ++q) {
                if (!active[zi * q_out + q]) continue;
                const double gp = go[(b * n + v) * q_out + q];
                if (gp == 0.0) continue;
                const std::size_t base = (q * cg + gc) * order;
                for (std::size_t s = 0; s < order; ++s) {
                  if (gG) (*gG)[base + s] += gp * z[s][zi];
                  if (need_x) gz[s][zi] += gp * G[base + s];
                }
                if (gB) (*gB)[v * q_out + q] += gp;
              }
            }
        if (need_x) {
          auto back = chebyshev_adjoint(lhat, gz, g);
          auto& gx = t.grad(x.id);
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += back[i];
        }
      });
}

Var chebyshev_conv(Var x, const DenseTensor& lhat, Var filters, Var bias) {
  const GraphShape g = graph_shape(x.value(), "chebyshev_conv");
  require_laplacian(lhat, g.nodes, "chebyshev_conv");
  const auto& G = filters.value();
  if (G.rank() != 3 || G.dim(1) != g.channels || G.dim(2) == 0) {
    throw ShapeError("chebyshev_conv: filters " + dims_to_string(G.dims()) + " for " +
                     std::to_string(g.channels) + " input channels");
  }
  const std::size_t f_out = G.dim(0), order = G.dim(2), c = g.channels, n = g.nodes;
  if (bias.dims() != Dims{n, f_out}) {
    throw ShapeError("chebyshev_conv: bias " + dims_to_string(bias.dims()) + ", expected " +
                     dims_to_string({n, f_out}));
  }
  auto z = chebyshev_basis(lhat, x.value(), g, order);
  const auto& Bv = bias.value();
  Dims dims = x.dims();
  dims.back() = f_out;
  DenseTensor out(dims);
  const std::size_t row = c * order;
  std::vector<double> zc(row);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t zi = (b * n + v) * c;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t s = 0; s < order; ++s) zc[ch * order + s] = z[s][zi + ch];
      for (std::size_t f = 0; f < f_out; ++f) {
        const double* gf = G.data() + f * row;
        double acc = 0.0;
        for (std::size_t i = 0; i < row; ++i) acc += gf[i] * zc[i];
        out[(b * n + v) * f_out + f] = acc + Bv[v * f_out + f];
      }
    }
  return x.tape->record(
      std::move(out), {x, filters, bias},
      [x, filters, bias, &lhat, g, f_out, order, z = std::move(z)](Tape& t, std::size_t self) {
        const auto& go = t.grad(self);
        const std::size_t n = g.nodes, c = g.channels, row = c * order;
        const auto& G = t.value(filters.id);
        const bool need_x = t.requires_grad(x);
        std::vector<double>* gG = t.requires_grad(filters) ? &t.grad(filters.id) : nullptr;
        std::vector<double>* gB = t.requires_grad(bias) ? &t.grad(bias.id) : nullptr;
        std::vector<std::vector<double>> gz;
        if (need_x) gz.assign(order, std::vector<double>(z[0].size(), 0.0));
        std::vector<double> zc(row), gzc(row);
        for (std::size_t b = 0; b < g.batch; ++b)
          for (std::size_t v = 0; v < n; ++v) {
            const std::size_t zi = (b * n + v) * c;
            for (std::size_t ch = 0; ch < c; ++ch)
              for (std::size_t s = 0; s < order; ++s) zc[ch * order + s] = z[s][zi + ch];
            std::fill(gzc.begin(), gzc.end(), 0.0);
            for (std::size_t f = 0; f < f_out; ++f) {
              const double gv = go[(b * n + v) * f_out + f];
              if (gv == 0.0) continue;
              if (gB) (*gB)[v * f_out + f] += gv;
              if (gG) {
                double* gf = gG->data() + f * row;
                for (std::size_t i = 0; i < row; ++i) gf[i] += gv * zc[i];
              }
              if (need_x) {
                const double* gf = G.data() + f * row;
                for (std::size_t i = 0; i < row; ++i) gzc[i] += gv * gf[i];
              }
            }
            if (need_x)
              for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t s = 0; s < order; ++s) gz[s][zi + ch] += gzc[ch * order + s];
          }
        if (need_x) {
          auto back = chebyshev_adjoint(lhat, gz, g);
          auto& gx = t.grad(x.id);
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += back[i];
        }
      });
}

Var graph_pool(Var x, std::size_t pool, const std::vector<bool>& dummy, PoolMode mode) {
  const GraphShape g = graph_shape(x.value(), "graph_pool");
  if (pool == 0 || g.nodes % pool != 0) {
    throw ShapeError("graph_pool: " + std::to_string(g.nodes) + " nodes not divisible by pool size " +
                     std::to_string(pool));
  }
  if (dummy.size() != g.nodes) throw ShapeError("graph_pool: dummy mask length differs from node count");
  const std::size_t groups = g.nodes / pool, c = g.channels;
  Dims dims = x.dims();
  dims[dims.size() - 2] = groups;
  DenseTensor out(dims);
  const auto& X = x.value();
  // For max: winning node per output entry (-1 when the group is all dummies).
  std::vector<std::ptrdiff_t> winner;
  std::vector<double> inv_count(groups, 0.0);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    std::size_t real = 0;
    for (std::size_t i = 0; i < pool; ++i) real += !dummy[gi * pool + i];
    inv_count[gi] = real ? 1.0 / static_cast<double>(real) : 0.0;
  }
  if (mode == PoolMode::max) winner.assign(out.size(), -1);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t gi = 0; gi < groups; ++gi)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t oi = (b * groups + gi) * c + ch;
        if (mode == PoolMode::max) {
          double best = -std::numeric_limits<double>::infinity();
          for (std::size_t i = 0; i < pool; ++i) {
            const std::size_t v = gi * pool + i;
            if (dummy[v]) continue;
            const double val = X[(b * g.nodes + v) * c + ch];
            if (val > best) {
              best = val;
              winner[oi] = static_cast<std::ptrdiff_t>(v);
            }
          }
          out[oi] = winner[oi] < 0 ? 0.0 : best;
        } else {
          double s = 0.0;
          for (std::size_t i = 0; i < pool; ++i) {
            const std::size_t v = gi * pool + i;
            if (!dummy[v]) s += X[(b * g.nodes + v) * c + ch];
          }
          out[oi] = s * inv_count[gi];
        }
      }
  return x.tape->record(std::move(out), {x},
                        [x, g, pool, groups, mode, dummy, winner = std::move(winner),
                         inv_count = std::move(inv_count)](Tape& t, std::size_t self) {
                          const auto& go = t.grad(self);
                          auto& gx = t.grad(x.id);
                          const std::size_t c = g.channels;
                          for (std::size_t b = 0; b < g.batch; ++b)
                            for (std::size_t gi = 0; gi < groups; ++gi)
                              for (std::size_t ch = 0; ch < c; ++ch) {
                                const std::size_t oi = (b * groups + gi) * c + ch;
                                if (mode == PoolMode::max) {
                                  if (winner[oi] >= 0)
                                    gx[(b * g.nodes + static_cast<std::size_t>(winner[oi])) * c + ch] += go[oi];
                                } else {
                                  for (std::size_t i = 0; i < pool; ++i) {
                                    const std::size_t v = gi * pool + i;
                                    if (!dummy[v]) gx[(b * g.nodes + v) * c + ch] += go[oi] * inv_count[gi];
                                  }
                                }
                              }
                        });
}

}  // namespace odx::ad
