#include "odx/graph.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <string>

#include "csv_util.hpp"
#include "odx/error.hpp"

namespace odx {

double distance(const Point2& a, const Point2& b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

DenseTensor adjacency_from_edges(std::size_t n, std::span<const Edge> edges) {
  DenseTensor a({n, n});
  for (const auto& [u, v] : edges) {
    if (u >= n || v >= n) {
      throw ShapeError("edge (" + std::to_string(u) + "," + std::to_string(v) + ") outside " +
                       std::to_string(n) + " regions");
    }
    if (u == v) continue;
    a[u * n + v] = 1.0;
    a[v * n + u] = 1.0;
  }
  return a;
}

std::vector<Edge> edges_from_adjacency(const DenseTensor& adjacency) {
  const std::size_t n = adjacency.dim(0);
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (adjacency[u * n + v] != 0.0) edges.emplace_back(u, v);
  return edges;
}

DenseTensor build_proximity(const DenseTensor& adjacency, std::span<const Point2> centroids, int alpha,
                            double sigma) {
  if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1)) {
    throw ShapeError("adjacency must be square, got " + dims_to_string(adjacency.dims()));
  }
  const std::size_t n = adjacency.dim(0);
  if (centroids.size() != n) {
    throw ShapeError("adjacency has " + std::to_string(n) + " regions but " +
                     std::to_string(centroids.size()) + " centroids");
  }
  if (alpha < 1) throw DomainError("proximity: alpha must be >= 1");
  if (!(sigma > 0.0)) throw DomainError("proximity: sigma must be > 0");

  std::vector<std::vector<std::size_t>> nbrs(n);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v)
      if (u != v && (adjacency[u * n + v] != 0.0 || adjacency[v * n + u] != 0.0)) nbrs[u].push_back(v);

  DenseTensor w({n, n});
  const double s2 = sigma * sigma;
  std::vector<int> hops(n);
  for (std::size_t u = 0; u < n; ++u) {
    std::fill(hops.begin(), hops.end(), -1);
    std::queue<std::size_t> frontier;
    hops[u] = 0;
    frontier.push(u);
    while (!frontier.empty()) {
      const std::size_t x = frontier.front();
      frontier.pop();
      if (hops[x] == alpha) continue;
      for (std::size_t y : nbrs[x]) {
        if (hops[y] < 0) {
          hops[y] = hops[x] + 1;
          frontier.push(y);
        }
      }
    }
    // Fill the upper triangle and mirror so W == W^T exactly.
    for (std::size_t v = u; v < n; ++v) {
      if (hops[v] < 0) continue;
      const double x = distance(centroids[u], centroids[v]);
      const double val = (u == v) ? 1.0 : std::exp(-(x * x) / s2);
      w[u * n + v] = val;
      w[v * n + u] = val;
    }
  }
  return w;
}

RegionGraph make_region_graph(DenseTensor adjacency, std::vector<Point2> centroids, int alpha, double sigma) {
  RegionGraph g;
  g.n = centroids.size();
  g.proximity = build_proximity(adjacency, centroids, alpha, sigma);
  g.adjacency = std::move(adjacency);
  g.centroids = std::move(centroids);
  g.alpha = alpha;
  g.sigma = sigma;
  return g;
}

DenseTensor laplacian(const DenseTensor& w) {
  if (w.rank() != 2 || w.dim(0) != w.dim(1)) throw ShapeError("laplacian: W must be square");
  const std::size_t n = w.dim(0);
  DenseTensor l({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += w[i * n + j];
    for (std::size_t j = 0; j < n; ++j) l[i * n + j] = -w[i * n + j];
    l[i * n + i] += deg;
  }
  return l;
}

PowerIterationResult max_eigenvalue(const DenseTensor& sym, double tolerance, std::size_t max_iterations) {
  const std::size_t n = sym.dim(0);
  PowerIterationResult res;
  if (n == 0) return res;
  // Deterministic start vector with no symmetry that matches the constant null vector.
  std::vector<double> v(n), next(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.37 * std::sin(1.3 * static_cast<double>(i) + 0.5);
  auto normalize = [](std::vector<double>& x) {
    double s = 0.0;
    for (double e : x) s += e * e;
    s = std::sqrt(s);
    if (s > 0.0)
      for (double& e : x) e /= s;
    return s;
  };
  normalize(v);
  double lambda = 0.0;
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += sym[i * n + j] * v[j];
      next[i] = s;
    }
    double rq = 0.0;
    for (std::size_t i = 0; i < n; ++i) rq += v[i] * next[i];
    const double norm = normalize(next);
    res.iterations = it;
    if (norm == 0.0) {
      res.eigenvalue = 0.0;
      res.converged = true;
      return res;
    }
    v.swap(next);
    if (it > 1 && std::abs(rq - lambda) <= tolerance * std::max(1.0, std::abs(rq))) {
      res.eigenvalue = rq;
      res.converged = true;
      return res;
    }
    lambda = rq;
  }
  res.eigenvalue = lambda;
  return res;
}

DenseTensor scaled_laplacian(const DenseTensor& proximity) {
  const DenseTensor l = laplacian(proximity);
  const std::size_t n = l.dim(0);
  const double lmax = max_eigenvalue(l).eigenvalue;
  DenseTensor out({n, n});
  if (lmax <= 1e-12) {
    spdlog::warn("scaled_laplacian: graph has no edges (lambda_max = 0); using -I");
    for (std::size_t i = 0; i < n; ++i) out[i * n + i] = -1.0;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = 2.0 * l[i * n + j] / lmax;
    out[i * n + i] -= 1.0;
  }
  // Symmetrise against round-off so downstream adjoints can rely on Lhat == Lhat^T.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out[j * n + i] = out[i * n + j];
  return out;
}

DenseTensor chebyshev_features(const DenseTensor& lhat, std::span<const double> x, std::size_t order) {
  if (lhat.rank() != 2 || lhat.dim(0) != lhat.dim(1)) throw ShapeError("chebyshev_features: Lhat must be square");
  const std::size_t n = lhat.dim(0);
  if (x.size() != n) {
    throw ShapeError("chebyshev_features: Lhat is " + dims_to_string(lhat.dims()) + " but x has " +
                     std::to_string(x.size()) + " entries");
  }
  if (order == 0) throw DomainError("chebyshev_features: order must be >= 1");
  std::vector<std::vector<double>> cols(order, std::vector<double>(n, 0.0));
  cols[0].assign(x.begin(), x.end());
  auto apply = [&](const std::vector<double>& in, std::vector<double>& outv) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += lhat[i * n + j] * in[j];
      outv[i] = s;
    }
  };
  if (order > 1) apply(cols[0], cols[1]);
  std::vector<double> tmp(n);
  for (std::size_t s = 2; s < order; ++s) {
    apply(cols[s - 1], tmp);
    for (std::size_t i = 0; i < n; ++i) cols[s][i] = 2.0 * tmp[i] - cols[s - 2][i];
  }
  DenseTensor out({n, order});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < order; ++s) out[i * order + s] = cols[s][i];
  return out;
}

double dirichlet_norm(const DenseTensor& x, const DenseTensor& lap) {
  if (x.rank() != 2 || lap.rank() != 2 || lap.dim(0) != x.dim(0) || lap.dim(1) != x.dim(0)) {
    throw ShapeError("dirichlet_norm: X " + dims_to_string(x.dims()) + ", L " + dims_to_string(lap.dims()));
  }
  const DenseTensor lx = matmul(lap, x);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * lx[i];
  return s;
}

std::size_t CoarseningPlan::coarse_n() const {
  std::size_t n = padded_n;
  for (const auto& l : levels) n /= l.pool_size;
  return n;
}

std::size_t CoarseningPlan::slots_at(std::size_t level) const {
  std::size_t n = padded_n;
  for (std::size_t i = 0; i < level && i < levels.size(); ++i) n /= levels[i].pool_size;
  return n;
}

std::vector<std::vector<std::size_t>> CoarseningPlan::level0_groups() const {
  std::vector<std::vector<std::size_t>> groups;
  if (levels.empty()) return groups;
  const std::size_t p = levels[0].pool_size;
  for (std::size_t g = 0; g < padded_n / p; ++g) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < p; ++i) {
      const auto node = permutation[g * p + i];
      if (node >= 0) members.push_back(static_cast<std::size_t>(node));
    }
    groups.push_back(std::move(members));
  }
  return groups;
}

std::vector<double> CoarseningPlan::to_slots(std::span<const double> node_values) const {
  std::vector<double> out(padded_n, 0.0);
  for (std::size_t s = 0; s < padded_n; ++s)
    if (permutation[s] >= 0) out[s] = node_values[static_cast<std::size_t>(permutation[s])];
  return out;
}

std::vector<double> CoarseningPlan::from_slots(std::span<const double> slot_values) const {
  std::size_t n = 0;
  for (auto p : permutation) n += (p >= 0);
  std::vector<double> out(n, 0.0);
  for (std::size_t s = 0; s < padded_n; ++s)
    if (permutation[s] >= 0) out[static_cast<std::size_t>(permutation[s])] = slot_values[s];
  return out;
}

namespace {
// Brings the group count down to `target` (at most p members each): merges the
// heaviest-linked pair that fits, else dissolves the smallest group into groups
// with room.
void balance_groups(std::vector<std::vector<std::ptrdiff_t>>& groups, const DenseTensor& w, std::size_t p,
                    std::size_t target) {
  const std::size_t m = w.dim(0);
  auto link = [&](const std::vector<std::ptrdiff_t>& a, const std::vector<std::ptrdiff_t>& b) {
    double s = 0.0;
    for (auto u : a)
      for (auto v : b) s += w[static_cast<std::size_t>(u) * m + static_cast<std::size_t>(v)];
    return s;
  };
  while (groups.size() > target) {
    std::size_t ba = 0, bb = 0;
    double best = -1.0;
    for (std::size_t a = 0; a < groups.size(); ++a)
      for (std::size_t b = a + 1; b < groups.size(); ++b) {
        if (groups[a].size() + groups[b].size() > p) continue;
        const double l = link(groups[a], groups[b]);
        if (l > best) {
          best = l;
          ba = a;
          bb = b;
        }
      }
    if (best >= 0.0) {
      groups[ba].insert(groups[ba].end(), groups[bb].begin(), groups[bb].end());
      groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(bb));
      continue;
    }
    std::size_t smallest = 0;
    for (std::size_t a = 1; a < groups.size(); ++a)
      if (groups[a].size() < groups[smallest].size()) smallest = a;
    auto members = std::move(groups[smallest]);
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(smallest));
    for (auto u : members) {
      std::size_t dest = groups.size();
      double dest_w = -1.0;
      for (std::size_t a = 0; a < groups.size(); ++a) {
        if (groups[a].size() >= p) continue;
        const double l = link(groups[a], {u});
        if (l > dest_w) {
          dest_w = l;
          dest = a;
        }
      }
      groups[dest].push_back(u);
    }
  }
}

}  // namespace

CoarseningPlan coarsen_reorder(const DenseTensor& proximity, std::span<const std::size_t> pool_sizes) {
  if (proximity.rank() != 2 || proximity.dim(0) != proximity.dim(1)) {
    throw ShapeError("coarsen_reorder: W must be square");
  }
  for (std::size_t p : pool_sizes)
    if (p < 2) throw DomainError("coarsen_reorder: pool sizes must be >= 2");

  const std::size_t n0 = proximity.dim(0);
  // Per level: node weights (zero diagonal) and the groups formed at that level.
  std::vector<DenseTensor> level_weights;
  std::vector<std::vector<std::vector<std::ptrdiff_t>>> level_groups;

  std::size_t block = 1;
  for (std::size_t p : pool_sizes) block *= p;
  const std::size_t padded = (n0 + block - 1) / block * block;
  std::size_t target = padded;

  DenseTensor w = proximity;
  for (std::size_t i = 0; i < n0; ++i) w[i * n0 + i] = 0.0;
  for (std::size_t p : pool_sizes) {
    const std::size_t m = w.dim(0);
    std::vector<bool> assigned(m, false);
    std::vector<std::vector<std::ptrdiff_t>> groups;
    std::vector<double> affinity(m);
    for (std::size_t seed = 0; seed < m; ++seed) {
      if (assigned[seed]) continue;
      std::vector<std::ptrdiff_t> g{static_cast<std::ptrdiff_t>(seed)};
      assigned[seed] = true;
      for (std::size_t v = 0; v < m; ++v) affinity[v] = w[seed * m + v];
      while (g.size() < p) {
        std::ptrdiff_t best = -1;
        double best_w = 0.0;
        for (std::size_t v = 0; v < m; ++v) {
          if (!assigned[v] && affinity[v] > best_w) {
            best_w = affinity[v];
            best = static_cast<std::ptrdiff_t>(v);
          }
        }
        if (best < 0) break;
        g.push_back(best);
        assigned[static_cast<std::size_t>(best)] = true;
        for (std::size_t v = 0; v < m; ++v) affinity[v] += w[static_cast<std::size_t>(best) * m + v];
      }
      groups.push_back(std::move(g));
    }
    target /= p;
    balance_groups(groups, w, p, target);
    for (auto& g : groups) g.resize(p, -1);
    // Coarse graph: summed weights across groups.
    const std::size_t mc = groups.size();
    DenseTensor wc({mc, mc});
    for (std::size_t a = 0; a < mc; ++a)
      for (std::size_t b = 0; b < mc; ++b) {
        if (a == b) continue;
        double s = 0.0;
        for (auto u : groups[a])
          for (auto v : groups[b])
            if (u >= 0 && v >= 0) s += w[static_cast<std::size_t>(u) * m + static_cast<std::size_t>(v)];
        wc[a * mc + b] = s;
      }
    level_weights.push_back(w);
    level_groups.push_back(std::move(groups));
    w = std::move(wc);
  }

  CoarseningPlan plan;
  const std::size_t top = pool_sizes.empty() ? n0 : level_groups.back().size();
  std::vector<std::ptrdiff_t> slots(pool_sizes.empty() ? n0 : padded / block, -1);
  std::iota(slots.begin(), slots.begin() + static_cast<std::ptrdiff_t>(top), 0);
  std::vector<std::vector<std::ptrdiff_t>> slot_lists(pool_sizes.size());
  for (std::size_t l = pool_sizes.size(); l-- > 0;) {
    const std::size_t p = pool_sizes[l];
    std::vector<std::ptrdiff_t> expanded;
    expanded.reserve(slots.size() * p);
    for (auto e : slots) {
      if (e < 0) {
        expanded.insert(expanded.end(), p, -1);
      } else {
        const auto& g = level_groups[l][static_cast<std::size_t>(e)];
        expanded.insert(expanded.end(), g.begin(), g.end());
      }
    }
    slots = std::move(expanded);
    slot_lists[l] = slots;
  }
  plan.permutation = slots;
  plan.padded_n = slots.size();
  for (std::size_t l = 0; l < pool_sizes.size(); ++l) {
    CoarseningLevel level;
    level.pool_size = pool_sizes[l];
    const auto& list = slot_lists[l];
    const std::size_t ns = list.size();
    const DenseTensor& lw = (l == 0) ? proximity : level_weights[l];
    const std::size_t m = lw.dim(0);
    level.dummy.resize(ns);
    level.weights = DenseTensor({ns, ns});
    for (std::size_t i = 0; i < ns; ++i) {
      level.dummy[i] = list[i] < 0;
      if (list[i] < 0) continue;
      for (std::size_t j = 0; j < ns; ++j) {
        if (list[j] < 0) continue;
        level.weights[i * ns + j] = lw[static_cast<std::size_t>(list[i]) * m + static_cast<std::size_t>(list[j])];
      }
    }
    plan.levels.push_back(std::move(level));
  }
  return plan;
}

CoarseningPlan coarsen_reorder(const RegionGraph& graph, std::span<const std::size_t> pool_sizes) {
  return coarsen_reorder(graph.proximity, pool_sizes);
}

std::vector<Edge> read_adjacency_csv(const std::filesystem::path& path,
                                     const std::vector<long long>& index_to_id) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open adjacency file '" + path.string() + "'");
  std::string line;
  if (!std::getline(is, line)) return {};
  const auto header = detail::split_csv(line);
  if (header.size() != 2 || header[0] != "region_a" || header[1] != "region_b") {
    throw FormatError("adjacency CSV header must be 'region_a,region_b'");
  }
  auto lookup = [&](long long id) -> std::size_t {
    auto it = std::find(index_to_id.begin(), index_to_id.end(), id);
    if (it == index_to_id.end()) throw FormatError("adjacency references unknown region " + std::to_string(id));
    return static_cast<std::size_t>(it - index_to_id.begin());
  };
  std::vector<Edge> edges;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    std::optional<long long> a, b;
    if (f.size() == 2) {
      a = detail::parse_int(f[0]);
      b = detail::parse_int(f[1]);
    }
    if (!a || !b) throw FormatError("adjacency CSV row " + std::to_string(row) + " is malformed");
    edges.emplace_back(lookup(*a), lookup(*b));
  }
  return edges;
}

}  // namespace odx
