#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "odx/tensor.hpp"

namespace odx {

// Planar coordinates; geographic inputs are projected to kilometres at ingest.
struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Point2& a, const Point2& b) noexcept;

using Edge = std::pair<std::size_t, std::size_t>;

struct RegionGraph {
  std::size_t n = 0;
  std::vector<Point2> centroids;
  DenseTensor adjacency;  // n×n, symmetric {0,1}
  DenseTensor proximity;  // n×n, symmetric, entries in [0,1], unit diagonal
  int alpha = 1;
  double sigma = 1.0;
};

DenseTensor adjacency_from_edges(std::size_t n, std::span<const Edge> edges);
std::vector<Edge> edges_from_adjacency(const DenseTensor& adjacency);

// W(u,v) = exp(-x^2 / sigma^2) when v is within `alpha` hops of u in A, else 0.
DenseTensor build_proximity(const DenseTensor& adjacency, std::span<const Point2> centroids, int alpha,
                            double sigma);

RegionGraph make_region_graph(DenseTensor adjacency, std::vector<Point2> centroids, int alpha, double sigma);

// L = D - W with D the row sums of W.
DenseTensor laplacian(const DenseTensor& proximity);

struct PowerIterationResult {
  double eigenvalue = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};
// Largest eigenvalue of a symmetric positive semi-definite matrix.
PowerIterationResult max_eigenvalue(const DenseTensor& sym, double tolerance = 1e-10,
                                    std::size_t max_iterations = 10000);

// 2L/lambda_max - I. An edgeless graph (lambda_max = 0) yields -I and logs a warning.
DenseTensor scaled_laplacian(const DenseTensor& proximity);

// Column s (0-based) is T_s(Lhat) x: t0 = x, t1 = Lhat x, t_s = 2 Lhat t_{s-1} - t_{s-2}.
DenseTensor chebyshev_features(const DenseTensor& scaled_lap, std::span<const double> x, std::size_t order);

// trace(X^T L X).
double dirichlet_norm(const DenseTensor& x, const DenseTensor& laplacian);

// One pooling level of a coarsening plan. Slots entering the level are grouped
// into consecutive runs of `pool_size`.
struct CoarseningLevel {
  std::size_t pool_size = 2;
  std::vector<bool> dummy;  // per incoming slot
  DenseTensor weights;      // slot-ordered proximity among incoming slots; dummies isolated
};

struct CoarseningPlan {
  // Level-0 slot -> original node index, -1 for a dummy slot.
  std::vector<std::ptrdiff_t> permutation;
  std::vector<CoarseningLevel> levels;
  std::size_t padded_n = 0;

  std::size_t coarse_n() const;
  std::size_t slots_at(std::size_t level) const;
  // Original node indices per level-0 pool group (dummies omitted).
  std::vector<std::vector<std::size_t>> level0_groups() const;
  // Scatter a per-node vector into slot order (dummies = 0) and back.
  std::vector<double> to_slots(std::span<const double> node_values) const;
  std::vector<double> from_slots(std::span<const double> slot_values) const;
};

// Multilevel greedy grouping on W: each unassigned node (ascending index) seeds a
// group and repeatedly absorbs the unassigned node with the heaviest total
// weight to the group (ties -> lower index) until the group holds `p` nodes or
// no connected candidate is left; short groups are padded with dummies.
CoarseningPlan coarsen_reorder(const DenseTensor& proximity, std::span<const std::size_t> pool_sizes);
CoarseningPlan coarsen_reorder(const RegionGraph& graph, std::span<const std::size_t> pool_sizes);

// `region_a,region_b` CSV with header; region ids are mapped to indices via
// their position in `index_to_id`.
std::vector<Edge> read_adjacency_csv(const std::filesystem::path& path,
                                     const std::vector<long long>& index_to_id);

}  // namespace odx
