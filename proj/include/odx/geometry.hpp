#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "odx/graph.hpp"
#include "odx/ingest.hpp"

namespace odx {

using Ring = std::vector<Point2>;  // open ring (closing vertex removed), lon/lat
struct Polygon {
  Ring outer;
  std::vector<Ring> holes;
};

struct Region {
  long long region_id = 0;
  std::vector<Polygon> polygons;
};

// Regions sorted by ascending region_id.
struct RegionSet {
  std::vector<Region> regions;

  std::vector<long long> ids() const;
};

// GeoJSON FeatureCollection of Polygon / MultiPolygon features carrying an
// integer `region_id` property.
RegionSet parse_regions_geojson(const std::string& text);
RegionSet load_regions_geojson(const std::filesystem::path& path);

// Boundary points count as inside.
bool point_in_ring(const Ring& ring, Point2 p);
bool point_in_region(const Region& region, Point2 p);
// Lowest region id whose polygons contain `p`.
std::optional<long long> locate_region(const RegionSet& set, Point2 p);

struct AssignResult {
  std::vector<TripRecord> trips;
  std::size_t dropped = 0;
};
AssignResult assign_regions(std::vector<TripRecord> trips, const RegionSet& set);

// Index pairs of regions whose boundaries share a collinear segment of positive length.
std::vector<Edge> shared_boundary_edges(const RegionSet& set);

// Equirectangular projection to kilometres about a reference lon/lat.
struct Projection {
  Point2 reference;
  Point2 to_km(Point2 lonlat) const noexcept;
};
Projection projection_for(const RegionSet& set);

// Area centroids, projected to kilometres.
std::vector<Point2> region_centroids(const RegionSet& set, const Projection& projection);

}  // namespace odx
