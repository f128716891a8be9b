#include "odx/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "odx/error.hpp"

namespace odx {

namespace {

using nlohmann::json;

constexpr double kEarthRadiusKm = 6371.0088;
constexpr double kEps = 1e-12;

double cross(Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

double ring_signed_area(const Ring& r) {
  double a = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const Point2& p = r[i];
    const Point2& q = r[(i + 1) % r.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

bool on_segment(Point2 a, Point2 b, Point2 p) {
  const double scale = std::max({1.0, std::abs(a.x), std::abs(a.y), std::abs(b.x), std::abs(b.y)});
  if (std::abs(cross(a, b, p)) > kEps * scale * scale) return false;
  return p.x >= std::min(a.x, b.x) - kEps * scale && p.x <= std::max(a.x, b.x) + kEps * scale &&
         p.y >= std::min(a.y, b.y) - kEps * scale && p.y <= std::max(a.y, b.y) + kEps * scale;
}

bool segments_intersect(Point2 a, Point2 b, Point2 c, Point2 d) {
  const double d1 = cross(c, d, a), d2 = cross(c, d, b), d3 = cross(a, b, c), d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  return on_segment(c, d, a) || on_segment(c, d, b) || on_segment(a, b, c) || on_segment(a, b, d);
}

Ring parse_ring(const json& coords, long long id) {
  if (!coords.is_array()) throw GeometryError("region " + std::to_string(id) + ": ring is not an array");
  Ring r;
  for (const auto& pt : coords) {
    if (!pt.is_array() || pt.size() < 2 || !pt[0].is_number() || !pt[1].is_number()) {
      throw GeometryError("region " + std::to_string(id) + ": bad coordinate");
    }
    Point2 p{pt[0].get<double>(), pt[1].get<double>()};
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw GeometryError("region " + std::to_string(id) + ": non-finite coordinate");
    if (!r.empty() && r.back().x == p.x && r.back().y == p.y) continue;
    r.push_back(p);
  }
  if (r.size() > 1 && r.front().x == r.back().x && r.front().y == r.back().y) r.pop_back();
  if (r.size() < 3) throw GeometryError("region " + std::to_string(id) + ": ring has fewer than 3 distinct vertices");
  if (std::abs(ring_signed_area(r)) <= 0.0) throw GeometryError("region " + std::to_string(id) + ": ring has zero area");
  const std::size_t n = r.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(r[i], r[(i + 1) % n], r[j], r[(j + 1) % n])) {
        throw GeometryError("region " + std::to_string(id) + ": ring self-intersects");
      }
    }
  return r;
}

Polygon parse_polygon(const json& rings, long long id) {
  if (!rings.is_array() || rings.empty()) throw GeometryError("region " + std::to_string(id) + ": empty polygon");
  Polygon p;
  p.outer = parse_ring(rings[0], id);
  for (std::size_t i = 1; i < rings.size(); ++i) p.holes.push_back(parse_ring(rings[i], id));
  return p;
}

bool point_in_polygon(const Polygon& poly, Point2 p) {
  if (!point_in_ring(poly.outer, p)) return false;
  for (const auto& h : poly.holes) {
    bool on_edge = false;
    for (std::size_t i = 0; i < h.size() && !on_edge; ++i) on_edge = on_segment(h[i], h[(i + 1) % h.size()], p);
    if (!on_edge && point_in_ring(h, p)) return false;
  }
  return true;
}

template <class F>
void for_each_edge(const Region& r, F&& f) {
  auto ring_edges = [&](const Ring& ring) {
    for (std::size_t i = 0; i < ring.size(); ++i) f(ring[i], ring[(i + 1) % ring.size()]);
  };
  for (const auto& poly : r.polygons) {
    ring_edges(poly.outer);
    for (const auto& h : poly.holes) ring_edges(h);
  }
}

bool collinear_overlap(Point2 a, Point2 b, Point2 c, Point2 d) {
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  if (len == 0.0) return false;
  const double tol = 1e-9 * std::max(1.0, len);
  // Distances of c and d from line ab.
  if (std::abs(cross(a, b, c)) / len > tol || std::abs(cross(a, b, d)) / len > tol) return false;
  const double ux = (b.x - a.x) / len, uy = (b.y - a.y) / len;
  const double tc = (c.x - a.x) * ux + (c.y - a.y) * uy;
  const double td = (d.x - a.x) * ux + (d.y - a.y) * uy;
  const double lo = std::max(0.0, std::min(tc, td)), hi = std::min(len, std::max(tc, td));
  return hi - lo > tol;
}

}  // namespace

std::vector<long long> RegionSet::ids() const {
  std::vector<long long> out;
  for (const auto& r : regions) out.push_back(r.region_id);
  return out;
}

RegionSet parse_regions_geojson(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("regions file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
      !doc["features"].is_array()) {
    throw FormatError("regions file must be a GeoJSON FeatureCollection");
  }
  RegionSet set;
  for (const auto& feat : doc["features"]) {
    const auto& props = feat.contains("properties") ? feat["properties"] : json();
    if (!props.is_object() || !props.contains("region_id") || !props["region_id"].is_number_integer()) {
      throw FormatError("every region feature needs an integer region_id property");
    }
    Region r;
    r.region_id = props["region_id"].get<long long>();
    const auto& geom = feat.contains("geometry") ? feat["geometry"] : json();
    const std::string type = geom.is_object() ? geom.value("type", "") : "";
    if (type == "Polygon") {
      r.polygons.push_back(parse_polygon(geom["coordinates"], r.region_id));
    } else if (type == "MultiPolygon") {
      for (const auto& p : geom["coordinates"]) r.polygons.push_back(parse_polygon(p, r.region_id));
    } else {
      throw GeometryError("region " + std::to_string(r.region_id) + ": geometry must be Polygon or MultiPolygon");
    }
    set.regions.push_back(std::move(r));
  }
  std::sort(set.regions.begin(), set.regions.end(),
            [](const Region& a, const Region& b) { return a.region_id < b.region_id; });
  for (std::size_t i = 1; i < set.regions.size(); ++i)
    if (set.regions[i].region_id == set.regions[i - 1].region_id) {
      throw GeometryError("duplicate region_id " + std::to_string(set.regions[i].region_id));
    }
  return set;
}

RegionSet load_regions_geojson(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open regions file '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_regions_geojson(ss.str());
}

bool point_in_ring(const Ring& ring, Point2 p) {
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i)
    if (on_segment(ring[i], ring[(i + 1) % n], p)) return true;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2& a = ring[i];
    const Point2& b = ring[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

bool point_in_region(const Region& region, Point2 p) {
  return std::any_of(region.polygons.begin(), region.polygons.end(),
                     [&](const Polygon& poly) { return point_in_polygon(poly, p); });
}

std::optional<long long> locate_region(const RegionSet& set, Point2 p) {
  for (const auto& r : set.regions)
    if (point_in_region(r, p)) return r.region_id;
  return std::nullopt;
}

AssignResult assign_regions(std::vector<TripRecord> trips, const RegionSet& set) {
  AssignResult out;
  out.trips.reserve(trips.size());
  for (auto& t : trips) {
    auto o = locate_region(set, t.origin_point);
    auto d = locate_region(set, t.dest_point);
    if (!o || !d) {
      ++out.dropped;
      continue;
    }
    t.origin_region = o;
    t.dest_region = d;
    out.trips.push_back(t);
  }
  return out;
}

std::vector<Edge> shared_boundary_edges(const RegionSet& set) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < set.regions.size(); ++i)
    for (std::size_t j = i + 1; j < set.regions.size(); ++j) {
      bool touch = false;
      for_each_edge(set.regions[i], [&](Point2 a, Point2 b) {
        if (touch) return;
        for_each_edge(set.regions[j], [&](Point2 c, Point2 d) {
          if (!touch && collinear_overlap(a, b, c, d)) touch = true;
        });
      });
      if (touch) edges.emplace_back(i, j);
    }
  return edges;
}

Point2 Projection::to_km(Point2 lonlat) const noexcept {
  constexpr double rad = std::numbers::pi / 180.0;
  return {kEarthRadiusKm * (lonlat.x - reference.x) * rad * std::cos(reference.y * rad),
          kEarthRadiusKm * (lonlat.y - reference.y) * rad};
}

Projection projection_for(const RegionSet& set) {
  double minx = INFINITY, maxx = -INFINITY, miny = INFINITY, maxy = -INFINITY;
  for (const auto& r : set.regions)
    for (const auto& poly : r.polygons)
      for (const auto& p : poly.outer) {
        minx = std::min(minx, p.x);
        maxx = std::max(maxx, p.x);
        miny = std::min(miny, p.y);
        maxy = std::max(maxy, p.y);
      }
  if (set.regions.empty()) return {};
  return {{0.5 * (minx + maxx), 0.5 * (miny + maxy)}};
}

std::vector<Point2> region_centroids(const RegionSet& set, const Projection& projection) {
  std::vector<Point2> out;
  for (const auto& r : set.regions) {
    double area = 0.0, cx = 0.0, cy = 0.0;
    auto accumulate = [&](const Ring& ring, double sign) {
      // Orientation-independent: outer rings add, holes subtract.
      const double ra = ring_signed_area(ring);
      const double orient = ra < 0 ? -1.0 : 1.0;
      for (std::size_t i = 0; i < ring.size(); ++i) {
        const Point2 p = projection.to_km(ring[i]);
        const Point2 q = projection.to_km(ring[(i + 1) % ring.size()]);
        const double c = (p.x * q.y - q.x * p.y) * orient * sign;
        area += 0.5 * c;
        cx += (p.x + q.x) * c / 6.0;
        cy += (p.y + q.y) * c / 6.0;
      }
    };
    for (const auto& poly : r.polygons) {
      accumulate(poly.outer, 1.0);
      for (const auto& h : poly.holes) accumulate(h, -1.0);
    }
    out.push_back({cx / area, cy / area});
  }
  return out;
}

}  // namespace odx
