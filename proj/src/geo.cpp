#include "dispatch/geo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace dispatch::geo {

using nlohmann::json;

GeoPoint GeoPoint::checked(double lon, double lat) {
  if (!std::isfinite(lon) || !std::isfinite(lat) || lon < -180.0 || lon > 180.0 || lat < -90.0 ||
      lat > 90.0) {
    throw InputError("coordinate out of WGS84 range: (" + format_double(lon) + ", " +
                     format_double(lat) + ")");
  }
  return GeoPoint{lon, lat};
}

double haversine_m(const GeoPoint& a, const GeoPoint& b) {
  constexpr double kRad = std::numbers::pi / 180.0;
  const double phi1 = a.lat * kRad;
  const double phi2 = b.lat * kRad;
  const double dphi = (b.lat - a.lat) * kRad;
  const double dlambda = (b.lon - a.lon) * kRad;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusMeters * std::asin(std::min(1.0, std::sqrt(h)));
}

// ---------------------------------------------------------------------------
// RoadGraph

NodeIndex RoadGraph::Builder::add_node(std::string id, GeoPoint p) {
  if (id.empty()) throw InputError("empty node id");
  p = GeoPoint::checked(p.lon, p.lat);
  if (index_.count(id)) throw InputError("duplicate node id: " + id);
  const auto idx = static_cast<NodeIndex>(ids_.size());
  index_.emplace(id, idx);
  ids_.push_back(std::move(id));
  points_.push_back(p);
  return idx;
}

void RoadGraph::Builder::add_edge(const std::string& u, const std::string& v, double length_m,
                                  bool oneway) {
  auto iu = index_.find(u);
  if (iu == index_.end()) throw InputError("edge references unknown node: " + u);
  auto iv = index_.find(v);
  if (iv == index_.end()) throw InputError("edge references unknown node: " + v);
  add_edge(iu->second, iv->second, length_m, oneway);
}

void RoadGraph::Builder::add_edge(NodeIndex u, NodeIndex v, double length_m, bool oneway) {
  if (u >= ids_.size() || v >= ids_.size()) throw InputError("edge endpoint index out of range");
  if (!std::isfinite(length_m) || length_m <= 0.0) {
    throw InputError("non-positive edge length " + format_double(length_m) + " on " + ids_[u] +
                     "-" + ids_[v]);
  }
  // sub-millimeter edges still cost one unit so every edge has positive weight
  const auto mm = std::max<std::int64_t>(1, std::llround(length_m * 1000.0));
  Edge e{u, v, length_m, mm, oneway};
  if (!oneway && v < u) std::swap(e.u, e.v);
  const auto key = std::make_tuple(e.u, e.v, oneway);
  auto it = edge_keys_.find(key);
  if (it != edge_keys_.end()) {
    Edge& existing = edges_[it->second];
    if (e.length_mm < existing.length_mm) existing = e;
    return;
  }
  edge_keys_.emplace(key, edges_.size());
  edges_.push_back(e);
}

RoadGraph RoadGraph::Builder::build() && {
  RoadGraph g;
  g.ids_ = std::move(ids_);
  g.points_ = std::move(points_);
  g.index_ = std::move(index_);
  g.edges_ = std::move(edges_);
  return g;
}

NodeIndex RoadGraph::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw InputError("unknown node id: " + id);
  return it->second;
}

std::string RoadGraph::canonical_text() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    out << "N " << ids_[i] << ' ' << format_double(points_[i].lon) << ' '
        << format_double(points_[i].lat) << '\n';
  }
  for (const auto& e : edges_) {
    out << "E " << ids_[e.u] << ' ' << ids_[e.v] << ' ' << format_double(e.length_m) << ' '
        << (e.oneway ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string RoadGraph::content_hash() const { return sha256_hex(canonical_text()); }

namespace {

double parse_number(std::string_view tok, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw InputError(where + ": not a number: '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

RoadGraph parse_road_graph(std::string_view text, const std::string& source_name) {
  RoadGraph::Builder b;
  struct PendingEdge {
    std::string u, v;
    double length;
    bool oneway;
    std::string where;
  };
  // edges may precede the nodes they reference
  std::vector<PendingEdge> pending;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    try {
      if (toks[0] == "N") {
        if (toks.size() != 4) throw InputError(where + ": expected 'N <id> <lon> <lat>'");
        b.add_node(std::string(toks[1]),
                   GeoPoint::checked(parse_number(toks[2], where), parse_number(toks[3], where)));
      } else if (toks[0] == "E") {
        if (toks.size() != 5) throw InputError(where + ": expected 'E <u> <v> <length_m> <oneway>'");
        if (toks[4] != "0" && toks[4] != "1") throw InputError(where + ": oneway must be 0 or 1");
        pending.push_back({std::string(toks[1]), std::string(toks[2]), parse_number(toks[3], where),
                           toks[4] == "1", where});
      } else {
        throw InputError(where + ": unknown record type '" + std::string(toks[0]) + "'");
      }
    } catch (const InputError& e) {
      const std::string msg = e.what();
      if (msg.rfind(where, 0) == 0) throw;
      throw InputError(where + ": " + msg);
    }
  }
  for (const auto& e : pending) {
    try {
      b.add_edge(e.u, e.v, e.length, e.oneway);
    } catch (const InputError& err) {
      throw InputError(e.where + ": " + err.what());
    }
  }
  return std::move(b).build();
}

RoadGraph load_road_graph(const std::string& path) { return parse_road_graph(read_text_file(path), path); }

void save_road_graph(const RoadGraph& g, const std::string& path) {
  write_text_file(path, "# road graph: N <id> <lon> <lat> / E <u> <v> <length_m> <oneway>\n" +
                            g.canonical_text());
}

NodeIndex snap_to_node(const GeoPoint& p, const RoadGraph& g) {
  if (g.empty()) throw InputError("cannot snap to an empty graph");
  NodeIndex best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (NodeIndex n = 0; n < g.node_count(); ++n) {
    const double d = haversine_m(p, g.point(n));
    if (d < best_d || (d == best_d && g.id(n) < g.id(best))) {
      best = n;
      best_d = d;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// GeoJSON

namespace {

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(what + ": invalid JSON: " + e.what());
  }
}

GeoPoint point_from_json(const json& coords, const std::string& what) {
  if (!coords.is_array() || coords.size() < 2 || !coords[0].is_number() || !coords[1].is_number()) {
    throw InputError(what + ": expected [lon, lat]");
  }
  return GeoPoint::checked(coords[0].get<double>(), coords[1].get<double>());
}

std::string id_from_json(const json& v, const std::string& what) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw InputError(what + ": missing or invalid 'id'");
}

Ring ring_from_json(const json& arr, const std::string& what) {
  if (!arr.is_array()) throw InputError(what + ": ring must be an array");
  Ring r;
  r.reserve(arr.size());
  for (const auto& c : arr) r.push_back(point_from_json(c, what));
  return r;
}

json ring_to_json(const Ring& r) {
  json arr = json::array();
  for (const auto& p : r) arr.push_back({p.lon, p.lat});
  return arr;
}

}  // namespace

std::vector<Facility> parse_facilities(std::string_view geojson, const RoadGraph& g) {
  const json doc = parse_json(geojson, "facilities");
  if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features")) {
    throw InputError("facilities: expected a GeoJSON FeatureCollection");
  }
  std::vector<Facility> out;
  std::size_t i = 0;
  for (const auto& f : doc["features"]) {
    const std::string what = "facilities feature " + std::to_string(i++);
    if (!f.contains("geometry") || f["geometry"].value("type", "") != "Point") {
      throw InputError(what + ": geometry must be a Point");
    }
    const auto& props = f.contains("properties") ? f["properties"] : json::object();
    if (!props.contains("id")) throw InputError(what + ": missing 'id'");
    if (!props.contains("category") || !props["category"].is_number_integer()) {
      throw InputError(what + ": 'category' must be an integer 0-3");
    }
    Facility fac;
    fac.id = id_from_json(props["id"], what);
    fac.category = category_from_code(props["category"].get<long long>());
    fac.location = point_from_json(f["geometry"]["coordinates"], what);
    fac.node = snap_to_node(fac.location, g);
    out.push_back(std::move(fac));
  }
  for (std::size_t a = 0; a < out.size(); ++a) {
    for (std::size_t b = a + 1; b < out.size(); ++b) {
      if (out[a].id == out[b].id) throw InputError("duplicate facility id: " + out[a].id);
    }
  }
  return out;
}

std::vector<Facility> load_facilities(const std::string& path, const RoadGraph& g) {
  return parse_facilities(read_text_file(path), g);
}

std::string facilities_to_geojson(std::span<const Facility> facilities) {
  json features = json::array();
  for (const auto& f : facilities) {
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", {f.location.lon, f.location.lat}}}},
                        {"properties", {{"id", f.id}, {"category", category_index(f.category)}}}});
  }
  return json{{"type", "FeatureCollection"}, {"features", features}}.dump(1) + "\n";
}

// ---------------------------------------------------------------------------
// Regions

double signed_area2(const Ring& ring) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    s += ring[i].lon * ring[i + 1].lat - ring[i + 1].lon * ring[i].lat;
  }
  return s;
}

namespace {

void check_ring(const Ring& r, const std::string& what) {
  if (r.size() < 4) throw InputError(what + ": ring needs at least 4 points (closed)");
  if (!(r.front() == r.back())) throw InputError(what + ": ring is not closed");
}

}  // namespace

RegionBoundary RegionBoundary::make(std::string region_id, Ring outer, std::vector<Ring> holes) {
  check_ring(outer, "region " + region_id + " outer ring");
  if (signed_area2(outer) < 0.0) std::reverse(outer.begin(), outer.end());
  for (auto& h : holes) {
    check_ring(h, "region " + region_id + " hole");
    if (signed_area2(h) > 0.0) std::reverse(h.begin(), h.end());
  }
  return RegionBoundary{std::move(region_id), std::move(outer), std::move(holes)};
}

RegionBoundary::Box RegionBoundary::bounding_box() const {
  Box b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
        -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : outer_ring) {
    b.min_lon = std::min(b.min_lon, p.lon);
    b.min_lat = std::min(b.min_lat, p.lat);
    b.max_lon = std::max(b.max_lon, p.lon);
    b.max_lat = std::max(b.max_lat, p.lat);
  }
  return b;
}

namespace {

bool on_segment(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) {
  const double cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
  const double scale = std::max({std::abs(b.lon - a.lon), std::abs(b.lat - a.lat), 1e-300});
  if (std::abs(cross) > 1e-12 * scale) return false;
  return p.lon >= std::min(a.lon, b.lon) && p.lon <= std::max(a.lon, b.lon) &&
         p.lat >= std::min(a.lat, b.lat) && p.lat <= std::max(a.lat, b.lat);
}

// returns +1 crossing toggle count parity, and flags boundary contact
bool ring_crossing_parity(const GeoPoint& p, const Ring& r, bool& on_boundary) {
  bool inside = false;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    const GeoPoint& a = r[i];
    const GeoPoint& b = r[i + 1];
    if (on_segment(p, a, b)) {
      on_boundary = true;
      return true;
    }
    if ((a.lat > p.lat) != (b.lat > p.lat)) {
      const double x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
      if (p.lon < x) inside = !inside;
    }
  }
  return inside;
}

}  // namespace

bool point_in_region(const GeoPoint& p, const RegionBoundary& b) {
  check_ring(b.outer_ring, "region " + b.region_id);
  bool on_boundary = false;
  bool inside = ring_crossing_parity(p, b.outer_ring, on_boundary);
  if (on_boundary) return true;
  for (const auto& h : b.holes) {
    check_ring(h, "region " + b.region_id + " hole");
    if (ring_crossing_parity(p, h, on_boundary)) inside = !inside;
    if (on_boundary) return true;
  }
  return inside;
}

std::vector<RegionBoundary> parse_regions(std::string_view geojson) {
  const json doc = parse_json(geojson, "regions");
  auto polygon = [](const json& geom, std::string id) {
    if (geom.value("type", "") != "Polygon" || !geom.contains("coordinates") ||
        !geom["coordinates"].is_array() || geom["coordinates"].empty()) {
      throw InputError("region " + id + ": expected a Polygon geometry");
    }
    const auto& rings = geom["coordinates"];
    Ring outer = ring_from_json(rings[0], "region " + id);
    std::vector<Ring> holes;
    for (std::size_t i = 1; i < rings.size(); ++i) holes.push_back(ring_from_json(rings[i], "region " + id));
    return RegionBoundary::make(std::move(id), std::move(outer), std::move(holes));
  };
  auto region_id = [](const json& feature, std::size_t i) {
    if (feature.contains("properties") && feature["properties"].is_object() &&
        feature["properties"].contains("region_id")) {
      return id_from_json(feature["properties"]["region_id"], "region");
    }
    return "region" + std::to_string(i);
  };
  const std::string type = doc.value("type", "");
  std::vector<RegionBoundary> out;
  if (type == "Polygon") {
    out.push_back(polygon(doc, "region0"));
  } else if (type == "Feature") {
    out.push_back(polygon(doc["geometry"], region_id(doc, 0)));
  } else if (type == "FeatureCollection") {
    std::size_t i = 0;
    for (const auto& f : doc["features"]) {
      out.push_back(polygon(f["geometry"], region_id(f, i)));
      ++i;
    }
  } else {
    throw InputError("regions: expected Polygon, Feature or FeatureCollection");
  }
  if (out.empty()) throw InputError("regions: no polygons found");
  return out;
}

std::vector<RegionBoundary> load_regions(const std::string& path) { return parse_regions(read_text_file(path)); }

std::string regions_to_geojson(std::span<const RegionBoundary> regions) {
  json features = json::array();
  for (const auto& r : regions) {
    json rings = json::array();
    rings.push_back(ring_to_json(r.outer_ring));
    for (const auto& h : r.holes) rings.push_back(ring_to_json(h));
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", rings}}},
                        {"properties", {{"region_id", r.region_id}}}});
  }
  return json{{"type", "FeatureCollection"}, {"features", features}}.dump(1) + "\n";
}

// ---------------------------------------------------------------------------
// Connectivity

namespace {

struct DisjointSet {
  std::vector<std::uint32_t> parent, rank;
  explicit DisjointSet(std::size_t n) : parent(n), rank(n, 0) {
    std::iota(parent.begin(), parent.end(), 0u);
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank[a] < rank[b]) std::swap(a, b);
    parent[b] = a;
    if (rank[a] == rank[b]) ++rank[a];
  }
};

}  // namespace

ConnectivityReport audit_connectivity(const RoadGraph& g, std::span<const Facility> facilities,
                                      std::span<const NodeIndex> incident_nodes) {
  ConnectivityReport rep;
  const std::size_t n = g.node_count();
  DisjointSet ds(n);
  for (const auto& e : g.edges()) ds.unite(e.u, e.v);

  constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> label_of_root(n, kUnset);
  rep.component_of.resize(n);
  std::vector<std::size_t> sizes;
  for (NodeIndex v = 0; v < n; ++v) {
    const auto root = ds.find(v);
    if (label_of_root[root] == kUnset) {
      label_of_root[root] = static_cast<std::uint32_t>(sizes.size());
      sizes.push_back(0);
    }
    rep.component_of[v] = label_of_root[root];
    ++sizes[rep.component_of[v]];
  }
  rep.component_count = sizes.size();
  rep.component_sizes = sizes;
  std::sort(rep.component_sizes.begin(), rep.component_sizes.end(), std::greater<>());

  std::vector<std::size_t> facilities_in(sizes.size(), 0);
  std::vector<bool> has_incident(sizes.size(), false);
  for (const auto& f : facilities) {
    if (f.node >= n) throw InputError("facility " + f.id + " references a node outside the graph");
    ++facilities_in[rep.component_of[f.node]];
  }
  for (const auto v : incident_nodes) {
    if (v >= n) throw InputError("incident node outside the graph");
    has_incident[rep.component_of[v]] = true;
  }
  for (const auto& f : facilities) {
    const auto c = rep.component_of[f.node];
    if (facilities_in[c] <= 1 && !has_incident[c]) rep.orphaned_facility_ids.push_back(f.id);
  }
  return rep;
}

}  // namespace dispatch::geo
