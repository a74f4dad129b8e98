#pragma once

#include <cstdint>
#include <map>
#include <tuple>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dispatch/common.hpp"

namespace dispatch::geo {

/// WGS84 coordinate in degrees.
struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;

  /// Validating constructor; throws InputError when out of range.
  static GeoPoint checked(double lon, double lat);
  bool operator==(const GeoPoint&) const = default;
};

inline constexpr double kEarthRadiusMeters = 6371008.8;

/// Great-circle distance in meters.
double haversine_m(const GeoPoint& a, const GeoPoint& b);

/// Dense node index inside a RoadGraph.
using NodeIndex = std::uint32_t;

struct Edge {
  NodeIndex u = 0;
  NodeIndex v = 0;
  double length_m = 0.0;
  /// Integer millimeters; all path sums are done on this so that any two
  /// shortest-path routines agree bit-for-bit.
  std::int64_t length_mm = 0;
  bool oneway = false;
};

/// Immutable road network. Node ids are the external string identifiers,
/// indices are positions in declaration order.
class RoadGraph {
public:
  class Builder {
  public:
    /// Throws InputError on a duplicate id or invalid coordinate.
    NodeIndex add_node(std::string id, GeoPoint p);
    /// Duplicate edges keep the shorter length. Throws on unknown endpoints
    /// or non-positive length.
    void add_edge(const std::string& u, const std::string& v, double length_m, bool oneway);
    void add_edge(NodeIndex u, NodeIndex v, double length_m, bool oneway);
    RoadGraph build() &&;

  private:
    std::vector<std::string> ids_;
    std::vector<GeoPoint> points_;
    std::unordered_map<std::string, NodeIndex> index_;
    std::vector<Edge> edges_;
    // (u, v, oneway) -> position in edges_; undirected keys use u < v
    std::map<std::tuple<NodeIndex, NodeIndex, bool>, std::size_t> edge_keys_;
  };

  std::size_t node_count() const { return ids_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  bool empty() const { return ids_.empty(); }

  const std::string& id(NodeIndex n) const { return ids_.at(n); }
  const GeoPoint& point(NodeIndex n) const { return points_.at(n); }
  const std::vector<Edge>& edges() const { return edges_; }
  std::span<const std::string> ids() const { return ids_; }

  /// Throws InputError for an unknown id.
  NodeIndex index_of(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  /// Stable textual form in the edge-list file format; its hash identifies the graph.
  std::string canonical_text() const;
  std::string content_hash() const;

private:
  std::vector<std::string> ids_;
  std::vector<GeoPoint> points_;
  std::unordered_map<std::string, NodeIndex> index_;
  std::vector<Edge> edges_;
};

/// Parses the line-oriented `N`/`E` format. Errors carry the line number.
RoadGraph parse_road_graph(std::string_view text, const std::string& source_name = "<memory>");
RoadGraph load_road_graph(const std::string& path);
void save_road_graph(const RoadGraph& g, const std::string& path);

/// Nearest node by haversine distance, ties to the smallest node id.
NodeIndex snap_to_node(const GeoPoint& p, const RoadGraph& g);

struct Facility {
  std::string id;
  Category category = Category::Healthcare;
  GeoPoint location;
  NodeIndex node = 0;
};

/// Reads a GeoJSON FeatureCollection of Points (properties `id`, `category`)
/// and snaps each facility onto `g`.
std::vector<Facility> load_facilities(const std::string& path, const RoadGraph& g);
std::vector<Facility> parse_facilities(std::string_view geojson, const RoadGraph& g);
std::string facilities_to_geojson(std::span<const Facility> facilities);

using Ring = std::vector<GeoPoint>;

/// Polygon region. Rings are closed; the outer ring is stored
/// counter-clockwise and holes clockwise.
struct RegionBoundary {
  std::string region_id;
  Ring outer_ring;
  std::vector<Ring> holes;

  /// Validates closure and size, closes nothing implicitly, normalizes orientation.
  static RegionBoundary make(std::string region_id, Ring outer, std::vector<Ring> holes = {});

  struct Box {
    double min_lon, min_lat, max_lon, max_lat;
  };
  Box bounding_box() const;
};

/// Twice the signed area (positive = counter-clockwise) in degree units.
double signed_area2(const Ring& ring);

/// Even-odd ray casting with holes; points on any boundary count as inside.
bool point_in_region(const GeoPoint& p, const RegionBoundary& b);

/// Accepts a bare Polygon geometry, a Feature, or a FeatureCollection of
/// Polygon features (property `region_id` names each region).
std::vector<RegionBoundary> parse_regions(std::string_view geojson);
std::vector<RegionBoundary> load_regions(const std::string& path);
std::string regions_to_geojson(std::span<const RegionBoundary> regions);

struct ConnectivityReport {
  std::size_t component_count = 0;
  /// Sorted descending.
  std::vector<std::size_t> component_sizes;
  std::vector<std::string> orphaned_facility_ids;
  /// Component label per node (labels ordered by first node index).
  std::vector<std::uint32_t> component_of;
};

/// Weakly connected components of the undirected view. A facility is
/// orphaned when its component holds no other facility and no incident node.
ConnectivityReport audit_connectivity(const RoadGraph& g, std::span<const Facility> facilities,
                                      std::span<const NodeIndex> incident_nodes = {});

}  // namespace dispatch::geo
