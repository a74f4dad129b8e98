#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dispatch/geo.hpp"

namespace dispatch::atlas {

using geo::Facility;
using geo::NodeIndex;
using geo::RoadGraph;

inline constexpr double kDefaultSpeedKmh = 40.0;

/// Minutes to cover `length_m` at a constant `speed_kmh`.
double edge_travel_time(double length_m, double speed_kmh);

/// Travel time of an integer-millimeter path length. Every atlas entry is
/// produced through this function so equal path lengths give equal times.
double path_minutes(std::int64_t length_mm, double speed_kmh);

/// A travel time that is either finite minutes or unreachable.
using TravelTime = std::optional<double>;

/// Shortest directed path lengths (mm) from every node *to* `target`
/// (Dijkstra on the reversed graph). nullopt where no path exists.
std::vector<std::optional<std::int64_t>> lengths_to(const RoadGraph& g, NodeIndex target);

/// Shortest directed path lengths (mm) *from* `source` to every node.
std::vector<std::optional<std::int64_t>> lengths_from(const RoadGraph& g, NodeIndex source);

struct BestChoice {
  std::size_t facility_index = 0;
  double t_star = 0.0;
};

/// Incident-node x facility matrix of shortest-path travel times.
class TravelTimeAtlas {
public:
  TravelTimeAtlas() = default;
  TravelTimeAtlas(std::vector<NodeIndex> incident_nodes, std::vector<Facility> facilities,
                  std::vector<TravelTime> times, double speed_kmh);

  std::size_t rows() const { return incident_nodes_.size(); }
  std::size_t cols() const { return facilities_.size(); }
  const std::vector<NodeIndex>& incident_nodes() const { return incident_nodes_; }
  const std::vector<Facility>& facilities() const { return facilities_; }
  double speed_kmh() const { return speed_kmh_; }

  const TravelTime& at(std::size_t row, std::size_t col) const { return times_.at(row * cols() + col); }
  std::span<const TravelTime> row(std::size_t r) const {
    return std::span<const TravelTime>(times_).subspan(r * cols(), cols());
  }
  /// Row for a graph node, if the node is one of the incident nodes.
  std::optional<std::size_t> row_of(NodeIndex node) const;
  const std::vector<TravelTime>& raw() const { return times_; }

  bool operator==(const TravelTimeAtlas& o) const;

private:
  std::vector<NodeIndex> incident_nodes_;
  std::vector<Facility> facilities_;
  std::vector<TravelTime> times_;
  double speed_kmh_ = kDefaultSpeedKmh;
  std::unordered_map<NodeIndex, std::size_t> row_index_;
};

/// One reversed-graph Dijkstra per distinct facility node; runs are spread
/// over `threads` workers and joined by facility index.
TravelTimeAtlas build_atlas(const RoadGraph& g, std::span<const NodeIndex> incident_nodes,
                            std::span<const Facility> facilities, double speed_kmh,
                            unsigned threads = 1);

/// Times from one node to each facility (single forward Dijkstra).
std::vector<TravelTime> travel_row(const RoadGraph& g, NodeIndex from, std::span<const Facility> facilities,
                                   double speed_kmh);

/// Fastest reachable facility of `category` in a row; ties to the lowest index.
std::optional<BestChoice> best_in_row(std::span<const TravelTime> row, std::span<const Facility> facilities,
                                      Category category);
std::optional<BestChoice> best_feasible(const TravelTimeAtlas& atlas, std::size_t incident_row,
                                        Category category);

/// CSV: header `incident_node,<facility ids>`; entries shortest round-trip
/// decimals or the literal `unreachable`.
std::string atlas_to_csv(const TravelTimeAtlas& atlas, const RoadGraph& g);
/// Inverse of atlas_to_csv. Facilities are matched by id against `facilities`.
TravelTimeAtlas atlas_from_csv(std::string_view csv, const RoadGraph& g, std::span<const Facility> facilities,
                               double speed_kmh);
/// Sidecar JSON: speed, counts, graph hash, csv hash.
std::string atlas_metadata_json(const TravelTimeAtlas& atlas, const RoadGraph& g, const std::string& csv_text);

}  // namespace dispatch::atlas
