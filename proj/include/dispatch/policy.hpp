#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dispatch/atlas.hpp"
#include "dispatch/scenario.hpp"

namespace dispatch::policy {

using geo::GeoPoint;
using geo::NodeIndex;

// ---------------------------------------------------------------------------
// Service zones

struct ZoneAssignment {
  std::size_t k = 0;
  std::vector<GeoPoint> centroids;
  std::vector<std::size_t> assignment;
  std::size_t iterations = 0;
  /// Within-cluster sum of squares after each Lloyd iteration.
  std::vector<double> objective_history;
};

inline constexpr std::size_t kMaxLloydIterations = 300;

/// Lloyd k-means on (lon, lat) with seeded farthest-point initialisation.
/// Runs until the assignment is a fixed point or kMaxLloydIterations.
/// An emptied cluster is reseeded at the point farthest from the other centroids.
ZoneAssignment cluster_zones(std::span<const GeoPoint> points, std::size_t k, std::uint64_t seed);

double within_cluster_ss(std::span<const GeoPoint> points, std::span<const GeoPoint> centroids,
                         std::span<const std::size_t> assignment);

/// Index of the nearest centroid (squared planar lon/lat distance, ties to the lowest index).
std::size_t nearest_centroid(const GeoPoint& p, std::span<const GeoPoint> centroids);

// ---------------------------------------------------------------------------
// Assessment

enum class Grade { Effective, AtRisk, Desert, Ungradable };
std::string_view grade_name(Grade g);
/// Map colour used in the GeoJSON outputs.
std::string_view grade_colour(Grade g);

struct GradeThresholds {
  double t_green = 14.0;  ///< minutes
  double t_red = 30.0;    ///< minutes
  double c_min = 0.95;    ///< coverage needed for Effective
  double c_red = 0.5;     ///< coverage below this is a Desert
  void validate() const;
};

/// Green iff mean <= t_green and coverage >= c_min; Red iff mean > t_red or
/// coverage < c_red (a missing mean counts as Red); Yellow otherwise.
Grade grade_of(std::optional<double> mean_best_time, double coverage, const GradeThresholds& th);

/// One governance region (an administrative polygon or a service zone).
struct Region {
  std::string region_id;
  std::optional<geo::RegionBoundary> boundary;
  std::vector<scenario::Incident> probes;
  /// Candidate sites for new facilities.
  std::vector<NodeIndex> candidates;
};

struct ServiceGrade {
  std::string region_id;
  Category category = Category::Healthcare;
  std::size_t n_probes = 0;
  std::size_t n_solvable = 0;
  std::optional<double> mean_best_time;
  double coverage = 0.0;
  Grade grade = Grade::Ungradable;
};

/// Grades every region x category from the atlas rows of the probes.
std::vector<ServiceGrade> assess(std::span<const Region> regions, const atlas::TravelTimeAtlas& atlas,
                                 const GradeThresholds& th);

/// Builds an atlas over the probe nodes for `facilities` and assesses.
std::vector<ServiceGrade> assess_with(std::span<const Region> regions, const geo::RoadGraph& g,
                                      std::span<const geo::Facility> facilities, double speed_kmh,
                                      const GradeThresholds& th);

// ---------------------------------------------------------------------------
// Interventions

inline constexpr std::size_t kCandidateCap = 500;

/// Graph nodes inside `boundary`, evenly subsampled down to `cap`.
std::vector<NodeIndex> candidate_nodes(const geo::RoadGraph& g, const geo::RegionBoundary& boundary,
                                       std::size_t cap = kCandidateCap);

enum class PlanStatus { AlreadyEffective, Planned, Infeasible, Ungradable };
std::string_view plan_status_name(PlanStatus s);

struct ProposedSite {
  GeoPoint location;
  NodeIndex node = 0;
  std::string node_id;
  Category category = Category::Healthcare;
};

struct RegionPlan {
  std::string region_id;
  Category category = Category::Healthcare;
  Grade grade_before = Grade::Ungradable;
  std::vector<ProposedSite> proposed_sites;
  std::optional<double> time_before;
  std::optional<double> time_after;
  double coverage_before = 0.0;
  double coverage_after = 0.0;
  PlanStatus status = PlanStatus::AlreadyEffective;
  /// Length of the augmented facility list in effect when time_after was
  /// computed (original facilities plus every site placed up to this plan).
  std::size_t facility_prefix = 0;

  std::size_t n_new() const { return proposed_sites.size(); }
};

struct InterventionPlan {
  std::vector<RegionPlan> regions;
  /// Original facilities followed by one synthetic facility per proposed site.
  std::vector<geo::Facility> augmented_facilities;
  std::vector<ServiceGrade> grades_before;
  std::vector<ServiceGrade> grades_after;

  std::string to_csv() const;
  std::string sites_geojson() const;
};

/// Greedy placement per flagged (region, category): repeatedly add the
/// candidate that minimises (unsolvable probes, mean best time) until the
/// Effective thresholds hold or no candidate improves. Candidate times come
/// from one reversed Dijkstra per candidate. Sites accumulate across regions;
/// passes repeat until every gradeable region is Effective or nothing changes.
InterventionPlan plan_interventions(std::span<const Region> regions, const geo::RoadGraph& g,
                                    std::span<const geo::Facility> facilities, double speed_kmh,
                                    const GradeThresholds& th, unsigned threads = 1);

std::string grades_to_csv(std::span<const ServiceGrade> grades);
/// One feature per region x category; polygon geometry when the region has a
/// boundary, otherwise the mean probe location.
std::string grades_to_geojson(std::span<const ServiceGrade> grades, std::span<const Region> regions);

}  // namespace dispatch::policy
