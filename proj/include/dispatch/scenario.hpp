#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dispatch/geo.hpp"

namespace dispatch::scenario {

using geo::GeoPoint;
using geo::NodeIndex;

enum class Split { Training, Challenge, Probe };
std::string_view split_name(Split s);

struct Incident {
  std::string id;
  Category category = Category::Healthcare;
  GeoPoint location;
  NodeIndex node = 0;
  Split split = Split::Training;
  /// True when drawn from the clustered (Gaussian) branch of the mixture.
  bool clustered = false;
};

struct PopulationCenter {
  GeoPoint center;
  double weight = 1.0;
  /// Gaussian spread in degrees.
  double sigma = 0.05;
};

inline constexpr double kDefaultSigmaDeg = 0.05;
inline constexpr int kRetryBudget = 1000;

struct ScenarioConfig {
  std::size_t n_incidents = 0;
  double cluster_fraction = 0.60;
  /// Indexed by category code; must sum to n_incidents.
  std::array<std::size_t, kNumCategories> category_counts{};
  std::uint64_t rng_seed = 0;
  Split split = Split::Training;
  /// Prefix for generated incident ids.
  std::string id_prefix = "inc";

  /// Throws InputError when the invariants do not hold.
  void validate() const;
};

/// Full-scale category quotas for the 2000-incident training set and the
/// 500-incident challenge set.
inline constexpr std::array<std::size_t, kNumCategories> kTrainingQuota = {570, 532, 454, 444};
inline constexpr std::array<std::size_t, kNumCategories> kChallengeQuota = {142, 142, 108, 108};

/// Splits `n` across categories proportionally to `weights` (largest remainder).
std::array<std::size_t, kNumCategories> proportional_counts(std::size_t n,
                                                            const std::array<double, kNumCategories>& weights);

/// Mixture-model generator: round(n * cluster_fraction) points are center +
/// isotropic Gaussian noise (center picked by weight), the rest are uniform
/// over the boundary's bounding box; every point is rejection-sampled into
/// the boundary. Category quotas are met exactly and shuffled.
std::vector<Incident> generate_incidents(const ScenarioConfig& cfg, std::span<const PopulationCenter> centers,
                                         const geo::RegionBoundary& boundary, const geo::RoadGraph& g);

/// Same generator labelled as the hold-out split. `training_seed` must differ
/// from cfg.rng_seed.
std::vector<Incident> generate_challenge_set(ScenarioConfig cfg, std::span<const PopulationCenter> centers,
                                             const geo::RegionBoundary& boundary, const geo::RoadGraph& g,
                                             std::uint64_t training_seed);

std::string incidents_to_geojson(std::span<const Incident> incidents);
/// Reads incidents written by incidents_to_geojson, snapping onto `g`.
std::vector<Incident> parse_incidents(std::string_view geojson, const geo::RoadGraph& g);
std::vector<Incident> load_incidents(const std::string& path, const geo::RoadGraph& g);
std::string scenario_metadata_json(const ScenarioConfig& cfg, std::span<const PopulationCenter> centers);

/// Distinct nodes of an incident list in first-seen order.
std::vector<NodeIndex> unique_nodes(std::span<const Incident> incidents);

}  // namespace dispatch::scenario
