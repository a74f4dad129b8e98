#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dispatch/env.hpp"
#include "dispatch/policy.hpp"
#include "dispatch/scenario.hpp"
#include "dispatch/trainer.hpp"

namespace dispatch::config {

enum class AtlasScope { Incidents, AllNodes };

/// Flat `key = value` run configuration. Lines starting with `#` are
/// comments. Unknown keys and duplicate keys are errors. Paths are resolved
/// relative to the directory holding the config file.
struct RunConfig {
  // Inputs.
  std::string graph;
  std::string facilities;
  std::string boundary;
  std::string regions;  ///< optional; empty when service zones are used
  std::vector<scenario::PopulationCenter> population_centers;

  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> challenge_seed;  ///< defaults to seed + 1

  // Environment.
  double speed_kmh = 40.0;
  env::Normalization norms;
  env::RewardParams reward;
  AtlasScope atlas_scope = AtlasScope::Incidents;

  // Incident generation.
  std::size_t train_incidents = 2000;
  std::optional<std::array<std::size_t, kNumCategories>> train_category_counts;
  std::size_t challenge_incidents = 500;
  std::optional<std::array<std::size_t, kNumCategories>> challenge_category_counts;
  double cluster_fraction = 0.60;

  trainer::TrainConfig train;

  // Governance.
  policy::GradeThresholds thresholds;
  std::size_t zones = 0;  ///< > 0: k-means service zones replace the regions file
  std::size_t probes_per_category = 50;
  std::size_t candidate_cap = policy::kCandidateCap;

  unsigned threads = 1;

  /// Canonical `key=value` lines (sorted, normalised values) of every setting.
  std::string canonical_text() const;
  std::string hash() const;

  std::uint64_t require_seed() const;
  std::uint64_t effective_challenge_seed() const;
  std::array<std::size_t, kNumCategories> train_counts() const;
  std::array<std::size_t, kNumCategories> challenge_counts() const;

  scenario::ScenarioConfig training_scenario() const;
  scenario::ScenarioConfig challenge_scenario() const;
  /// Training config with the seed filled in.
  trainer::TrainConfig trainer_config() const;

  /// Checks ranges and cross-field consistency; throws InputError.
  void validate() const;
};

/// Applies one `key`, `value` pair; throws InputError on unknown keys or bad values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value, const std::string& base_dir);

RunConfig parse_run_config(std::string_view text, const std::string& base_dir, const std::string& source_name = "<memory>");
RunConfig load_run_config(const std::string& path);

std::vector<scenario::PopulationCenter> parse_population_centers(std::string_view text);
std::array<std::size_t, kNumCategories> parse_category_counts(std::string_view text);

/// Every key the parser accepts, in documentation order.
const std::vector<std::string_view>& known_keys();

}  // namespace dispatch::config
