#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dispatch/agent.hpp"

namespace dispatch::eval {

/// Chooses a facility index for an incident. May return an index that is not
/// masked in (the nearest-neighbour baseline ignores reachability); returning
/// a facility of the wrong category is a ContractError.
using Policy = std::function<std::size_t(const scenario::Incident&, const env::DispatchState&)>;

/// Geographically closest facility of the incident's category (haversine),
/// ignoring the road network; ties to the lowest index.
std::size_t nearest_neighbor_baseline(const scenario::Incident& incident, std::span<const geo::Facility> facilities);

Policy baseline_policy(std::span<const geo::Facility> facilities);
/// Greedy policy over a frozen parameter set.
Policy agent_policy(const agent::PolicyParams& params);
/// Atlas argmin (the ground truth itself).
Policy oracle_policy(const atlas::TravelTimeAtlas& atlas);

struct CategoryStats {
  std::size_t n_solvable = 0;
  std::size_t n_optimal = 0;
  double optimality_rate = 0.0;  ///< percent
  double avg_delta = 0.0;        ///< minutes
};

struct DispatchRecord {
  std::string incident_id;
  Category category = Category::Healthcare;
  bool solvable = false;
  std::optional<std::string> chosen_facility;
  std::optional<double> t_chosen;  ///< empty when the choice is unreachable
  std::optional<double> t_star;
  double delta = 0.0;
  bool optimal = false;
  bool penalized = false;  ///< chosen facility unreachable; delta is the worst-feasible penalty
};

struct EvaluationReport {
  std::string policy_name;
  std::size_t n_total = 0;
  std::size_t n_solvable = 0;
  std::size_t n_optimal = 0;
  std::size_t n_penalized = 0;
  double optimality_rate = 0.0;         ///< percent of solvable incidents
  double avg_inefficiency_delta = 0.0;  ///< minutes, over solvable incidents
  double avg_best_possible_time = 0.0;  ///< minutes, over solvable incidents
  std::array<CategoryStats, kNumCategories> per_category{};
  std::vector<DispatchRecord> log;

  std::string to_csv() const;
  std::string dispatch_log_csv() const;
  std::string summary_text() const;
};

/// Scores `policy` against the atlas. Unsolvable incidents count toward
/// n_total only. A choice with no finite time is charged
/// (worst finite feasible time - t*) and is never optimal.
EvaluationReport evaluate(const Policy& policy, std::string policy_name, std::span<const scenario::Incident> incidents,
                          const atlas::TravelTimeAtlas& atlas, const env::Normalization& norms);

struct LatencyReport {
  std::size_t n = 0;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
  std::string to_csv() const;
};

/// Nearest-rank percentile (q in percent) of an unsorted sample; 0 for an empty sample.
double percentile(std::vector<double> values, double q);

/// Wall-clock per recommendation (build_state + forward + greedy) for every
/// solvable incident.
LatencyReport latency_bench(const agent::PolicyParams& params, std::span<const scenario::Incident> incidents,
                            const atlas::TravelTimeAtlas& atlas, const env::Normalization& norms);

}  // namespace dispatch::eval
