#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "dispatch/atlas.hpp"
#include "dispatch/scenario.hpp"

namespace dispatch::env {

using atlas::TravelTime;

/// Fixed normalization horizons for the facility features.
struct Normalization {
  double t_max = 120.0;  ///< minutes; tau_norm = min(t / t_max, 1)
  double d_max = 60.0;   ///< minutes; delta_norm = min((t - t*) / d_max, 1)
};

struct RewardParams {
  double alpha = 0.1;  ///< reward lost per minute of inefficiency
  static constexpr double kRewardMax = 1.0;
};

inline constexpr int kFeatureWidth = 3;
using FeatureRow = std::array<double, kFeatureWidth>;
/// Row used for masked facilities (wrong category or unreachable).
inline constexpr FeatureRow kFillerRow = {1.0, 0.0, 1.0};

/// Category one-hot followed by one [tau_norm, reach, delta_norm] row per facility.
struct DispatchState {
  Category category = Category::Healthcare;
  std::array<double, kNumCategories> category_onehot{};
  std::vector<FeatureRow> facility_features;
  std::vector<bool> mask;

  std::size_t n_facilities() const { return facility_features.size(); }
  std::size_t n_feasible() const;
  bool solvable() const { return n_feasible() > 0; }
  /// Flattened concatenation: onehot (4) then 3 values per facility.
  std::vector<double> flatten() const;
};

/// Atlas-derived facts needed to score an action.
struct IncidentContext {
  std::vector<TravelTime> times;
  std::optional<atlas::BestChoice> best;
};

struct StepOutcome {
  double reward = 0.0;
  double chosen_time = 0.0;
  double t_star = 0.0;
  bool optimal = false;
};

DispatchState build_state(Category category, std::span<const TravelTime> times,
                          std::span<const geo::Facility> facilities, const Normalization& norms);
/// Looks up the incident's node row; throws InputError when the node is not in the atlas.
DispatchState build_state(const scenario::Incident& incident, const atlas::TravelTimeAtlas& atlas,
                          const Normalization& norms);

IncidentContext make_context(const scenario::Incident& incident, const atlas::TravelTimeAtlas& atlas);

/// 1 - alpha * (t_chosen - t_star), unclamped. Throws ContractError when
/// t_chosen < t_star or either input is not finite.
double reward(double t_chosen, double t_star, const RewardParams& p);

/// Single-step episode: scores `action` and terminates. A masked action is a
/// ContractError.
StepOutcome step(const DispatchState& state, std::size_t action, const IncidentContext& ctx,
                 const RewardParams& p);

}  // namespace dispatch::env
