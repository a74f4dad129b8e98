#include "dispatch/env.hpp"

#include <algorithm>
#include <cmath>

namespace dispatch::env {

std::size_t DispatchState::n_feasible() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)); }

std::vector<double> DispatchState::flatten() const {
  std::vector<double> out(category_onehot.begin(), category_onehot.end());
  out.reserve(kNumCategories + kFeatureWidth * facility_features.size());
  for (const auto& row : facility_features) out.insert(out.end(), row.begin(), row.end());
  return out;
}

DispatchState build_state(Category category, std::span<const TravelTime> times,
                          std::span<const geo::Facility> facilities, const Normalization& norms) {
  if (times.size() != facilities.size()) throw ContractError("time row and facility list differ in length");
  if (!(norms.t_max > 0.0) || !(norms.d_max > 0.0)) throw InputError("normalization horizons must be positive");
  DispatchState s;
  s.category = category;
  s.category_onehot[category_index(category)] = 1.0;
  s.facility_features.assign(facilities.size(), kFillerRow);
  s.mask.assign(facilities.size(), false);

  const auto best = atlas::best_in_row(times, facilities, category);
  if (!best) return s;
  for (std::size_t j = 0; j < facilities.size(); ++j) {
    if (facilities[j].category != category || !times[j]) continue;
    const double t = *times[j];
    s.facility_features[j] = {std::min(t / norms.t_max, 1.0), 1.0,
                              std::min((t - best->t_star) / norms.d_max, 1.0)};
    s.mask[j] = true;
  }
  return s;
}

DispatchState build_state(const scenario::Incident& incident, const atlas::TravelTimeAtlas& atlas,
                          const Normalization& norms) {
  const auto row = atlas.row_of(incident.node);
  if (!row) throw InputError("incident " + incident.id + " is on a node missing from the atlas");
  return build_state(incident.category, atlas.row(*row), atlas.facilities(), norms);
}

IncidentContext make_context(const scenario::Incident& incident, const atlas::TravelTimeAtlas& atlas) {
  const auto row = atlas.row_of(incident.node);
  if (!row) throw InputError("incident " + incident.id + " is on a node missing from the atlas");
  IncidentContext ctx;
  const auto r = atlas.row(*row);
  ctx.times.assign(r.begin(), r.end());
  ctx.best = atlas::best_feasible(atlas, *row, incident.category);
  return ctx;
}

double reward(double t_chosen, double t_star, const RewardParams& p) {
  if (!std::isfinite(t_chosen) || !std::isfinite(t_star)) throw ContractError("reward needs finite times");
  if (t_chosen < t_star) throw ContractError("chosen time is below the best feasible time; atlas and mask disagree");
  return RewardParams::kRewardMax - p.alpha * (t_chosen - t_star);
}

StepOutcome step(const DispatchState& state, std::size_t action, const IncidentContext& ctx, const RewardParams& p) {
  if (action >= state.mask.size()) throw ContractError("action index out of range");
  if (!state.mask[action]) throw ContractError("masked-out action " + std::to_string(action) + " was chosen");
  if (!ctx.best || !ctx.times.at(action)) throw ContractError("step on an incident without a feasible facility");
  StepOutcome out;
  out.chosen_time = *ctx.times[action];
  out.t_star = ctx.best->t_star;
  out.reward = reward(out.chosen_time, out.t_star, p);
  out.optimal = out.chosen_time == out.t_star;
  return out;
}

}  // namespace dispatch::env
