#include "dispatch/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace dispatch::eval {

std::size_t nearest_neighbor_baseline(const scenario::Incident& incident, std::span<const geo::Facility> facilities) {
  std::size_t best = facilities.size();
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < facilities.size(); ++j) {
    if (facilities[j].category != incident.category) continue;
    const double d = geo::haversine_m(incident.location, facilities[j].location);
    if (d < best_d) {
      best = j;
      best_d = d;
    }
  }
  if (best == facilities.size()) {
    throw InputError("no facility of category " + std::string(category_name(incident.category)) + " for incident " +
                     incident.id);
  }
  return best;
}

Policy baseline_policy(std::span<const geo::Facility> facilities) {
  std::vector<geo::Facility> owned(facilities.begin(), facilities.end());
  return [owned = std::move(owned)](const scenario::Incident& inc, const env::DispatchState&) {
    return nearest_neighbor_baseline(inc, owned);
  };
}

Policy agent_policy(const agent::PolicyParams& params) {
  return [&params](const scenario::Incident&, const env::DispatchState& s) {
    return agent::greedy_action(agent::forward(params, s));
  };
}

Policy oracle_policy(const atlas::TravelTimeAtlas& atlas) {
  return [&atlas](const scenario::Incident& inc, const env::DispatchState&) {
    const auto best = atlas::best_feasible(atlas, *atlas.row_of(inc.node), inc.category);
    if (!best) throw ContractError("oracle asked about an unsolvable incident");
    return best->facility_index;
  };
}

EvaluationReport evaluate(const Policy& policy, std::string policy_name, std::span<const scenario::Incident> incidents,
                          const atlas::TravelTimeAtlas& atlas, const env::Normalization& norms) {
  EvaluationReport rep;
  rep.policy_name = std::move(policy_name);
  rep.n_total = incidents.size();
  const auto& facilities = atlas.facilities();
  std::array<double, kNumCategories> cat_delta{};
  double delta_sum = 0.0;
  double best_sum = 0.0;
  for (const auto& inc : incidents) {
    DispatchRecord rec;
    rec.incident_id = inc.id;
    rec.category = inc.category;
    const auto state = env::build_state(inc, atlas, norms);
    const auto ctx = env::make_context(inc, atlas);
    rec.solvable = ctx.best.has_value();
    if (!rec.solvable) {
      rep.log.push_back(std::move(rec));
      continue;
    }
    const double t_star = ctx.best->t_star;
    rec.t_star = t_star;
    const std::size_t choice = policy(inc, state);
    if (choice >= facilities.size()) throw ContractError("policy returned an out-of-range facility");
    if (facilities[choice].category != inc.category) {
      throw ContractError("policy " + rep.policy_name + " chose a facility of the wrong category for " + inc.id);
    }
    rec.chosen_facility = facilities[choice].id;
    if (ctx.times[choice]) {
      rec.t_chosen = *ctx.times[choice];
      rec.delta = *rec.t_chosen - t_star;
      rec.optimal = *rec.t_chosen == t_star;
    } else {
      double worst = t_star;
      for (std::size_t j = 0; j < facilities.size(); ++j) {
        if (state.mask[j]) worst = std::max(worst, *ctx.times[j]);
      }
      rec.delta = worst - t_star;
      rec.penalized = true;
      ++rep.n_penalized;
    }
    ++rep.n_solvable;
    auto& cs = rep.per_category[category_index(inc.category)];
    ++cs.n_solvable;
    if (rec.optimal) {
      ++rep.n_optimal;
      ++cs.n_optimal;
    }
    delta_sum += rec.delta;
    cat_delta[category_index(inc.category)] += rec.delta;
    best_sum += t_star;
    rep.log.push_back(std::move(rec));
  }
  if (rep.n_solvable > 0) {
    const double n = static_cast<double>(rep.n_solvable);
    rep.optimality_rate = 100.0 * static_cast<double>(rep.n_optimal) / n;
    rep.avg_inefficiency_delta = delta_sum / n;
    rep.avg_best_possible_time = best_sum / n;
  }
  for (int c = 0; c < kNumCategories; ++c) {
    auto& cs = rep.per_category[c];
    if (cs.n_solvable == 0) continue;
    cs.optimality_rate = 100.0 * static_cast<double>(cs.n_optimal) / static_cast<double>(cs.n_solvable);
    cs.avg_delta = cat_delta[c] / static_cast<double>(cs.n_solvable);
  }
  return rep;
}

namespace {
std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}
}  // namespace

std::string EvaluationReport::to_csv() const {
  std::ostringstream out;
  out << "# unreachable choices are charged (worst finite feasible time - best time) and never count as optimal\n";
  out << "policy,scope,n_total,n_solvable,n_optimal,optimality_rate_pct,avg_inefficiency_delta_min,"
         "avg_best_possible_time_min,n_penalized\n";
  out << policy_name << ",all," << n_total << ',' << n_solvable << ',' << n_optimal << ','
      << format_double(optimality_rate) << ',' << format_double(avg_inefficiency_delta) << ','
      << format_double(avg_best_possible_time) << ',' << n_penalized << '\n';
  for (int c = 0; c < kNumCategories; ++c) {
    const auto& cs = per_category[c];
    out << policy_name << ",category_" << c << ",," << cs.n_solvable << ',' << cs.n_optimal << ','
        << format_double(cs.optimality_rate) << ',' << format_double(cs.avg_delta) << ",,\n";
  }
  return out.str();
}

std::string EvaluationReport::dispatch_log_csv() const {
  std::ostringstream out;
  out << "incident_id,category,solvable,chosen_facility,t_chosen_min,t_star_min,delta_min,optimal,penalized\n";
  for (const auto& r : log) {
    out << r.incident_id << ',' << category_index(r.category) << ',' << (r.solvable ? 1 : 0) << ','
        << r.chosen_facility.value_or("") << ','
        << (r.t_chosen ? format_double(*r.t_chosen) : std::string(r.solvable ? "unreachable" : "")) << ','
        << (r.t_star ? format_double(*r.t_star) : std::string()) << ','
        << (r.solvable ? format_double(r.delta) : std::string()) << ',' << (r.optimal ? 1 : 0) << ','
        << (r.penalized ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string EvaluationReport::summary_text() const {
  std::ostringstream out;
  out << "policy: " << policy_name << '\n'
      << "  incidents:                 " << n_total << " (" << n_solvable << " solvable)\n"
      << "  optimality rate:           " << fixed2(optimality_rate) << " %\n"
      << "  avg inefficiency delta:    " << fixed2(avg_inefficiency_delta) << " min\n"
      << "  avg best possible time:    " << fixed2(avg_best_possible_time) << " min\n"
      << "  unreachable choices:       " << n_penalized << " (charged worst-feasible delta)\n";
  for (int c = 0; c < kNumCategories; ++c) {
    const auto& cs = per_category[c];
    out << "  [" << c << ' ' << category_name(static_cast<Category>(c)) << "] n=" << cs.n_solvable
        << " rate=" << fixed2(cs.optimality_rate) << "% delta=" << fixed2(cs.avg_delta) << " min\n";
  }
  return out.str();
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(q / 100.0 * static_cast<double>(values.size()));
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size()))) - 1;
  return values[idx];
}

std::string LatencyReport::to_csv() const {
  std::ostringstream out;
  out << "n,p50_ms,p99_ms,max_ms\n"
      << n << ',' << format_double(p50_ms) << ',' << format_double(p99_ms) << ',' << format_double(max_ms) << '\n';
  return out.str();
}

LatencyReport latency_bench(const agent::PolicyParams& params, std::span<const scenario::Incident> incidents,
                            const atlas::TravelTimeAtlas& atlas, const env::Normalization& norms) {
  std::vector<double> samples;
  samples.reserve(incidents.size());
  std::size_t sink = 0;
  for (const auto& inc : incidents) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto state = env::build_state(inc, atlas, norms);
    if (!state.solvable()) continue;
    sink += agent::greedy_action(agent::forward(params, state));
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  LatencyReport rep;
  rep.n = samples.size();
  if (samples.empty()) return rep;
  rep.p50_ms = percentile(samples, 50.0);
  rep.p99_ms = percentile(samples, 99.0);
  rep.max_ms = *std::max_element(samples.begin(), samples.end());
  (void)sink;
  return rep;
}

}  // namespace dispatch::eval
