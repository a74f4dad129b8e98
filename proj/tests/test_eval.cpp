#include <cmath>
#include <map>

#include "doctest.h"
#include "oracles.hpp"
#include "world_fixtures.hpp"
#include "dispatch/eval.hpp"

using namespace dispatch;
using atlas::TravelTime;

namespace {

struct TableWorld {
  std::vector<geo::Facility> facilities;
  std::vector<scenario::Incident> incidents;
  atlas::TravelTimeAtlas atlas;
};

/// Atlas given directly as time rows; incident i sits on node i.
TableWorld table_world(std::vector<Category> fac_cats, std::vector<Category> inc_cats,
                       std::vector<std::vector<TravelTime>> rows) {
  static const auto g = geo::parse_road_graph("N a 0 0\n");
  TableWorld t;
  for (std::size_t j = 0; j < fac_cats.size(); ++j) t.facilities.push_back(fixtures::facility(g, "f" + std::to_string(j), fac_cats[j], 0));
  std::vector<geo::NodeIndex> nodes;
  std::vector<TravelTime> flat;
  for (std::size_t i = 0; i < inc_cats.size(); ++i) {
    scenario::Incident inc;
    inc.id = "i" + std::to_string(i);
    inc.category = inc_cats[i];
    inc.node = static_cast<geo::NodeIndex>(i);
    t.incidents.push_back(inc);
    nodes.push_back(inc.node);
    flat.insert(flat.end(), rows[i].begin(), rows[i].end());
  }
  t.atlas = atlas::TravelTimeAtlas(nodes, t.facilities, flat, 40.0);
  return t;
}

eval::Policy fixed_choices(std::map<std::string, std::size_t> choice) {
  return [choice = std::move(choice)](const scenario::Incident& inc, const env::DispatchState&) { return choice.at(inc.id); };
}

}  // namespace

TEST_CASE("oracle policy scores 100 % with zero delta") {
  for (auto w : {worlds::barrier_world(), worlds::intervention_world(), worlds::open_grid_world()}) {
    const auto s = fixtures::make_setup(std::move(w), 300, 8);
    const auto rep = eval::evaluate(eval::oracle_policy(s.atlas), "oracle", s.incidents, s.atlas, {});
    CHECK(rep.n_total == 300);
    CHECK(rep.n_solvable > 0);
    CHECK(rep.optimality_rate == 100.0);
    CHECK(rep.avg_inefficiency_delta == 0.0);
    CHECK(rep.n_penalized == 0);
  }
}

TEST_CASE("uniform-random feasible policy matches exhaustive enumeration") {
  const Category H = Category::Healthcare, S = Category::Security;
  const auto t = table_world({H, H, H, S}, {H, H, S, H},
                             {{10.0, 10.0, 14.0, 1.0},
                              {std::nullopt, 3.0, 8.0, 2.0},
                              {1.0, 2.0, 3.0, 20.0},
                              {std::nullopt, std::nullopt, std::nullopt, 5.0}});
  // feasible sets: {0,1,2}, {1,2}, {3}; incident 3 is unsolvable
  const std::vector<std::vector<std::size_t>> feasible = {{0, 1, 2}, {1, 2}, {3}};
  // closed-form expectation of the rate and delta under a uniform choice
  const double want_rate = 100.0 * (2.0 / 3.0 + 1.0 / 2.0 + 1.0) / 3.0;
  const double want_delta = ((0.0 + 0.0 + 4.0) / 3.0 + (0.0 + 5.0) / 2.0 + 0.0) / 3.0;

  double rate_sum = 0.0, delta_sum = 0.0;
  std::size_t combos = 0;
  for (const auto a : feasible[0]) {
    for (const auto b : feasible[1]) {
      const auto rep = eval::evaluate(fixed_choices({{"i0", a}, {"i1", b}, {"i2", 3}}), "random", t.incidents, t.atlas, {});
      CHECK(rep.n_total == 4);
      CHECK(rep.n_solvable == 3);
      rate_sum += rep.optimality_rate;
      delta_sum += rep.avg_inefficiency_delta;
      ++combos;
      CHECK(rep.avg_inefficiency_delta >= 0.0);
      CHECK((rep.avg_inefficiency_delta == 0.0) == (rep.optimality_rate == 100.0));
    }
  }
  CHECK(rate_sum / combos == doctest::Approx(want_rate).epsilon(1e-12));
  CHECK(delta_sum / combos == doctest::Approx(want_delta).epsilon(1e-12));
}

TEST_CASE("unreachable choice is charged the worst feasible delta") {
  const Category H = Category::Healthcare;
  const auto t = table_world({H, H, H}, {H, H}, {{std::nullopt, 4.0, 9.0}, {std::nullopt, 6.0, std::nullopt}});
  const auto rep = eval::evaluate(fixed_choices({{"i0", 0}, {"i1", 0}}), "p", t.incidents, t.atlas, {});
  CHECK(rep.n_penalized == 2);
  CHECK(rep.n_optimal == 0);
  CHECK(rep.log[0].delta == 5.0);
  CHECK_FALSE(rep.log[0].t_chosen.has_value());
  // a single reachable facility makes the charge zero while the choice stays wrong
  CHECK(rep.log[1].delta == 0.0);
  CHECK_FALSE(rep.log[1].optimal);
  CHECK(rep.avg_inefficiency_delta == 2.5);
  CHECK(rep.dispatch_log_csv().find("i0,0,1,f0,unreachable,4,5,0,1\n") != std::string::npos);
}

TEST_CASE("wrong-category choice is a contract violation") {
  const auto t = table_world({Category::Healthcare, Category::Security}, {Category::Healthcare}, {{1.0, 1.0}});
  CHECK_THROWS_AS(eval::evaluate(fixed_choices({{"i0", 1}}), "p", t.incidents, t.atlas, {}), ContractError);
}

TEST_CASE("nearest-neighbour baseline equals an exhaustive distance scan") {
  Rng rng(30);
  const auto g = geo::parse_road_graph("N a 7 4.8\n");
  std::vector<geo::Facility> fac;
  for (std::size_t j = 0; j < 30; ++j) {
    fac.push_back(geo::Facility{fixtures::pad_id("f", j), static_cast<Category>(j % 4),
                                geo::GeoPoint{7.0 + rng.uniform(0, 0.2), 4.8 + rng.uniform(0, 0.2)}, 0});
  }
  fac[29].location = fac[1].location;  // exact tie, same category
  fac[29].category = fac[1].category;
  for (int t = 0; t < 500; ++t) {
    scenario::Incident inc;
    inc.id = "x";
    inc.category = static_cast<Category>(rng.below(4));
    inc.location = t == 0 ? fac[1].location : geo::GeoPoint{7.0 + rng.uniform(0, 0.2), 4.8 + rng.uniform(0, 0.2)};
    if (t == 0) inc.category = fac[1].category;
    std::size_t best = fac.size();
    double best_d = 0.0;
    for (std::size_t j = 0; j < fac.size(); ++j) {
      if (fac[j].category != inc.category) continue;
      const double d = oracle::haversine(inc.location, fac[j].location);
      if (best == fac.size() || d < best_d) {
        best = j;
        best_d = d;
      }
    }
    CHECK(eval::nearest_neighbor_baseline(inc, fac) == best);
  }
  scenario::Incident lonely;
  lonely.category = Category::Transport;
  const std::vector<geo::Facility> only_health = {fac[0]};
  CHECK_THROWS_AS(eval::nearest_neighbor_baseline(lonely, only_health), InputError);
}

TEST_CASE("baseline crosses an impassable barrier") {
  // f_near is 1.1 km east of the incident but the only bridge is 5.5 km north
  const auto g = geo::parse_road_graph(
      "N inc 0 0\nN near 0.01 0\nN far -0.02 0\nN n1 0 0.05\nN n2 0.01 0.05\n"
      "E inc far 2224 0\nE inc n1 5560 0\nE n1 n2 1112 0\nE n2 near 5560 0\n");
  const std::vector<geo::Facility> fac = {fixtures::facility(g, "f_near", Category::FireDisaster, 1),
                                          fixtures::facility(g, "f_far", Category::FireDisaster, 2)};
  scenario::Incident inc;
  inc.id = "i";
  inc.category = Category::FireDisaster;
  inc.location = g.point(0);
  inc.node = 0;
  const std::vector<scenario::Incident> incs = {inc};
  const std::vector<geo::NodeIndex> nodes = {0};
  const auto a = atlas::build_atlas(g, nodes, fac, 40.0);
  CHECK(eval::nearest_neighbor_baseline(inc, fac) == 0);
  const auto rep = eval::evaluate(eval::baseline_policy(fac), "baseline", incs, a, {});
  CHECK(rep.n_optimal == 0);
  CHECK(rep.avg_inefficiency_delta == doctest::Approx((12232.0 - 2224.0) * 60.0 / 40000.0).epsilon(1e-12));
}

TEST_CASE("barrier world baseline falls short of the oracle") {
  const auto s = fixtures::make_setup(worlds::barrier_world(), 300, 11);
  const auto rep = eval::evaluate(eval::baseline_policy(s.world.facilities), "baseline", s.incidents, s.atlas, {});
  MESSAGE("baseline rate " << rep.optimality_rate << " %, delta " << rep.avg_inefficiency_delta << " min");
  CHECK(rep.optimality_rate < 100.0);
  CHECK(rep.avg_inefficiency_delta > 0.0);
}

TEST_CASE("baseline equals the oracle when roads are straight lines") {
  // every incident is wired straight to every facility, so road order = haversine order
  Rng rng(6);
  geo::RoadGraph::Builder b;
  std::vector<geo::GeoPoint> fpts, ipts;
  for (std::size_t j = 0; j < 12; ++j) {
    fpts.push_back({7.0 + rng.uniform(0, 0.1), 4.8 + rng.uniform(0, 0.1)});
    b.add_node(fixtures::pad_id("f", j), fpts.back());
  }
  for (std::size_t i = 0; i < 200; ++i) {
    ipts.push_back({7.0 + rng.uniform(0, 0.1), 4.8 + rng.uniform(0, 0.1)});
    const auto v = b.add_node(fixtures::pad_id("i", i), ipts.back());
    for (std::size_t j = 0; j < fpts.size(); ++j) b.add_edge(v, static_cast<geo::NodeIndex>(j), oracle::haversine(ipts[i], fpts[j]), false);
  }
  const auto g = std::move(b).build();
  std::vector<geo::Facility> fac;
  for (std::size_t j = 0; j < fpts.size(); ++j) fac.push_back(fixtures::facility(g, fixtures::pad_id("F", j), static_cast<Category>(j % 4), static_cast<geo::NodeIndex>(j)));
  std::vector<scenario::Incident> incs;
  std::vector<geo::NodeIndex> nodes;
  for (std::size_t i = 0; i < ipts.size(); ++i) {
    scenario::Incident inc;
    inc.id = fixtures::pad_id("i", i);
    inc.category = static_cast<Category>(i % 4);
    inc.location = ipts[i];
    inc.node = static_cast<geo::NodeIndex>(fpts.size() + i);
    incs.push_back(inc);
    nodes.push_back(inc.node);
  }
  const auto a = atlas::build_atlas(g, nodes, fac, 40.0);
  const auto base = eval::evaluate(eval::baseline_policy(fac), "baseline", incs, a, {});
  const auto orc = eval::evaluate(eval::oracle_policy(a), "oracle", incs, a, {});
  CHECK(base.optimality_rate == orc.optimality_rate);
  CHECK(base.optimality_rate == 100.0);
  CHECK(base.avg_inefficiency_delta == 0.0);
}

TEST_CASE("delta is zero exactly when every choice is optimal") {
  const auto s = fixtures::make_setup(worlds::barrier_world(), 200, 21);
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    // a random feasible policy that defers to the oracle with probability p
    const double p = trial < 5 ? 1.0 : rng.uniform();
    Rng draw(rng.next_u64());
    const auto oracle = eval::oracle_policy(s.atlas);
    eval::Policy pol = [&](const scenario::Incident& inc, const env::DispatchState& st) -> std::size_t {
      if (draw.uniform() < p) return oracle(inc, st);
      std::vector<std::size_t> ok;
      for (std::size_t j = 0; j < st.mask.size(); ++j) if (st.mask[j]) ok.push_back(j);
      return ok[draw.below(ok.size())];
    };
    const auto rep = eval::evaluate(pol, "mixed", s.incidents, s.atlas, {});
    CHECK(rep.optimality_rate >= 0.0);
    CHECK(rep.optimality_rate <= 100.0);
    CHECK(rep.avg_inefficiency_delta >= 0.0);
    CHECK((rep.avg_inefficiency_delta == 0.0) == (rep.optimality_rate == 100.0));
  }
}

TEST_CASE("per-category breakdown sums to the totals") {
  const auto s = fixtures::make_setup(worlds::barrier_world(), 300, 2);
  const auto rep = eval::evaluate(eval::baseline_policy(s.world.facilities), "baseline", s.incidents, s.atlas, {});
  std::size_t n = 0, opt = 0;
  double delta = 0.0;
  for (const auto& c : rep.per_category) {
    n += c.n_solvable;
    opt += c.n_optimal;
    delta += c.avg_delta * static_cast<double>(c.n_solvable);
  }
  CHECK(n == rep.n_solvable);
  CHECK(opt == rep.n_optimal);
  CHECK(delta / static_cast<double>(n) == doctest::Approx(rep.avg_inefficiency_delta).epsilon(1e-12));
  CHECK(rep.log.size() == rep.n_total);
  CHECK(rep.summary_text().find("optimality rate") != std::string::npos);
}

TEST_CASE("percentiles and latency") {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = 100.0 - i;
  CHECK(eval::percentile(v, 50.0) == 50.0);
  CHECK(eval::percentile(v, 99.0) == 99.0);
  CHECK(eval::percentile(v, 100.0) == 100.0);
  CHECK(eval::percentile({}, 99.0) == 0.0);
  CHECK(eval::percentile({7.0}, 1.0) == 7.0);

  const auto params = agent::PolicyParams::initialize(16, 1);
  const auto empty = eval::latency_bench(params, {}, atlas::TravelTimeAtlas{}, {});
  CHECK(empty.n == 0);
  CHECK(empty.p99_ms == 0.0);
  const auto s = fixtures::make_setup(worlds::barrier_world(), 100, 4);
  const auto rep = eval::latency_bench(params, s.incidents, s.atlas, {});
  CHECK(rep.n > 0);
  CHECK(rep.p50_ms <= rep.p99_ms);
  CHECK(rep.p99_ms <= rep.max_ms);
  CHECK(rep.p99_ms < 1000.0);
}
