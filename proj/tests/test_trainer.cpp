#include <cmath>

#include "doctest.h"
#include "world_fixtures.hpp"

using namespace dispatch;
using agent::PolicyParams;
using trainer::TrainConfig;

namespace {

env::DispatchState state_of(Category c, std::vector<env::FeatureRow> rows, std::vector<bool> mask) {
  env::DispatchState s;
  s.category = c;
  s.category_onehot[category_index(c)] = 1.0;
  s.facility_features = std::move(rows);
  s.mask = std::move(mask);
  return s;
}

bool is_critic_block(std::string_view name) { return name.substr(0, 7) == "critic_"; }

double greedy_optimality(const PolicyParams& p, std::span<const trainer::Episode> episodes) {
  std::size_t solvable = 0, optimal = 0;
  for (const auto& ep : episodes) {
    if (!ep.state.solvable()) continue;
    ++solvable;
    const auto a = agent::greedy_action(agent::forward(p, ep.state));
    if (ep.context.times[a] == ep.context.best->t_star) ++optimal;
  }
  return static_cast<double>(optimal) / static_cast<double>(solvable);
}

}  // namespace

TEST_CASE("single-step advantage") {
  TrainConfig cfg;
  CHECK(trainer::advantage(1.0, 1.0, cfg) == 0.0);
  CHECK(trainer::advantage(0.5, 0.9, cfg) == doctest::Approx(-0.4).epsilon(1e-15));
  for (const double lambda : {0.0, 0.5, 1.0}) {
    for (const double gamma : {0.5, 0.99, 1.0}) {
      cfg.gae_lambda = lambda;
      cfg.gamma = gamma;
      CHECK(trainer::advantage(0.5, 0.9, cfg) == 0.5 - 0.9);
    }
  }
}

TEST_CASE("GAE over a two-step trajectory") {
  // A1 = r1 - V1 (terminal); A0 = (r0 + g V1 - V0) + g l A1
  const std::vector<double> r = {1.0, 0.0}, v = {0.5, 0.2, 0.1};
  const bool flags[] = {false, true};
  const auto a = trainer::gae(r, v, flags, 0.9, 0.8);
  REQUIRE(a.size() == 2);
  CHECK(a[1] == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(a[0] == doctest::Approx(0.68 + 0.9 * 0.8 * -0.2).epsilon(1e-15));
  const bool bad[] = {true};
  CHECK_THROWS_AS(trainer::gae(r, v, bad, 0.9, 0.8), ContractError);
}

TEST_CASE("single-sample loss equals a hand computation") {
  // d = 4, identity projections: logits (tau - delta) / 2, V = 0.5 + sum tanh(ctx)
  auto p = PolicyParams::zeros(4);
  for (std::size_t i = 0; i < 4; ++i) {
    p.query_proj(i, i) = 1.0;
    p.key_proj(i, i) = 1.0;
    p.critic_hidden(i, i) = 1.0;
    p.critic_out(0, i) = 1.0;
  }
  for (std::size_t r = 0; r < 3; ++r) p.facility_embed(r, r) = 1.0;
  p.category_embed(0, 0) = 1.0;
  p.category_embed(0, 2) = -1.0;
  p.critic_out_bias(0, 0) = 0.5;
  const auto s = state_of(Category::Healthcare, {{1.0 / 6.0, 1, 0}, {1.0 / 3.0, 1, 1.0 / 3.0}}, {true, true});
  const double e = std::exp(1.0 / 12.0);
  const double p0 = e / (e + 1.0), p1 = 1.0 / (e + 1.0);
  const double value = 0.5 + std::tanh(p0 / 6.0 + p1 / 3.0) + std::tanh(1.0) + std::tanh(p1 / 3.0);
  const double entropy = -(p0 * std::log(p0) + p1 * std::log(p1));
  const double r = 0.5;
  const double adv = r - value;
  const double want = -adv * std::log(p1) + (r - value) * (r - value) - 0.01 * entropy;

  TrainConfig cfg;
  const std::vector<trainer::Sample> batch = {{"x", s, 1, r}};
  agent::Gradients g;
  const auto lc = trainer::batch_gradients(p, batch, cfg, g);
  CHECK(lc.total == doctest::Approx(want).epsilon(1e-13));
  CHECK(lc.actor == doctest::Approx(-adv * std::log(p1)).epsilon(1e-13));
  CHECK(lc.critic == doctest::Approx(adv * adv).epsilon(1e-13));
  CHECK(lc.entropy == doctest::Approx(entropy).epsilon(1e-13));
  CHECK(lc.mean_value == doctest::Approx(value).epsilon(1e-14));
}

TEST_CASE("critic weight scales only the critic term") {
  Rng rng(4);
  const auto params = PolicyParams::initialize(4, 12);
  std::vector<trainer::Sample> batch;
  for (int i = 0; i < 6; ++i) {
    std::vector<env::FeatureRow> rows;
    std::vector<bool> mask;
    for (int j = 0; j < 4; ++j) {
      rows.push_back({rng.uniform(), 1.0, rng.uniform()});
      mask.push_back(true);
    }
    batch.push_back({"i" + std::to_string(i), state_of(Category::Transport, rows, mask), rng.below(4), rng.uniform()});
  }
  TrainConfig one, two;
  two.critic_weight = 2.0;
  agent::Gradients g1, g2;
  const auto l1 = trainer::batch_gradients(params, batch, one, g1);
  const auto l2 = trainer::batch_gradients(params, batch, two, g2);
  CHECK(l1.actor == l2.actor);
  CHECK(l1.critic == l2.critic);
  CHECK(l2.total - l1.total == doctest::Approx(l1.critic).epsilon(1e-12));

  // critic-only gradient: the same loss with the actor and entropy terms removed
  auto gc = PolicyParams::zeros(4);
  for (const auto& s : batch) {
    agent::LossTargets t;
    t.value_target = s.reward;
    t.actor_weight = 0.0;
    t.entropy_coef = 0.0;
    agent::backward(params, s.state, s.action, t, gc, 1.0 / static_cast<double>(batch.size()));
  }
  std::vector<const agent::Matrix*> b1, bc;
  g1.for_each_block([&](std::string_view, const agent::Matrix& m) { b1.push_back(&m); });
  gc.for_each_block([&](std::string_view, const agent::Matrix& m) { bc.push_back(&m); });
  std::size_t k = 0;
  g2.for_each_block([&](std::string_view name, const agent::Matrix& m) {
    for (std::size_t i = 0; i < m.data.size(); ++i) {
      if (is_critic_block(name)) {
        CHECK(m.data[i] == 2.0 * b1[k]->data[i]);
      } else {
        CHECK(m.data[i] - b1[k]->data[i] == doctest::Approx(bc[k]->data[i]).epsilon(1e-9));
      }
    }
    ++k;
  });
}

TEST_CASE("fixed point: optimal deterministic batch with V = 1 does not move") {
  auto p = PolicyParams::initialize(4, 3);
  for (auto* m : {&p.critic_hidden, &p.critic_hidden_bias, &p.critic_out}) std::fill(m->data.begin(), m->data.end(), 0.0);
  p.critic_out_bias(0, 0) = 1.0;
  const auto s = state_of(Category::Security, {env::kFillerRow, {0.2, 1, 0}}, {false, true});
  const std::vector<trainer::Sample> batch = {{"a", s, 1, 1.0}, {"b", s, 1, 1.0}};
  TrainConfig cfg;
  cfg.entropy_coef = 0.0;
  agent::Gradients g;
  trainer::batch_gradients(p, batch, cfg, g);
  CHECK(g == PolicyParams::zeros(4));
  for (const auto opt : {trainer::Optimizer::Sgd, trainer::Optimizer::Adam}) {
    cfg.optimizer = opt;
    auto q = p;
    trainer::OptimizerState st(q);
    trainer::a2c_update(q, batch, cfg, st);
    CHECK(q == p);
  }
}

TEST_CASE("empty batch and invalid config") {
  auto p = PolicyParams::initialize(4, 3);
  TrainConfig cfg;
  trainer::OptimizerState st(p);
  CHECK_THROWS_AS(trainer::a2c_update(p, {}, cfg, st), ContractError);
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = {};
  cfg.gae_lambda = 1.5;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  CHECK(trainer::parse_optimizer("adam") == trainer::Optimizer::Adam);
  CHECK_THROWS_AS(trainer::parse_optimizer("rmsprop"), InputError);
}

TEST_CASE("training loop") {
  const auto setup = fixtures::make_setup(worlds::barrier_world(), 120, 3);
  const auto episodes = trainer::make_episodes(setup.incidents, setup.atlas, {});
  const env::RewardParams reward{0.1};
  TrainConfig cfg;
  cfg.seed = 17;
  cfg.embed_dim = 16;
  cfg.optimizer = trainer::Optimizer::Adam;
  cfg.learning_rate = 1e-3;

  SUBCASE("epochs = 0 returns the initial parameters and an empty curve") {
    cfg.epochs = 0;
    const auto r = trainer::train(episodes, reward, cfg);
    CHECK(r.curve.size() == 0);
    CHECK(r.params == PolicyParams::initialize(16, Rng::derive(17, 1)));
  }
  SUBCASE("same seed gives identical curves and parameters") {
    cfg.epochs = 5;
    const auto a = trainer::train(episodes, reward, cfg);
    const auto b = trainer::train(episodes, reward, cfg);
    CHECK(a.curve.to_csv() == b.curve.to_csv());
    CHECK(a.params == b.params);
    cfg.seed = 18;
    CHECK(trainer::train(episodes, reward, cfg).curve.to_csv() != a.curve.to_csv());
  }
  SUBCASE("curve bookkeeping and start-versus-end improvement") {
    cfg.epochs = 150;
    const double before = greedy_optimality(PolicyParams::initialize(16, Rng::derive(17, 1)), episodes);
    const auto r = trainer::train(episodes, reward, cfg);
    CHECK(r.curve.size() == 150);
    CHECK(r.curve.rolling_reward.size() == 150);
    for (std::size_t e = 0; e < r.curve.size(); ++e) {
      CHECK(std::isfinite(r.curve.actor_loss[e]));
      CHECK(std::isfinite(r.curve.critic_loss[e]));
      CHECK(std::isfinite(r.curve.entropy[e]));
    }
    double tail = 0.0;
    for (std::size_t e = 100; e < 150; ++e) tail += r.curve.mean_reward[e] / 50.0;
    CHECK(r.curve.rolling_reward.back() == doctest::Approx(tail).epsilon(1e-12));
    CHECK(r.curve.rolling_reward[0] == r.curve.mean_reward[0]);
    const double after = greedy_optimality(r.params, episodes);
    MESSAGE("greedy optimality " << before << " -> " << after);
    CHECK(after >= before);
    CHECK(r.curve.rolling_reward.back() > r.curve.rolling_reward[49]);
  }
  SUBCASE("large entropy coefficient keeps the policy near uniform") {
    cfg.epochs = 60;
    cfg.entropy_coef = 10.0;
    const auto wide = trainer::train(episodes, reward, cfg);
    cfg.entropy_coef = 0.0;
    const auto sharp = trainer::train(episodes, reward, cfg);
    std::size_t probes = 0;
    double sharp_ratio = 0.0;
    for (const auto& ep : episodes) {
      const auto n = ep.state.n_feasible();
      if (n < 2) continue;
      ++probes;
      const double h_max = std::log(static_cast<double>(n));
      CHECK(agent::forward(wide.params, ep.state).entropy >= 0.95 * h_max);
      sharp_ratio += agent::forward(sharp.params, ep.state).entropy / h_max;
    }
    REQUIRE(probes > 0);
    // the same run without the bonus collapses well below uniform
    CHECK(sharp_ratio / static_cast<double>(probes) < 0.9);
  }
  SUBCASE("no solvable incidents") {
    std::vector<trainer::Episode> none = {episodes.front()};
    none[0].state.mask.assign(none[0].state.mask.size(), false);
    cfg.epochs = 1;
    CHECK_THROWS_AS(trainer::train(none, reward, cfg), InputError);
  }
}

TEST_CASE("training curve CSV") {
  trainer::TrainingCurve c;
  c.mean_reward = {0.5, 1.0};
  c.actor_loss = {0.1, 0.2};
  c.critic_loss = {0.3, 0.4};
  c.entropy = {1.0, 0.5};
  c.rolling_reward = {0.5, 0.75};
  CHECK(c.to_csv() ==
        "epoch,mean_reward,actor_loss,critic_loss,entropy,rolling_mean_reward\n"
        "1,0.5,0.1,0.3,1,0.5\n2,1,0.2,0.4,0.5,0.75\n");
}
