#include <cmath>
#include <numeric>

#include "doctest.h"
#include "json.hpp"
#include "gradcheck.hpp"

using namespace dispatch;
using agent::PolicyParams;

namespace {

env::DispatchState state_of(Category c, std::vector<env::FeatureRow> rows, std::vector<bool> mask) {
  env::DispatchState s;
  s.category = c;
  s.category_onehot[category_index(c)] = 1.0;
  s.facility_features = std::move(rows);
  s.mask = std::move(mask);
  return s;
}

/// d = 4 with identity projections: q = category_embed[c], k_j = [f_j, 0].
PolicyParams identity_params() {
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
  return p;
}

}  // namespace

TEST_CASE("single feasible facility gets probability 1") {
  const auto p = PolicyParams::initialize(8, 3);
  const auto s = state_of(Category::Security, {env::kFillerRow, {0.3, 1, 0}, env::kFillerRow}, {false, true, false});
  const auto out = agent::forward(p, s);
  CHECK(out.probs == std::vector<double>{0.0, 1.0, 0.0});
  CHECK(out.entropy == 0.0);
  CHECK(agent::greedy_action(out) == 1);
}

TEST_CASE("identical rows give equal probabilities") {
  const auto p = PolicyParams::initialize(16, 4);
  const auto s = state_of(Category::Transport, {{0.2, 1, 0.1}, {0.2, 1, 0.1}}, {true, true});
  const auto out = agent::forward(p, s);
  CHECK(out.logits[0] == out.logits[1]);
  CHECK(out.probs[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.probs[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.entropy == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("hand-computed forward pass at d = 4") {
  // q = [1, 0, -1, 0], k_j = [tau, reach, delta, 0], s_j = (tau - delta) / 2
  const auto p = identity_params();
  const auto s = state_of(Category::Healthcare, {{1.0 / 6.0, 1, 0}, {1.0 / 3.0, 1, 1.0 / 3.0}, env::kFillerRow},
                          {true, true, false});
  const auto out = agent::forward(p, s);
  CHECK(out.logits[0] == doctest::Approx(1.0 / 12.0).epsilon(1e-15));
  CHECK(out.logits[1] == 0.0);
  CHECK(out.logits[2] == agent::kMaskedLogit);
  const double e = std::exp(1.0 / 12.0);
  const double p0 = e / (e + 1.0), p1 = 1.0 / (e + 1.0);
  CHECK(out.probs[0] == doctest::Approx(p0).epsilon(1e-14));
  CHECK(out.probs[1] == doctest::Approx(p1).epsilon(1e-14));
  CHECK(out.probs[2] == 0.0);
  // ctx = p0 k_0 + p1 k_1, V = 0.5 + sum tanh(ctx)
  const double c0 = p0 / 6.0 + p1 / 3.0, c1 = 1.0, c2 = p1 / 3.0;
  CHECK(out.context[0] == doctest::Approx(c0).epsilon(1e-14));
  CHECK(out.context[3] == 0.0);
  CHECK(out.value == doctest::Approx(0.5 + std::tanh(c0) + std::tanh(c1) + std::tanh(c2)).epsilon(1e-14));
}

TEST_CASE("sampling follows the policy and never draws masked facilities") {
  const auto p = PolicyParams::initialize(4, 21);
  const auto s = state_of(Category::FireDisaster, {{0.1, 1, 0}, env::kFillerRow, {0.9, 1, 0.8}, {0.4, 1, 0.3}},
                          {true, false, true, true});
  auto params = p;
  // widen the spread of the probabilities so all three are distinguishable
  for (auto& v : params.facility_embed.data) v *= 6.0;
  const auto out = agent::forward(params, s);
  Rng rng(99);
  SUBCASE("frequencies within 3 sigma over 10^4 draws") {
    constexpr std::size_t n = 10000;
    std::vector<double> counts(4, 0.0);
    for (std::size_t i = 0; i < n; ++i) counts[agent::sample_action(out, rng)] += 1.0;
    for (std::size_t j = 0; j < 4; ++j) {
      const double mean = n * out.probs[j];
      const double sigma = std::sqrt(n * out.probs[j] * (1.0 - out.probs[j]));
      CHECK(std::abs(counts[j] - mean) <= 3.0 * sigma);
    }
  }
  SUBCASE("masked index never drawn over 10^5 draws") {
    for (std::size_t i = 0; i < 100000; ++i) REQUIRE(agent::sample_action(out, rng) != 1);
  }
}

TEST_CASE("greedy action") {
  agent::ForwardOutput out;
  out.logits = {1.0, 2.0, agent::kMaskedLogit};
  out.mask = {true, true, false};
  CHECK(agent::greedy_action(out) == 1);
  out.logits = {2.0, 2.0, agent::kMaskedLogit};
  CHECK(agent::greedy_action(out) == 0);
  out.logits = {1.0, 2.0, 5.0};
  out.mask = {true, true, false};
  CHECK(agent::greedy_action(out) == 1);
  out.mask = {false, false, false};
  CHECK_THROWS_AS(agent::greedy_action(out), ContractError);

  SUBCASE("matches a brute-force argmax on random states") {
    Rng rng(5);
    const auto params = PolicyParams::initialize(8, 6);
    for (int t = 0; t < 200; ++t) {
      const auto s = gradcheck::random_state(rng, 2 + rng.below(8));
      const auto o = agent::forward(params, s);
      std::size_t best = s.mask.size();
      for (std::size_t j = 0; j < s.mask.size(); ++j) {
        if (s.mask[j] && (best == s.mask.size() || o.probs[j] > o.probs[best])) best = j;
      }
      CHECK(agent::greedy_action(o) == best);
    }
  }
}

TEST_CASE("forward rejects an all-masked state") {
  const auto p = PolicyParams::initialize(4, 1);
  const auto s = state_of(Category::Healthcare, {env::kFillerRow}, {false});
  CHECK_THROWS_AS(agent::forward(p, s), ContractError);
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(2024);
  for (int t = 0; t < 20; ++t) {
    const auto params = PolicyParams::initialize(4, 100 + t);
    const auto s = gradcheck::random_state(rng, 3 + rng.below(4));
    const auto a = gradcheck::random_feasible(rng, s);
    const auto r = gradcheck::check(params, s, a, gradcheck::random_targets(rng));
    INFO("instance " << t << " worst block " << r.worst_block);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("gradient bookkeeping") {
  const auto params = PolicyParams::initialize(4, 8);
  Rng rng(8);
  const auto s = gradcheck::random_state(rng, 5);
  const auto a = gradcheck::random_feasible(rng, s);
  SUBCASE("all loss weights zero gives zero gradients") {
    agent::LossTargets t;
    t.advantage = 0.7;
    t.value_target = 0.3;
    t.actor_weight = 0.0;
    t.critic_weight = 0.0;
    t.entropy_coef = 0.0;
    auto g = PolicyParams::zeros(4);
    agent::backward(params, s, a, t, g);
    CHECK(g == PolicyParams::zeros(4));
  }
  SUBCASE("scale multiplies and accumulation adds") {
    const auto t = gradcheck::random_targets(rng);
    auto g1 = PolicyParams::zeros(4), g2 = PolicyParams::zeros(4);
    agent::backward(params, s, a, t, g1);
    agent::backward(params, s, a, t, g2, 0.5);
    agent::backward(params, s, a, t, g2, 0.5);
    for (std::size_t k = 0; k < g1.query_proj.data.size(); ++k) {
      CHECK(g2.query_proj.data[k] == doctest::Approx(g1.query_proj.data[k]).epsilon(1e-14));
    }
  }
  SUBCASE("duplicate feasible rows receive equal logit gradients") {
    const auto d = state_of(Category::Security, {{0.3, 1, 0.1}, {0.3, 1, 0.1}, {0.6, 1, 0.4}}, {true, true, true});
    const auto t = gradcheck::random_targets(rng);
    // choosing either duplicate yields the same gradient
    auto g0 = PolicyParams::zeros(4), g1 = PolicyParams::zeros(4);
    agent::backward(params, d, 0, t, g0);
    agent::backward(params, d, 1, t, g1);
    g0.for_each_block([&](std::string_view name, const agent::Matrix& m) {
      g1.for_each_block([&](std::string_view other, const agent::Matrix& n) {
        if (name != other) return;
        for (std::size_t k = 0; k < m.data.size(); ++k) CHECK(m.data[k] == doctest::Approx(n.data[k]).epsilon(1e-12));
      });
    });
  }
}

TEST_CASE("permutation equivariance and logit shift invariance") {
  Rng rng(31);
  const auto params = PolicyParams::initialize(8, 32);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 3 + rng.below(5);
    const auto s = gradcheck::random_state(rng, n);
    const auto out = agent::forward(params, s);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm.begin(), perm.end(), rng);
    auto ps = s;
    for (std::size_t j = 0; j < n; ++j) {
      ps.facility_features[j] = s.facility_features[perm[j]];
      ps.mask[j] = s.mask[perm[j]];
    }
    const auto pout = agent::forward(params, ps);
    for (std::size_t j = 0; j < n; ++j) {
      CHECK(pout.logits[j] == doctest::Approx(out.logits[perm[j]]).epsilon(1e-12));
      CHECK(pout.probs[j] == doctest::Approx(out.probs[perm[j]]).epsilon(1e-12));
    }
    CHECK(pout.value == doctest::Approx(out.value).epsilon(1e-12));

    // a common feature offset adds one constant to every masked-in logit
    auto shifted = s;
    const env::FeatureRow offset = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    for (std::size_t j = 0; j < n; ++j) {
      if (!s.mask[j]) continue;
      for (int r = 0; r < env::kFeatureWidth; ++r) shifted.facility_features[j][r] += offset[r];
    }
    const auto sout = agent::forward(params, shifted);
    std::optional<double> delta;
    for (std::size_t j = 0; j < n; ++j) {
      if (!s.mask[j]) continue;
      const double dj = sout.logits[j] - out.logits[j];
      if (!delta) delta = dj;
      CHECK(dj == doctest::Approx(*delta).epsilon(1e-9));
      CHECK(sout.probs[j] == doctest::Approx(out.probs[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const auto p = PolicyParams::initialize(6, 77);
  const auto text = agent::checkpoint_to_json(p, "abc123");
  std::string hash;
  const auto back = agent::checkpoint_from_json(text, &hash);
  CHECK(back == p);
  CHECK(hash == "abc123");
  CHECK(agent::checkpoint_to_json(back, "abc123") == text);

  CHECK_THROWS_AS(agent::checkpoint_from_json("not json", nullptr), InputError);
  CHECK_THROWS_AS(agent::checkpoint_from_json("{\"format\":\"other\"}", nullptr), InputError);
  auto truncated = nlohmann::json::parse(text);
  truncated["blocks"][3]["data"].erase(0);
  CHECK_THROWS_AS(agent::checkpoint_from_json(truncated.dump(), nullptr), InputError);
}

TEST_CASE("non-finite parameters and gradients are reported") {
  auto p = PolicyParams::initialize(4, 2);
  p.key_proj(1, 1) = std::nan("");
  CHECK_THROWS_AS(p.validate(), ContractError);
  CHECK_THROWS_AS(agent::checkpoint_to_json(p, ""), ContractError);

  auto huge = PolicyParams::initialize(4, 2);
  for (auto& v : huge.query_proj.data) v = 1e200;
  for (auto& v : huge.key_proj.data) v = 1e200;
  const auto s = state_of(Category::Healthcare, {{0.1, 1, 0}, {0.2, 1, 0.1}}, {true, true});
  auto g = PolicyParams::zeros(4);
  agent::LossTargets t;
  t.advantage = 1.0;
  CHECK_THROWS_AS(agent::backward(huge, s, 0, t, g), NumericError);
}

TEST_CASE("initialization") {
  CHECK(PolicyParams::initialize(8, 1) == PolicyParams::initialize(8, 1));
  CHECK_FALSE(PolicyParams::initialize(8, 1) == PolicyParams::initialize(8, 2));
  const auto p = PolicyParams::initialize(64, 1);
  CHECK(p.parameter_count() == 4 * 64 + 3 * 64 + 64 + 3 * 64 * 64 + 64 + 64 + 1);
  const double bound = 1.0 / std::sqrt(64.0);
  for (double v : p.query_proj.data) CHECK(std::abs(v) <= bound);
  CHECK_THROWS_AS(PolicyParams::initialize(0, 1), InputError);
}
