#include "doctest.h"
#include "dispatch/config.hpp"

using namespace dispatch;
using config::RunConfig;

namespace {

std::string message_of(const std::string& text) {
  try {
    config::parse_run_config(text, "/base", "run.cfg");
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("parse a full run config") {
  const auto cfg = config::parse_run_config(
      "# world\n"
      "graph = data/graph.txt\n"
      "facilities = /abs/facilities.geojson\n"
      "boundary = ../boundary.geojson\n"
      "population_centers = 7.05,4.8,3,0.0125; 7.0,4.75,1,0.015\n"
      "seed = 11\n"
      "\n"
      "speed_kmh = 35.5\n"
      "alpha = 0.2\n"
      "t_max = 90\n"
      "d_max = 45\n"
      "atlas_scope = all\n"
      "train_incidents = 300\n"
      "challenge_incidents = 100\n"
      "challenge_category_counts = 25,25,25,25\n"
      "cluster_fraction = 0.5\n"
      "epochs = 2000\n"
      "batch_size = 16\n"
      "learning_rate = 0.001\n"
      "optimizer = adam\n"
      "embed_dim = 32\n"
      "t_green = 12\n"
      "zones = 4\n"
      "threads = 3\n",
      "/base/cfg", "run.cfg");
  CHECK(cfg.graph == "/base/cfg/data/graph.txt");
  CHECK(cfg.facilities == "/abs/facilities.geojson");
  CHECK(cfg.boundary == "/base/boundary.geojson");
  REQUIRE(cfg.population_centers.size() == 2);
  CHECK(cfg.population_centers[0].weight == 3.0);
  CHECK(cfg.population_centers[1].sigma == 0.015);
  CHECK(cfg.require_seed() == 11);
  CHECK(cfg.effective_challenge_seed() == 12);
  CHECK(cfg.speed_kmh == 35.5);
  CHECK(cfg.reward.alpha == 0.2);
  CHECK(cfg.norms.t_max == 90.0);
  CHECK(cfg.norms.d_max == 45.0);
  CHECK(cfg.atlas_scope == config::AtlasScope::AllNodes);
  CHECK(cfg.train_counts() == std::array<std::size_t, 4>{85, 80, 68, 67});
  CHECK(cfg.challenge_counts() == std::array<std::size_t, 4>{25, 25, 25, 25});
  const auto tc = cfg.trainer_config();
  CHECK(tc.epochs == 2000);
  CHECK(tc.batch_size == 16);
  CHECK(tc.optimizer == trainer::Optimizer::Adam);
  CHECK(tc.embed_dim == 32);
  CHECK(tc.seed == 11);
  CHECK(cfg.thresholds.t_green == 12.0);
  CHECK(cfg.zones == 4);
  CHECK(cfg.threads == 3);
  const auto ts = cfg.training_scenario();
  CHECK(ts.rng_seed == 11);
  CHECK(ts.n_incidents == 300);
  CHECK(ts.id_prefix == "train_");
  CHECK(cfg.challenge_scenario().rng_seed == 12);
}

TEST_CASE("defaults follow the published hyperparameters") {
  const RunConfig cfg;
  CHECK(cfg.train.learning_rate == 1e-4);
  CHECK(cfg.train.entropy_coef == 0.01);
  CHECK(cfg.train.critic_weight == 1.0);
  CHECK(cfg.train.epochs == 3500);
  CHECK(cfg.train_incidents == 2000);
  CHECK(cfg.challenge_incidents == 500);
  CHECK(cfg.train_counts() == scenario::kTrainingQuota);
  CHECK(cfg.challenge_counts() == scenario::kChallengeQuota);
  CHECK(cfg.cluster_fraction == 0.6);
  CHECK(cfg.train.optimizer == trainer::Optimizer::Sgd);
}

TEST_CASE("errors name the file and line") {
  CHECK(message_of("seed = 1\nbogus = 3\n").find("run.cfg:2") != std::string::npos);
  CHECK(message_of("seed = 1\nbogus = 3\n").find("bogus") != std::string::npos);
  CHECK(message_of("seed = 1\nseed = 2\n").find("duplicate") != std::string::npos);
  CHECK(message_of("epochs = many\n").find("run.cfg:1") != std::string::npos);
  CHECK(message_of("just words\n").find("run.cfg:1") != std::string::npos);
  CHECK(message_of("optimizer = rmsprop\n") != "");
  CHECK(message_of("atlas_scope = some\n") != "");
  CHECK(message_of("train_category_counts = 1,2,3\n") != "");
  CHECK(message_of("population_centers = 7,4.8\n") != "");
}

TEST_CASE("missing seed is a validation error") {
  const auto cfg = config::parse_run_config("epochs = 3\n", "", "x");
  CHECK_THROWS_AS(cfg.require_seed(), InputError);
  CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("validation catches inconsistent settings") {
  auto cfg = config::parse_run_config("seed = 1\nchallenge_seed = 1\n", "", "x");
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = config::parse_run_config("seed = 1\ntrain_incidents = 10\ntrain_category_counts = 1,1,1,1\n", "", "x");
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = config::parse_run_config("seed = 1\nt_green = 40\n", "", "x");
  CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("canonical text and hash") {
  const std::string base = "seed = 5\nepochs = 10\n";
  const auto a = config::parse_run_config(base, "", "x");
  const auto b = config::parse_run_config("epochs = 10\nseed = 5\nthreads = 8\ngraph = elsewhere.txt\n", "/tmp", "y");
  CHECK(a.canonical_text() == b.canonical_text());
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 64);
  const auto c = config::parse_run_config("seed = 5\nepochs = 11\n", "", "x");
  CHECK(a.hash() != c.hash());
  // keys appear once each, sorted
  const auto text = a.canonical_text();
  std::vector<std::string> keys;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto eol = text.find('\n', pos);
    keys.push_back(text.substr(pos, text.find('=', pos) - pos));
    pos = eol + 1;
  }
  CHECK(std::is_sorted(keys.begin(), keys.end()));
  CHECK(std::adjacent_find(keys.begin(), keys.end()) == keys.end());
  CHECK(text.find("threads") == std::string::npos);
}

TEST_CASE("every known key is accepted") {
  std::map<std::string, std::string> sample = {
      {"graph", "g"}, {"facilities", "f"}, {"boundary", "b"}, {"regions", "r"},
      {"population_centers", "7,4.8,1,0.01"}, {"train_category_counts", "1,1,1,1"},
      {"challenge_category_counts", "1,1,1,1"}, {"atlas_scope", "incidents"}, {"optimizer", "sgd"}};
  for (const auto key : config::known_keys()) {
    RunConfig cfg;
    const std::string k(key);
    const std::string v = sample.count(k) ? sample[k] : "1";
    CHECK_NOTHROW(config::apply_setting(cfg, k, v, ""));
  }
  RunConfig cfg;
  CHECK_THROWS_AS(config::apply_setting(cfg, "nope", "1", ""), InputError);
}

TEST_CASE("population centres and category counts") {
  const auto c = config::parse_population_centers(" 7.1, 4.9, 2, 0.02 ;7,4.8,1,0.05");
  REQUIRE(c.size() == 2);
  CHECK(c[0].center.lon == 7.1);
  CHECK(c[0].center.lat == 4.9);
  CHECK(c[1].sigma == 0.05);
  CHECK(config::parse_population_centers("").empty());
  CHECK(config::parse_population_centers("7,4.8,1")[0].sigma == 0.05);
  CHECK_THROWS_AS(config::parse_population_centers("7,4.8,-1,0.05"), InputError);
  CHECK_THROWS_AS(config::parse_population_centers("7,95,1,0.05"), InputError);
  CHECK(config::parse_category_counts("4, 3,2,1") == std::array<std::size_t, 4>{4, 3, 2, 1});
  CHECK_THROWS_AS(config::parse_category_counts("4,3,2,-1"), InputError);
}
