#include "dispatch/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>

namespace dispatch::config {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw InputError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw InputError(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::size_t to_size(std::string_view key, std::string_view v) { return static_cast<std::size_t>(to_u64(key, v)); }

std::string resolve(std::string_view v, const std::string& base_dir) {
  std::filesystem::path p{std::string(v)};
  if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
  return p.lexically_normal().string();
}

using Setter = std::function<void(RunConfig&, std::string_view, const std::string&)>;

struct Key {
  std::string_view name;
  Setter set;
};

const std::vector<Key>& table() {
  static const std::vector<Key> keys = {
      {"graph", [](RunConfig& c, std::string_view v, const std::string& b) { c.graph = resolve(v, b); }},
      {"facilities", [](RunConfig& c, std::string_view v, const std::string& b) { c.facilities = resolve(v, b); }},
      {"boundary", [](RunConfig& c, std::string_view v, const std::string& b) { c.boundary = resolve(v, b); }},
      {"regions", [](RunConfig& c, std::string_view v, const std::string& b) { c.regions = resolve(v, b); }},
      {"population_centers",
       [](RunConfig& c, std::string_view v, const std::string&) { c.population_centers = parse_population_centers(v); }},
      {"seed", [](RunConfig& c, std::string_view v, const std::string&) { c.seed = to_u64("seed", v); }},
      {"challenge_seed",
       [](RunConfig& c, std::string_view v, const std::string&) { c.challenge_seed = to_u64("challenge_seed", v); }},
      {"speed_kmh", [](RunConfig& c, std::string_view v, const std::string&) { c.speed_kmh = to_double("speed_kmh", v); }},
      {"alpha", [](RunConfig& c, std::string_view v, const std::string&) { c.reward.alpha = to_double("alpha", v); }},
      {"t_max", [](RunConfig& c, std::string_view v, const std::string&) { c.norms.t_max = to_double("t_max", v); }},
      {"d_max", [](RunConfig& c, std::string_view v, const std::string&) { c.norms.d_max = to_double("d_max", v); }},
      {"atlas_scope",
       [](RunConfig& c, std::string_view v, const std::string&) {
         if (v == "incidents") c.atlas_scope = AtlasScope::Incidents;
         else if (v == "all") c.atlas_scope = AtlasScope::AllNodes;
         else throw InputError("atlas_scope: expected 'incidents' or 'all', got '" + std::string(v) + "'");
       }},
      {"train_incidents",
       [](RunConfig& c, std::string_view v, const std::string&) { c.train_incidents = to_size("train_incidents", v); }},
      {"train_category_counts",
       [](RunConfig& c, std::string_view v, const std::string&) { c.train_category_counts = parse_category_counts(v); }},
      {"challenge_incidents",
       [](RunConfig& c, std::string_view v, const std::string&) {
         c.challenge_incidents = to_size("challenge_incidents", v);
       }},
      {"challenge_category_counts",
       [](RunConfig& c, std::string_view v, const std::string&) { c.challenge_category_counts = parse_category_counts(v); }},
      {"cluster_fraction",
       [](RunConfig& c, std::string_view v, const std::string&) { c.cluster_fraction = to_double("cluster_fraction", v); }},
      {"epochs", [](RunConfig& c, std::string_view v, const std::string&) { c.train.epochs = to_size("epochs", v); }},
      {"batch_size",
       [](RunConfig& c, std::string_view v, const std::string&) { c.train.batch_size = to_size("batch_size", v); }},
      {"learning_rate",
       [](RunConfig& c, std::string_view v, const std::string&) { c.train.learning_rate = to_double("learning_rate", v); }},
      {"entropy_coef",
       [](RunConfig& c, std::string_view v, const std::string&) { c.train.entropy_coef = to_double("entropy_coef", v); }},
      {"critic_weight",
       [](RunConfig& c, std::string_view v, const std::string&) { c.train.critic_weight = to_double("critic_weight", v); }},
      {"gamma", [](RunConfig& c, std::string_view v, const std::string&) { c.train.gamma = to_double("gamma", v); }},
      {"gae_lambda",
       [](RunConfig& c, std::string_view v, const std::string&) { c.train.gae_lambda = to_double("gae_lambda", v); }},
      {"optimizer",
       [](RunConfig& c, std::string_view v, const std::string&) { c.train.optimizer = trainer::parse_optimizer(v); }},
      {"embed_dim",
       [](RunConfig& c, std::string_view v, const std::string&) { c.train.embed_dim = to_size("embed_dim", v); }},
      {"adam_beta1",
       [](RunConfig& c, std::string_view v, const std::string&) { c.train.adam_beta1 = to_double("adam_beta1", v); }},
      {"adam_beta2",
       [](RunConfig& c, std::string_view v, const std::string&) { c.train.adam_beta2 = to_double("adam_beta2", v); }},
      {"adam_eps", [](RunConfig& c, std::string_view v, const std::string&) { c.train.adam_eps = to_double("adam_eps", v); }},
      {"t_green", [](RunConfig& c, std::string_view v, const std::string&) { c.thresholds.t_green = to_double("t_green", v); }},
      {"t_red", [](RunConfig& c, std::string_view v, const std::string&) { c.thresholds.t_red = to_double("t_red", v); }},
      {"c_min", [](RunConfig& c, std::string_view v, const std::string&) { c.thresholds.c_min = to_double("c_min", v); }},
      {"c_red", [](RunConfig& c, std::string_view v, const std::string&) { c.thresholds.c_red = to_double("c_red", v); }},
      {"zones", [](RunConfig& c, std::string_view v, const std::string&) { c.zones = to_size("zones", v); }},
      {"probes_per_category",
       [](RunConfig& c, std::string_view v, const std::string&) {
         c.probes_per_category = to_size("probes_per_category", v);
       }},
      {"candidate_cap",
       [](RunConfig& c, std::string_view v, const std::string&) { c.candidate_cap = to_size("candidate_cap", v); }},
      {"threads",
       [](RunConfig& c, std::string_view v, const std::string&) {
         c.threads = static_cast<unsigned>(to_u64("threads", v));
       }},
  };
  return keys;
}

std::string counts_text(const std::array<std::size_t, kNumCategories>& c) {
  std::ostringstream out;
  for (int i = 0; i < kNumCategories; ++i) out << (i ? "," : "") << c[i];
  return out.str();
}

}  // namespace

const std::vector<std::string_view>& known_keys() {
  static const std::vector<std::string_view> names = [] {
    std::vector<std::string_view> v;
    for (const auto& k : table()) v.push_back(k.name);
    return v;
  }();
  return names;
}

std::vector<scenario::PopulationCenter> parse_population_centers(std::string_view text) {
  std::vector<scenario::PopulationCenter> out;
  for (auto item : split(text, ';')) {
    if (item.empty()) continue;
    const auto parts = split(item, ',');
    if (parts.size() < 3 || parts.size() > 4) {
      throw InputError("population_centers: expected 'lon,lat,weight[,sigma]', got '" + std::string(item) + "'");
    }
    scenario::PopulationCenter c;
    c.center = geo::GeoPoint::checked(to_double("population_centers", parts[0]), to_double("population_centers", parts[1]));
    c.weight = to_double("population_centers", parts[2]);
    if (parts.size() == 4) c.sigma = to_double("population_centers", parts[3]);
    if (!(c.weight > 0.0)) throw InputError("population_centers: weight must be positive");
    if (!(c.sigma > 0.0)) throw InputError("population_centers: sigma must be positive");
    out.push_back(c);
  }
  return out;
}

std::array<std::size_t, kNumCategories> parse_category_counts(std::string_view text) {
  const auto parts = split(text, ',');
  if (parts.size() != kNumCategories) {
    throw InputError("category counts: expected " + std::to_string(kNumCategories) + " comma-separated integers");
  }
  std::array<std::size_t, kNumCategories> out{};
  for (int i = 0; i < kNumCategories; ++i) out[i] = to_size("category counts", parts[i]);
  return out;
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value, const std::string& base_dir) {
  for (const auto& k : table()) {
    if (k.name == key) {
      k.set(cfg, value, base_dir);
      return;
    }
  }
  throw InputError("unknown config key '" + std::string(key) + "'");
}

RunConfig parse_run_config(std::string_view text, const std::string& base_dir, const std::string& source_name) {
  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = source_name + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw InputError(where + "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!seen.insert(std::string(key)).second) throw InputError(where + "duplicate key '" + std::string(key) + "'");
    try {
      apply_setting(cfg, key, value, base_dir);
    } catch (const InputError& e) {
      throw InputError(where + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  const auto text = read_text_file(path);
  const auto dir = std::filesystem::path(path).parent_path().string();
  return parse_run_config(text, dir, path);
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw InputError("config is missing the required key 'seed'");
  return *seed;
}

std::uint64_t RunConfig::effective_challenge_seed() const {
  return challenge_seed ? *challenge_seed : require_seed() + 1;
}

std::array<std::size_t, kNumCategories> RunConfig::train_counts() const {
  if (train_category_counts) return *train_category_counts;
  std::array<double, kNumCategories> w{};
  for (int i = 0; i < kNumCategories; ++i) w[i] = static_cast<double>(scenario::kTrainingQuota[i]);
  return scenario::proportional_counts(train_incidents, w);
}

std::array<std::size_t, kNumCategories> RunConfig::challenge_counts() const {
  if (challenge_category_counts) return *challenge_category_counts;
  std::array<double, kNumCategories> w{};
  for (int i = 0; i < kNumCategories; ++i) w[i] = static_cast<double>(scenario::kChallengeQuota[i]);
  return scenario::proportional_counts(challenge_incidents, w);
}

scenario::ScenarioConfig RunConfig::training_scenario() const {
  scenario::ScenarioConfig s;
  s.n_incidents = train_incidents;
  s.cluster_fraction = cluster_fraction;
  s.category_counts = train_counts();
  s.rng_seed = require_seed();
  s.split = scenario::Split::Training;
  s.id_prefix = "train_";
  return s;
}

scenario::ScenarioConfig RunConfig::challenge_scenario() const {
  scenario::ScenarioConfig s;
  s.n_incidents = challenge_incidents;
  s.cluster_fraction = cluster_fraction;
  s.category_counts = challenge_counts();
  s.rng_seed = effective_challenge_seed();
  s.split = scenario::Split::Challenge;
  s.id_prefix = "challenge_";
  return s;
}

trainer::TrainConfig RunConfig::trainer_config() const {
  auto t = train;
  t.seed = require_seed();
  return t;
}

void RunConfig::validate() const {
  require_seed();
  if (graph.empty()) throw InputError("config is missing the required key 'graph'");
  if (facilities.empty()) throw InputError("config is missing the required key 'facilities'");
  if (boundary.empty()) throw InputError("config is missing the required key 'boundary'");
  if (population_centers.empty() && cluster_fraction > 0.0) {
    throw InputError("population_centers is required when cluster_fraction > 0");
  }
  if (!(speed_kmh > 0.0)) throw InputError("speed_kmh must be positive");
  if (!(reward.alpha > 0.0)) throw InputError("alpha must be positive");
  if (!(norms.t_max > 0.0) || !(norms.d_max > 0.0)) throw InputError("t_max and d_max must be positive");
  if (effective_challenge_seed() == require_seed()) throw InputError("challenge_seed must differ from seed");
  if (candidate_cap == 0) throw InputError("candidate_cap must be positive");
  if (threads == 0) throw InputError("threads must be positive");
  training_scenario().validate();
  challenge_scenario().validate();
  trainer_config().validate();
  thresholds.validate();
}

std::string RunConfig::canonical_text() const {
  // Input paths and thread count are left out: inputs are hashed by content
  // in the manifest, and the thread count does not change any output.
  std::map<std::string, std::string> kv;
  kv["population_centers"] = [&] {
    std::ostringstream out;
    for (std::size_t i = 0; i < population_centers.size(); ++i) {
      const auto& c = population_centers[i];
      out << (i ? ";" : "") << format_double(c.center.lon) << ',' << format_double(c.center.lat) << ','
          << format_double(c.weight) << ',' << format_double(c.sigma);
    }
    return out.str();
  }();
  kv["seed"] = seed ? std::to_string(*seed) : "";
  kv["challenge_seed"] = seed ? std::to_string(effective_challenge_seed()) : "";
  kv["speed_kmh"] = format_double(speed_kmh);
  kv["alpha"] = format_double(reward.alpha);
  kv["t_max"] = format_double(norms.t_max);
  kv["d_max"] = format_double(norms.d_max);
  kv["atlas_scope"] = atlas_scope == AtlasScope::AllNodes ? "all" : "incidents";
  kv["train_incidents"] = std::to_string(train_incidents);
  kv["train_category_counts"] = counts_text(train_counts());
  kv["challenge_incidents"] = std::to_string(challenge_incidents);
  kv["challenge_category_counts"] = counts_text(challenge_counts());
  kv["cluster_fraction"] = format_double(cluster_fraction);
  kv["epochs"] = std::to_string(train.epochs);
  kv["batch_size"] = std::to_string(train.batch_size);
  kv["learning_rate"] = format_double(train.learning_rate);
  kv["entropy_coef"] = format_double(train.entropy_coef);
  kv["critic_weight"] = format_double(train.critic_weight);
  kv["gamma"] = format_double(train.gamma);
  kv["gae_lambda"] = format_double(train.gae_lambda);
  kv["optimizer"] = std::string(trainer::optimizer_name(train.optimizer));
  kv["embed_dim"] = std::to_string(train.embed_dim);
  kv["adam_beta1"] = format_double(train.adam_beta1);
  kv["adam_beta2"] = format_double(train.adam_beta2);
  kv["adam_eps"] = format_double(train.adam_eps);
  kv["t_green"] = format_double(thresholds.t_green);
  kv["t_red"] = format_double(thresholds.t_red);
  kv["c_min"] = format_double(thresholds.c_min);
  kv["c_red"] = format_double(thresholds.c_red);
  kv["zones"] = std::to_string(zones);
  kv["probes_per_category"] = std::to_string(probes_per_category);
  kv["candidate_cap"] = std::to_string(candidate_cap);
  std::ostringstream out;
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  return out.str();
}

std::string RunConfig::hash() const { return sha256_hex(canonical_text()); }

}  // namespace dispatch::config
