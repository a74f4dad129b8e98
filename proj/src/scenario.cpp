#include "dispatch/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_set>

#include "json.hpp"

namespace dispatch::scenario {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Training: return "training";
    case Split::Challenge: return "challenge";
    case Split::Probe: return "probe";
  }
  return "unknown";
}

namespace {
Split parse_split(const std::string& s) {
  if (s == "training") return Split::Training;
  if (s == "challenge") return Split::Challenge;
  if (s == "probe") return Split::Probe;
  throw InputError("unknown incident split '" + s + "'");
}
}  // namespace

void ScenarioConfig::validate() const {
  if (!(cluster_fraction >= 0.0 && cluster_fraction <= 1.0)) {
    throw InputError("cluster_fraction must lie in [0, 1]");
  }
  const auto total = std::accumulate(category_counts.begin(), category_counts.end(), std::size_t{0});
  if (total != n_incidents) {
    throw InputError("category counts sum to " + std::to_string(total) + ", expected " + std::to_string(n_incidents));
  }
}

std::array<std::size_t, kNumCategories> proportional_counts(std::size_t n,
                                                            const std::array<double, kNumCategories>& weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw InputError("category weights must have a positive sum");
  std::array<std::size_t, kNumCategories> counts{};
  std::array<double, kNumCategories> rem{};
  std::size_t assigned = 0;
  for (int c = 0; c < kNumCategories; ++c) {
    const double exact = static_cast<double>(n) * weights[c] / total;
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    rem[c] = exact - static_cast<double>(counts[c]);
    assigned += counts[c];
  }
  while (assigned < n) {
    int best = 0;
    for (int c = 1; c < kNumCategories; ++c) {
      if (rem[c] > rem[best]) best = c;
    }
    ++counts[best];
    rem[best] = -1.0;
    ++assigned;
  }
  return counts;
}

std::vector<Incident> generate_incidents(const ScenarioConfig& cfg, std::span<const PopulationCenter> centers,
                                         const geo::RegionBoundary& boundary, const geo::RoadGraph& g) {
  cfg.validate();
  const auto n_clustered = static_cast<std::size_t>(std::llround(static_cast<double>(cfg.n_incidents) * cfg.cluster_fraction));
  if (n_clustered > 0 && centers.empty()) throw InputError("clustered incidents requested but no population centers given");
  for (const auto& c : centers) {
    if (!(c.weight > 0.0) || !(c.sigma > 0.0)) throw InputError("population center weight and sigma must be positive");
  }
  if (g.empty()) throw InputError("cannot place incidents on an empty graph");

  Rng rng(cfg.rng_seed);
  const double weight_sum =
      std::accumulate(centers.begin(), centers.end(), 0.0, [](double s, const PopulationCenter& c) { return s + c.weight; });
  const auto box = boundary.bounding_box();

  auto draw_clustered = [&]() -> GeoPoint {
    double u = rng.uniform() * weight_sum;
    std::size_t k = 0;
    while (k + 1 < centers.size() && u >= centers[k].weight) {
      u -= centers[k].weight;
      ++k;
    }
    const auto& c = centers[k];
    const double dlon = rng.normal() * c.sigma;
    const double dlat = rng.normal() * c.sigma;
    return GeoPoint{c.center.lon + dlon, c.center.lat + dlat};
  };
  auto draw_uniform = [&]() -> GeoPoint {
    const double lon = rng.uniform(box.min_lon, box.max_lon);
    const double lat = rng.uniform(box.min_lat, box.max_lat);
    return GeoPoint{lon, lat};
  };

  std::vector<Incident> out;
  out.reserve(cfg.n_incidents);
  for (std::size_t i = 0; i < cfg.n_incidents; ++i) {
    const bool clustered = i < n_clustered;
    int attempt = 0;
    GeoPoint p;
    for (;; ++attempt) {
      if (attempt >= kRetryBudget) {
        throw InputError("rejection sampling exhausted " + std::to_string(kRetryBudget) +
                         " attempts for incident " + std::to_string(i) + " in region " + boundary.region_id);
      }
      p = clustered ? draw_clustered() : draw_uniform();
      if (p.lon < -180.0 || p.lon > 180.0 || p.lat < -90.0 || p.lat > 90.0) continue;
      if (geo::point_in_region(p, boundary)) break;
    }
    Incident inc;
    inc.location = p;
    inc.node = geo::snap_to_node(p, g);
    inc.split = cfg.split;
    inc.clustered = clustered;
    out.push_back(std::move(inc));
  }

  std::vector<Category> cats;
  cats.reserve(cfg.n_incidents);
  for (int c = 0; c < kNumCategories; ++c) cats.insert(cats.end(), cfg.category_counts[c], static_cast<Category>(c));
  shuffle(cats.begin(), cats.end(), rng);

  const int width = std::max<int>(4, static_cast<int>(std::to_string(cfg.n_incidents).size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].category = cats[i];
    std::string num = std::to_string(i);
    if (num.size() < static_cast<std::size_t>(width)) num.insert(0, static_cast<std::size_t>(width) - num.size(), '0');
    out[i].id = cfg.id_prefix + num;
  }
  return out;
}

std::vector<Incident> generate_challenge_set(ScenarioConfig cfg, std::span<const PopulationCenter> centers,
                                             const geo::RegionBoundary& boundary, const geo::RoadGraph& g,
                                             std::uint64_t training_seed) {
  if (cfg.rng_seed == training_seed) throw InputError("challenge seed must differ from the training seed");
  cfg.split = Split::Challenge;
  return generate_incidents(cfg, centers, boundary, g);
}

std::string incidents_to_geojson(std::span<const Incident> incidents) {
  ordered_json features = ordered_json::array();
  for (const auto& inc : incidents) {
    ordered_json f;
    f["type"] = "Feature";
    f["geometry"] = {{"type", "Point"}, {"coordinates", {inc.location.lon, inc.location.lat}}};
    f["properties"] = {{"id", inc.id},
                       {"category", category_index(inc.category)},
                       {"split", std::string(split_name(inc.split))},
                       {"clustered", inc.clustered}};
    features.push_back(std::move(f));
  }
  ordered_json doc;
  doc["type"] = "FeatureCollection";
  doc["features"] = std::move(features);
  return doc.dump(1) + "\n";
}

std::vector<Incident> parse_incidents(std::string_view text, const geo::RoadGraph& g) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("incidents: invalid JSON: ") + e.what());
  }
  if (doc.value("type", "") != "FeatureCollection") throw InputError("incidents: expected a FeatureCollection");
  std::vector<Incident> out;
  std::size_t i = 0;
  for (const auto& f : doc["features"]) {
    const std::string what = "incident feature " + std::to_string(i++);
    try {
      const auto& props = f.at("properties");
      const auto& coords = f.at("geometry").at("coordinates");
      Incident inc;
      inc.id = props.at("id").is_string() ? props["id"].get<std::string>() : std::to_string(props["id"].get<long long>());
      inc.category = category_from_code(props.at("category").get<long long>());
      inc.split = parse_split(props.value("split", std::string("training")));
      inc.clustered = props.value("clustered", false);
      inc.location = GeoPoint::checked(coords.at(0).get<double>(), coords.at(1).get<double>());
      inc.node = geo::snap_to_node(inc.location, g);
      out.push_back(std::move(inc));
    } catch (const json::exception& e) {
      throw InputError(what + ": " + e.what());
    }
  }
  return out;
}

std::vector<Incident> load_incidents(const std::string& path, const geo::RoadGraph& g) {
  return parse_incidents(read_text_file(path), g);
}

std::string scenario_metadata_json(const ScenarioConfig& cfg, std::span<const PopulationCenter> centers) {
  ordered_json meta;
  meta["format"] = "incident-set/1";
  meta["rng"] = std::string(Rng::kName);
  meta["rng_seed"] = cfg.rng_seed;
  meta["split"] = std::string(split_name(cfg.split));
  meta["n_incidents"] = cfg.n_incidents;
  meta["cluster_fraction"] = cfg.cluster_fraction;
  meta["category_counts"] = cfg.category_counts;
  ordered_json cs = ordered_json::array();
  for (const auto& c : centers) {
    cs.push_back({{"lon", c.center.lon}, {"lat", c.center.lat}, {"weight", c.weight}, {"sigma", c.sigma}});
  }
  meta["population_centers"] = cs;
  meta["retry_budget"] = kRetryBudget;
  return meta.dump(2) + "\n";
}

std::vector<NodeIndex> unique_nodes(std::span<const Incident> incidents) {
  std::vector<NodeIndex> out;
  std::unordered_set<NodeIndex> seen;
  for (const auto& inc : incidents) {
    if (seen.insert(inc.node).second) out.push_back(inc.node);
  }
  return out;
}

}  // namespace dispatch::scenario
