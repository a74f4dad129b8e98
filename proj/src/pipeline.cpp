#include "dispatch/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <ostream>
#include <set>

#include "json.hpp"

namespace dispatch::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

Inputs load_inputs(const config::RunConfig& cfg) {
  Inputs in;
  in.graph = geo::load_road_graph(cfg.graph);
  in.facilities = geo::load_facilities(cfg.facilities, in.graph);
  const auto boundary = geo::load_regions(cfg.boundary);
  if (boundary.size() != 1) throw InputError(cfg.boundary + ": expected exactly one boundary polygon");
  in.boundary = boundary.front();
  if (!cfg.regions.empty()) in.regions = geo::load_regions(cfg.regions);
  return in;
}

IncidentSets generate_incident_sets(const config::RunConfig& cfg, const Inputs& in) {
  IncidentSets s;
  s.training = scenario::generate_incidents(cfg.training_scenario(), cfg.population_centers, in.boundary, in.graph);
  s.challenge = scenario::generate_challenge_set(cfg.challenge_scenario(), cfg.population_centers, in.boundary,
                                                 in.graph, cfg.require_seed());
  return s;
}

namespace {

std::vector<geo::NodeIndex> subsample(std::vector<geo::NodeIndex> nodes, std::size_t cap) {
  if (nodes.size() <= cap) return nodes;
  std::vector<geo::NodeIndex> out;
  out.reserve(cap);
  for (std::size_t i = 0; i < cap; ++i) out.push_back(nodes[i * nodes.size() / cap]);
  return out;
}

std::vector<scenario::Incident> uniform_probes(const config::RunConfig& cfg, const Inputs& in,
                                               const geo::RegionBoundary& region, std::size_t index) {
  scenario::ScenarioConfig sc;
  sc.n_incidents = cfg.probes_per_category * kNumCategories;
  sc.cluster_fraction = 0.0;
  sc.category_counts.fill(cfg.probes_per_category);
  sc.rng_seed = Rng::derive(cfg.require_seed(), 1000 + index);
  sc.split = scenario::Split::Probe;
  sc.id_prefix = "probe_" + region.region_id + "_";
  return scenario::generate_incidents(sc, {}, region, in.graph);
}

}  // namespace

std::vector<policy::Region> build_regions(const config::RunConfig& cfg, const Inputs& in,
                                          std::span<const scenario::Incident> incidents) {
  std::vector<policy::Region> out;
  if (cfg.zones > 0) {
    std::vector<geo::GeoPoint> pts;
    pts.reserve(incidents.size());
    for (const auto& inc : incidents) pts.push_back(inc.location);
    const auto za = policy::cluster_zones(pts, cfg.zones, Rng::derive(cfg.require_seed(), 900));
    out.resize(za.k);
    for (std::size_t z = 0; z < za.k; ++z) out[z].region_id = "zone_" + std::to_string(z);
    for (std::size_t i = 0; i < incidents.size(); ++i) {
      auto probe = incidents[i];
      probe.split = scenario::Split::Probe;
      out[za.assignment[i]].probes.push_back(std::move(probe));
    }
    std::vector<std::vector<geo::NodeIndex>> members(za.k);
    for (geo::NodeIndex v = 0; v < in.graph.node_count(); ++v) {
      if (!geo::point_in_region(in.graph.point(v), in.boundary)) continue;
      members[policy::nearest_centroid(in.graph.point(v), za.centroids)].push_back(v);
    }
    for (std::size_t z = 0; z < za.k; ++z) out[z].candidates = subsample(std::move(members[z]), cfg.candidate_cap);
    return out;
  }
  std::vector<geo::RegionBoundary> polys = in.regions;
  if (polys.empty()) polys.push_back(in.boundary);
  for (std::size_t i = 0; i < polys.size(); ++i) {
    policy::Region r;
    r.region_id = polys[i].region_id;
    r.boundary = polys[i];
    r.probes = uniform_probes(cfg, in, polys[i], i);
    r.candidates = policy::candidate_nodes(in.graph, polys[i], cfg.candidate_cap);
    out.push_back(std::move(r));
  }
  return out;
}

atlas::TravelTimeAtlas build_run_atlas(const config::RunConfig& cfg, const Inputs& in,
                                       std::span<const scenario::Incident> incidents) {
  std::vector<geo::NodeIndex> nodes;
  if (cfg.atlas_scope == config::AtlasScope::AllNodes) {
    nodes.resize(in.graph.node_count());
    for (geo::NodeIndex v = 0; v < in.graph.node_count(); ++v) nodes[v] = v;
  } else {
    nodes = scenario::unique_nodes(incidents);
  }
  return atlas::build_atlas(in.graph, nodes, in.facilities, cfg.speed_kmh, cfg.threads);
}

// ---------------------------------------------------------------------------

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string Manifest::to_json() const {
  json j;
  j["format"] = "run-manifest/1";
  j["command"] = command;
  j["config_sha256"] = config_hash;
  j["seed"] = seed;
  j["inputs"] = json::array();
  for (const auto& [path, sha] : inputs) j["inputs"].push_back({{"path", path}, {"sha256", sha}});
  j["artifacts"] = json::array();
  for (const auto& a : artifacts) {
    j["artifacts"].push_back({{"path", a.path}, {"sha256", a.sha256}, {"deterministic", a.deterministic}});
  }
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  return j.dump(2) + "\n";
}

void prepare_output_dir(const std::string& dir, bool force) {
  const fs::path root(dir);
  if (fs::exists(root)) {
    if (!fs::is_directory(root)) throw InputError("output path exists and is not a directory: " + dir);
    if (!fs::is_empty(root)) {
      if (!force) throw InputError("output directory is not empty: " + dir + " (pass --force to overwrite)");
      for (const char* entry : {"atlas", "incidents", "model", "reports", "manifest.json"}) {
        fs::remove_all(root / entry);
      }
    }
  }
  fs::create_directories(root);
}

void ArtifactWriter::write(const std::string& rel_path, std::string_view contents, bool deterministic) {
  const fs::path p = fs::path(dir_) / rel_path;
  fs::create_directories(p.parent_path());
  write_text_file(p.string(), contents);
  manifest_.artifacts.push_back({rel_path, sha256_hex(contents), deterministic});
}

void ArtifactWriter::write_manifest() {
  manifest_.finished_at = utc_timestamp();
  write_text_file((fs::path(dir_) / "manifest.json").string(), manifest_.to_json());
}

Manifest start_manifest(std::string command, const config::RunConfig& cfg) {
  Manifest m;
  m.command = std::move(command);
  m.config_hash = cfg.hash();
  m.seed = cfg.seed.value_or(0);
  m.started_at = utc_timestamp();
  for (const auto* path : {&cfg.graph, &cfg.facilities, &cfg.boundary, &cfg.regions}) {
    if (!path->empty()) m.inputs.emplace_back(*path, sha256_file(*path));
  }
  return m;
}

namespace {

template <class F>
auto stage(const std::string& name, std::ostream& log, F&& fn) {
  log << "[" << name << "] ...\n" << std::flush;
  try {
    return fn();
  } catch (const InputError& e) {
    throw StageError(name, e.what(), true);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what(), false);
  }
}

std::string connectivity_json(const geo::ConnectivityReport& rep) {
  json j;
  j["component_count"] = rep.component_count;
  j["component_sizes"] = rep.component_sizes;
  j["orphaned_facility_ids"] = rep.orphaned_facility_ids;
  return j.dump(2) + "\n";
}

}  // namespace

PipelineResult run_pipeline(const config::RunConfig& cfg, const std::string& out_dir, bool force, std::ostream& log) {
  stage("config", log, [&] {
    cfg.validate();
    return 0;
  });
  prepare_output_dir(out_dir, force);
  PipelineResult res;
  res.manifest = start_manifest("pipeline", cfg);
  ArtifactWriter out(out_dir, res.manifest);
  out.write("config.canonical.txt", cfg.canonical_text());

  const Inputs in = stage("load", log, [&] { return load_inputs(cfg); });

  const IncidentSets sets = stage("gen", log, [&] {
    auto s = generate_incident_sets(cfg, in);
    out.write("incidents/training.geojson", scenario::incidents_to_geojson(s.training));
    out.write("incidents/challenge.geojson", scenario::incidents_to_geojson(s.challenge));
    out.write("incidents/training.meta.json",
              scenario::scenario_metadata_json(cfg.training_scenario(), cfg.population_centers));
    out.write("incidents/challenge.meta.json",
              scenario::scenario_metadata_json(cfg.challenge_scenario(), cfg.population_centers));
    return s;
  });

  std::vector<scenario::Incident> pooled = sets.training;
  pooled.insert(pooled.end(), sets.challenge.begin(), sets.challenge.end());
  const auto regions = stage("regions", log, [&] {
    auto r = build_regions(cfg, in, pooled);
    std::vector<scenario::Incident> probes;
    for (const auto& reg : r) probes.insert(probes.end(), reg.probes.begin(), reg.probes.end());
    out.write("incidents/probes.geojson", scenario::incidents_to_geojson(probes));
    return r;
  });

  const auto atl = stage("atlas", log, [&] {
    std::vector<scenario::Incident> all = pooled;
    for (const auto& reg : regions) all.insert(all.end(), reg.probes.begin(), reg.probes.end());
    const auto nodes = scenario::unique_nodes(all);
    out.write("reports/connectivity.json", connectivity_json(geo::audit_connectivity(in.graph, in.facilities, nodes)));
    auto a = build_run_atlas(cfg, in, all);
    const auto csv = atlas::atlas_to_csv(a, in.graph);
    out.write("atlas/atlas.csv", csv);
    out.write("atlas/metadata.json", atlas::atlas_metadata_json(a, in.graph, csv));
    return a;
  });

  const auto trained = stage("train", log, [&] {
    const auto episodes = trainer::make_episodes(sets.training, atl, cfg.norms);
    auto r = trainer::train(episodes, cfg.reward, cfg.trainer_config());
    out.write("model/checkpoint.json", agent::checkpoint_to_json(r.params, cfg.hash()));
    out.write("reports/training_curve.csv", r.curve.to_csv());
    log << "  solvable training incidents: " << r.n_solvable << ", final rolling mean reward: "
        << (r.curve.size() ? format_double(r.curve.rolling_reward.back()) : std::string("n/a")) << '\n';
    return r;
  });

  stage("evaluate", log, [&] {
    res.agent_report = eval::evaluate(eval::agent_policy(trained.params), "agent", sets.challenge, atl, cfg.norms);
    res.baseline_report = eval::evaluate(eval::baseline_policy(in.facilities), "nearest_neighbor", sets.challenge,
                                         atl, cfg.norms);
    res.latency = eval::latency_bench(trained.params, sets.challenge, atl, cfg.norms);
    out.write("reports/evaluation_agent.csv", res.agent_report.to_csv());
    out.write("reports/evaluation_baseline.csv", res.baseline_report.to_csv());
    out.write("reports/dispatch_log_agent.csv", res.agent_report.dispatch_log_csv());
    out.write("reports/dispatch_log_baseline.csv", res.baseline_report.dispatch_log_csv());
    out.write("reports/evaluation_summary.txt",
              res.agent_report.summary_text() + "\n" + res.baseline_report.summary_text());
    out.write("reports/latency.csv", res.latency.to_csv(), false);
    log << res.agent_report.summary_text() << res.baseline_report.summary_text();
    return 0;
  });

  stage("assess", log, [&] {
    res.grades_before = policy::assess(regions, atl, cfg.thresholds);
    out.write("reports/grades.csv", policy::grades_to_csv(res.grades_before));
    out.write("reports/grades.geojson", policy::grades_to_geojson(res.grades_before, regions));
    return 0;
  });

  stage("plan", log, [&] {
    res.plan = policy::plan_interventions(regions, in.graph, in.facilities, cfg.speed_kmh, cfg.thresholds, cfg.threads);
    out.write("reports/interventions.csv", res.plan.to_csv());
    out.write("reports/proposed_sites.geojson", res.plan.sites_geojson());
    out.write("reports/grades_after.csv", policy::grades_to_csv(res.plan.grades_after));
    std::size_t n_sites = 0;
    for (const auto& rp : res.plan.regions) n_sites += rp.n_new();
    log << "  proposed sites: " << n_sites << '\n';
    return 0;
  });

  out.write_manifest();
  log << "manifest: " << (fs::path(out_dir) / "manifest.json").string() << '\n';
  return res;
}

}  // namespace dispatch::pipeline
