#include "dispatch/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "dispatch/pipeline.hpp"
#include "dispatch/worlds.hpp"
#include "json.hpp"

namespace dispatch::cli {

namespace fs = std::filesystem;

namespace {

class UnsolvableError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;
  bool force = false;
};

void add_config_flags(CLI::App* sub, Common& c, bool config_required) {
  auto* opt = sub->add_option("--config", c.config, "run config file (key = value)");
  if (config_required) opt->required();
  sub->add_option("--seed", c.seed, "override the config seed");
  sub->add_option("--threads", c.threads, "override the config thread count");
}

void add_out_flags(CLI::App* sub, Common& c) {
  sub->add_option("--out", c.out, "output directory")->required();
  sub->add_flag("--force", c.force, "overwrite the fixed layout inside an existing output directory");
}

config::RunConfig load_config(const Common& c) {
  config::RunConfig cfg;
  if (!c.config.empty()) {
    if (!fs::exists(c.config)) throw InputError("config file not found: " + c.config);
    cfg = config::load_run_config(c.config);
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  return cfg;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw InputError("missing " + what + " path");
  if (!fs::exists(path)) throw InputError(what + " file not found: " + path);
}

void require_inputs(const config::RunConfig& cfg) {
  require_file(cfg.graph, "graph");
  require_file(cfg.facilities, "facilities");
  require_file(cfg.boundary, "boundary");
  if (!cfg.regions.empty()) require_file(cfg.regions, "regions");
}

atlas::TravelTimeAtlas read_atlas(const std::string& path, const pipeline::Inputs& in, double speed) {
  require_file(path, "atlas");
  try {
    return atlas::atlas_from_csv(read_text_file(path), in.graph, in.facilities, speed);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

std::vector<scenario::Incident> read_incidents(const std::vector<std::string>& paths, const geo::RoadGraph& g) {
  std::vector<scenario::Incident> all;
  for (const auto& p : paths) {
    require_file(p, "incidents");
    auto part = scenario::load_incidents(p, g);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

// ---------------------------------------------------------------------------

struct BuildAtlasArgs {
  Common c;
  std::string graph, facilities;
  std::vector<std::string> incidents;
  std::optional<double> speed;
};

int cmd_build_atlas(const BuildAtlasArgs& a, std::ostream& out) {
  auto cfg = load_config(a.c);
  if (!a.graph.empty()) cfg.graph = a.graph;
  if (!a.facilities.empty()) cfg.facilities = a.facilities;
  if (a.speed) cfg.speed_kmh = *a.speed;
  require_file(cfg.graph, "graph");
  require_file(cfg.facilities, "facilities");
  if (a.incidents.empty()) throw InputError("build-atlas needs at least one --incidents file");
  pipeline::Inputs in;
  in.graph = geo::load_road_graph(cfg.graph);
  in.facilities = geo::load_facilities(cfg.facilities, in.graph);
  const auto incidents = read_incidents(a.incidents, in.graph);
  const auto nodes = scenario::unique_nodes(incidents);

  pipeline::prepare_output_dir(a.c.out, a.c.force);
  auto manifest = pipeline::start_manifest("build-atlas", cfg);
  for (const auto& p : a.incidents) manifest.inputs.emplace_back(p, sha256_file(p));
  pipeline::ArtifactWriter w(a.c.out, manifest);
  const auto atl = atlas::build_atlas(in.graph, nodes, in.facilities, cfg.speed_kmh, cfg.threads);
  const auto csv = atlas::atlas_to_csv(atl, in.graph);
  w.write("atlas/atlas.csv", csv);
  w.write("atlas/metadata.json", atlas::atlas_metadata_json(atl, in.graph, csv));
  w.write_manifest();
  out << "atlas: " << atl.rows() << " incident nodes x " << atl.cols() << " facilities, sha256 " << sha256_hex(csv)
      << '\n';
  return kOk;
}

int cmd_gen_incidents(const Common& c, std::ostream& out) {
  const auto cfg = load_config(c);
  cfg.validate();
  require_inputs(cfg);
  const auto in = pipeline::load_inputs(cfg);
  const auto sets = pipeline::generate_incident_sets(cfg, in);
  pipeline::prepare_output_dir(c.out, c.force);
  auto manifest = pipeline::start_manifest("gen-incidents", cfg);
  pipeline::ArtifactWriter w(c.out, manifest);
  w.write("incidents/training.geojson", scenario::incidents_to_geojson(sets.training));
  w.write("incidents/challenge.geojson", scenario::incidents_to_geojson(sets.challenge));
  w.write("incidents/training.meta.json",
          scenario::scenario_metadata_json(cfg.training_scenario(), cfg.population_centers));
  w.write("incidents/challenge.meta.json",
          scenario::scenario_metadata_json(cfg.challenge_scenario(), cfg.population_centers));
  w.write_manifest();
  out << "incidents: " << sets.training.size() << " training, " << sets.challenge.size() << " challenge\n";
  return kOk;
}

struct ModelArgs {
  Common c;
  std::vector<std::string> incidents;
  std::string atlas_path;
  std::string checkpoint;
};

int cmd_train(const ModelArgs& a, std::ostream& out) {
  const auto cfg = load_config(a.c);
  cfg.validate();
  require_inputs(cfg);
  const auto in = pipeline::load_inputs(cfg);
  const auto incidents = read_incidents(a.incidents, in.graph);
  const auto atl = read_atlas(a.atlas_path, in, cfg.speed_kmh);
  const auto episodes = trainer::make_episodes(incidents, atl, cfg.norms);
  pipeline::prepare_output_dir(a.c.out, a.c.force);
  auto manifest = pipeline::start_manifest("train", cfg);
  pipeline::ArtifactWriter w(a.c.out, manifest);
  const auto r = trainer::train(episodes, cfg.reward, cfg.trainer_config());
  w.write("model/checkpoint.json", agent::checkpoint_to_json(r.params, cfg.hash()));
  w.write("reports/training_curve.csv", r.curve.to_csv());
  w.write_manifest();
  out << "trained on " << r.n_solvable << " solvable incidents for " << r.curve.size() << " epochs";
  if (r.curve.size()) out << ", final rolling mean reward " << format_double(r.curve.rolling_reward.back());
  out << '\n';
  return kOk;
}

int cmd_evaluate(const ModelArgs& a, std::ostream& out) {
  const auto cfg = load_config(a.c);
  require_inputs(cfg);
  const auto in = pipeline::load_inputs(cfg);
  const auto incidents = read_incidents(a.incidents, in.graph);
  const auto atl = read_atlas(a.atlas_path, in, cfg.speed_kmh);
  require_file(a.checkpoint, "checkpoint");
  const auto params = agent::load_checkpoint(a.checkpoint);
  const auto agent_rep = eval::evaluate(eval::agent_policy(params), "agent", incidents, atl, cfg.norms);
  const auto base_rep =
      eval::evaluate(eval::baseline_policy(in.facilities), "nearest_neighbor", incidents, atl, cfg.norms);
  const auto lat = eval::latency_bench(params, incidents, atl, cfg.norms);
  pipeline::prepare_output_dir(a.c.out, a.c.force);
  auto manifest = pipeline::start_manifest("evaluate", cfg);
  pipeline::ArtifactWriter w(a.c.out, manifest);
  w.write("reports/evaluation_agent.csv", agent_rep.to_csv());
  w.write("reports/evaluation_baseline.csv", base_rep.to_csv());
  w.write("reports/dispatch_log_agent.csv", agent_rep.dispatch_log_csv());
  w.write("reports/dispatch_log_baseline.csv", base_rep.dispatch_log_csv());
  w.write("reports/evaluation_summary.txt", agent_rep.summary_text() + "\n" + base_rep.summary_text());
  w.write("reports/latency.csv", lat.to_csv(), false);
  w.write_manifest();
  out << agent_rep.summary_text() << base_rep.summary_text() << "p99 dispatch latency: " << format_double(lat.p99_ms)
      << " ms\n";
  return kOk;
}

struct DispatchArgs {
  Common c;
  double lon = 0.0, lat = 0.0;
  std::string category;
  std::string atlas_path;
  std::string checkpoint;
};

int cmd_dispatch(const DispatchArgs& a, std::ostream& out) {
  const auto cat = parse_category(a.category);
  if (!cat) throw InputError("unknown category '" + a.category + "' (use 0-3 or healthcare/fire/security/transport)");
  const auto cfg = load_config(a.c);
  require_file(cfg.graph, "graph");
  require_file(cfg.facilities, "facilities");
  require_file(a.checkpoint, "checkpoint");
  pipeline::Inputs in;
  in.graph = geo::load_road_graph(cfg.graph);
  in.facilities = geo::load_facilities(cfg.facilities, in.graph);
  const auto params = agent::load_checkpoint(a.checkpoint);
  const auto node = geo::snap_to_node(geo::GeoPoint::checked(a.lon, a.lat), in.graph);

  std::vector<atlas::TravelTime> times;
  std::optional<atlas::TravelTimeAtlas> atl;
  if (!a.atlas_path.empty()) atl = read_atlas(a.atlas_path, in, cfg.speed_kmh);
  if (atl && atl->row_of(node)) {
    const auto row = atl->row(*atl->row_of(node));
    times.assign(row.begin(), row.end());
  } else {
    times = atlas::travel_row(in.graph, node, in.facilities, cfg.speed_kmh);
  }
  const auto state = env::build_state(*cat, times, in.facilities, cfg.norms);
  if (!state.solvable()) {
    throw UnsolvableError("no reachable facility of category " + std::string(category_name(*cat)) + " from node " +
                          in.graph.id(node));
  }
  const auto best = atlas::best_in_row(times, in.facilities, *cat);
  const std::size_t choice = agent::greedy_action(agent::forward(params, state));
  const double t = *times[choice];
  out << "facility=" << in.facilities[choice].id << " node=" << in.graph.id(in.facilities[choice].node)
      << " travel_time_min=" << format_double(t) << " delta_to_oracle_min=" << format_double(t - best->t_star) << '\n';
  return kOk;
}

int cmd_assess(const Common& c, const std::string& facilities_override, std::ostream& out) {
  auto cfg = load_config(c);
  if (!facilities_override.empty()) cfg.facilities = facilities_override;
  cfg.validate();
  require_inputs(cfg);
  const auto in = pipeline::load_inputs(cfg);
  std::vector<scenario::Incident> pooled;
  if (cfg.zones > 0) {
    auto sets = pipeline::generate_incident_sets(cfg, in);
    pooled = std::move(sets.training);
    pooled.insert(pooled.end(), sets.challenge.begin(), sets.challenge.end());
  }
  const auto regions = pipeline::build_regions(cfg, in, pooled);
  const auto grades = policy::assess_with(regions, in.graph, in.facilities, cfg.speed_kmh, cfg.thresholds);
  pipeline::prepare_output_dir(c.out, c.force);
  auto manifest = pipeline::start_manifest("assess", cfg);
  pipeline::ArtifactWriter w(c.out, manifest);
  const auto csv = policy::grades_to_csv(grades);
  w.write("reports/grades.csv", csv);
  w.write("reports/grades.geojson", policy::grades_to_geojson(grades, regions));
  w.write_manifest();
  out << csv;
  return kOk;
}

int cmd_plan(const Common& c, std::ostream& out) {
  const auto cfg = load_config(c);
  cfg.validate();
  require_inputs(cfg);
  const auto in = pipeline::load_inputs(cfg);
  std::vector<scenario::Incident> pooled;
  if (cfg.zones > 0) {
    auto sets = pipeline::generate_incident_sets(cfg, in);
    pooled = std::move(sets.training);
    pooled.insert(pooled.end(), sets.challenge.begin(), sets.challenge.end());
  }
  const auto regions = pipeline::build_regions(cfg, in, pooled);
  const auto plan =
      policy::plan_interventions(regions, in.graph, in.facilities, cfg.speed_kmh, cfg.thresholds, cfg.threads);
  pipeline::prepare_output_dir(c.out, c.force);
  auto manifest = pipeline::start_manifest("plan", cfg);
  pipeline::ArtifactWriter w(c.out, manifest);
  w.write("reports/grades.csv", policy::grades_to_csv(plan.grades_before));
  w.write("reports/interventions.csv", plan.to_csv());
  w.write("reports/proposed_sites.geojson", plan.sites_geojson());
  w.write("reports/grades_after.csv", policy::grades_to_csv(plan.grades_after));
  w.write("model/augmented_facilities.geojson", geo::facilities_to_geojson(plan.augmented_facilities));
  w.write_manifest();
  out << plan.to_csv();
  return kOk;
}

struct AuditArgs {
  std::string graph, facilities;
  std::vector<std::string> incidents;
};

int cmd_audit_graph(const AuditArgs& a, std::ostream& out) {
  require_file(a.graph, "graph");
  const auto g = geo::load_road_graph(a.graph);
  std::vector<geo::Facility> facilities;
  if (!a.facilities.empty()) {
    require_file(a.facilities, "facilities");
    facilities = geo::load_facilities(a.facilities, g);
  }
  const auto incidents = read_incidents(a.incidents, g);
  const auto nodes = scenario::unique_nodes(incidents);
  const auto rep = geo::audit_connectivity(g, facilities, nodes);
  nlohmann::json j;
  j["nodes"] = g.node_count();
  j["edges"] = g.edge_count();
  j["component_count"] = rep.component_count;
  j["component_sizes"] = rep.component_sizes;
  j["orphaned_facility_ids"] = rep.orphaned_facility_ids;
  out << j.dump(2) << '\n';
  return kOk;
}

int cmd_pipeline(const Common& c, std::ostream& out) {
  const auto cfg = load_config(c);
  cfg.validate();
  require_inputs(cfg);
  pipeline::run_pipeline(cfg, c.out, c.force, out);
  return kOk;
}

struct WorldArgs {
  std::string kind = "barrier";
  std::string out;
  std::size_t size = 20;
  std::uint64_t seed = 42;
};

int cmd_gen_world(const WorldArgs& a, std::ostream& out) {
  worlds::GridSpec spec;
  spec.size = a.size;
  if (spec.size < 4) throw InputError("--size must be at least 4");
  worlds::World w;
  if (a.kind == "barrier") w = worlds::barrier_world(spec);
  else if (a.kind == "intervention") w = worlds::intervention_world(spec);
  else if (a.kind == "open") w = worlds::open_grid_world(spec);
  else throw InputError("unknown world kind '" + a.kind + "' (barrier, intervention, open)");
  worlds::write_world(w, a.out);
  std::ostringstream cfg;
  cfg << "# synthetic " << w.name << " world, " << spec.size << "x" << spec.size << " grid\n"
      << "graph = graph.txt\n"
      << "facilities = facilities.geojson\n"
      << "boundary = boundary.geojson\n"
      << "regions = regions.geojson\n"
      << "population_centers = " << worlds::centers_to_config(w.centers) << '\n'
      << "seed = " << a.seed << '\n'
      << "train_incidents = 300\n"
      << "challenge_incidents = 100\n"
      << "epochs = 2000\n"
      << "optimizer = adam\n"
      << "learning_rate = 0.001\n"
      << "probes_per_category = 25\n";
  write_text_file((fs::path(a.out) / "run.cfg").string(), cfg.str());
  out << "world '" << w.name << "' written to " << a.out << " (" << w.graph.node_count() << " nodes, "
      << w.graph.edge_count() << " edges, " << w.facilities.size() << " facilities)\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Emergency dispatch optimisation: travel-time atlas, attention actor-critic and coverage planning"};
  app.require_subcommand(1);

  BuildAtlasArgs ba;
  auto* s_atlas = app.add_subcommand("build-atlas", "precompute incident x facility travel times");
  add_config_flags(s_atlas, ba.c, false);
  add_out_flags(s_atlas, ba.c);
  s_atlas->add_option("--graph", ba.graph, "road graph text file");
  s_atlas->add_option("--facilities", ba.facilities, "facilities GeoJSON");
  s_atlas->add_option("--incidents", ba.incidents, "incident GeoJSON file(s)");
  s_atlas->add_option("--speed", ba.speed, "average speed in km/h");

  Common gi;
  auto* s_gen = app.add_subcommand("gen-incidents", "generate training and challenge incident sets");
  add_config_flags(s_gen, gi, true);
  add_out_flags(s_gen, gi);

  ModelArgs tr;
  auto* s_train = app.add_subcommand("train", "train the attention actor-critic");
  add_config_flags(s_train, tr.c, true);
  add_out_flags(s_train, tr.c);
  s_train->add_option("--incidents", tr.incidents, "training incident GeoJSON file(s)")->required();
  s_train->add_option("--atlas", tr.atlas_path, "atlas CSV")->required();

  ModelArgs ev;
  auto* s_eval = app.add_subcommand("evaluate", "compare the trained policy with the nearest-neighbour baseline");
  add_config_flags(s_eval, ev.c, true);
  add_out_flags(s_eval, ev.c);
  s_eval->add_option("--incidents", ev.incidents, "incident GeoJSON file(s)")->required();
  s_eval->add_option("--atlas", ev.atlas_path, "atlas CSV")->required();
  s_eval->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();

  DispatchArgs di;
  auto* s_disp = app.add_subcommand("dispatch", "recommend a facility for one incident");
  add_config_flags(s_disp, di.c, true);
  s_disp->add_option("--lon", di.lon, "incident longitude")->required();
  s_disp->add_option("--lat", di.lat, "incident latitude")->required();
  s_disp->add_option("--category", di.category, "0-3 or healthcare/fire/security/transport")->required();
  s_disp->add_option("--atlas", di.atlas_path, "atlas CSV (falls back to a live shortest-path search)");
  s_disp->add_option("--checkpoint", di.checkpoint, "model checkpoint")->required();

  Common as;
  std::string as_fac;
  auto* s_assess = app.add_subcommand("assess", "grade service quality per region and category");
  add_config_flags(s_assess, as, true);
  add_out_flags(s_assess, as);
  s_assess->add_option("--facilities", as_fac, "facilities GeoJSON overriding the config");

  Common pl;
  auto* s_plan = app.add_subcommand("plan", "propose new facility sites for under-served regions");
  add_config_flags(s_plan, pl, true);
  add_out_flags(s_plan, pl);

  AuditArgs au;
  auto* s_audit = app.add_subcommand("audit-graph", "report connected components and orphaned facilities");
  s_audit->add_option("--graph", au.graph, "road graph text file")->required();
  s_audit->add_option("--facilities", au.facilities, "facilities GeoJSON");
  s_audit->add_option("--incidents", au.incidents, "incident GeoJSON file(s)");

  Common pp;
  auto* s_pipe = app.add_subcommand("pipeline", "gen -> atlas -> train -> evaluate -> assess -> plan");
  add_config_flags(s_pipe, pp, true);
  add_out_flags(s_pipe, pp);

  WorldArgs gw;
  auto* s_world = app.add_subcommand("gen-world", "write a synthetic grid world and a matching run config");
  s_world->add_option("--kind", gw.kind, "barrier, intervention or open");
  s_world->add_option("--out", gw.out, "output directory")->required();
  s_world->add_option("--size", gw.size, "grid side length");
  s_world->add_option("--seed", gw.seed, "seed written into run.cfg");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*s_atlas) return cmd_build_atlas(ba, out);
    if (*s_gen) return cmd_gen_incidents(gi, out);
    if (*s_train) return cmd_train(tr, out);
    if (*s_eval) return cmd_evaluate(ev, out);
    if (*s_disp) return cmd_dispatch(di, out);
    if (*s_assess) return cmd_assess(as, as_fac, out);
    if (*s_plan) return cmd_plan(pl, out);
    if (*s_audit) return cmd_audit_graph(au, out);
    if (*s_pipe) return cmd_pipeline(pp, out);
    if (*s_world) return cmd_gen_world(gw, out);
  } catch (const UnsolvableError& e) {
    err << "error: " << e.what() << '\n';
    return kUnsolvable;
  } catch (const pipeline::StageError& e) {
    err << "error: " << e.what() << '\n';
    return e.input_error() ? kInputError : kInternalError;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  return kInternalError;
}

}  // namespace dispatch::cli
