#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "dispatch/agent.hpp"
#include "dispatch/atlas.hpp"
#include "dispatch/config.hpp"
#include "dispatch/eval.hpp"
#include "dispatch/policy.hpp"
#include "dispatch/trainer.hpp"

namespace dispatch::pipeline {

/// Raised by run_pipeline; names the stage that failed.
class StageError : public std::runtime_error {
public:
  StageError(std::string stage, const std::string& what, bool input_error)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)), input_error_(input_error) {}
  const std::string& stage() const { return stage_; }
  bool input_error() const { return input_error_; }

private:
  std::string stage_;
  bool input_error_;
};

struct Inputs {
  geo::RoadGraph graph;
  std::vector<geo::Facility> facilities;
  geo::RegionBoundary boundary;
  std::vector<geo::RegionBoundary> regions;
};

Inputs load_inputs(const config::RunConfig& cfg);

struct IncidentSets {
  std::vector<scenario::Incident> training;
  std::vector<scenario::Incident> challenge;
};

IncidentSets generate_incident_sets(const config::RunConfig& cfg, const Inputs& in);

/// Governance regions: the regions file (or the outer boundary when there is
/// none) with uniform probes per category, or k-means service zones over
/// `incidents` when cfg.zones > 0.
std::vector<policy::Region> build_regions(const config::RunConfig& cfg, const Inputs& in,
                                          std::span<const scenario::Incident> incidents);

/// Atlas rows for the incident, challenge and probe nodes, or every graph node.
atlas::TravelTimeAtlas build_run_atlas(const config::RunConfig& cfg, const Inputs& in,
                                       std::span<const scenario::Incident> incidents);

// ---------------------------------------------------------------------------
// Output directory and manifest

struct ArtifactRecord {
  std::string path;  ///< relative to the output directory
  std::string sha256;
  bool deterministic = true;
};

struct Manifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  ///< path, sha256
  std::vector<ArtifactRecord> artifacts;
  std::string started_at;
  std::string finished_at;

  std::string to_json() const;
};

/// Refuses a non-empty directory unless `force`; with `force` removes only
/// the entries of the fixed layout (atlas/, incidents/, model/, reports/,
/// manifest.json) and leaves anything else alone.
void prepare_output_dir(const std::string& dir, bool force);

/// Writes files under an output directory and records them in a manifest.
class ArtifactWriter {
public:
  ArtifactWriter(std::string dir, Manifest& manifest) : dir_(std::move(dir)), manifest_(manifest) {}
  void write(const std::string& rel_path, std::string_view contents, bool deterministic = true);
  void write_manifest();
  const std::string& dir() const { return dir_; }

private:
  std::string dir_;
  Manifest& manifest_;
};

std::string utc_timestamp();

/// Manifest pre-filled with command, config hash, seed, input hashes and start time.
Manifest start_manifest(std::string command, const config::RunConfig& cfg);

struct PipelineResult {
  eval::EvaluationReport agent_report;
  eval::EvaluationReport baseline_report;
  eval::LatencyReport latency;
  std::vector<policy::ServiceGrade> grades_before;
  policy::InterventionPlan plan;
  Manifest manifest;
};

/// gen -> atlas -> train -> evaluate -> assess -> plan. Progress lines go to `log`.
PipelineResult run_pipeline(const config::RunConfig& cfg, const std::string& out_dir, bool force, std::ostream& log);

}  // namespace dispatch::pipeline
