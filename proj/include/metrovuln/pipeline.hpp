#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "metrovuln/imputation.hpp"
#include "metrovuln/matching.hpp"
#include "metrovuln/metrics.hpp"
#include "metrovuln/synthgen.hpp"

namespace metrovuln {

// Stage preconditions that fail because an earlier stage has not run map to
// exit code 2.
struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  // input files; empty paths default to <out_dir>/scenario/<name>.csv
  std::string trips_path, incidents_path, stations_path, edges_path, weather_path;
  std::string out_dir = "out";

  int interval_min = 15;
  int threshold_min = 10;

  std::vector<std::string> formula;  // empty -> default Table-layout formula
  bool select_formula = false;       // likelihood-ratio forward selection
  std::string support_mode = "warn";  // warn | trim
  int support_bins = 40;

  MatchConfig match;
  double kl_eps = 1e-6;
  std::string gross_ridership = "disrupted";  // disrupted | baseline

  ForestHyper forest;
  std::uint64_t seed = 20240304;
  int top_k = 15;

  ScenarioConfig scenario;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
void save_pipeline_config(const PipelineConfig& cfg, const std::filesystem::path& path);

// GeoJSON FeatureCollection of station points carrying every metric and the
// imputed flag. Stations without finite coordinates are skipped and counted.
std::string vulnerability_geojson(const std::vector<VulnerabilityRecord>& records,
                                  const StationTable& stations, std::size_t* skipped = nullptr);

// Orchestrates the stages over the filesystem artifacts in cfg.out_dir.
// Stages re-read their inputs from disk, so any stage can be run in a fresh
// process as long as its predecessors' files exist.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);
  ~Pipeline();

  void run(const std::string& command);  // generate|panel|propensity|match|estimate|impute|report|all

  void generate();
  void build_panel();
  void fit_propensity();
  void match();
  void estimate();
  void impute();
  void report();

  const PipelineConfig& config() const { return cfg_; }

 private:
  struct State;
  PipelineConfig cfg_;
  std::unique_ptr<State> state_;

  std::filesystem::path out(const std::string& name) const;
  std::filesystem::path input(const std::string& which) const;
  void log_stage(const std::string& stage, double ms, const std::string& counts_json,
                 const std::vector<std::string>& warnings);
  void require_artifact(const std::filesystem::path& p, const std::string& producer) const;

  const StaticData& static_data();
  const NetworkGraph& graph();
  const Panel& panel();
};

}  // namespace metrovuln
