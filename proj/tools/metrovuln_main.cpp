#include <CLI11.hpp>
#include <iostream>

#include "metrovuln/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "metrovuln: station-level metro vulnerability from trips, incidents, weather and topology"};

  std::string command;
  app.add_option("command", command, "pipeline stage to run")
      ->required()
      ->check(CLI::IsMember(
          {"generate", "panel", "propensity", "match", "estimate", "impute", "report", "all"}));

  std::string config_path;
  app.add_option("--config", config_path, "pipeline config file (JSON)");

  // flag overrides win over the config file
  std::string out_dir, trips, incidents, stations, edges, weather, match_method, support_mode;
  std::uint64_t seed = 0;
  int interval_min = 0, threshold_min = 0, match_m = 0, trees = 0, threads = 0, top_k = 0;
  double kl_eps = 0;
  bool select = false;
  auto* o_out = app.add_option("--out", out_dir, "output directory");
  auto* o_seed = app.add_option("--seed", seed, "global seed");
  auto* o_int = app.add_option("--interval-min", interval_min, "study-unit interval, minutes");
  auto* o_thr = app.add_option("--threshold-min", threshold_min, "disruption duration threshold");
  auto* o_m = app.add_option("--match-m", match_m, "matched controls per treated unit");
  auto* o_eps = app.add_option("--kl-eps", kl_eps, "KL smoothing epsilon");
  auto* o_trees = app.add_option("--trees", trees, "random forest size");
  auto* o_threads = app.add_option("--threads", threads, "forest training threads");
  auto* o_topk = app.add_option("--top-k", top_k, "rows in the ranking tables");
  auto* o_trips = app.add_option("--trips", trips, "trips csv");
  auto* o_inc = app.add_option("--incidents", incidents, "incidents csv");
  auto* o_sta = app.add_option("--stations", stations, "stations csv");
  auto* o_edg = app.add_option("--edges", edges, "edges csv");
  auto* o_wea = app.add_option("--weather", weather, "weather csv");
  auto* o_mm = app.add_option("--match-method", match_method, "nearest_neighbour|subclassification");
  auto* o_sup = app.add_option("--support-mode", support_mode, "warn|trim");
  app.add_flag("--select", select, "likelihood-ratio forward selection of the formula");

  CLI11_PARSE(app, argc, argv);

  try {
    metrovuln::PipelineConfig cfg;
    if (!config_path.empty()) cfg = metrovuln::load_pipeline_config(config_path);
    if (o_out->count()) cfg.out_dir = out_dir;
    if (o_seed->count()) {
      cfg.seed = seed;
      cfg.scenario.seed = seed;
    }
    if (o_int->count()) cfg.interval_min = interval_min;
    if (o_thr->count()) cfg.threshold_min = threshold_min;
    if (o_m->count()) cfg.match.m = match_m;
    if (o_eps->count()) cfg.kl_eps = kl_eps;
    if (o_trees->count()) cfg.forest.n_trees = trees;
    if (o_threads->count()) cfg.forest.n_threads = threads;
    if (o_topk->count()) cfg.top_k = top_k;
    if (o_trips->count()) cfg.trips_path = trips;
    if (o_inc->count()) cfg.incidents_path = incidents;
    if (o_sta->count()) cfg.stations_path = stations;
    if (o_edg->count()) cfg.edges_path = edges;
    if (o_wea->count()) cfg.weather_path = weather;
    if (o_mm->count())
      cfg.match.method = match_method == "subclassification"
                             ? metrovuln::MatchMethod::Subclassification
                             : metrovuln::MatchMethod::NearestNeighbour;
    if (o_sup->count()) cfg.support_mode = support_mode;
    if (select) cfg.select_formula = true;

    metrovuln::Pipeline pipeline(std::move(cfg));
    pipeline.run(command);
  } catch (const metrovuln::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
