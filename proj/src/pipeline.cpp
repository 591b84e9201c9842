#include "metrovuln/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "metrovuln/csv.hpp"
#include "metrovuln/effects.hpp"
#include "metrovuln/propensity.hpp"

namespace metrovuln {

using json = nlohmann::ordered_json;

namespace {

json config_to_json(const PipelineConfig& c) {
  json j;
  j["trips"] = c.trips_path;
  j["incidents"] = c.incidents_path;
  j["stations"] = c.stations_path;
  j["edges"] = c.edges_path;
  j["weather"] = c.weather_path;
  j["out_dir"] = c.out_dir;
  j["interval_min"] = c.interval_min;
  j["threshold_min"] = c.threshold_min;
  j["formula"] = c.formula;
  j["select_formula"] = c.select_formula;
  j["support_mode"] = c.support_mode;
  j["support_bins"] = c.support_bins;
  j["match_method"] =
      c.match.method == MatchMethod::NearestNeighbour ? "nearest_neighbour" : "subclassification";
  j["match_m"] = c.match.m;
  j["with_replacement"] = c.match.with_replacement;
  if (c.match.caliper) j["caliper"] = *c.match.caliper;
  j["subclass_count"] = c.match.subclass_count;
  j["kl_eps"] = c.kl_eps;
  j["gross_ridership"] = c.gross_ridership;
  j["trees"] = c.forest.n_trees;
  j["mtry"] = c.forest.mtry;
  j["min_node"] = c.forest.min_node;
  j["threads"] = c.forest.n_threads;
  j["seed"] = c.seed;
  j["top_k"] = c.top_k;
  j["scenario"] = json::parse(scenario_to_json_string(c.scenario));
  return j;
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  c.trips_path = j.value("trips", c.trips_path);
  c.incidents_path = j.value("incidents", c.incidents_path);
  c.stations_path = j.value("stations", c.stations_path);
  c.edges_path = j.value("edges", c.edges_path);
  c.weather_path = j.value("weather", c.weather_path);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.interval_min = j.value("interval_min", c.interval_min);
  c.threshold_min = j.value("threshold_min", c.threshold_min);
  if (j.contains("formula")) c.formula = j["formula"].get<std::vector<std::string>>();
  c.select_formula = j.value("select_formula", c.select_formula);
  c.support_mode = j.value("support_mode", c.support_mode);
  c.support_bins = j.value("support_bins", c.support_bins);
  std::string mm = j.value("match_method", std::string("nearest_neighbour"));
  c.match.method =
      mm == "subclassification" ? MatchMethod::Subclassification : MatchMethod::NearestNeighbour;
  c.match.m = j.value("match_m", c.match.m);
  c.match.with_replacement = j.value("with_replacement", c.match.with_replacement);
  if (j.contains("caliper")) c.match.caliper = j["caliper"].get<double>();
  c.match.subclass_count = j.value("subclass_count", c.match.subclass_count);
  c.kl_eps = j.value("kl_eps", c.kl_eps);
  c.gross_ridership = j.value("gross_ridership", c.gross_ridership);
  c.forest.n_trees = j.value("trees", c.forest.n_trees);
  c.forest.mtry = j.value("mtry", c.forest.mtry);
  c.forest.min_node = j.value("min_node", c.forest.min_node);
  c.forest.n_threads = j.value("threads", c.forest.n_threads);
  c.seed = j.value("seed", c.seed);
  c.top_k = j.value("top_k", c.top_k);
  if (j.contains("scenario")) c.scenario = scenario_from_json_string(j["scenario"].dump());
  return c;
}

std::string opt_str(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); }

std::optional<double> opt_parse(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return config_from_json(json::parse(in));
}

void save_pipeline_config(const PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write config " + path.string());
  out << config_to_json(cfg).dump(2) << "\n";
}

std::string vulnerability_geojson(const std::vector<VulnerabilityRecord>& records,
                                  const StationTable& stations, std::size_t* skipped) {
  json fc;
  fc["type"] = "FeatureCollection";
  fc["features"] = json::array();
  std::size_t n_skipped = 0;
  for (const auto& r : records) {
    const auto& a = stations.rows[r.station];
    if (!std::isfinite(a.lat) || !std::isfinite(a.lon)) {
      ++n_skipped;
      continue;
    }
    json f;
    f["type"] = "Feature";
    f["geometry"] = {{"type", "Point"}, {"coordinates", {a.lon, a.lat}}};
    json p;
    p["station"] = a.id;
    p["name"] = a.name;
    p["imputed"] = r.imputed;
    auto put = [&](const char* key, const std::optional<double>& v) {
      if (v) p[key] = *v;
      else p[key] = nullptr;
    };
    put("demand_loss", r.demand_loss);
    put("demand_loss_pct", r.demand_loss_pct);
    put("avg_speed_loss", r.avg_speed_loss);
    put("avg_speed_loss_pct", r.avg_speed_loss_pct);
    put("gross_speed_loss", r.gross_speed_loss);
    put("gross_speed_loss_pct", r.gross_speed_loss_pct);
    put("ed_out", r.ed_out);
    put("ed_in", r.ed_in);
    put("hd_out", r.hd_out);
    put("hd_in", r.hd_in);
    put("kl_out", r.kl_out);
    put("kl_in", r.kl_in);
    f["properties"] = std::move(p);
    fc["features"].push_back(std::move(f));
  }
  if (skipped) *skipped = n_skipped;
  return fc.dump(2) + "\n";
}

struct Pipeline::State {
  std::optional<StaticData> static_data;
  std::optional<NetworkGraph> graph;
  std::optional<Panel> panel;
  std::ofstream run_log;
};

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)), state_(std::make_unique<State>()) {
  std::filesystem::create_directories(cfg_.out_dir);
}

Pipeline::~Pipeline() = default;

std::filesystem::path Pipeline::out(const std::string& name) const {
  return std::filesystem::path(cfg_.out_dir) / name;
}

std::filesystem::path Pipeline::input(const std::string& which) const {
  auto pick = [&](const std::string& configured, const char* name) -> std::filesystem::path {
    if (!configured.empty()) return configured;
    return std::filesystem::path(cfg_.out_dir) / "scenario" / name;
  };
  if (which == "trips") return pick(cfg_.trips_path, "trips.csv");
  if (which == "incidents") return pick(cfg_.incidents_path, "incidents.csv");
  if (which == "stations") return pick(cfg_.stations_path, "stations.csv");
  if (which == "edges") return pick(cfg_.edges_path, "edges.csv");
  if (which == "weather") return pick(cfg_.weather_path, "weather.csv");
  throw std::logic_error("unknown input " + which);
}

void Pipeline::require_artifact(const std::filesystem::path& p, const std::string& producer) const {
  if (!std::filesystem::exists(p))
    throw MissingArtifactError("missing " + p.string() + "; run `" + producer + "` first");
}

void Pipeline::log_stage(const std::string& stage, double ms, const std::string& counts_json,
                         const std::vector<std::string>& warnings) {
  if (!state_->run_log.is_open()) state_->run_log.open(out("run.log"), std::ios::binary);
  json line;
  line["stage"] = stage;
  line["duration_ms"] = std::round(ms * 10) / 10;
  line["counts"] = json::parse(counts_json);
  line["warnings"] = warnings;
  state_->run_log << line.dump() << "\n";
  state_->run_log.flush();
}

const StaticData& Pipeline::static_data() {
  if (!state_->static_data) {
    require_artifact(input("stations"), "generate");
    state_->static_data =
        parse_static(input("stations"), input("edges"), input("weather"), cfg_.interval_min);
  }
  return *state_->static_data;
}

const NetworkGraph& Pipeline::graph() {
  if (!state_->graph) {
    const auto& sd = static_data();
    state_->graph.emplace(sd.stations.size(), sd.edges);
  }
  return *state_->graph;
}

const Panel& Pipeline::panel() {
  if (!state_->panel) {
    require_artifact(out("panel.csv"), "panel");
    require_artifact(out("flows.csv"), "panel");
    state_->panel =
        load_panel(out("panel.csv"), out("flows.csv"), static_data().stations, cfg_.interval_min);
  }
  return *state_->panel;
}

namespace {

struct StageTimer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

}  // namespace

void Pipeline::generate() {
  StageTimer timer;
  ScenarioConfig sc = cfg_.scenario;
  sc.interval_min = cfg_.interval_min;
  auto manifest = generate_scenario(sc, out("scenario"));
  json counts;
  counts["stations"] = sc.n_stations;
  counts["days"] = sc.n_days;
  counts["trips"] = manifest.trips_emitted;
  counts["incidents"] = manifest.incidents.size();
  counts["treated_units"] = manifest.treated_units;
  counts["treatment_rate"] = manifest.treatment_rate;
  log_stage("generate", timer.ms(), counts.dump(), {});
}

void Pipeline::build_panel() {
  StageTimer timer;
  require_artifact(input("trips"), "generate");
  require_artifact(input("incidents"), "generate");
  const auto& sd = static_data();
  auto trips = parse_trips(input("trips"), sd.stations);
  auto incidents = parse_incidents(input("incidents"), sd.stations, cfg_.threshold_min);

  {
    CsvWriter w(out("rejects.csv"), {"source", "line", "reason"});
    for (const auto& r : trips.rejects)
      w.write_row({"trips", std::to_string(r.line_no), r.reason});
    for (const auto& r : incidents.rejects)
      w.write_row({"incidents", std::to_string(r.line_no), r.reason});
  }

  std::vector<StationIdx> used;
  {
    std::set<StationIdx> seen;
    for (const auto& t : trips.records) {
      seen.insert(t.entry_station);
      seen.insert(t.exit_station);
    }
    used.assign(seen.begin(), seen.end());
  }
  std::size_t unreachable = graph().count_unreachable_pairs(used);

  auto w_matrix = assign_treatment(incidents.records, sd.weather.day0, sd.weather.n_days,
                                   sd.weather.slots_per_day, cfg_.interval_min,
                                   sd.stations.size());
  state_->panel = build_study_units(trips.records, w_matrix, sd.weather, graph());
  write_panel_csv(*state_->panel, sd.stations, out("panel.csv"));
  write_flows_csv(*state_->panel, sd.stations, out("flows.csv"));

  std::size_t treated = 0, degenerate = 0, no_path = 0;
  for (const auto& u : state_->panel->units) {
    treated += u.treated;
    degenerate += u.degenerate_trips;
    no_path += u.no_path_trips;
  }
  std::vector<std::string> warnings;
  if (unreachable > 0)
    warnings.push_back(std::to_string(unreachable) + " station pairs with trips but no path");
  json counts;
  counts["trips_accepted"] = trips.records.size();
  counts["trips_rejected"] = trips.rejects.size();
  counts["incidents_kept"] = incidents.records.size();
  counts["incidents_below_threshold"] = incidents.below_threshold;
  counts["incidents_rejected"] = incidents.rejects.size();
  counts["weather_gaps_filled"] = sd.weather.gaps_filled;
  counts["units"] = state_->panel->units.size();
  counts["treated_units"] = treated;
  counts["degenerate_trips"] = degenerate;
  counts["no_path_trips"] = no_path;
  log_stage("panel", timer.ms(), counts.dump(), warnings);
}

namespace {

const std::vector<std::string> kScoresHeader = {"station", "day", "slot", "score"};
const std::vector<std::string> kCoefsHeader = {"term", "coef", "se"};

}  // namespace

void Pipeline::fit_propensity() {
  StageTimer timer;
  const auto& p = panel();
  const auto& sd = static_data();

  std::vector<std::string> terms = cfg_.formula.empty() ? default_formula() : cfg_.formula;
  if (cfg_.select_formula) terms = forward_select(p, sd.stations, graph());

  auto design = build_design(p, sd.stations, graph(), terms);
  auto [model, fit] = fit_logistic(design);
  auto scores = predict_scores(model, p, sd.stations, graph());

  std::vector<std::uint8_t> labels(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) labels[i] = p.units[i].treated;
  double auc_value = auc(scores, labels);
  auto support = common_support(scores, labels, cfg_.support_bins);

  {
    CsvWriter w(out("scores.csv"), kScoresHeader);
    for (std::size_t i = 0; i < p.size(); ++i)
      w.write_row({sd.stations.id_of(p.station_of(i)), format_date(p.day0 + p.day_of_unit(i)),
                   std::to_string(p.slot_of_unit(i)), fmt_double(scores[i])});
  }
  {
    CsvWriter w(out("propensity_coefs.csv"), kCoefsHeader);
    w.write_row({"(intercept)", fmt_double(model.intercept), fmt_double(fit.se[0])});
    for (std::size_t j = 0; j < model.terms.size(); ++j)
      w.write_row({model.terms[j], fmt_double(model.coef[static_cast<Eigen::Index>(j)]),
                   fmt_double(fit.se[static_cast<Eigen::Index>(j) + 1])});
  }
  {
    CsvWriter w(out("support_histogram.csv"), {"bin_lo", "bin_hi", "count_treated", "count_control"});
    for (const auto& b : support.bins)
      w.write_row({fmt_double(b.lo), fmt_double(b.hi), std::to_string(b.treated),
                   std::to_string(b.control)});
  }
  {
    CsvWriter w(out("support_outliers.csv"), kScoresHeader);
    for (auto i : support.out_of_support)
      w.write_row({sd.stations.id_of(p.station_of(i)), format_date(p.day0 + p.day_of_unit(i)),
                   std::to_string(p.slot_of_unit(i)), fmt_double(scores[i])});
  }

  std::vector<std::string> warnings;
  if (!support.out_of_support.empty())
    warnings.push_back(std::to_string(support.out_of_support.size()) +
                       " treated units outside common support (" + cfg_.support_mode + ")");
  json counts;
  counts["terms"] = model.terms.size();
  counts["iterations"] = fit.iterations;
  counts["deviance"] = fit.deviance;
  counts["mcfadden_r2"] = fit.mcfadden_r2;
  counts["auc"] = auc_value;
  counts["out_of_support"] = support.out_of_support.size();
  log_stage("propensity", timer.ms(), counts.dump(), warnings);
}

namespace {

std::vector<double> load_scores(const std::filesystem::path& path, const Panel& p,
                                const StationTable& stations) {
  CsvReader reader(path);
  reader.require_header({"station", "day", "slot", "score"});
  std::vector<double> scores(p.size(), -1.0);
  std::vector<std::string> f;
  while (reader.next_row(f)) {
    auto s = stations.find(f[0]);
    auto day = parse_date(f[1]);
    if (!s || !day) throw std::runtime_error(path.string() + ": bad unit key");
    std::size_t i = p.unit_index(*s, static_cast<int>(*day - p.day0), std::stoi(f[2]));
    scores[i] = std::stod(f[3]);
  }
  for (double v : scores)
    if (v < 0) throw std::runtime_error(path.string() + ": incomplete score table");
  return scores;
}

std::vector<std::string> load_terms(const std::filesystem::path& path) {
  CsvReader reader(path);
  reader.require_header({"term", "coef", "se"});
  std::vector<std::string> terms;
  std::vector<std::string> f;
  while (reader.next_row(f))
    if (f[0] != "(intercept)") terms.push_back(f[0]);
  return terms;
}

void write_match_audit(const std::filesystem::path& path, const Panel& p,
                       const StationTable& stations, const std::vector<double>& scores,
                       const MatchSet& ms) {
  if (ms.cfg.method == MatchMethod::NearestNeighbour) {
    std::vector<std::string> header = {"treated_station", "treated_day", "slot"};
    for (int k = 1; k <= ms.cfg.m; ++k) header.push_back("control_day_" + std::to_string(k));
    for (int k = 1; k <= ms.cfg.m; ++k) header.push_back("score_gap_" + std::to_string(k));
    CsvWriter w(path, header);
    for (const auto& m : ms.matched) {
      std::vector<std::string> row = {stations.id_of(p.station_of(m.unit)),
                                      format_date(p.day0 + p.day_of_unit(m.unit)),
                                      std::to_string(p.slot_of_unit(m.unit))};
      for (int k = 0; k < ms.cfg.m; ++k)
        row.push_back(k < static_cast<int>(m.controls.size())
                          ? format_date(p.day0 + p.day_of_unit(m.controls[k]))
                          : "");
      for (int k = 0; k < ms.cfg.m; ++k)
        row.push_back(k < static_cast<int>(m.controls.size())
                          ? fmt_double(std::abs(scores[m.controls[k]] - scores[m.unit]))
                          : "");
      w.write_row(row);
    }
  } else {
    CsvWriter w(path, {"treated_station", "treated_day", "slot", "control_day", "score_gap"});
    for (const auto& m : ms.matched)
      for (auto c : m.controls)
        w.write_row({stations.id_of(p.station_of(m.unit)),
                     format_date(p.day0 + p.day_of_unit(m.unit)),
                     std::to_string(p.slot_of_unit(m.unit)), format_date(p.day0 + p.day_of_unit(c)),
                     fmt_double(std::abs(scores[c] - scores[m.unit]))});
  }
}

MatchSet load_match_audit(const std::filesystem::path& path, const Panel& p,
                          const StationTable& stations, const MatchConfig& cfg,
                          OutcomeRequirement req) {
  CsvReader reader(path);
  std::string first_line_probe;
  MatchSet ms;
  ms.cfg = cfg;
  ms.requirement = req;
  // header decides between the wide nearest-neighbour and long
  // subclassification layouts
  std::vector<std::string> f;
  {
    std::ifstream probe(path);
    std::getline(probe, first_line_probe);
  }
  bool wide = first_line_probe.find("control_day_1") != std::string::npos;
  if (wide) {
    std::vector<std::string> header = {"treated_station", "treated_day", "slot"};
    for (int k = 1; k <= cfg.m; ++k) header.push_back("control_day_" + std::to_string(k));
    for (int k = 1; k <= cfg.m; ++k) header.push_back("score_gap_" + std::to_string(k));
    reader.require_header(header);
    while (reader.next_row(f)) {
      auto s = stations.find(f[0]);
      auto day = parse_date(f[1]);
      if (!s || !day) throw std::runtime_error(path.string() + ": bad treated key");
      int slot = std::stoi(f[2]);
      MatchedTreated m;
      m.unit = p.unit_index(*s, static_cast<int>(*day - p.day0), slot);
      for (int k = 0; k < cfg.m; ++k) {
        const auto& cell = f[3 + k];
        if (cell.empty()) continue;
        auto cday = parse_date(cell);
        if (!cday) throw std::runtime_error(path.string() + ": bad control day " + cell);
        m.controls.push_back(p.unit_index(*s, static_cast<int>(*cday - p.day0), slot));
      }
      m.short_pool = static_cast<int>(m.controls.size()) < cfg.m;
      if (!m.controls.empty()) ms.matched.push_back(std::move(m));
    }
  } else {
    reader.require_header({"treated_station", "treated_day", "slot", "control_day", "score_gap"});
    std::map<std::size_t, MatchedTreated> grouped;
    while (reader.next_row(f)) {
      auto s = stations.find(f[0]);
      auto day = parse_date(f[1]);
      auto cday = parse_date(f[3]);
      if (!s || !day || !cday) throw std::runtime_error(path.string() + ": bad match row");
      int slot = std::stoi(f[2]);
      std::size_t unit = p.unit_index(*s, static_cast<int>(*day - p.day0), slot);
      auto& m = grouped[unit];
      m.unit = unit;
      m.controls.push_back(p.unit_index(*s, static_cast<int>(*cday - p.day0), slot));
    }
    for (auto& [_, m] : grouped) ms.matched.push_back(std::move(m));
  }
  return ms;
}

}  // namespace

void Pipeline::match() {
  StageTimer timer;
  const auto& p = panel();
  const auto& sd = static_data();
  require_artifact(out("scores.csv"), "propensity");
  require_artifact(out("propensity_coefs.csv"), "propensity");
  auto scores = load_scores(out("scores.csv"), p, sd.stations);
  auto terms = load_terms(out("propensity_coefs.csv"));

  auto run_matcher = [&](OutcomeRequirement req) {
    return cfg_.match.method == MatchMethod::NearestNeighbour
               ? nn_match(p, scores, cfg_.match, req)
               : subclass_match(p, scores, cfg_.match, req);
  };
  auto ms_main = run_matcher(OutcomeRequirement::None);
  auto ms_speed = run_matcher(OutcomeRequirement::SpeedPresent);

  std::size_t trimmed = 0;
  if (cfg_.support_mode == "trim") {
    std::vector<std::uint8_t> labels(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) labels[i] = p.units[i].treated;
    auto support = common_support(scores, labels, cfg_.support_bins);
    std::set<std::size_t> drop(support.out_of_support.begin(), support.out_of_support.end());
    auto trim = [&](MatchSet& ms) {
      std::erase_if(ms.matched, [&](const MatchedTreated& m) {
        if (drop.count(m.unit)) {
          ++trimmed;
          return true;
        }
        return false;
      });
    };
    trim(ms_main);
    trim(ms_speed);
  }

  write_match_audit(out("matches.csv"), p, sd.stations, scores, ms_main);
  write_match_audit(out("matches_speed.csv"), p, sd.stations, scores, ms_speed);

  auto design = build_design(p, sd.stations, graph(), terms);
  auto balance = balance_report(design, scores, ms_main);
  {
    CsvWriter w(out("balance.csv"), {"covariate", "smd_before", "smd_after"});
    for (const auto& row : balance.rows)
      w.write_row({row.covariate, row.degenerate ? "" : fmt_double(row.smd_before),
                   row.degenerate ? "" : fmt_double(row.smd_after)});
  }

  double max_smd_after = 0;
  for (const auto& row : balance.rows)
    if (!row.degenerate) max_smd_after = std::max(max_smd_after, row.smd_after);

  json counts;
  counts["matched_treated"] = ms_main.matched.size();
  counts["unmatchable"] = ms_main.unmatchable.size();
  counts["matched_treated_speed"] = ms_speed.matched.size();
  counts["unmatchable_speed"] = ms_speed.unmatchable.size();
  counts["trimmed_out_of_support"] = trimmed;
  counts["balance_improvement_pct"] = balance.improvement_pct;
  counts["max_smd_after"] = max_smd_after;
  if (!ms_main.excluded_strata.empty())
    counts["excluded_strata"] = ms_main.excluded_strata.size();
  log_stage("match", timer.ms(), counts.dump(), {});
}

namespace {

const std::vector<std::string> kEffectsHeader = {"station", "outcome", "tau", "T_d", "n_unmatched"};

struct OutcomeSpec {
  const char* name;
  FlowDirection dir;
  DistanceKind dist;
};

constexpr OutcomeSpec kFlowOutcomes[] = {
    {"flow_ED_out", FlowDirection::Outward, DistanceKind::Euclidean},
    {"flow_ED_in", FlowDirection::Inward, DistanceKind::Euclidean},
    {"flow_HD_out", FlowDirection::Outward, DistanceKind::Hellinger},
    {"flow_HD_in", FlowDirection::Inward, DistanceKind::Hellinger},
    {"flow_KL_out", FlowDirection::Outward, DistanceKind::KL},
    {"flow_KL_in", FlowDirection::Inward, DistanceKind::KL},
};

}  // namespace

void Pipeline::estimate() {
  StageTimer timer;
  const auto& p = panel();
  const auto& sd = static_data();
  require_artifact(out("matches.csv"), "match");
  require_artifact(out("matches_speed.csv"), "match");
  auto ms_main =
      load_match_audit(out("matches.csv"), p, sd.stations, cfg_.match, OutcomeRequirement::None);
  auto ms_speed = load_match_audit(out("matches_speed.csv"), p, sd.stations, cfg_.match,
                                   OutcomeRequirement::SpeedPresent);

  CsvWriter w(out("effects.csv"), kEffectsHeader);
  auto emit = [&](const char* outcome, const std::vector<EffectEstimate>& es) {
    for (const auto& e : es)
      w.write_row({sd.stations.id_of(e.station), outcome, fmt_double(e.tau),
                   std::to_string(e.t_d), std::to_string(e.n_unmatched)});
  };
  emit("entry", ate_scalar(p, ms_main, ScalarOutcome::Entry));
  emit("speed", ate_scalar(p, ms_speed, ScalarOutcome::Speed));
  FlowOptions fopts;
  fopts.kl_eps = cfg_.kl_eps;
  std::size_t skipped = 0, smoothed = 0;
  for (const auto& spec : kFlowOutcomes) {
    auto r = ate_flow(p, ms_main, spec.dir, spec.dist, fopts);
    emit(spec.name, r.per_station);
    skipped += r.skipped_both_zero;
    smoothed += r.smoothed_units;
  }
  w.close();

  auto naive = naive_scalar(p, ScalarOutcome::Entry);
  auto pooled = pooled_ate_scalar(p, ms_main, ScalarOutcome::Entry);
  auto pooled_speed = pooled_ate_scalar(p, ms_speed, ScalarOutcome::Speed);
  {
    json s;
    s["naive_entry"] = {{"tau", naive.tau}, {"se", naive.se}, {"n", naive.n}};
    s["psm_entry"] = {{"tau", pooled.tau}, {"se", pooled.se}, {"n", pooled.n}};
    s["psm_speed"] = {{"tau", pooled_speed.tau}, {"se", pooled_speed.se}, {"n", pooled_speed.n}};
    std::ofstream summary(out("effects_summary.json"), std::ios::binary);
    summary << s.dump(2) << "\n";
  }

  json counts;
  counts["naive_entry_tau"] = naive.tau;
  counts["psm_entry_tau"] = pooled.tau;
  counts["psm_speed_tau"] = pooled_speed.tau;
  counts["flow_units_skipped_both_zero"] = skipped;
  counts["flow_units_smoothed"] = smoothed;
  log_stage("estimate", timer.ms(), counts.dump(), {});
}

namespace {

const std::vector<std::string> kVulnHeader = {
    "station",        "imputed",          "t_d",
    "tau_entry",      "tau_speed",        "demand_loss",
    "demand_loss_pct", "avg_speed_loss",  "avg_speed_loss_pct",
    "gross_speed_loss", "gross_speed_loss_pct", "ed_out",
    "ed_in",          "hd_out",           "hd_in",
    "kl_out",         "kl_in",            "r_i",
    "baseline_entry", "baseline_speed"};

void write_vulnerability_csv(const std::filesystem::path& path,
                             const std::vector<VulnerabilityRecord>& records,
                             const StationTable& stations) {
  CsvWriter w(path, kVulnHeader);
  for (const auto& r : records) {
    w.write_row({stations.id_of(r.station), r.imputed ? "1" : "0", std::to_string(r.t_d),
                 opt_str(r.tau_entry), opt_str(r.tau_speed), opt_str(r.demand_loss),
                 opt_str(r.demand_loss_pct), opt_str(r.avg_speed_loss),
                 opt_str(r.avg_speed_loss_pct), opt_str(r.gross_speed_loss),
                 opt_str(r.gross_speed_loss_pct), opt_str(r.ed_out), opt_str(r.ed_in),
                 opt_str(r.hd_out), opt_str(r.hd_in), opt_str(r.kl_out), opt_str(r.kl_in),
                 opt_str(r.r_i), fmt_double(r.baseline_entry), opt_str(r.baseline_speed)});
  }
}

std::vector<VulnerabilityRecord> load_vulnerability_csv(const std::filesystem::path& path,
                                                        const StationTable& stations) {
  CsvReader reader(path);
  reader.require_header(kVulnHeader);
  std::vector<VulnerabilityRecord> records;
  std::vector<std::string> f;
  while (reader.next_row(f)) {
    VulnerabilityRecord r;
    auto s = stations.find(f[0]);
    if (!s) throw std::runtime_error(path.string() + ": unknown station " + f[0]);
    r.station = *s;
    r.imputed = f[1] == "1";
    r.t_d = static_cast<std::uint32_t>(std::stoul(f[2]));
    r.tau_entry = opt_parse(f[3]);
    r.tau_speed = opt_parse(f[4]);
    r.demand_loss = opt_parse(f[5]);
    r.demand_loss_pct = opt_parse(f[6]);
    r.avg_speed_loss = opt_parse(f[7]);
    r.avg_speed_loss_pct = opt_parse(f[8]);
    r.gross_speed_loss = opt_parse(f[9]);
    r.gross_speed_loss_pct = opt_parse(f[10]);
    r.ed_out = opt_parse(f[11]);
    r.ed_in = opt_parse(f[12]);
    r.hd_out = opt_parse(f[13]);
    r.hd_in = opt_parse(f[14]);
    r.kl_out = opt_parse(f[15]);
    r.kl_in = opt_parse(f[16]);
    r.r_i = opt_parse(f[17]);
    r.baseline_entry = std::stod(f[18]);
    r.baseline_speed = opt_parse(f[19]);
    records.push_back(std::move(r));
  }
  return records;
}

EstimatedEffects load_effects_csv(const std::filesystem::path& path, const StationTable& stations) {
  CsvReader reader(path);
  reader.require_header(kEffectsHeader);
  EstimatedEffects e;
  std::vector<std::string> f;
  while (reader.next_row(f)) {
    auto s = stations.find(f[0]);
    if (!s) throw std::runtime_error(path.string() + ": unknown station " + f[0]);
    EffectEstimate est;
    est.station = *s;
    est.tau = std::stod(f[2]);
    est.t_d = static_cast<std::uint32_t>(std::stoul(f[3]));
    est.n_unmatched = static_cast<std::uint32_t>(std::stoul(f[4]));
    const std::string& kind = f[1];
    if (kind == "entry") e.entry.push_back(est);
    else if (kind == "speed") e.speed.push_back(est);
    else if (kind == "flow_ED_out") e.ed_out.push_back(est);
    else if (kind == "flow_ED_in") e.ed_in.push_back(est);
    else if (kind == "flow_HD_out") e.hd_out.push_back(est);
    else if (kind == "flow_HD_in") e.hd_in.push_back(est);
    else if (kind == "flow_KL_out") e.kl_out.push_back(est);
    else if (kind == "flow_KL_in") e.kl_in.push_back(est);
    else throw std::runtime_error(path.string() + ": unknown outcome " + kind);
  }
  return e;
}

std::string eval_cell(const std::optional<double>& v) { return v ? fmt_double(*v) : "undefined"; }

}  // namespace

void Pipeline::impute() {
  StageTimer timer;
  const auto& p = panel();
  const auto& sd = static_data();
  require_artifact(out("effects.csv"), "estimate");
  auto effects = load_effects_csv(out("effects.csv"), sd.stations);
  auto baselines = baseline_stats(p);
  auto mode = cfg_.gross_ridership == "baseline" ? GrossRidership::Baseline
                                                 : GrossRidership::DisruptedIntervals;
  auto records = compute_metrics(effects, baselines, mode);

  auto features = build_station_features(p, sd.stations, graph());
  ForestHyper hyper = cfg_.forest;
  hyper.seed = cfg_.seed;
  auto report = impute_missing(records, features, baselines, hyper);

  write_vulnerability_csv(out("vulnerability.csv"), records, sd.stations);
  {
    CsvWriter w(out("imputation_report.csv"), {"metric", "MAE", "RMSE", "RAE", "RSE", "method"});
    for (const auto& row : report.rows)
      w.write_row({row.metric, fmt_double(row.eval.mae), fmt_double(row.eval.rmse),
                   eval_cell(row.eval.rae), eval_cell(row.eval.rse), row.method});
  }

  std::vector<std::string> warnings;
  if (report.refused)
    warnings.push_back("fewer than 10 stations with estimates; imputation refused");
  json counts;
  counts["stations_with_estimates"] = report.n_train;
  counts["stations_imputed"] = report.n_imputed_stations;
  json r2 = json::object();
  for (const auto& [metric, v] : report.oob_r2) r2[metric] = v;
  counts["oob_r2"] = r2;
  log_stage("impute", timer.ms(), counts.dump(), warnings);
}

void Pipeline::report() {
  StageTimer timer;
  const auto& sd = static_data();
  require_artifact(out("vulnerability.csv"), "impute");
  auto records = load_vulnerability_csv(out("vulnerability.csv"), sd.stations);

  const std::vector<std::pair<std::string, std::string>> rankings = {
      {"demand_loss", "demand_loss_pct"},
      {"avg_speed_loss", "avg_speed_loss_pct"},
      {"gross_speed_loss", "gross_speed_loss_pct"},
      {"ed_out", ""},
      {"ed_in", ""},
      {"hd_out", ""},
      {"hd_in", ""},
      {"kl_out", ""},
      {"kl_in", ""}};
  for (const auto& [metric, pct] : rankings) {
    auto ranked = rank_stations(records, sd.stations, metric, cfg_.top_k);
    CsvWriter w(out("topk_" + metric + ".csv"), {"rank", "station", metric, "pct_of_baseline"});
    std::size_t rank = 1;
    for (const auto& rs : ranked) {
      std::string pct_cell;
      if (!pct.empty()) {
        for (const auto& r : records) {
          if (r.station == rs.station) {
            pct_cell = opt_str(metric_value(r, pct));
            break;
          }
        }
      }
      w.write_row({std::to_string(rank++), sd.stations.id_of(rs.station), fmt_double(rs.value),
                   pct_cell});
    }
  }

  std::size_t skipped = 0;
  std::string geo = vulnerability_geojson(records, sd.stations, &skipped);
  {
    std::ofstream outfile(out("vulnerability.geojson"), std::ios::binary);
    outfile << geo;
  }
  std::vector<std::string> warnings;
  if (skipped > 0)
    warnings.push_back(std::to_string(skipped) + " stations without coordinates skipped");
  json counts;
  counts["stations"] = records.size();
  counts["geojson_features"] = records.size() - skipped;
  log_stage("report", timer.ms(), counts.dump(), warnings);
}

void Pipeline::run(const std::string& command) {
  if (command == "generate") generate();
  else if (command == "panel") build_panel();
  else if (command == "propensity") fit_propensity();
  else if (command == "match") match();
  else if (command == "estimate") estimate();
  else if (command == "impute") impute();
  else if (command == "report") report();
  else if (command == "all") {
    generate();
    build_panel();
    fit_propensity();
    match();
    estimate();
    impute();
    report();
  } else {
    throw std::invalid_argument(
        "unknown command \"" + command +
        "\"; expected generate|panel|propensity|match|estimate|impute|report|all");
  }
}

}  // namespace metrovuln
