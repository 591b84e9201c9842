#include "metrovuln/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "metrovuln/csv.hpp"
#include "metrovuln/effects.hpp"
#include "metrovuln/ingest.hpp"
#include "metrovuln/timeutil.hpp"

namespace metrovuln {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kGeneratorVersion = "1";

void check_config(const ScenarioConfig& cfg) {
  if (cfg.n_stations < 3) throw std::invalid_argument("need at least 3 stations");
  if (cfg.n_days < 2) throw std::invalid_argument("need at least 2 days");
  if (cfg.n_lines < 1 || cfg.n_lines >= cfg.n_stations)
    throw std::invalid_argument("n_lines must be in [1, n_stations)");
  if (cfg.demand_scale_min <= 0 || cfg.demand_scale_max < cfg.demand_scale_min)
    throw std::invalid_argument("demand scales must be positive and ordered");
  if (kServiceMinutes % cfg.interval_min != 0)
    throw std::invalid_argument("interval must divide the 18-hour service day");
  if (!parse_date(cfg.start_date)) throw std::invalid_argument("bad start_date");
  // the injected effect may not wipe out even the busiest slot in expectation
  double peak = cfg.demand_scale_max * 1.3;
  double worst_delta = cfg.delta_demand;
  for (auto& [_, d] : cfg.delta_demand_override) worst_delta = std::min(worst_delta, d);
  if (peak + worst_delta < 0)
    throw std::invalid_argument("delta_demand implies negative expected demand at peak");
}

double diurnal_factor(double hour) {
  double am = std::exp(-(hour - 8.25) * (hour - 8.25) / (2.0 * 1.0 * 1.0));
  double pm = std::exp(-(hour - 17.5) * (hour - 17.5) / (2.0 * 1.3 * 1.3));
  return 0.45 + 0.95 * am + 0.85 * pm;
}

struct StationPlan {
  std::string id;
  std::string name;
  double lat, lon;
  int zone, n_lines;
  bool terminal, overground, screen_door, rail_connect, biking, parking;
  double station_age, rolling_stock_age, daily_demand;
  double population, employment, imd, domestic_area, nondomestic_area, other_area;
  double bus_stops, road_area, path_area;
  double scale;                    // demand scale, passengers per 15 min at factor 1
  std::vector<double> dest_cdf;    // cumulative destination profile
  std::vector<double> dest_cdf_shifted;
  std::vector<double> profile;     // normal destination probabilities (self = 0)
  std::vector<double> profile_shifted;
  StationIdx nearest_alt = 0;
};

std::string station_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%02d", i);
  return buf;
}

}  // namespace

GroundTruthManifest generate_scenario(const ScenarioConfig& cfg,
                                      const std::filesystem::path& out_dir) {
  check_config(cfg);
  std::filesystem::create_directories(out_dir);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> stdnorm(0.0, 1.0);

  const int n = cfg.n_stations;
  const int spd = kServiceMinutes / cfg.interval_min;
  const DayNumber day0 = *parse_date(cfg.start_date);

  // ---- topology: radial lines meeting at station 0 ----
  std::vector<StationPlan> st(n);
  std::vector<Edge> edges;
  std::vector<int> depth(n, 0);
  for (int i = 1; i < n; ++i) {
    int pos = (i - 1) / cfg.n_lines + 1;
    depth[i] = pos;
    StationIdx parent = pos == 1 ? 0 : static_cast<StationIdx>(i - cfg.n_lines);
    double km = 0.7 + 0.15 * pos + 0.5 * unit(rng);
    edges.push_back({parent, static_cast<StationIdx>(i), km});
  }

  for (int i = 0; i < n; ++i) {
    auto& s = st[i];
    s.id = station_id(i);
    s.name = "Station " + std::to_string(i);
    int line = i == 0 ? 0 : (i - 1) % cfg.n_lines;
    double angle = 2.0 * std::numbers::pi * line / cfg.n_lines;
    s.lat = 51.50 + 0.012 * depth[i] * std::sin(angle);
    s.lon = -0.12 + 0.018 * depth[i] * std::cos(angle);
    s.zone = std::min(1 + depth[i] / 2, 6);
    s.scale = cfg.demand_scale_max *
              std::pow(cfg.demand_scale_min / cfg.demand_scale_max,
                       static_cast<double>(i) / std::max(n - 1, 1));
    s.n_lines = i == 0 ? cfg.n_lines : (i % 7 == 0 ? 2 : 1);
    s.terminal = depth[i] > 0 && i + cfg.n_lines >= n;
    s.overground = s.zone >= 3;
    s.screen_door = s.zone <= 2 && i % 3 == 0;
    s.rail_connect = i % 5 == 2;
    s.biking = i % 4 != 3;
    s.parking = s.zone >= 4;
    s.station_age = 20.0 + 100.0 * (s.scale / cfg.demand_scale_max) * (0.7 + 0.3 * unit(rng));
    s.rolling_stock_age = 5.0 + 40.0 * unit(rng);
    s.population = 2000.0 + 55.0 * s.scale + 300.0 * stdnorm(rng);
    s.employment = (0.35 + 0.45 * (s.scale / cfg.demand_scale_max)) * s.population;
    s.imd = 5.0 + 55.0 * unit(rng);
    s.domestic_area = 30.0 + 90.0 * unit(rng);
    s.nondomestic_area = 10.0 + 1.2 * s.scale + 20.0 * unit(rng);
    s.other_area = 10.0 + 70.0 * unit(rng);
    s.bus_stops = 4.0 + s.zone + std::floor(10.0 * unit(rng));
    s.road_area = 8000.0 + 9000.0 * unit(rng);
    s.path_area = 1500.0 + 2500.0 * unit(rng);
  }

  NetworkGraph graph(static_cast<StationIdx>(n), edges);

  // destination profiles: gravity weights, self excluded
  for (int i = 0; i < n; ++i) {
    auto& s = st[i];
    s.profile.assign(n, 0.0);
    double total = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double d = *graph.shortest_path_km(i, j);
      s.profile[j] = st[j].scale / (1.0 + d);
      total += s.profile[j];
      if (d < best) {
        best = d;
        s.nearest_alt = static_cast<StationIdx>(j);
      }
    }
    for (auto& w : s.profile) w /= total;
    s.profile_shifted = s.profile;
    for (int j = 0; j < n; ++j) s.profile_shifted[j] *= (1.0 - cfg.phi_flow);
    s.profile_shifted[s.nearest_alt] += cfg.phi_flow;

    auto cdf = [](const std::vector<double>& p) {
      std::vector<double> c(p.size());
      double acc = 0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        acc += p[k];
        c[k] = acc;
      }
      c.back() = 1.0;
      return c;
    };
    s.dest_cdf = cdf(s.profile);
    s.dest_cdf_shifted = cdf(s.profile_shifted);
  }

  // diurnal profile per slot; the final slot carries no entries so every
  // journey can close out before midnight
  std::vector<double> diurnal(spd);
  for (int k = 0; k < spd; ++k)
    diurnal[k] = diurnal_factor(6.0 + (k + 0.5) * cfg.interval_min / 60.0);
  diurnal[spd - 1] = 0.0;
  for (int i = 0; i < n; ++i) {
    double daily = 0;
    for (int k = 0; k < spd; ++k) daily += st[i].scale * diurnal[k];
    st[i].daily_demand = daily;
  }

  // ---- weather: citywide rain chain, day-level temperature and wind ----
  std::vector<double> day_mult(cfg.n_days);
  std::vector<std::vector<std::uint8_t>> rain(cfg.n_days, std::vector<std::uint8_t>(spd));
  std::vector<std::vector<double>> temp(cfg.n_days, std::vector<double>(spd));
  std::vector<std::vector<double>> wind(cfg.n_days, std::vector<double>(spd));
  for (int d = 0; d < cfg.n_days; ++d) {
    day_mult[d] = std::exp(cfg.day_sigma * stdnorm(rng) - cfg.day_sigma * cfg.day_sigma / 2.0);
    double day_temp = cfg.temp_base + 6.0 * std::sin(2.0 * std::numbers::pi * d / 28.0) +
                      1.5 * stdnorm(rng);
    double day_wind = std::abs(stdnorm(rng) * 6.0 + cfg.wind_mean);
    bool rainy = unit(rng) < cfg.rain_prob;
    for (int k = 0; k < spd; ++k) {
      if (unit(rng) > cfg.rain_persistence) rainy = !rainy;
      rain[d][k] = rainy ? 1 : 0;
      double hour = 6.0 + k * cfg.interval_min / 60.0;
      temp[d][k] = day_temp + 2.0 * std::sin(std::numbers::pi * (hour - 6.0) / 18.0) +
                   0.4 * stdnorm(rng);
      wind[d][k] = std::max(0.0, day_wind + 2.0 * stdnorm(rng));
    }
  }
  std::vector<double> temp_offset(n), wind_offset(n);
  for (int i = 0; i < n; ++i) {
    temp_offset[i] = 0.6 * stdnorm(rng);
    wind_offset[i] = st[i].overground ? std::abs(1.5 * stdnorm(rng)) : -1.0;
  }

  // ---- per-unit treatment, entries and trips ----
  GroundTruthManifest manifest;
  manifest.generator_version = kGeneratorVersion;
  manifest.config = cfg;
  manifest.stations.resize(n);
  std::vector<double> effect_sum(n, 0.0);
  std::vector<std::uint32_t> treated_count(n, 0);

  std::vector<std::vector<std::uint8_t>> w_grid(n);
  for (int i = 0; i < n; ++i) w_grid[i].assign(static_cast<std::size_t>(cfg.n_days) * spd, 0);

  CsvWriter trips_csv(out_dir / "trips.csv", kTripsHeader);
  std::poisson_distribution<int> poisson;
  std::uint64_t card_counter = 0;

  for (int d = 0; d < cfg.n_days; ++d) {
    Minute day_start = (day0 + d) * kMinutesPerDay + kServiceStartMin;
    for (int i = 0; i < n; ++i) {
      double delta_i = cfg.delta_demand;
      if (auto it = cfg.delta_demand_override.find(st[i].id);
          it != cfg.delta_demand_override.end())
        delta_i = it->second;
      // Current demand enters the disruption logit as the previous slot's
      // realized entries. That keeps the assignment confounded with the
      // outcome while staying fully observable to the propensity model.
      int prev_entries = 0;
      for (int k = 0; k < spd; ++k) {
        double lambda = st[i].scale * diurnal[k] * day_mult[d] *
                        (rain[d][k] ? cfg.rain_demand_factor : 1.0);
        double logit = cfg.gamma0 + cfg.gamma_demand * prev_entries +
                       cfg.gamma_rain * rain[d][k] +
                       cfg.gamma_wind * std::max(0.0, wind[d][k] + wind_offset[i]);
        bool treated = unit(rng) < 1.0 / (1.0 + std::exp(-logit));
        double lambda_applied = lambda;
        if (treated) {
          w_grid[i][static_cast<std::size_t>(d) * spd + k] = 1;
          lambda_applied = std::max(lambda + delta_i, 0.0);
          effect_sum[i] += lambda_applied - lambda;
          ++treated_count[i];
        }
        int entries = lambda_applied > 0
                          ? poisson(rng, std::poisson_distribution<int>::param_type(lambda_applied))
                          : 0;
        prev_entries = entries;
        Minute slot_start = day_start + static_cast<Minute>(k) * cfg.interval_min;
        const auto& cdf = treated ? st[i].dest_cdf_shifted : st[i].dest_cdf;
        for (int tr = 0; tr < entries; ++tr) {
          double u = unit(rng);
          int dest = static_cast<int>(
              std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
          if (dest == i) dest = (i + 1) % n;  // cdf self-cell is flat; never selected in practice
          double km = *graph.shortest_path_km(i, dest);
          double v = cfg.base_speed_kmh + (treated ? cfg.delta_speed : 0.0) +
                     cfg.speed_sigma * stdnorm(rng);
          v = std::max(v, 6.0);
          int offset = static_cast<int>(unit(rng) * cfg.interval_min);
          Minute entry_ts = slot_start + std::min(offset, cfg.interval_min - 1);
          auto minutes = static_cast<Minute>(std::llround(km / v * 60.0));
          minutes = std::max<Minute>(minutes, 1);
          Minute latest = (day0 + d) * kMinutesPerDay + kServiceEndMin - 1;
          minutes = std::min(minutes, latest - entry_ts);
          trips_csv.write_row({"C" + std::to_string(100000 + card_counter++), st[i].id,
                               format_minute(entry_ts), st[dest].id,
                               format_minute(entry_ts + minutes)});
          ++manifest.trips_emitted;
        }
      }
    }
  }
  trips_csv.close();

  // ---- incidents from treated runs, boundaries jittered inside the run ----
  int jmax = cfg.interval_min >= 15 ? 2 : 0;
  CsvWriter incidents_csv(out_dir / "incidents.csv", kIncidentsHeader);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < cfg.n_days; ++d) {
      Minute day_start = (day0 + d) * kMinutesPerDay + kServiceStartMin;
      int k = 0;
      while (k < spd) {
        if (!w_grid[i][static_cast<std::size_t>(d) * spd + k]) {
          ++k;
          continue;
        }
        int k2 = k;
        while (k2 + 1 < spd && w_grid[i][static_cast<std::size_t>(d) * spd + k2 + 1]) ++k2;
        int j1 = jmax > 0 ? static_cast<int>(unit(rng) * (jmax + 1)) : 0;
        int j2 = jmax > 0 ? static_cast<int>(unit(rng) * (jmax + 1)) : 0;
        Minute start = day_start + static_cast<Minute>(k) * cfg.interval_min + std::min(j1, jmax);
        Minute end = day_start + static_cast<Minute>(k2 + 1) * cfg.interval_min - std::min(j2, jmax);
        incidents_csv.write_row({st[i].id, format_minute(start), format_minute(end)});
        manifest.incidents.push_back({st[i].id, format_minute(start), format_minute(end)});
        k = k2 + 1;
      }
    }
  }
  incidents_csv.close();

  // ---- static files ----
  {
    CsvWriter w(out_dir / "stations.csv", kStationsHeader);
    for (int i = 0; i < n; ++i) {
      const auto& s = st[i];
      w.write_row({s.id, s.name, fmt_double(s.lat), fmt_double(s.lon), std::to_string(s.zone),
                   std::to_string(s.n_lines), s.terminal ? "1" : "0", s.overground ? "1" : "0",
                   s.screen_door ? "1" : "0", s.rail_connect ? "1" : "0", s.biking ? "1" : "0",
                   s.parking ? "1" : "0", fmt_double(std::round(s.station_age * 10) / 10),
                   fmt_double(std::round(s.rolling_stock_age * 10) / 10),
                   fmt_double(std::round(s.daily_demand * 100) / 100),
                   fmt_double(std::round(s.population)), fmt_double(std::round(s.employment)),
                   fmt_double(std::round(s.imd * 10) / 10),
                   fmt_double(std::round(s.domestic_area * 10) / 10),
                   fmt_double(std::round(s.nondomestic_area * 10) / 10),
                   fmt_double(std::round(s.other_area * 10) / 10), fmt_double(s.bus_stops),
                   fmt_double(std::round(s.road_area)), fmt_double(std::round(s.path_area))});
    }
  }
  {
    CsvWriter w(out_dir / "edges.csv", kEdgesHeader);
    for (const auto& e : edges)
      w.write_row({st[e.from].id, st[e.to].id, fmt_double(std::round(e.track_km * 1000) / 1000)});
  }
  {
    CsvWriter w(out_dir / "weather.csv", kWeatherHeader);
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < cfg.n_days; ++d) {
        Minute day_start = (day0 + d) * kMinutesPerDay + kServiceStartMin;
        for (int k = 0; k < spd; ++k) {
          double t = temp[d][k] + temp_offset[i];
          double v = std::max(0.0, wind[d][k] + wind_offset[i]);
          w.write_row({st[i].id, format_minute(day_start + static_cast<Minute>(k) * cfg.interval_min),
                       fmt_double(std::round(t * 10) / 10), fmt_double(std::round(v * 10) / 10),
                       rain[d][k] ? "1" : "0"});
        }
      }
    }
  }

  // ---- manifest ----
  double pooled_sum = 0;
  std::size_t pooled_n = 0;
  for (int i = 0; i < n; ++i) {
    auto& t = manifest.stations[i];
    t.id = st[i].id;
    t.delta_demand = cfg.delta_demand;
    if (auto it = cfg.delta_demand_override.find(st[i].id); it != cfg.delta_demand_override.end())
      t.delta_demand = it->second;
    t.treated_units = treated_count[i];
    t.expected_entry_effect = treated_count[i] > 0 ? effect_sum[i] / treated_count[i] : 0.0;
    t.expected_hd_out = dist_hellinger(st[i].profile_shifted, st[i].profile);
    t.expected_kl_out = dist_kl(st[i].profile_shifted, st[i].profile);
    pooled_sum += effect_sum[i];
    pooled_n += treated_count[i];
    manifest.treated_units += treated_count[i];
  }
  manifest.treatment_rate =
      static_cast<double>(manifest.treated_units) / (static_cast<double>(n) * cfg.n_days * spd);
  manifest.pooled_expected_entry_effect = pooled_n > 0 ? pooled_sum / pooled_n : 0.0;
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

namespace {

json config_to_json(const ScenarioConfig& c) {
  json j;
  j["n_stations"] = c.n_stations;
  j["n_days"] = c.n_days;
  j["seed"] = c.seed;
  j["start_date"] = c.start_date;
  j["interval_min"] = c.interval_min;
  j["n_lines"] = c.n_lines;
  j["demand_scale_min"] = c.demand_scale_min;
  j["demand_scale_max"] = c.demand_scale_max;
  j["day_sigma"] = c.day_sigma;
  j["rain_demand_factor"] = c.rain_demand_factor;
  j["rain_prob"] = c.rain_prob;
  j["rain_persistence"] = c.rain_persistence;
  j["temp_base"] = c.temp_base;
  j["wind_mean"] = c.wind_mean;
  j["gamma0"] = c.gamma0;
  j["gamma_demand"] = c.gamma_demand;
  j["gamma_rain"] = c.gamma_rain;
  j["gamma_wind"] = c.gamma_wind;
  j["delta_demand"] = c.delta_demand;
  j["delta_speed"] = c.delta_speed;
  j["phi_flow"] = c.phi_flow;
  j["base_speed_kmh"] = c.base_speed_kmh;
  j["speed_sigma"] = c.speed_sigma;
  j["delta_demand_override"] = c.delta_demand_override;
  return j;
}

ScenarioConfig config_from_json(const json& j) {
  ScenarioConfig c;
  c.n_stations = j.value("n_stations", c.n_stations);
  c.n_days = j.value("n_days", c.n_days);
  c.seed = j.value("seed", c.seed);
  c.start_date = j.value("start_date", c.start_date);
  c.interval_min = j.value("interval_min", c.interval_min);
  c.n_lines = j.value("n_lines", c.n_lines);
  c.demand_scale_min = j.value("demand_scale_min", c.demand_scale_min);
  c.demand_scale_max = j.value("demand_scale_max", c.demand_scale_max);
  c.day_sigma = j.value("day_sigma", c.day_sigma);
  c.rain_demand_factor = j.value("rain_demand_factor", c.rain_demand_factor);
  c.rain_prob = j.value("rain_prob", c.rain_prob);
  c.rain_persistence = j.value("rain_persistence", c.rain_persistence);
  c.temp_base = j.value("temp_base", c.temp_base);
  c.wind_mean = j.value("wind_mean", c.wind_mean);
  c.gamma0 = j.value("gamma0", c.gamma0);
  c.gamma_demand = j.value("gamma_demand", c.gamma_demand);
  c.gamma_rain = j.value("gamma_rain", c.gamma_rain);
  c.gamma_wind = j.value("gamma_wind", c.gamma_wind);
  c.delta_demand = j.value("delta_demand", c.delta_demand);
  c.delta_speed = j.value("delta_speed", c.delta_speed);
  c.phi_flow = j.value("phi_flow", c.phi_flow);
  c.base_speed_kmh = j.value("base_speed_kmh", c.base_speed_kmh);
  c.speed_sigma = j.value("speed_sigma", c.speed_sigma);
  if (j.contains("delta_demand_override"))
    c.delta_demand_override = j["delta_demand_override"].get<std::map<std::string, double>>();
  return c;
}

}  // namespace

void to_json_file(const ScenarioConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << config_to_json(cfg).dump(2) << "\n";
}

ScenarioConfig scenario_from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json j = json::parse(in);
  return config_from_json(j);
}

std::string scenario_to_json_string(const ScenarioConfig& cfg) {
  return config_to_json(cfg).dump();
}

ScenarioConfig scenario_from_json_string(const std::string& text) {
  return config_from_json(json::parse(text));
}

void save_manifest(const GroundTruthManifest& m, const std::filesystem::path& path) {
  json j;
  j["generator_version"] = m.generator_version;
  j["config"] = config_to_json(m.config);
  j["treated_units"] = m.treated_units;
  j["trips_emitted"] = m.trips_emitted;
  j["treatment_rate"] = m.treatment_rate;
  j["pooled_expected_entry_effect"] = m.pooled_expected_entry_effect;
  j["stations"] = json::array();
  for (const auto& s : m.stations) {
    json js;
    js["id"] = s.id;
    js["delta_demand"] = s.delta_demand;
    js["treated_units"] = s.treated_units;
    js["expected_entry_effect"] = s.expected_entry_effect;
    js["expected_hd_out"] = s.expected_hd_out;
    js["expected_kl_out"] = s.expected_kl_out;
    j["stations"].push_back(js);
  }
  j["incidents"] = json::array();
  for (const auto& inc : m.incidents)
    j["incidents"].push_back({{"station", inc.station}, {"start", inc.start_ts}, {"end", inc.end_ts}});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

GroundTruthManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  json j = json::parse(in);
  GroundTruthManifest m;
  m.generator_version = j.at("generator_version").get<std::string>();
  m.config = config_from_json(j.at("config"));
  m.treated_units = j.at("treated_units").get<std::size_t>();
  m.trips_emitted = j.at("trips_emitted").get<std::size_t>();
  m.treatment_rate = j.at("treatment_rate").get<double>();
  m.pooled_expected_entry_effect = j.at("pooled_expected_entry_effect").get<double>();
  for (const auto& js : j.at("stations")) {
    StationTruth s;
    s.id = js.at("id").get<std::string>();
    s.delta_demand = js.at("delta_demand").get<double>();
    s.treated_units = js.at("treated_units").get<std::uint32_t>();
    s.expected_entry_effect = js.at("expected_entry_effect").get<double>();
    s.expected_hd_out = js.at("expected_hd_out").get<double>();
    s.expected_kl_out = js.at("expected_kl_out").get<double>();
    m.stations.push_back(std::move(s));
  }
  for (const auto& ji : j.at("incidents"))
    m.incidents.push_back({ji.at("station").get<std::string>(), ji.at("start").get<std::string>(),
                           ji.at("end").get<std::string>()});
  return m;
}

ExpectedEffects expected_effects(const GroundTruthManifest& m) {
  ExpectedEffects e;
  double pooled_sum = 0;
  std::size_t pooled_n = 0;
  for (const auto& s : m.stations) {
    e.demand_loss[s.id] = -s.expected_entry_effect;
    e.hd_out[s.id] = s.expected_hd_out;
    e.kl_out[s.id] = s.expected_kl_out;
    pooled_sum += s.expected_entry_effect * s.treated_units;
    pooled_n += s.treated_units;
  }
  e.avg_speed_loss = -m.config.delta_speed;
  e.pooled_demand_loss = pooled_n > 0 ? -pooled_sum / static_cast<double>(pooled_n) : 0.0;
  return e;
}

}  // namespace metrovuln
