#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace metrovuln {

// Synthetic scenario with known ground truth. Disruptions are assigned by a
// logistic model in expected demand, rain and wind, so treatment correlates
// with outcomes and a naive treated-vs-control comparison is biased while a
// matched estimator is not.
struct ScenarioConfig {
  int n_stations = 24;
  int n_days = 28;
  std::uint64_t seed = 20240304;
  std::string start_date = "2024-03-02";  // all days count; weekdays are an abstraction here
  int interval_min = 15;
  int n_lines = 4;  // radial lines meeting at station 0

  // demand: lambda(station, slot, day) = scale_i * diurnal(slot) * day_mult * rain factor
  double demand_scale_min = 45;
  double demand_scale_max = 110;
  double day_sigma = 0.08;          // lognormal sd of the per-day demand multiplier
  double rain_demand_factor = 0.93;

  // weather
  double rain_prob = 0.30;          // a day starts rainy with this probability
  double rain_persistence = 0.92;   // per-slot probability of keeping the current rain state
  double temp_base = 10.0;
  double wind_mean = 10.0;

  // disruption logit: gamma0 + gamma_demand*lambda + gamma_rain*rain + gamma_wind*wind
  double gamma0 = -4.6;
  double gamma_demand = 0.02;
  double gamma_rain = 0.6;
  double gamma_wind = 0.025;

  // injected effects
  double delta_demand = -20.0;  // entry change per disrupted slot
  double delta_speed = -8.0;    // km/h change for trips entering a disrupted unit
  double phi_flow = 0.30;       // outward flow share redirected to the nearest alternative

  double base_speed_kmh = 32.0;
  double speed_sigma = 2.5;

  std::map<std::string, double> delta_demand_override;  // per-station delta_demand
};

void to_json_file(const ScenarioConfig& cfg, const std::filesystem::path& path);
ScenarioConfig scenario_from_json_file(const std::filesystem::path& path);
std::string scenario_to_json_string(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json_string(const std::string& text);

struct InjectedIncident {
  std::string station;
  std::string start_ts, end_ts;
};

struct StationTruth {
  std::string id;
  double delta_demand = 0;
  std::uint32_t treated_units = 0;
  // exact expectation of the per-unit entry effect, including any floor at
  // zero expected demand
  double expected_entry_effect = 0;
  double expected_hd_out = 0;   // Hellinger distance of the redirected profile
  double expected_kl_out = 0;
};

struct GroundTruthManifest {
  std::string generator_version;
  ScenarioConfig config;
  std::vector<InjectedIncident> incidents;
  std::vector<StationTruth> stations;
  std::size_t treated_units = 0;
  std::size_t trips_emitted = 0;
  double treatment_rate = 0;
  double pooled_expected_entry_effect = 0;  // treated-unit weighted
};

// Writes trips.csv, incidents.csv, stations.csv, edges.csv, weather.csv and
// manifest.json into out_dir. Output bytes depend only on (config, seed).
GroundTruthManifest generate_scenario(const ScenarioConfig& cfg,
                                      const std::filesystem::path& out_dir);

void save_manifest(const GroundTruthManifest& m, const std::filesystem::path& path);
GroundTruthManifest load_manifest(const std::filesystem::path& path);

struct ExpectedEffects {
  std::map<std::string, double> demand_loss;  // expected d_i per station
  std::map<std::string, double> hd_out;
  std::map<std::string, double> kl_out;
  double avg_speed_loss = 0;   // -delta_speed; ignores full-closure zeros and rounding
  double pooled_demand_loss = 0;
};

ExpectedEffects expected_effects(const GroundTruthManifest& m);

}  // namespace metrovuln
