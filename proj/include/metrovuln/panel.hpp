#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "metrovuln/ingest.hpp"
#include "metrovuln/network.hpp"

namespace metrovuln {

// Nine time-of-day bands; band 8 (19:00-24:00) is the reference level in the
// propensity model. Boundaries in minutes from midnight.
int time_band_of(int tod_minutes);

struct SlotId {
  DayNumber day = 0;
  int slot_index = 0;
};

// Sparse ridership vector over destination (outward) or origin (inward)
// stations. The self cell is fixed at zero and never stored; same-station
// trips are tracked separately.
struct FlowDist {
  std::vector<std::pair<StationIdx, std::uint32_t>> counts;  // sorted by station

  std::uint32_t total() const {
    std::uint32_t s = 0;
    for (auto& [_, c] : counts) s += c;
    return s;
  }
  void densify(std::vector<double>& out, StationIdx n) const {
    out.assign(n, 0.0);
    for (auto& [k, c] : counts) out[k] = c;
  }
};

struct StudyUnit {
  std::uint8_t treated = 0;

  // confounders
  std::uint32_t pre_entry = 0;        // previous slot's entry ridership, 0 at the day's first slot
  std::uint32_t pre_exit = 0;
  float temp_c = 0;
  float wind_kmh = 0;
  std::uint8_t rain = 0;
  std::uint8_t time_band = 8;
  std::uint32_t past_disruptions = 0;  // disruption episodes ended earlier the same day

  // outcomes
  std::uint32_t entry_ridership = 0;
  std::uint32_t exit_ridership = 0;
  double avg_speed = 0;
  bool has_speed = false;  // false = MISSING (undisrupted unit with no speed trips)
  FlowDist outward, inward;

  // diagnostics
  std::uint32_t degenerate_trips = 0;
  std::uint32_t no_path_trips = 0;
};

struct Panel {
  DayNumber day0 = 0;
  int n_days = 0;
  int slots_per_day = 0;
  int interval_min = 15;
  StationIdx n_stations = 0;
  std::vector<StudyUnit> units;  // indexed by (station * n_days + day) * slots_per_day + slot

  std::size_t unit_index(StationIdx s, int day, int slot) const {
    return (static_cast<std::size_t>(s) * n_days + day) * slots_per_day + slot;
  }
  std::size_t size() const { return units.size(); }
  StationIdx station_of(std::size_t idx) const {
    return static_cast<StationIdx>(idx / (static_cast<std::size_t>(n_days) * slots_per_day));
  }
  int day_of_unit(std::size_t idx) const {
    return static_cast<int>((idx / slots_per_day) % n_days);
  }
  int slot_of_unit(std::size_t idx) const { return static_cast<int>(idx % slots_per_day); }
};

// W_it = 1 iff an incident at the station overlaps the slot by at least one
// minute. Incident intervals are half-open [start, end).
std::vector<std::uint8_t> assign_treatment(const std::vector<IncidentRecord>& incidents,
                                           DayNumber day0, int n_days, int slots_per_day,
                                           int interval_min, StationIdx n_stations);

// Assembles the full panel. Trips must fall inside the weather grid's day
// range (the study window); everything else was validated at ingest.
Panel build_study_units(const std::vector<TripRecord>& trips,
                        const std::vector<std::uint8_t>& treatment, const WeatherGrid& weather,
                        const NetworkGraph& graph);

struct StationBaseline {
  double mean_entry = 0;                 // over undisrupted units
  std::optional<double> mean_speed;      // over undisrupted units with observed speed
  std::vector<double> mean_outward, mean_inward;
  std::optional<double> disrupted_mean_entry;  // r_i of the gross-speed metric
  std::uint32_t n_undisrupted = 0;
  std::uint32_t n_disrupted = 0;
};

// Per-station baselines over undisrupted observations. Throws if any station
// has no undisrupted units at all.
std::vector<StationBaseline> baseline_stats(const Panel& panel);

void write_panel_csv(const Panel& panel, const StationTable& stations,
                     const std::filesystem::path& path);
void write_flows_csv(const Panel& panel, const StationTable& stations,
                     const std::filesystem::path& path);
Panel load_panel(const std::filesystem::path& panel_path, const std::filesystem::path& flows_path,
                 const StationTable& stations, int interval_min);

}  // namespace metrovuln
