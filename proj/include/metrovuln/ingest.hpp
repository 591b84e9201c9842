#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "metrovuln/timeutil.hpp"

namespace metrovuln {

using StationIdx = std::uint32_t;

struct TripRecord {
  std::string card_id;
  StationIdx entry_station = 0;
  StationIdx exit_station = 0;
  Minute entry_ts = 0;
  Minute exit_ts = 0;
};

struct IncidentRecord {
  StationIdx station = 0;
  Minute start_ts = 0;
  Minute end_ts = 0;
};

struct StationAttrs {
  std::string id;
  std::string name;
  double lat = 0, lon = 0;
  int zone = 1;
  int n_lines = 1;
  bool terminal = false, overground = false, screen_door = false, rail_connect = false;
  bool biking = false, parking = false;
  double station_age = 0, rolling_stock_age = 0;
  double daily_demand = 0;
  // affected-area covariates
  double population = 0, employment = 0, imd = 0;
  double domestic_area = 0, nondomestic_area = 0, other_area = 0;
  double bus_stops = 0, road_area = 0, path_area = 0;
};

struct WeatherSlot {
  StationIdx station = 0;
  Minute slot_start = 0;
  double temp_c = 0;
  double wind_kmh = 0;
  bool rain = false;
};

struct Edge {
  StationIdx from = 0, to = 0;
  double track_km = 0;
};

struct Reject {
  std::size_t line_no = 0;
  std::string reason;
};

struct StationTable {
  std::vector<StationAttrs> rows;
  std::unordered_map<std::string, StationIdx> by_id;

  StationIdx size() const { return static_cast<StationIdx>(rows.size()); }
  std::optional<StationIdx> find(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) return std::nullopt;
    return it->second;
  }
  const std::string& id_of(StationIdx i) const { return rows[i].id; }
};

// Dense per-(station, day, slot) weather grid covering the study window.
struct WeatherGrid {
  DayNumber day0 = 0;
  int n_days = 0;
  int slots_per_day = 0;
  StationIdx n_stations = 0;
  std::vector<float> temp_c;
  std::vector<float> wind_kmh;
  std::vector<std::uint8_t> rain;
  std::size_t gaps_filled = 0;

  std::size_t cell(StationIdx s, int day, int slot) const {
    return (static_cast<std::size_t>(s) * n_days + day) * slots_per_day + slot;
  }
};

struct TripParse {
  std::vector<TripRecord> records;
  std::vector<Reject> rejects;
};

struct IncidentParse {
  std::vector<IncidentRecord> records;
  std::vector<Reject> rejects;
  std::size_t below_threshold = 0;  // valid rows filtered by the duration rule
};

struct StaticData {
  StationTable stations;
  std::vector<Edge> edges;
  WeatherGrid weather;
};

extern const std::vector<std::string> kTripsHeader;
extern const std::vector<std::string> kIncidentsHeader;
extern const std::vector<std::string> kStationsHeader;
extern const std::vector<std::string> kEdgesHeader;
extern const std::vector<std::string> kWeatherHeader;

// Row-level invariant violations become rejects with line numbers; structural
// problems (missing file, bad header, broken referential integrity) throw.
TripParse parse_trips(const std::filesystem::path& path, const StationTable& stations);

IncidentParse parse_incidents(const std::filesystem::path& path, const StationTable& stations,
                              int threshold_min);

StationTable parse_stations(const std::filesystem::path& path);
std::vector<Edge> parse_edges(const std::filesystem::path& path, const StationTable& stations);

// Loads the three static files and assembles the weather grid over the whole
// day range present in the weather file. Missing (station, slot) cells are
// filled from the nearest-in-time row of the same station and counted.
StaticData parse_static(const std::filesystem::path& stations_path,
                        const std::filesystem::path& edges_path,
                        const std::filesystem::path& weather_path,
                        int interval_min);

// Re-serializes accepted trips in schema order with normalized timestamps.
void serialize_trips(const std::vector<TripRecord>& trips, const StationTable& stations,
                     const std::filesystem::path& path);

}  // namespace metrovuln
