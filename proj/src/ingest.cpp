#include "metrovuln/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "metrovuln/csv.hpp"

namespace metrovuln {

const std::vector<std::string> kTripsHeader = {"card_id", "entry_station", "entry_ts",
                                               "exit_station", "exit_ts"};
const std::vector<std::string> kIncidentsHeader = {"station", "start_ts", "end_ts"};
const std::vector<std::string> kStationsHeader = {
    "id", "name", "lat", "lon", "zone", "n_lines", "terminal", "overground", "screen_door",
    "rail_connect", "biking", "parking", "station_age", "rolling_stock_age", "daily_demand",
    "population", "employment", "imd", "domestic_area", "nondomestic_area", "other_area",
    "bus_stops", "road_area", "path_area"};
const std::vector<std::string> kEdgesHeader = {"from", "to", "track_km"};
const std::vector<std::string> kWeatherHeader = {"station", "slot_start", "temp_c", "wind_kmh", "rain"};

namespace {

bool to_double(const std::string& s, double& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(out);
}

bool to_int(const std::string& s, int& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

bool to_bool01(const std::string& s, bool& out) {
  if (s == "0") { out = false; return true; }
  if (s == "1") { out = true; return true; }
  return false;
}

[[noreturn]] void fatal(const CsvReader& r, const std::string& msg) {
  throw std::runtime_error(r.path().string() + ":" + std::to_string(r.line_number()) + ": " + msg);
}

}  // namespace

TripParse parse_trips(const std::filesystem::path& path, const StationTable& stations) {
  CsvReader reader(path);
  reader.require_header(kTripsHeader);
  TripParse out;
  std::vector<std::string> f;
  while (reader.next_row(f)) {
    auto reject = [&](const std::string& why) { out.rejects.push_back({reader.line_number(), why}); };
    if (f.size() != kTripsHeader.size()) { reject("wrong field count"); continue; }
    TripRecord t;
    t.card_id = f[0];
    auto entry = stations.find(f[1]);
    if (!entry) { reject("unknown entry station \"" + f[1] + "\""); continue; }
    auto ets = parse_minute(f[2]);
    if (!ets) { reject("unparseable entry_ts \"" + f[2] + "\""); continue; }
    auto exit = stations.find(f[3]);
    if (!exit) { reject("unknown exit station \"" + f[3] + "\""); continue; }
    auto xts = parse_minute(f[4]);
    if (!xts) { reject("unparseable exit_ts \"" + f[4] + "\""); continue; }
    t.entry_station = *entry;
    t.exit_station = *exit;
    t.entry_ts = *ets;
    t.exit_ts = *xts;
    if (t.exit_ts <= t.entry_ts) { reject("non-positive duration"); continue; }
    if (!in_service_window(t.entry_ts)) { reject("entry outside service hours"); continue; }
    if (!in_service_window(t.exit_ts) || day_of(t.exit_ts) != day_of(t.entry_ts)) {
      reject("exit outside service hours");
      continue;
    }
    out.records.push_back(std::move(t));
  }
  return out;
}

IncidentParse parse_incidents(const std::filesystem::path& path, const StationTable& stations,
                              int threshold_min) {
  CsvReader reader(path);
  reader.require_header(kIncidentsHeader);
  IncidentParse out;
  std::vector<std::string> f;
  while (reader.next_row(f)) {
    auto reject = [&](const std::string& why) { out.rejects.push_back({reader.line_number(), why}); };
    if (f.size() != kIncidentsHeader.size()) { reject("wrong field count"); continue; }
    auto st = stations.find(f[0]);
    if (!st) { reject("unknown station \"" + f[0] + "\""); continue; }
    auto start = parse_minute(f[1]);
    if (!start) { reject("unparseable start_ts \"" + f[1] + "\""); continue; }
    auto end = parse_minute(f[2]);
    if (!end) { reject("unparseable end_ts \"" + f[2] + "\""); continue; }
    if (*end < *start) { reject("end before start"); continue; }
    if (*end - *start < threshold_min) { ++out.below_threshold; continue; }
    out.records.push_back({*st, *start, *end});
  }
  return out;
}

StationTable parse_stations(const std::filesystem::path& path) {
  CsvReader reader(path);
  reader.require_header(kStationsHeader);
  StationTable table;
  std::vector<std::string> f;
  while (reader.next_row(f)) {
    if (f.size() != kStationsHeader.size()) fatal(reader, "wrong field count");
    StationAttrs a;
    a.id = f[0];
    a.name = f[1];
    int col = 2;
    auto num = [&](double& dst) {
      if (!to_double(f[col], dst)) fatal(reader, "bad numeric value in column " + kStationsHeader[col]);
      ++col;
    };
    auto integer = [&](int& dst) {
      if (!to_int(f[col], dst)) fatal(reader, "bad integer value in column " + kStationsHeader[col]);
      ++col;
    };
    auto flag = [&](bool& dst) {
      if (!to_bool01(f[col], dst)) fatal(reader, "boolean column " + kStationsHeader[col] + " must be 0 or 1");
      ++col;
    };
    num(a.lat);
    num(a.lon);
    integer(a.zone);
    integer(a.n_lines);
    flag(a.terminal);
    flag(a.overground);
    flag(a.screen_door);
    flag(a.rail_connect);
    flag(a.biking);
    flag(a.parking);
    num(a.station_age);
    num(a.rolling_stock_age);
    num(a.daily_demand);
    num(a.population);
    num(a.employment);
    num(a.imd);
    num(a.domestic_area);
    num(a.nondomestic_area);
    num(a.other_area);
    num(a.bus_stops);
    num(a.road_area);
    num(a.path_area);
    if (a.zone < 1) fatal(reader, "zone must be >= 1 for station " + a.id);
    if (a.n_lines < 1) fatal(reader, "n_lines must be >= 1 for station " + a.id);
    if (a.station_age < 0 || a.rolling_stock_age < 0) fatal(reader, "negative age for station " + a.id);
    if (table.by_id.count(a.id)) fatal(reader, "duplicate station id " + a.id);
    table.by_id.emplace(a.id, static_cast<StationIdx>(table.rows.size()));
    table.rows.push_back(std::move(a));
  }
  if (table.rows.empty()) throw std::runtime_error(path.string() + ": no stations");
  return table;
}

std::vector<Edge> parse_edges(const std::filesystem::path& path, const StationTable& stations) {
  CsvReader reader(path);
  reader.require_header(kEdgesHeader);
  std::vector<Edge> edges;
  std::vector<std::string> f;
  while (reader.next_row(f)) {
    if (f.size() != kEdgesHeader.size()) fatal(reader, "wrong field count");
    auto from = stations.find(f[0]);
    if (!from) fatal(reader, "edge endpoint references unknown station \"" + f[0] + "\"");
    auto to = stations.find(f[1]);
    if (!to) fatal(reader, "edge endpoint references unknown station \"" + f[1] + "\"");
    double km;
    if (!to_double(f[2], km)) fatal(reader, "bad track_km");
    if (km <= 0) fatal(reader, "track_km must be positive, got " + f[2]);
    edges.push_back({*from, *to, km});
  }
  return edges;
}

namespace {

WeatherGrid build_weather_grid(const std::vector<WeatherSlot>& rows, StationIdx n_stations,
                               int interval_min, const std::filesystem::path& path) {
  if (rows.empty()) throw std::runtime_error(path.string() + ": no weather rows");
  WeatherGrid g;
  g.slots_per_day = kServiceMinutes / interval_min;
  g.n_stations = n_stations;
  DayNumber dmin = day_of(rows.front().slot_start), dmax = dmin;
  for (const auto& r : rows) {
    dmin = std::min(dmin, day_of(r.slot_start));
    dmax = std::max(dmax, day_of(r.slot_start));
  }
  g.day0 = dmin;
  g.n_days = static_cast<int>(dmax - dmin + 1);
  std::size_t n_cells = static_cast<std::size_t>(n_stations) * g.n_days * g.slots_per_day;
  g.temp_c.assign(n_cells, 0);
  g.wind_kmh.assign(n_cells, 0);
  g.rain.assign(n_cells, 0);
  std::vector<std::uint8_t> present(n_cells, 0);

  for (const auto& r : rows) {
    int day = static_cast<int>(day_of(r.slot_start) - g.day0);
    int slot = (tod_minutes(r.slot_start) - kServiceStartMin) / interval_min;
    std::size_t c = g.cell(r.station, day, slot);
    if (present[c])
      throw std::runtime_error(path.string() + ": duplicate weather row for station " +
                               std::to_string(r.station) + " at " + format_minute(r.slot_start));
    present[c] = 1;
    g.temp_c[c] = static_cast<float>(r.temp_c);
    g.wind_kmh[c] = static_cast<float>(r.wind_kmh);
    g.rain[c] = r.rain ? 1 : 0;
  }

  // Fill gaps from the nearest observed slot of the same station; distance is
  // measured in service slots, ties resolved toward the earlier slot.
  int spd = g.slots_per_day;
  for (StationIdx s = 0; s < n_stations; ++s) {
    std::vector<int> observed;
    for (int d = 0; d < g.n_days; ++d)
      for (int k = 0; k < spd; ++k)
        if (present[g.cell(s, d, k)]) observed.push_back(d * spd + k);
    if (observed.empty())
      throw std::runtime_error(path.string() + ": station index " + std::to_string(s) +
                               " has no weather rows at all");
    for (int d = 0; d < g.n_days; ++d) {
      for (int k = 0; k < spd; ++k) {
        std::size_t c = g.cell(s, d, k);
        if (present[c]) continue;
        int abs_slot = d * spd + k;
        auto it = std::lower_bound(observed.begin(), observed.end(), abs_slot);
        int best;
        if (it == observed.begin()) best = *it;
        else if (it == observed.end()) best = observed.back();
        else best = (*it - abs_slot < abs_slot - *(it - 1)) ? *it : *(it - 1);
        std::size_t src = g.cell(s, best / spd, best % spd);
        g.temp_c[c] = g.temp_c[src];
        g.wind_kmh[c] = g.wind_kmh[src];
        g.rain[c] = g.rain[src];
        ++g.gaps_filled;
      }
    }
  }
  return g;
}

}  // namespace

StaticData parse_static(const std::filesystem::path& stations_path,
                        const std::filesystem::path& edges_path,
                        const std::filesystem::path& weather_path, int interval_min) {
  StaticData out;
  out.stations = parse_stations(stations_path);
  out.edges = parse_edges(edges_path, out.stations);

  CsvReader reader(weather_path);
  reader.require_header(kWeatherHeader);
  std::vector<WeatherSlot> rows;
  std::vector<std::string> f;
  while (reader.next_row(f)) {
    if (f.size() != kWeatherHeader.size()) fatal(reader, "wrong field count");
    WeatherSlot w;
    auto st = out.stations.find(f[0]);
    if (!st) fatal(reader, "weather row references unknown station \"" + f[0] + "\"");
    w.station = *st;
    auto ts = parse_minute(f[1]);
    if (!ts) fatal(reader, "unparseable slot_start \"" + f[1] + "\"");
    w.slot_start = *ts;
    int tod = tod_minutes(w.slot_start);
    if (tod < kServiceStartMin || tod >= kServiceEndMin || (tod - kServiceStartMin) % interval_min != 0)
      fatal(reader, "slot_start not aligned to a service-hour slot boundary");
    if (!to_double(f[2], w.temp_c)) fatal(reader, "bad temp_c");
    if (!to_double(f[3], w.wind_kmh)) fatal(reader, "bad wind_kmh");
    if (w.wind_kmh < 0) fatal(reader, "negative wind_kmh");
    bool rain;
    if (!to_bool01(f[4], rain)) fatal(reader, "rain must be 0 or 1");
    w.rain = rain;
    rows.push_back(w);
  }
  out.weather = build_weather_grid(rows, out.stations.size(), interval_min, weather_path);
  return out;
}

void serialize_trips(const std::vector<TripRecord>& trips, const StationTable& stations,
                     const std::filesystem::path& path) {
  CsvWriter w(path, kTripsHeader);
  for (const auto& t : trips) {
    w.write_row({t.card_id, stations.id_of(t.entry_station), format_minute(t.entry_ts),
                 stations.id_of(t.exit_station), format_minute(t.exit_ts)});
  }
}

}  // namespace metrovuln
