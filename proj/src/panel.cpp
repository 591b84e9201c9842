#include "metrovuln/panel.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

#include "metrovuln/csv.hpp"

namespace metrovuln {

int time_band_of(int tod) {
  // Band boundaries: 6:00, 6:30, 7:45, 8:45, 9:30, 16:00, 17:15, 18:15, 19:00, 24:00.
  static const int bounds[] = {390, 465, 525, 570, 960, 1035, 1095, 1140};
  if (tod < kServiceStartMin || tod >= kServiceEndMin)
    throw std::out_of_range("time band defined only within service hours");
  int band = 0;
  for (int b : bounds) {
    if (tod < b) return band;
    ++band;
  }
  return 8;
}

std::vector<std::uint8_t> assign_treatment(const std::vector<IncidentRecord>& incidents,
                                           DayNumber day0, int n_days, int slots_per_day,
                                           int interval_min, StationIdx n_stations) {
  std::vector<std::uint8_t> w(static_cast<std::size_t>(n_stations) * n_days * slots_per_day, 0);
  auto idx = [&](StationIdx s, int d, int k) {
    return (static_cast<std::size_t>(s) * n_days + d) * slots_per_day + k;
  };
  Minute t0 = day0 * kMinutesPerDay;
  for (const auto& inc : incidents) {
    for (int d = 0; d < n_days; ++d) {
      Minute day_start = t0 + static_cast<Minute>(d) * kMinutesPerDay + kServiceStartMin;
      for (int k = 0; k < slots_per_day; ++k) {
        Minute a = day_start + static_cast<Minute>(k) * interval_min;
        Minute b = a + interval_min;
        Minute overlap = std::min(inc.end_ts, b) - std::max(inc.start_ts, a);
        if (overlap >= 1) w[idx(inc.station, d, k)] = 1;
      }
    }
  }
  return w;
}

Panel build_study_units(const std::vector<TripRecord>& trips,
                        const std::vector<std::uint8_t>& treatment, const WeatherGrid& weather,
                        const NetworkGraph& graph) {
  Panel p;
  p.day0 = weather.day0;
  p.n_days = weather.n_days;
  p.slots_per_day = weather.slots_per_day;
  p.interval_min = kServiceMinutes / weather.slots_per_day;
  p.n_stations = weather.n_stations;
  std::size_t n_units = static_cast<std::size_t>(p.n_stations) * p.n_days * p.slots_per_day;
  if (treatment.size() != n_units)
    throw std::invalid_argument("treatment matrix size does not match the panel grid");
  p.units.resize(n_units);

  for (std::size_t i = 0; i < n_units; ++i) p.units[i].treated = treatment[i];

  auto slot_of = [&](Minute ts, int& day, int& slot) {
    day = static_cast<int>(day_of(ts) - p.day0);
    if (day < 0 || day >= p.n_days)
      throw std::runtime_error("trip at " + format_minute(ts) + " lies outside the study window " +
                               format_date(p.day0) + ".." + format_date(p.day0 + p.n_days - 1));
    slot = (tod_minutes(ts) - kServiceStartMin) / p.interval_min;
  };

  // Flow contributions as triplets, sorted afterwards so accumulation order
  // never depends on trip order.
  struct Triplet {
    std::size_t unit;
    StationIdx other;
    std::uint8_t outward;
  };
  std::vector<Triplet> flow;
  flow.reserve(trips.size() * 2);

  std::vector<double> speed_sum(n_units, 0.0);
  std::vector<std::uint32_t> speed_n(n_units, 0);

  for (const auto& t : trips) {
    int ed, ek, xd, xk;
    slot_of(t.entry_ts, ed, ek);
    slot_of(t.exit_ts, xd, xk);
    std::size_t eu = p.unit_index(t.entry_station, ed, ek);
    std::size_t xu = p.unit_index(t.exit_station, xd, xk);
    ++p.units[eu].entry_ridership;
    ++p.units[xu].exit_ridership;

    auto sp = trip_speed(t, graph);
    switch (sp.status) {
      case TripSpeedStatus::Ok:
        speed_sum[eu] += sp.kmh;
        ++speed_n[eu];
        flow.push_back({eu, t.exit_station, 1});
        flow.push_back({xu, t.entry_station, 0});
        break;
      case TripSpeedStatus::DegenerateSameStation:
        ++p.units[eu].degenerate_trips;
        break;
      case TripSpeedStatus::NoPath:
        ++p.units[eu].no_path_trips;
        flow.push_back({eu, t.exit_station, 1});
        flow.push_back({xu, t.entry_station, 0});
        break;
    }
  }

  std::sort(flow.begin(), flow.end(), [](const Triplet& a, const Triplet& b) {
    if (a.unit != b.unit) return a.unit < b.unit;
    if (a.outward != b.outward) return a.outward > b.outward;
    return a.other < b.other;
  });
  for (std::size_t i = 0; i < flow.size();) {
    std::size_t j = i;
    std::uint32_t c = 0;
    while (j < flow.size() && flow[j].unit == flow[i].unit && flow[j].outward == flow[i].outward &&
           flow[j].other == flow[i].other) {
      ++c;
      ++j;
    }
    auto& u = p.units[flow[i].unit];
    (flow[i].outward ? u.outward : u.inward).counts.emplace_back(flow[i].other, c);
    i = j;
  }

  // Speed outcome: mean over completing trips; a silent treated unit reads 0,
  // a silent undisrupted unit has no observed speed.
  for (std::size_t i = 0; i < n_units; ++i) {
    auto& u = p.units[i];
    if (speed_n[i] > 0) {
      u.avg_speed = speed_sum[i] / speed_n[i];
      u.has_speed = true;
    } else if (u.treated) {
      u.avg_speed = 0.0;
      u.has_speed = true;
    } else {
      u.has_speed = false;
    }
  }

  // Per-day covariate scans.
  for (StationIdx s = 0; s < p.n_stations; ++s) {
    for (int d = 0; d < p.n_days; ++d) {
      std::uint32_t completed_episodes = 0;
      bool ongoing = false;
      for (int k = 0; k < p.slots_per_day; ++k) {
        auto& u = p.units[p.unit_index(s, d, k)];
        if (k > 0) {
          const auto& prev = p.units[p.unit_index(s, d, k - 1)];
          u.pre_entry = prev.entry_ridership;
          u.pre_exit = prev.exit_ridership;
        }
        u.past_disruptions = completed_episodes;
        if (u.treated) {
          ongoing = true;
        } else if (ongoing) {
          ++completed_episodes;
          ongoing = false;
        }
        std::size_t wc = weather.cell(s, d, k);
        u.temp_c = weather.temp_c[wc];
        u.wind_kmh = weather.wind_kmh[wc];
        u.rain = weather.rain[wc];
        u.time_band =
            static_cast<std::uint8_t>(time_band_of(kServiceStartMin + k * p.interval_min));
      }
    }
  }
  return p;
}

std::vector<StationBaseline> baseline_stats(const Panel& panel) {
  std::vector<StationBaseline> out(panel.n_stations);
  std::vector<double> dense;
  for (StationIdx s = 0; s < panel.n_stations; ++s) {
    auto& b = out[s];
    b.mean_outward.assign(panel.n_stations, 0.0);
    b.mean_inward.assign(panel.n_stations, 0.0);
    double entry_sum = 0, speed_sum = 0, disrupted_entry_sum = 0;
    std::uint32_t speed_n = 0;
    for (int d = 0; d < panel.n_days; ++d) {
      for (int k = 0; k < panel.slots_per_day; ++k) {
        const auto& u = panel.units[panel.unit_index(s, d, k)];
        if (u.treated) {
          ++b.n_disrupted;
          disrupted_entry_sum += u.entry_ridership;
          continue;
        }
        ++b.n_undisrupted;
        entry_sum += u.entry_ridership;
        if (u.has_speed) {
          speed_sum += u.avg_speed;
          ++speed_n;
        }
        for (auto& [k2, c] : u.outward.counts) b.mean_outward[k2] += c;
        for (auto& [k2, c] : u.inward.counts) b.mean_inward[k2] += c;
      }
    }
    if (b.n_undisrupted == 0)
      throw std::runtime_error("station index " + std::to_string(s) +
                               " has no undisrupted units; baseline undefined");
    b.mean_entry = entry_sum / b.n_undisrupted;
    if (speed_n > 0) b.mean_speed = speed_sum / speed_n;
    for (auto& v : b.mean_outward) v /= b.n_undisrupted;
    for (auto& v : b.mean_inward) v /= b.n_undisrupted;
    if (b.n_disrupted > 0) b.disrupted_mean_entry = disrupted_entry_sum / b.n_disrupted;
  }
  return out;
}

namespace {

const std::vector<std::string> kPanelHeader = {
    "station", "day", "slot", "W", "pre_entry", "pre_exit", "temp_c", "wind_kmh", "rain",
    "time_band", "past_disruptions", "entry", "exit", "avg_speed"};
const std::vector<std::string> kFlowsHeader = {"station", "day", "slot", "direction", "dest", "count"};

}  // namespace

void write_panel_csv(const Panel& panel, const StationTable& stations,
                     const std::filesystem::path& path) {
  CsvWriter w(path, kPanelHeader);
  for (StationIdx s = 0; s < panel.n_stations; ++s) {
    for (int d = 0; d < panel.n_days; ++d) {
      for (int k = 0; k < panel.slots_per_day; ++k) {
        const auto& u = panel.units[panel.unit_index(s, d, k)];
        w.write_row({stations.id_of(s), format_date(panel.day0 + d), std::to_string(k),
                     std::to_string(int(u.treated)), std::to_string(u.pre_entry),
                     std::to_string(u.pre_exit), fmt_double(u.temp_c), fmt_double(u.wind_kmh),
                     std::to_string(int(u.rain)), std::to_string(int(u.time_band)),
                     std::to_string(u.past_disruptions), std::to_string(u.entry_ridership),
                     std::to_string(u.exit_ridership), u.has_speed ? fmt_double(u.avg_speed) : ""});
      }
    }
  }
}

void write_flows_csv(const Panel& panel, const StationTable& stations,
                     const std::filesystem::path& path) {
  CsvWriter w(path, kFlowsHeader);
  for (StationIdx s = 0; s < panel.n_stations; ++s) {
    for (int d = 0; d < panel.n_days; ++d) {
      for (int k = 0; k < panel.slots_per_day; ++k) {
        const auto& u = panel.units[panel.unit_index(s, d, k)];
        for (auto& [dest, c] : u.outward.counts)
          w.write_row({stations.id_of(s), format_date(panel.day0 + d), std::to_string(k), "out",
                       stations.id_of(dest), std::to_string(c)});
        for (auto& [orig, c] : u.inward.counts)
          w.write_row({stations.id_of(s), format_date(panel.day0 + d), std::to_string(k), "in",
                       stations.id_of(orig), std::to_string(c)});
      }
    }
  }
}

namespace {

std::uint32_t parse_u32(const std::string& s, const char* what) {
  std::uint32_t v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw std::runtime_error(std::string("bad ") + what + " value: " + s);
  return v;
}

double parse_f64(const std::string& s, const char* what) {
  double v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw std::runtime_error(std::string("bad ") + what + " value: " + s);
  return v;
}

}  // namespace

Panel load_panel(const std::filesystem::path& panel_path, const std::filesystem::path& flows_path,
                 const StationTable& stations, int interval_min) {
  CsvReader reader(panel_path);
  reader.require_header(kPanelHeader);

  struct Row {
    StationIdx s;
    DayNumber day;
    int slot;
    StudyUnit u;
  };
  std::vector<Row> rows;
  std::vector<std::string> f;
  DayNumber dmin = 0, dmax = 0;
  bool first = true;
  while (reader.next_row(f)) {
    if (f.size() != kPanelHeader.size())
      throw std::runtime_error(panel_path.string() + ": wrong field count");
    Row r;
    auto s = stations.find(f[0]);
    if (!s) throw std::runtime_error(panel_path.string() + ": unknown station " + f[0]);
    r.s = *s;
    auto day = parse_date(f[1]);
    if (!day) throw std::runtime_error(panel_path.string() + ": bad day " + f[1]);
    r.day = *day;
    r.slot = static_cast<int>(parse_u32(f[2], "slot"));
    r.u.treated = static_cast<std::uint8_t>(parse_u32(f[3], "W"));
    r.u.pre_entry = parse_u32(f[4], "pre_entry");
    r.u.pre_exit = parse_u32(f[5], "pre_exit");
    r.u.temp_c = static_cast<float>(parse_f64(f[6], "temp_c"));
    r.u.wind_kmh = static_cast<float>(parse_f64(f[7], "wind_kmh"));
    r.u.rain = static_cast<std::uint8_t>(parse_u32(f[8], "rain"));
    r.u.time_band = static_cast<std::uint8_t>(parse_u32(f[9], "time_band"));
    r.u.past_disruptions = parse_u32(f[10], "past_disruptions");
    r.u.entry_ridership = parse_u32(f[11], "entry");
    r.u.exit_ridership = parse_u32(f[12], "exit");
    if (f[13].empty()) {
      r.u.has_speed = false;
    } else {
      r.u.has_speed = true;
      r.u.avg_speed = parse_f64(f[13], "avg_speed");
    }
    if (first) {
      dmin = dmax = r.day;
      first = false;
    } else {
      dmin = std::min(dmin, r.day);
      dmax = std::max(dmax, r.day);
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw std::runtime_error(panel_path.string() + ": empty panel");

  Panel p;
  p.day0 = dmin;
  p.n_days = static_cast<int>(dmax - dmin + 1);
  p.interval_min = interval_min;
  p.slots_per_day = kServiceMinutes / interval_min;
  p.n_stations = stations.size();
  std::size_t n_units = static_cast<std::size_t>(p.n_stations) * p.n_days * p.slots_per_day;
  if (rows.size() != n_units)
    throw std::runtime_error(panel_path.string() + ": expected " + std::to_string(n_units) +
                             " units, found " + std::to_string(rows.size()));
  p.units.resize(n_units);
  std::vector<std::uint8_t> seen(n_units, 0);
  for (auto& r : rows) {
    if (r.slot < 0 || r.slot >= p.slots_per_day)
      throw std::runtime_error(panel_path.string() + ": slot out of range");
    std::size_t i = p.unit_index(r.s, static_cast<int>(r.day - p.day0), r.slot);
    if (seen[i]) throw std::runtime_error(panel_path.string() + ": duplicate unit row");
    seen[i] = 1;
    p.units[i] = std::move(r.u);
  }

  CsvReader fr(flows_path);
  fr.require_header(kFlowsHeader);
  while (fr.next_row(f)) {
    if (f.size() != kFlowsHeader.size())
      throw std::runtime_error(flows_path.string() + ": wrong field count");
    auto s = stations.find(f[0]);
    auto other = stations.find(f[4]);
    if (!s || !other) throw std::runtime_error(flows_path.string() + ": unknown station");
    auto day = parse_date(f[1]);
    if (!day) throw std::runtime_error(flows_path.string() + ": bad day " + f[1]);
    int slot = static_cast<int>(parse_u32(f[2], "slot"));
    std::uint32_t c = parse_u32(f[5], "count");
    auto& u = p.units[p.unit_index(*s, static_cast<int>(*day - p.day0), slot)];
    if (f[3] == "out") u.outward.counts.emplace_back(*other, c);
    else if (f[3] == "in") u.inward.counts.emplace_back(*other, c);
    else throw std::runtime_error(flows_path.string() + ": bad direction " + f[3]);
  }
  for (auto& u : p.units) {
    std::sort(u.outward.counts.begin(), u.outward.counts.end());
    std::sort(u.inward.counts.begin(), u.inward.counts.end());
  }
  return p;
}

}  // namespace metrovuln
