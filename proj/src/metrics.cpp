#include "metrovuln/metrics.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace metrovuln {

const std::vector<std::string> kMetricNames = {
    "demand_loss",     "avg_speed_loss",     "gross_speed_loss",
    "demand_loss_pct", "avg_speed_loss_pct", "gross_speed_loss_pct",
    "ed_out",          "ed_in",              "hd_out",
    "hd_in",           "kl_out",             "kl_in"};

std::optional<double> metric_value(const VulnerabilityRecord& r, const std::string& metric) {
  if (metric == "demand_loss") return r.demand_loss;
  if (metric == "avg_speed_loss") return r.avg_speed_loss;
  if (metric == "gross_speed_loss") return r.gross_speed_loss;
  if (metric == "demand_loss_pct") return r.demand_loss_pct;
  if (metric == "avg_speed_loss_pct") return r.avg_speed_loss_pct;
  if (metric == "gross_speed_loss_pct") return r.gross_speed_loss_pct;
  if (metric == "ed_out") return r.ed_out;
  if (metric == "ed_in") return r.ed_in;
  if (metric == "hd_out") return r.hd_out;
  if (metric == "hd_in") return r.hd_in;
  if (metric == "kl_out") return r.kl_out;
  if (metric == "kl_in") return r.kl_in;
  std::string msg = "unknown metric \"" + metric + "\"; valid:";
  for (const auto& m : kMetricNames) msg += " " + m;
  throw std::invalid_argument(msg);
}

std::vector<VulnerabilityRecord> compute_metrics(const EstimatedEffects& effects,
                                                 const std::vector<StationBaseline>& baselines,
                                                 GrossRidership mode) {
  std::map<StationIdx, VulnerabilityRecord> by_station;
  auto rec = [&](StationIdx s) -> VulnerabilityRecord& {
    auto& r = by_station[s];
    r.station = s;
    return r;
  };

  for (const auto& e : effects.entry) {
    auto& r = rec(e.station);
    r.tau_entry = e.tau;
    r.t_d = e.t_d;
  }
  for (const auto& e : effects.speed) rec(e.station).tau_speed = e.tau;
  for (const auto& e : effects.ed_out) rec(e.station).ed_out = e.tau;
  for (const auto& e : effects.ed_in) rec(e.station).ed_in = e.tau;
  for (const auto& e : effects.hd_out) rec(e.station).hd_out = e.tau;
  for (const auto& e : effects.hd_in) rec(e.station).hd_in = e.tau;
  for (const auto& e : effects.kl_out) rec(e.station).kl_out = e.tau;
  for (const auto& e : effects.kl_in) rec(e.station).kl_in = e.tau;

  std::vector<VulnerabilityRecord> out;
  out.reserve(by_station.size());
  for (auto& [s, r] : by_station) {
    if (s >= baselines.size())
      throw std::logic_error("effect estimate for station without baseline");
    const auto& b = baselines[s];
    r.baseline_entry = b.mean_entry;
    r.baseline_speed = b.mean_speed;
    r.r_i = mode == GrossRidership::DisruptedIntervals
                ? b.disrupted_mean_entry
                : std::optional<double>(b.mean_entry);

    if (r.tau_entry) {
      r.demand_loss = -*r.tau_entry;
      if (b.mean_entry > 0) r.demand_loss_pct = *r.demand_loss / b.mean_entry * 100.0;
    }
    if (r.tau_speed) {
      r.avg_speed_loss = -*r.tau_speed;
      if (b.mean_speed && *b.mean_speed > 0)
        r.avg_speed_loss_pct = *r.avg_speed_loss / *b.mean_speed * 100.0;
      if (r.r_i) {
        r.gross_speed_loss = *r.avg_speed_loss * *r.r_i;
        // gross baseline: undisrupted mean speed carrying the undisrupted mean ridership
        if (b.mean_speed && *b.mean_speed > 0 && b.mean_entry > 0)
          r.gross_speed_loss_pct =
              *r.gross_speed_loss / (*b.mean_speed * b.mean_entry) * 100.0;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RankedStation> rank_stations(const std::vector<VulnerabilityRecord>& records,
                                         const StationTable& stations, const std::string& metric,
                                         std::size_t k) {
  std::vector<RankedStation> ranked;
  for (const auto& r : records) {
    auto v = metric_value(r, metric);
    if (v) ranked.push_back({r.station, *v});
  }
  std::sort(ranked.begin(), ranked.end(), [&](const RankedStation& a, const RankedStation& b) {
    if (a.value != b.value) return a.value > b.value;
    return stations.id_of(a.station) < stations.id_of(b.station);
  });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

}  // namespace metrovuln
