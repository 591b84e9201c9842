#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metrovuln/effects.hpp"

namespace metrovuln {

// Which ridership enters the gross-speed metric: the mean entry ridership of
// the station's disrupted intervals (the quoted definition) or the
// undisrupted baseline mean.
enum class GrossRidership : std::uint8_t { DisruptedIntervals, Baseline };

struct VulnerabilityRecord {
  StationIdx station = 0;

  // raw matched-pair effects, kept for audit
  std::optional<double> tau_entry, tau_speed;

  // losses; positive = worse
  std::optional<double> demand_loss;            // d_i
  std::optional<double> avg_speed_loss;         // s_avg, km/h
  std::optional<double> gross_speed_loss;       // s_gross, passenger-km/h
  std::optional<double> ed_out, ed_in, hd_out, hd_in, kl_out, kl_in;

  // relative to undisrupted baselines, in percent
  std::optional<double> demand_loss_pct;
  std::optional<double> avg_speed_loss_pct;
  std::optional<double> gross_speed_loss_pct;

  std::optional<double> r_i;                    // ridership used by the gross metric
  double baseline_entry = 0;
  std::optional<double> baseline_speed;
  std::uint32_t t_d = 0;                        // matched treated slots behind the entry effect
  bool imputed = false;
};

struct EstimatedEffects {
  std::vector<EffectEstimate> entry, speed;
  std::vector<EffectEstimate> ed_out, ed_in, hd_out, hd_in, kl_out, kl_in;
};

// One record per station holding at least one estimate. Demand and speed
// effects flip sign so that positive values denote losses.
std::vector<VulnerabilityRecord> compute_metrics(const EstimatedEffects& effects,
                                                 const std::vector<StationBaseline>& baselines,
                                                 GrossRidership mode = GrossRidership::DisruptedIntervals);

extern const std::vector<std::string> kMetricNames;

std::optional<double> metric_value(const VulnerabilityRecord& r, const std::string& metric);

struct RankedStation {
  StationIdx station = 0;
  double value = 0;
};

// Descending sort on the chosen metric; ties break on the station id string.
// Records lacking the metric are left out. Unknown names throw, listing the
// valid ones.
std::vector<RankedStation> rank_stations(const std::vector<VulnerabilityRecord>& records,
                                         const StationTable& stations, const std::string& metric,
                                         std::size_t k);

}  // namespace metrovuln
