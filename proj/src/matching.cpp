#include "metrovuln/matching.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metrovuln {

bool eligible_control(const Panel& panel, std::size_t treated_unit, std::size_t candidate,
                      OutcomeRequirement req) {
  const auto& c = panel.units[candidate];
  if (c.treated) return false;
  if (candidate == treated_unit) return false;
  if (panel.station_of(candidate) != panel.station_of(treated_unit)) return false;
  if (panel.slot_of_unit(candidate) != panel.slot_of_unit(treated_unit)) return false;
  if (panel.day_of_unit(candidate) == panel.day_of_unit(treated_unit)) return false;
  if (req == OutcomeRequirement::SpeedPresent && !c.has_speed) return false;
  return true;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(values.begin(), values.end());
  if (p <= 0) return values.front();
  if (p >= 1) return values.back();
  double h = (static_cast<double>(values.size()) - 1) * p;
  std::size_t lo = static_cast<std::size_t>(h);
  double frac = h - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

namespace {

// Candidate days for one treated unit, cheapest-first under the tie rules.
struct Candidate {
  std::size_t unit;
  double dist;
  int day_gap;
  int day;
};

bool candidate_less(const Candidate& a, const Candidate& b) {
  if (a.dist != b.dist) return a.dist < b.dist;
  if (a.day_gap != b.day_gap) return a.day_gap < b.day_gap;
  return a.day < b.day;
}

std::vector<std::size_t> pool_of(const Panel& panel, std::size_t treated, OutcomeRequirement req) {
  std::vector<std::size_t> pool;
  StationIdx s = panel.station_of(treated);
  int slot = panel.slot_of_unit(treated);
  for (int d = 0; d < panel.n_days; ++d) {
    std::size_t c = panel.unit_index(s, d, slot);
    if (eligible_control(panel, treated, c, req)) pool.push_back(c);
  }
  return pool;
}

}  // namespace

MatchSet nn_match(const Panel& panel, const std::vector<double>& scores, const MatchConfig& cfg,
                  OutcomeRequirement req) {
  if (scores.size() != panel.size()) throw std::invalid_argument("scores do not match panel");
  if (cfg.m < 1) throw std::invalid_argument("match ratio M must be >= 1");
  MatchSet ms;
  ms.cfg = cfg;
  ms.requirement = req;

  std::vector<std::size_t> treated_units;
  for (std::size_t i = 0; i < panel.size(); ++i)
    if (panel.units[i].treated) treated_units.push_back(i);

  std::vector<std::vector<std::size_t>> pools(treated_units.size());
  for (std::size_t t = 0; t < treated_units.size(); ++t)
    pools[t] = pool_of(panel, treated_units[t], req);

  // Processing order matters only without replacement: closest to the pool
  // median first.
  std::vector<std::size_t> order(treated_units.size());
  for (std::size_t t = 0; t < order.size(); ++t) order[t] = t;
  if (!cfg.with_replacement) {
    std::vector<double> median_gap(treated_units.size(), 0.0);
    for (std::size_t t = 0; t < treated_units.size(); ++t) {
      if (pools[t].empty()) continue;
      std::vector<double> pool_scores;
      pool_scores.reserve(pools[t].size());
      for (auto c : pools[t]) pool_scores.push_back(scores[c]);
      median_gap[t] = std::abs(scores[treated_units[t]] - quantile(std::move(pool_scores), 0.5));
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (median_gap[a] != median_gap[b]) return median_gap[a] < median_gap[b];
      return treated_units[a] < treated_units[b];
    });
  }

  std::vector<std::uint8_t> taken(panel.size(), 0);
  std::vector<std::pair<std::size_t, MatchedTreated>> results;  // keyed by treated unit
  for (std::size_t t : order) {
    std::size_t unit = treated_units[t];
    std::vector<Candidate> cands;
    cands.reserve(pools[t].size());
    for (auto c : pools[t]) {
      if (!cfg.with_replacement && taken[c]) continue;
      double dist = std::abs(scores[c] - scores[unit]);
      if (cfg.caliper && dist > *cfg.caliper) continue;
      cands.push_back({c, dist, std::abs(panel.day_of_unit(c) - panel.day_of_unit(unit)),
                       panel.day_of_unit(c)});
    }
    if (cands.empty()) {
      ms.unmatchable.push_back(unit);
      continue;
    }
    std::size_t take = std::min<std::size_t>(cfg.m, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + take, cands.end(), candidate_less);
    MatchedTreated m;
    m.unit = unit;
    m.short_pool = cands.size() < static_cast<std::size_t>(cfg.m);
    for (std::size_t k = 0; k < take; ++k) {
      m.controls.push_back(cands[k].unit);
      if (!cfg.with_replacement) taken[cands[k].unit] = 1;
    }
    results.emplace_back(unit, std::move(m));
  }

  std::sort(results.begin(), results.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  ms.matched.reserve(results.size());
  for (auto& [_, m] : results) ms.matched.push_back(std::move(m));
  std::sort(ms.unmatchable.begin(), ms.unmatchable.end());
  return ms;
}

MatchSet subclass_match(const Panel& panel, const std::vector<double>& scores,
                        const MatchConfig& cfg, OutcomeRequirement req) {
  if (scores.size() != panel.size()) throw std::invalid_argument("scores do not match panel");
  if (cfg.subclass_count < 1) throw std::invalid_argument("subclass_count must be >= 1");
  MatchSet ms;
  ms.cfg = cfg;
  ms.requirement = req;

  std::vector<std::size_t> treated_units;
  std::vector<double> treated_scores;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    if (panel.units[i].treated) {
      treated_units.push_back(i);
      treated_scores.push_back(scores[i]);
    }
  }
  if (treated_units.empty()) return ms;

  // Stratum boundaries at treated-score quantiles; a score equal to a
  // boundary falls in the lower stratum.
  std::vector<double> bounds;
  for (int j = 1; j < cfg.subclass_count; ++j)
    bounds.push_back(quantile(treated_scores, static_cast<double>(j) / cfg.subclass_count));
  auto stratum_of = [&](double s) {
    return static_cast<int>(std::lower_bound(bounds.begin(), bounds.end(), s) - bounds.begin());
  };

  std::vector<std::size_t> treated_in_stratum(cfg.subclass_count, 0);
  std::vector<std::size_t> matched_in_stratum(cfg.subclass_count, 0);
  for (std::size_t unit : treated_units) {
    int st = stratum_of(scores[unit]);
    ++treated_in_stratum[st];
    MatchedTreated m;
    m.unit = unit;
    for (auto c : pool_of(panel, unit, req))
      if (stratum_of(scores[c]) == st) m.controls.push_back(c);
    if (m.controls.empty()) {
      ms.unmatchable.push_back(unit);
      continue;
    }
    ++matched_in_stratum[st];
    ms.matched.push_back(std::move(m));
  }
  for (int st = 0; st < cfg.subclass_count; ++st)
    if (treated_in_stratum[st] > 0 && matched_in_stratum[st] == 0) ms.excluded_strata.push_back(st);
  return ms;
}

BalanceReport balance_report(const DesignMatrix& design, const std::vector<double>& scores,
                             const MatchSet& ms) {
  const Eigen::Index n = design.x.rows();
  if (static_cast<std::size_t>(n) != scores.size())
    throw std::invalid_argument("design and scores disagree on row count");
  const std::size_t p = design.columns.size();

  // column values with the score appended as a final pseudo-covariate
  auto value = [&](std::size_t row, std::size_t col) {
    return col < p ? design.x(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col))
                   : scores[row];
  };

  BalanceReport report;
  report.rows.resize(p + 1);
  for (std::size_t c = 0; c < p; ++c) report.rows[c].covariate = design.columns[c];
  report.rows[p].covariate = "propensity_score";

  double n_t = 0, n_c = 0;
  for (Eigen::Index i = 0; i < n; ++i) (design.y[i] > 0.5 ? n_t : n_c) += 1;
  if (n_t == 0 || n_c == 0) throw std::runtime_error("balance undefined for single-class data");

  double sum_pre = 0, sum_post = 0;
  for (std::size_t c = 0; c <= p; ++c) {
    double mt = 0, mc = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      (design.y[i] > 0.5 ? mt : mc) += value(static_cast<std::size_t>(i), c);
    mt /= n_t;
    mc /= n_c;
    double vt = 0, vc = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double d = value(static_cast<std::size_t>(i), c) - (design.y[i] > 0.5 ? mt : mc);
      (design.y[i] > 0.5 ? vt : vc) += d * d;
    }
    vt /= std::max(n_t - 1, 1.0);
    vc /= std::max(n_c - 1, 1.0);
    double pooled_sd = std::sqrt((vt + vc) / 2.0);

    double mt_post = 0, mc_post = 0, w_post = 0;
    for (const auto& m : ms.matched) {
      mt_post += value(m.unit, c);
      double w = 1.0 / static_cast<double>(m.controls.size());
      for (auto ctl : m.controls) mc_post += w * value(ctl, c);
      w_post += 1;
    }
    if (w_post > 0) {
      mt_post /= w_post;
      mc_post /= w_post;
    }

    auto& row = report.rows[c];
    row.mean_diff_before = std::abs(mt - mc);
    row.mean_diff_after = std::abs(mt_post - mc_post);
    if (pooled_sd == 0) {
      if (row.mean_diff_before == 0 && row.mean_diff_after == 0) {
        row.smd_before = row.smd_after = 0;
      } else {
        row.degenerate = true;
      }
    } else {
      row.smd_before = row.mean_diff_before / pooled_sd;
      row.smd_after = row.mean_diff_after / pooled_sd;
    }
    if (c < p) {
      sum_pre += row.mean_diff_before;
      sum_post += row.mean_diff_after;
    }
  }
  report.improvement_pct = sum_pre > 0 ? (1.0 - sum_post / sum_pre) * 100.0 : 100.0;
  return report;
}

}  // namespace metrovuln
