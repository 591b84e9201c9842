#include "metrovuln/effects.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace metrovuln {

double dist_euclidean(std::span<const double> r1, std::span<const double> r0) {
  if (r1.size() != r0.size()) throw std::invalid_argument("vector length mismatch");
  double s = 0;
  for (std::size_t k = 0; k < r1.size(); ++k) {
    double d = r1[k] - r0[k];
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {

void check_distribution(std::span<const double> p, const char* who) {
  double s = 0;
  for (double v : p) {
    if (v < 0) throw std::invalid_argument(std::string(who) + ": negative probability");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9)
    throw std::invalid_argument(std::string(who) + ": probabilities sum to " + std::to_string(s));
}

}  // namespace

double dist_hellinger(std::span<const double> p1, std::span<const double> p0) {
  if (p1.size() != p0.size()) throw std::invalid_argument("vector length mismatch");
  check_distribution(p1, "dist_hellinger");
  check_distribution(p0, "dist_hellinger");
  double s = 0;
  for (std::size_t k = 0; k < p1.size(); ++k) {
    double d = std::sqrt(p1[k]) - std::sqrt(p0[k]);
    s += d * d;
  }
  return std::sqrt(s) / std::numbers::sqrt2;
}

double dist_kl(std::span<const double> p1, std::span<const double> p0) {
  if (p1.size() != p0.size()) throw std::invalid_argument("vector length mismatch");
  check_distribution(p1, "dist_kl");
  check_distribution(p0, "dist_kl");
  double s = 0;
  for (std::size_t k = 0; k < p1.size(); ++k) {
    if (p1[k] == 0) continue;
    if (p0[k] == 0)
      throw std::domain_error("undefined divergence: zero reference mass where p1 > 0");
    s += p1[k] * std::log(p1[k] / p0[k]);
  }
  return s;
}

std::vector<double> counts_to_probs(std::vector<double> counts, double eps) {
  double total = 0;
  for (auto& c : counts) {
    c += eps;
    total += c;
  }
  if (total <= 0) throw std::invalid_argument("cannot normalize an all-zero count vector");
  for (auto& c : counts) c /= total;
  return counts;
}

namespace {

double scalar_outcome(const StudyUnit& u, ScalarOutcome o) {
  if (o == ScalarOutcome::Entry) return u.entry_ridership;
  if (!u.has_speed) throw std::logic_error("speed outcome requested on a unit without speed");
  return u.avg_speed;
}

std::vector<EffectEstimate> finalize(const Panel& panel, const MatchSet& ms,
                                     const std::map<StationIdx, std::pair<double, std::uint32_t>>& acc) {
  std::vector<std::uint32_t> unmatched(panel.n_stations, 0);
  for (auto u : ms.unmatchable) ++unmatched[panel.station_of(u)];
  std::vector<EffectEstimate> out;
  for (const auto& [station, sums] : acc) {
    EffectEstimate e;
    e.station = station;
    e.tau = sums.first / sums.second;
    e.t_d = sums.second;
    e.n_unmatched = unmatched[station];
    out.push_back(e);
  }
  return out;
}

}  // namespace

std::vector<EffectEstimate> ate_scalar(const Panel& panel, const MatchSet& ms,
                                       ScalarOutcome outcome) {
  std::map<StationIdx, std::pair<double, std::uint32_t>> acc;
  for (const auto& m : ms.matched) {
    double y1 = scalar_outcome(panel.units[m.unit], outcome);
    double y0 = 0;
    for (auto c : m.controls) y0 += scalar_outcome(panel.units[c], outcome);
    y0 /= static_cast<double>(m.controls.size());
    auto& [sum, count] = acc[panel.station_of(m.unit)];
    sum += y1 - y0;
    ++count;
  }
  return finalize(panel, ms, acc);
}

PooledEstimate pooled_ate_scalar(const Panel& panel, const MatchSet& ms, ScalarOutcome outcome) {
  PooledEstimate p;
  double sum = 0, sumsq = 0;
  for (const auto& m : ms.matched) {
    double y1 = scalar_outcome(panel.units[m.unit], outcome);
    double y0 = 0;
    for (auto c : m.controls) y0 += scalar_outcome(panel.units[c], outcome);
    y0 /= static_cast<double>(m.controls.size());
    double eff = y1 - y0;
    sum += eff;
    sumsq += eff * eff;
    ++p.n;
  }
  if (p.n == 0) return p;
  p.tau = sum / static_cast<double>(p.n);
  if (p.n > 1) {
    double var = (sumsq - sum * sum / static_cast<double>(p.n)) / static_cast<double>(p.n - 1);
    p.se = std::sqrt(std::max(var, 0.0) / static_cast<double>(p.n));
  }
  return p;
}

PooledEstimate naive_scalar(const Panel& panel, ScalarOutcome outcome) {
  double s1 = 0, s0 = 0, q1 = 0, q0 = 0;
  std::size_t n1 = 0, n0 = 0;
  for (const auto& u : panel.units) {
    if (outcome == ScalarOutcome::Speed && !u.has_speed) continue;
    double y = scalar_outcome(u, outcome);
    if (u.treated) {
      s1 += y;
      q1 += y * y;
      ++n1;
    } else {
      s0 += y;
      q0 += y * y;
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0) throw std::runtime_error("naive estimate needs both classes");
  PooledEstimate p;
  p.n = n1 + n0;
  double m1 = s1 / n1, m0 = s0 / n0;
  p.tau = m1 - m0;
  double v1 = n1 > 1 ? (q1 - s1 * s1 / n1) / (n1 - 1) : 0;
  double v0 = n0 > 1 ? (q0 - s0 * s0 / n0) / (n0 - 1) : 0;
  p.se = std::sqrt(v1 / n1 + v0 / n0);
  return p;
}

FlowAteResult ate_flow(const Panel& panel, const MatchSet& ms, FlowDirection dir,
                       DistanceKind dist, const FlowOptions& opts) {
  FlowAteResult result;
  std::map<StationIdx, std::pair<double, std::uint32_t>> acc;
  std::vector<double> v1, v0;
  const StationIdx n = panel.n_stations;

  for (const auto& m : ms.matched) {
    const auto& flow1 =
        dir == FlowDirection::Outward ? panel.units[m.unit].outward : panel.units[m.unit].inward;
    flow1.densify(v1, n);
    v0.assign(n, 0.0);
    for (auto c : m.controls) {
      const auto& f =
          dir == FlowDirection::Outward ? panel.units[c].outward : panel.units[c].inward;
      for (auto& [k, cnt] : f.counts) v0[k] += cnt;
    }
    double inv_m = 1.0 / static_cast<double>(m.controls.size());
    for (auto& v : v0) v *= inv_m;

    double total1 = 0, total0 = 0;
    for (StationIdx k = 0; k < n; ++k) {
      total1 += v1[k];
      total0 += v0[k];
    }

    double d = 0;
    bool contributes = true;
    if (dist == DistanceKind::Euclidean) {
      d = dist_euclidean(v1, v0);  // two empty vectors give 0 here
    } else if (total1 == 0 && total0 == 0) {
      contributes = false;
      ++result.skipped_both_zero;
    } else {
      double eps = 0;
      if (dist == DistanceKind::KL && opts.smoothing) {
        eps = opts.kl_eps;
      }
      if (total1 == 0 || total0 == 0) {
        // one empty side: fall back to smoothing so the distance exists
        eps = opts.kl_eps > 0 ? opts.kl_eps : 1e-6;
        ++result.smoothed_units;
      }
      auto p1 = counts_to_probs(v1, eps);
      auto p0 = counts_to_probs(v0, eps);
      d = dist == DistanceKind::Hellinger ? dist_hellinger(p1, p0) : dist_kl(p1, p0);
    }
    if (contributes) {
      auto& [sum, count] = acc[panel.station_of(m.unit)];
      sum += d;
      ++count;
    }
  }
  result.per_station = finalize(panel, ms, acc);
  return result;
}

}  // namespace metrovuln
