#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "metrovuln/matching.hpp"
#include "metrovuln/panel.hpp"

namespace metrovuln {

enum class ScalarOutcome : std::uint8_t { Entry, Speed };
enum class FlowDirection : std::uint8_t { Outward, Inward };
enum class DistanceKind : std::uint8_t { Euclidean, Hellinger, KL };

// Distances between trip distributions. Euclidean works on raw count
// vectors; Hellinger and KL compare probability vectors that must sum to
// one (within 1e-9) and be nonnegative.
double dist_euclidean(std::span<const double> r1, std::span<const double> r0);
double dist_hellinger(std::span<const double> p1, std::span<const double> p0);
double dist_kl(std::span<const double> p1, std::span<const double> p0);

// Count vector to probability vector; eps is added to every cell first.
// With eps = 0 an all-zero vector is rejected.
std::vector<double> counts_to_probs(std::vector<double> counts, double eps);

struct EffectEstimate {
  StationIdx station = 0;
  double tau = 0;
  std::uint32_t t_d = 0;        // treated slots the estimate averages over
  std::uint32_t n_unmatched = 0;
};

struct PooledEstimate {
  double tau = 0;
  double se = 0;                // Monte-Carlo standard error of the mean
  std::size_t n = 0;
};

// Matched-pair scalar ATE per station: observed treated outcome minus the
// mean of its matched controls, averaged over the station's treated slots.
// Stations whose matched count is zero are absent from the result.
std::vector<EffectEstimate> ate_scalar(const Panel& panel, const MatchSet& ms,
                                       ScalarOutcome outcome);

PooledEstimate pooled_ate_scalar(const Panel& panel, const MatchSet& ms, ScalarOutcome outcome);

// Unadjusted treated-vs-control mean difference over the whole panel.
PooledEstimate naive_scalar(const Panel& panel, ScalarOutcome outcome);

struct FlowOptions {
  double kl_eps = 1e-6;
  bool smoothing = true;        // applies to KL; HD smooths only degenerate all-zero sides
};

struct FlowAteResult {
  std::vector<EffectEstimate> per_station;
  std::size_t skipped_both_zero = 0;  // HD/KL units with two empty distributions
  std::size_t smoothed_units = 0;     // units where an all-zero side forced smoothing
};

// Distributional ATE: distance between the treated flow vector and the
// elementwise mean of its matched controls, averaged per station.
FlowAteResult ate_flow(const Panel& panel, const MatchSet& ms, FlowDirection dir,
                       DistanceKind dist, const FlowOptions& opts = {});

}  // namespace metrovuln
