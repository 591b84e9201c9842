#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "metrovuln/panel.hpp"
#include "metrovuln/propensity.hpp"

namespace metrovuln {

enum class MatchMethod : std::uint8_t { NearestNeighbour, Subclassification };

// Controls for the speed outcome must have an observed speed; entry and flow
// outcomes accept any undisrupted unit.
enum class OutcomeRequirement : std::uint8_t { None, SpeedPresent };

struct MatchConfig {
  MatchMethod method = MatchMethod::NearestNeighbour;
  int m = 2;
  bool with_replacement = true;
  std::optional<double> caliper;
  int subclass_count = 10;
};

struct MatchedTreated {
  std::size_t unit = 0;
  std::vector<std::size_t> controls;
  bool short_pool = false;  // fewer eligible controls than requested
};

struct MatchSet {
  MatchConfig cfg;
  OutcomeRequirement requirement = OutcomeRequirement::None;
  std::vector<MatchedTreated> matched;      // ascending by treated unit index
  std::vector<std::size_t> unmatchable;     // treated units with empty pools
  std::vector<int> excluded_strata;         // subclassification only
};

// Candidate pool of a treated unit: same station, same slot index, different
// day, undisrupted, and satisfying the outcome requirement.
bool eligible_control(const Panel& panel, std::size_t treated_unit, std::size_t candidate,
                      OutcomeRequirement req);

// Nearest-neighbour matching on propensity scores. Within-pool ties are
// broken by smaller day gap, then earlier day. Without replacement, treated
// units are processed in ascending |score - pool median| order and chosen
// controls leave the pool.
MatchSet nn_match(const Panel& panel, const std::vector<double>& scores, const MatchConfig& cfg,
                  OutcomeRequirement req = OutcomeRequirement::None);

// Subclassification on quantiles of the treated-score distribution: each
// treated unit is associated with every eligible control whose score falls
// in the same stratum.
MatchSet subclass_match(const Panel& panel, const std::vector<double>& scores,
                        const MatchConfig& cfg, OutcomeRequirement req = OutcomeRequirement::None);

// Type-7 (linear interpolation) quantile of a sample.
double quantile(std::vector<double> values, double p);

struct BalanceRow {
  std::string covariate;
  double mean_diff_before = 0, mean_diff_after = 0;
  double smd_before = 0, smd_after = 0;
  bool degenerate = false;  // zero pooled sd with unequal means
};

struct BalanceReport {
  std::vector<BalanceRow> rows;             // design columns plus the score itself
  double improvement_pct = 0;               // over covariate rows, 100 = perfect
};

// Standardized mean differences before and after matching. The denominator
// is the pre-match pooled sd in both cases so the two numbers stay
// comparable. Matched controls are weighted by 1/M of their treated unit,
// mirroring the composite-control estimator.
BalanceReport balance_report(const DesignMatrix& design, const std::vector<double>& scores,
                             const MatchSet& ms);

}  // namespace metrovuln
