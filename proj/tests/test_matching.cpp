#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "metrovuln/matching.hpp"
#include "test_util.hpp"

using namespace metrovuln;
using testutil::make_panel;

namespace {

// one station, one slot per day: unit index == day index
Panel day_line(const std::vector<std::uint8_t>& treated) {
  auto p = make_panel(1, static_cast<int>(treated.size()), 1);
  for (std::size_t d = 0; d < treated.size(); ++d) p.units[d].treated = treated[d];
  return p;
}

}  // namespace

TEST_CASE("nearest two by score distance") {
  auto p = day_line({1, 0, 0, 0});
  std::vector<double> scores = {0.50, 0.48, 0.55, 0.10};
  MatchConfig cfg;
  cfg.m = 2;
  auto ms = nn_match(p, scores, cfg);
  REQUIRE(ms.matched.size() == 1);
  REQUIRE(ms.matched[0].controls.size() == 2);
  CHECK(ms.matched[0].controls[0] == 1);  // |0.48-0.50| = 0.02
  CHECK(ms.matched[0].controls[1] == 2);  // |0.55-0.50| = 0.05
  CHECK(!ms.matched[0].short_pool);
  CHECK(ms.unmatchable.empty());
}

TEST_CASE("score ties break on day gap, then earlier day") {
  // treated on day 0; candidates day 1 and day 6 at equal distance
  auto p = day_line({1, 0, 0, 0, 0, 0, 0});
  std::vector<double> scores = {0.50, 0.52, 0.30, 0.30, 0.30, 0.30, 0.48};
  MatchConfig cfg;
  cfg.m = 1;
  auto ms = nn_match(p, scores, cfg);
  REQUIRE(ms.matched.size() == 1);
  CHECK(ms.matched[0].controls[0] == 1);  // day gap 1 beats day gap 6

  // equal distance and equal gap resolves to the earlier day
  auto p2 = day_line({0, 0, 1, 0, 0});
  std::vector<double> scores2 = {0.40, 0.52, 0.50, 0.52, 0.40};
  auto ms2 = nn_match(p2, scores2, cfg);
  CHECK(ms2.matched[0].controls[0] == 1);
}

TEST_CASE("candidate pool honors station, slot, day and treatment") {
  // 2 stations x 3 days x 2 slots
  auto p = make_panel(2, 3, 2);
  // treat station 0, day 0, slot 0
  p.units[p.unit_index(0, 0, 0)].treated = 1;
  // make another treated unit in the pool days
  p.units[p.unit_index(0, 2, 0)].treated = 1;
  std::vector<double> scores(p.size(), 0.5);
  MatchConfig cfg;
  cfg.m = 5;
  auto ms = nn_match(p, scores, cfg);
  REQUIRE(ms.matched.size() == 2);
  // only (0, day 1, slot 0) is eligible for either treated unit
  for (const auto& m : ms.matched) {
    REQUIRE(m.controls.size() == 1);
    CHECK(m.controls[0] == p.unit_index(0, 1, 0));
    CHECK(m.short_pool);
    for (auto c : m.controls) CHECK(eligible_control(p, m.unit, c, ms.requirement));
  }
}

TEST_CASE("speed requirement filters controls without speed") {
  auto p = day_line({1, 0, 0});
  p.units[0].has_speed = true;
  p.units[1].has_speed = false;
  p.units[2].has_speed = true;
  std::vector<double> scores = {0.5, 0.5, 0.1};
  MatchConfig cfg;
  cfg.m = 1;
  auto loose = nn_match(p, scores, cfg, OutcomeRequirement::None);
  CHECK(loose.matched[0].controls[0] == 1);
  auto strict = nn_match(p, scores, cfg, OutcomeRequirement::SpeedPresent);
  CHECK(strict.matched[0].controls[0] == 2);
}

TEST_CASE("caliper can empty the pool; units become unmatchable") {
  auto p = day_line({1, 0, 0});
  std::vector<double> scores = {0.9, 0.2, 0.1};
  MatchConfig cfg;
  cfg.m = 1;
  cfg.caliper = 0.05;
  auto ms = nn_match(p, scores, cfg);
  CHECK(ms.matched.empty());
  REQUIRE(ms.unmatchable.size() == 1);
  CHECK(ms.unmatchable[0] == 0);
}

TEST_CASE("without replacement processes by median gap and removes picks") {
  auto p = day_line({1, 1, 0, 0, 0});
  //                 d0    d1    d2    d3    d4
  std::vector<double> scores = {0.49, 0.47, 0.50, 0.48, 0.10};
  MatchConfig cfg;
  cfg.m = 1;
  cfg.with_replacement = false;
  auto ms = nn_match(p, scores, cfg);
  REQUIRE(ms.matched.size() == 2);
  // pools for both treated: {d2, d3, d4}, median 0.48
  // d0 gap |0.49-0.48| = 0.01, d1 gap |0.47-0.48| = 0.01, tie -> d0 first
  // d0 takes d3 (0.01 beats 0.01 of d2? |0.50-0.49|=0.01 vs |0.48-0.49|=0.01;
  // tie on distance -> day gap 2 for d2 vs 3 for d3 -> d2)
  CHECK(ms.matched[0].unit == 0);
  CHECK(ms.matched[0].controls[0] == 2);
  // d1 then takes its nearest remaining: |0.48-0.47|=0.01 -> d3
  CHECK(ms.matched[1].unit == 1);
  CHECK(ms.matched[1].controls[0] == 3);

  // with replacement both would share d2/d3 freely and results are rerun-stable
  cfg.with_replacement = true;
  auto ms_a = nn_match(p, scores, cfg);
  auto ms_b = nn_match(p, scores, cfg);
  REQUIRE(ms_a.matched.size() == ms_b.matched.size());
  for (std::size_t i = 0; i < ms_a.matched.size(); ++i)
    CHECK(ms_a.matched[i].controls == ms_b.matched[i].controls);
}

TEST_CASE("type-7 quantiles") {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i;
  CHECK(quantile(v, 0.1) == doctest::Approx(9.9));
  CHECK(quantile(v, 0.5) == doctest::Approx(49.5));
  CHECK(quantile(v, 0.0) == 0.0);
  CHECK(quantile(v, 1.0) == 99.0);
  CHECK(quantile({5.0}, 0.5) == 5.0);
}

TEST_CASE("subclassification strata") {
  SUBCASE("equal scores collapse to one stratum") {
    auto p = day_line({1, 1, 0, 0, 0, 0});
    std::vector<double> scores(6, 0.42);
    MatchConfig cfg;
    cfg.method = MatchMethod::Subclassification;
    cfg.subclass_count = 10;
    auto ms = subclass_match(p, scores, cfg);
    REQUIRE(ms.matched.size() == 2);
    for (const auto& m : ms.matched) CHECK(m.controls.size() == 4);
    CHECK(ms.excluded_strata.empty());
  }
  SUBCASE("controls outside the treated stratum are excluded") {
    auto p = day_line({1, 1, 0, 0, 0, 0});
    //                         t0    t1    c     c     c     c
    std::vector<double> scores{0.10, 0.90, 0.12, 0.11, 0.88, 0.50};
    MatchConfig cfg;
    cfg.method = MatchMethod::Subclassification;
    cfg.subclass_count = 2;  // boundary at the treated median 0.5
    auto ms = subclass_match(p, scores, cfg);
    REQUIRE(ms.matched.size() == 2);
    CHECK(ms.matched[0].unit == 0);
    CHECK(ms.matched[0].controls == std::vector<std::size_t>{2, 3, 5});
    CHECK(ms.matched[1].unit == 1);
    CHECK(ms.matched[1].controls == std::vector<std::size_t>{4});
  }
  SUBCASE("stratum with treated units but no controls is flagged") {
    auto p = day_line({1, 1, 0, 0});
    std::vector<double> scores{0.1, 0.9, 0.12, 0.15};
    MatchConfig cfg;
    cfg.method = MatchMethod::Subclassification;
    cfg.subclass_count = 2;
    auto ms = subclass_match(p, scores, cfg);
    CHECK(ms.matched.size() == 1);
    CHECK(ms.unmatchable.size() == 1);
    REQUIRE(ms.excluded_strata.size() == 1);
    CHECK(ms.excluded_strata[0] == 1);
  }
}

TEST_CASE("balance improvement endpoints") {
  // design with one covariate; 2 treated, 4 controls
  DesignMatrix d;
  d.columns = {"x"};
  d.x.resize(6, 1);
  d.y.resize(6);
  // treated at days 0,1 with x = 10; controls x = {10, 10, 2, 2}
  double xs[6] = {10, 10, 10, 10, 2, 2};
  std::uint8_t ws[6] = {1, 1, 0, 0, 0, 0};
  for (int i = 0; i < 6; ++i) {
    d.x(i, 0) = xs[i];
    d.y[i] = ws[i];
  }
  std::vector<double> scores = {0.8, 0.8, 0.8, 0.8, 0.1, 0.1};

  MatchSet identical;
  identical.cfg.m = 1;
  identical.matched = {{0, {2}, false}, {1, {3}, false}};
  auto perfect = balance_report(d, scores, identical);
  CHECK(perfect.improvement_pct == doctest::Approx(100.0));
  CHECK(perfect.rows[0].smd_after == doctest::Approx(0.0));
  CHECK(perfect.rows[0].smd_before > 0);

  MatchSet full_pool;
  full_pool.cfg.m = 4;
  full_pool.matched = {{0, {2, 3, 4, 5}, false}, {1, {2, 3, 4, 5}, false}};
  auto none = balance_report(d, scores, full_pool);
  CHECK(none.improvement_pct == doctest::Approx(0.0));
  CHECK(none.rows[0].smd_after == doctest::Approx(none.rows[0].smd_before));
}

TEST_CASE("degenerate covariates are flagged, not divided by zero") {
  DesignMatrix d;
  d.columns = {"flat", "split"};
  d.x.resize(4, 2);
  d.y.resize(4);
  // "flat" is 3 everywhere; "split" is constant per group but differs between them
  double split[4] = {1, 1, 0, 0};
  std::uint8_t ws[4] = {1, 1, 0, 0};
  for (int i = 0; i < 4; ++i) {
    d.x(i, 0) = 3.0;
    d.x(i, 1) = split[i];
    d.y[i] = ws[i];
  }
  std::vector<double> scores = {0.5, 0.5, 0.5, 0.5};
  MatchSet ms;
  ms.cfg.m = 1;
  ms.matched = {{0, {2}, false}, {1, {3}, false}};
  auto r = balance_report(d, scores, ms);
  CHECK(!r.rows[0].degenerate);  // equal means, smd 0
  CHECK(r.rows[0].smd_before == 0.0);
  CHECK(r.rows[1].degenerate);  // unequal means over zero pooled sd
}

TEST_CASE("score smd never grows after matching on a confounded panel") {
  // station 0, 12 days, 1 slot; scores trend upward, treatment at high scores
  auto p = day_line({0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 1, 0});
  std::vector<double> scores;
  for (int i = 0; i < 12; ++i) scores.push_back(0.1 + 0.05 * i);
  DesignMatrix d;
  d.columns = {};
  d.x.resize(12, 0);
  d.y.resize(12);
  for (int i = 0; i < 12; ++i) d.y[i] = p.units[i].treated;
  MatchConfig cfg;
  cfg.m = 2;
  auto ms = nn_match(p, scores, cfg);
  auto r = balance_report(d, scores, ms);
  const auto& score_row = r.rows.back();
  CHECK(score_row.covariate == "propensity_score");
  CHECK(score_row.smd_after <= score_row.smd_before);
}
