#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "metrovuln/metrics.hpp"
#include "test_util.hpp"

using namespace metrovuln;

namespace {

StationTable table(const std::vector<std::string>& ids) {
  StationTable t;
  for (const auto& id : ids) {
    StationAttrs a;
    a.id = id;
    t.by_id[id] = static_cast<StationIdx>(t.rows.size());
    t.rows.push_back(std::move(a));
  }
  return t;
}

std::vector<StationBaseline> baselines(std::size_t n, double entry, double speed, double r_i) {
  std::vector<StationBaseline> b(n);
  for (auto& x : b) {
    x.mean_entry = entry;
    x.mean_speed = speed;
    x.disrupted_mean_entry = r_i;
    x.n_undisrupted = 100;
    x.n_disrupted = 4;
  }
  return b;
}

}  // namespace

TEST_CASE("demand loss flips the sign and normalizes against the baseline") {
  EstimatedEffects e;
  e.entry.push_back({0, -103.4, 12, 0});
  auto recs = compute_metrics(e, baselines(1, 795.4, 25.0, 50.0));
  REQUIRE(recs.size() == 1);
  const auto& r = recs[0];
  CHECK(*r.demand_loss == doctest::Approx(103.4));
  CHECK(*r.demand_loss_pct == doctest::Approx(13.0).epsilon(1e-3));
  CHECK(*r.tau_entry == doctest::Approx(-103.4));
  CHECK(r.t_d == 12);
  CHECK(!r.imputed);
}

TEST_CASE("speed losses and the gross product") {
  EstimatedEffects e;
  e.entry.push_back({0, -10.0, 3, 0});
  e.speed.push_back({0, -2.0, 3, 0});
  SUBCASE("disrupted-interval ridership") {
    auto recs = compute_metrics(e, baselines(1, 100.0, 20.0, 10.0));
    const auto& r = recs[0];
    CHECK(*r.avg_speed_loss == doctest::Approx(2.0));
    CHECK(*r.gross_speed_loss == doctest::Approx(20.0));
    CHECK(*r.r_i == doctest::Approx(10.0));
    CHECK(*r.avg_speed_loss_pct == doctest::Approx(10.0));
    // gross baseline is mean speed times mean undisrupted entry
    CHECK(*r.gross_speed_loss_pct == doctest::Approx(20.0 / (20.0 * 100.0) * 100.0));
  }
  SUBCASE("baseline ridership alternative") {
    auto recs = compute_metrics(e, baselines(1, 100.0, 20.0, 10.0), GrossRidership::Baseline);
    CHECK(*recs[0].r_i == doctest::Approx(100.0));
    CHECK(*recs[0].gross_speed_loss == doctest::Approx(200.0));
  }
  SUBCASE("zero speed effect zeroes both speed metrics") {
    e.speed[0].tau = 0.0;
    auto recs = compute_metrics(e, baselines(1, 100.0, 20.0, 10.0));
    CHECK(*recs[0].avg_speed_loss == 0.0);
    CHECK(*recs[0].gross_speed_loss == 0.0);
  }
}

TEST_CASE("flow effects carry through unchanged") {
  EstimatedEffects e;
  e.entry.push_back({0, -5.0, 2, 0});
  e.hd_out.push_back({0, 0.42, 2, 0});
  e.kl_in.push_back({0, 1.7, 2, 0});
  auto recs = compute_metrics(e, baselines(1, 50, 20, 8));
  CHECK(*recs[0].hd_out == doctest::Approx(0.42));
  CHECK(*recs[0].kl_in == doctest::Approx(1.7));
  CHECK(!recs[0].ed_out.has_value());
}

TEST_CASE("normalization identity holds to 1e-9") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 50; ++t) {
    EstimatedEffects e;
    double tau = -static_cast<double>(rng() % 1000) / 7.0;
    double base = 1.0 + static_cast<double>(rng() % 900);
    e.entry.push_back({0, tau, 1, 0});
    auto recs = compute_metrics(e, baselines(1, base, 20.0, 5.0));
    CHECK(std::abs(*recs[0].demand_loss_pct - (*recs[0].demand_loss / base * 100.0)) < 1e-9);
  }
}

TEST_CASE("ranking sorts, truncates, and breaks ties by id") {
  auto st = table({"A", "B", "C"});
  std::vector<VulnerabilityRecord> recs(3);
  for (int i = 0; i < 3; ++i) recs[i].station = static_cast<StationIdx>(i);
  recs[0].demand_loss = 5;
  recs[1].demand_loss = 9;
  recs[2].demand_loss = 1;

  auto top2 = rank_stations(recs, st, "demand_loss", 2);
  REQUIRE(top2.size() == 2);
  CHECK(st.id_of(top2[0].station) == "B");
  CHECK(st.id_of(top2[1].station) == "A");

  auto all = rank_stations(recs, st, "demand_loss", 99);
  CHECK(all.size() == 3);  // no padding

  recs[0].demand_loss = 9;  // tie with B: id order A before B
  auto tied = rank_stations(recs, st, "demand_loss", 3);
  CHECK(st.id_of(tied[0].station) == "A");
  CHECK(st.id_of(tied[1].station) == "B");

  CHECK_THROWS_WITH_AS(rank_stations(recs, st, "bogus", 3), doctest::Contains("demand_loss"),
                       std::invalid_argument);
}

TEST_CASE("argmax is invariant under positive rescaling") {
  auto st = table({"A", "B", "C", "D"});
  std::vector<VulnerabilityRecord> recs(4);
  std::mt19937_64 rng(77);
  for (int i = 0; i < 4; ++i) {
    recs[i].station = static_cast<StationIdx>(i);
    recs[i].kl_out = static_cast<double>(rng() % 100) / 3.0;
  }
  auto before = rank_stations(recs, st, "kl_out", 4);
  for (auto& r : recs) r.kl_out = *r.kl_out * 12.5;
  auto after = rank_stations(recs, st, "kl_out", 4);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(before[i].station == after[i].station);
}

TEST_CASE("records lacking the metric stay out of that ranking") {
  auto st = table({"A", "B"});
  std::vector<VulnerabilityRecord> recs(2);
  recs[0].station = 0;
  recs[1].station = 1;
  recs[0].hd_out = 0.3;
  auto ranked = rank_stations(recs, st, "hd_out", 5);
  REQUIRE(ranked.size() == 1);
  CHECK(ranked[0].station == 0);
}
