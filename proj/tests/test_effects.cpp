#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "metrovuln/effects.hpp"
#include "test_util.hpp"

using namespace metrovuln;
using testutil::make_panel;

TEST_CASE("euclidean distance on raw counts") {
  CHECK(dist_euclidean(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 0.0);
  CHECK(dist_euclidean(std::vector<double>{3, 4}, std::vector<double>{0, 0}) == 5.0);
  CHECK_THROWS(dist_euclidean(std::vector<double>{1}, std::vector<double>{1, 2}));

  // independent re-implementation over random integer vectors
  std::mt19937_64 rng(55);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a(50), b(50);
    for (int k = 0; k < 50; ++k) {
      a[k] = static_cast<double>(rng() % 30);
      b[k] = static_cast<double>(rng() % 30);
    }
    double acc = 0;
    for (int k = 0; k < 50; ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
    CHECK(dist_euclidean(a, b) == doctest::Approx(std::sqrt(acc)).epsilon(1e-14));
  }
}

TEST_CASE("hellinger distance hand values") {
  CHECK(dist_hellinger(std::vector<double>{0.3, 0.7}, std::vector<double>{0.3, 0.7}) == 0.0);
  CHECK(dist_hellinger(std::vector<double>{1, 0}, std::vector<double>{0, 1}) ==
        doctest::Approx(1.0).epsilon(1e-12));
  // frozen from a direct evaluation of the formula
  double hd = dist_hellinger(std::vector<double>{0.5, 0.5}, std::vector<double>{0.125, 0.875});
  CHECK(hd == doctest::Approx(0.2975939721060430).epsilon(1e-12));
  CHECK(std::abs(hd - 0.2976) < 1e-4);
  CHECK_THROWS(dist_hellinger(std::vector<double>{0.2, 0.2}, std::vector<double>{0.5, 0.5}));
}

TEST_CASE("kl divergence hand values and the zero-cell contract") {
  CHECK(dist_kl(std::vector<double>{0.4, 0.6}, std::vector<double>{0.4, 0.6}) == 0.0);
  CHECK(dist_kl(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_WITH_AS(dist_kl(std::vector<double>{1, 0}, std::vector<double>{0, 1}),
                       doctest::Contains("undefined divergence"), std::domain_error);
  // smoothing makes it finite and positive
  auto p1 = counts_to_probs({1, 0}, 1e-6);
  auto p0 = counts_to_probs({0, 1}, 1e-6);
  double kl = dist_kl(p1, p0);
  CHECK(kl > 0);
  CHECK(std::isfinite(kl));
}

TEST_CASE("distance properties over random distribution pairs") {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> unif(0, 1);
  for (int t = 0; t < 1000; ++t) {
    std::size_t n = 2 + rng() % 30;
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = unif(rng) < 0.3 ? 0.0 : unif(rng);
    bool equal_pair = t % 10 == 0;
    if (equal_pair) b = a;
    else
      for (auto& v : b) v = unif(rng) < 0.3 ? 0.0 : unif(rng);
    // guard against all-zero draws
    a[0] += 1e-3;
    if (!equal_pair) b[0] += 1e-3;
    else b = a;
    auto pa = counts_to_probs(a, 0.0);
    auto pb = counts_to_probs(b, 0.0);
    double hd = dist_hellinger(pa, pb);
    CHECK(hd >= 0.0);
    CHECK(hd <= 1.0 + 1e-15);
    if (equal_pair) {
      CHECK(hd <= 1e-12);
      CHECK(dist_kl(pa, pb) <= 1e-12);
    } else {
      bool zero_blocked = false;
      for (std::size_t k = 0; k < n; ++k)
        if (pa[k] > 0 && pb[k] == 0) zero_blocked = true;
      if (!zero_blocked) {
        double kl = dist_kl(pa, pb);
        CHECK(kl >= 0.0);
        bool identical = pa == pb;
        if (!identical) CHECK(kl > 1e-12);
      }
    }
  }
}

TEST_CASE("scale invariance: normalized distances ignore uniform scaling, euclidean does not") {
  std::vector<double> a = {4, 0, 6, 2}, b = {1, 3, 5, 3};
  double c = 7.0;
  std::vector<double> ac = a, bc = b;
  for (auto& v : ac) v *= c;
  for (auto& v : bc) v *= c;
  CHECK(dist_hellinger(counts_to_probs(a, 0), counts_to_probs(b, 0)) ==
        doctest::Approx(dist_hellinger(counts_to_probs(ac, 0), counts_to_probs(bc, 0)))
            .epsilon(1e-12));
  CHECK(dist_kl(counts_to_probs(a, 0), counts_to_probs(b, 0)) ==
        doctest::Approx(dist_kl(counts_to_probs(ac, 0), counts_to_probs(bc, 0))).epsilon(1e-12));
  CHECK(dist_euclidean(ac, bc) == doctest::Approx(c * dist_euclidean(a, b)).epsilon(1e-12));
}

namespace {

// one station, one slot; unit index == day
Panel effects_panel() {
  auto p = make_panel(1, 6, 1);
  // day 0 treated: entry 10; controls day 2: 16, day 3: 18
  // day 1 treated: entry 20; controls day 4: 21, day 5: 25
  std::uint32_t entries[6] = {10, 20, 16, 18, 21, 25};
  for (int d = 0; d < 6; ++d) {
    p.units[d].treated = d < 2;
    p.units[d].entry_ridership = entries[d];
    p.units[d].avg_speed = 30.0 - d;
    p.units[d].has_speed = true;
  }
  return p;
}

MatchSet effects_match() {
  MatchSet ms;
  ms.cfg.m = 2;
  ms.matched = {{0, {2, 3}, false}, {1, {4, 5}, false}};
  return ms;
}

}  // namespace

TEST_CASE("scalar ate per station and pooled") {
  auto p = effects_panel();
  auto ms = effects_match();
  auto est = ate_scalar(p, ms, ScalarOutcome::Entry);
  REQUIRE(est.size() == 1);
  // unit effects: 10 - 17 = -7 and 20 - 23 = -3; station mean -5
  CHECK(est[0].tau == doctest::Approx(-5.0));
  CHECK(est[0].t_d == 2);
  CHECK(est[0].n_unmatched == 0);

  auto pooled = pooled_ate_scalar(p, ms, ScalarOutcome::Entry);
  CHECK(pooled.tau == doctest::Approx(-5.0));
  CHECK(pooled.n == 2);
  // sample sd of {-7, -3} is sqrt(8); se = sqrt(8/2)
  CHECK(pooled.se == doctest::Approx(2.0));
}

TEST_CASE("single treated slot reproduces the worked example") {
  auto p = make_panel(1, 3, 1);
  p.units[0].treated = 1;
  p.units[0].entry_ridership = 10;
  p.units[1].entry_ridership = 16;
  p.units[2].entry_ridership = 18;
  MatchSet ms;
  ms.cfg.m = 2;
  ms.matched = {{0, {1, 2}, false}};
  auto est = ate_scalar(p, ms, ScalarOutcome::Entry);
  REQUIRE(est.size() == 1);
  CHECK(est[0].tau == doctest::Approx(-7.0));
}

TEST_CASE("unmatched stations yield no estimate") {
  auto p = effects_panel();
  MatchSet ms;
  ms.cfg.m = 2;
  ms.unmatchable = {0, 1};
  CHECK(ate_scalar(p, ms, ScalarOutcome::Entry).empty());
}

TEST_CASE("naive estimator is the raw group difference") {
  auto p = effects_panel();
  auto naive = naive_scalar(p, ScalarOutcome::Entry);
  // treated mean 15, control mean 20
  CHECK(naive.tau == doctest::Approx(-5.0));
  CHECK(naive.n == 6);
  CHECK(naive.se > 0);
}

TEST_CASE("flow ate composite control and distances") {
  auto p = make_panel(2, 3, 1);
  auto& treated = p.units[p.unit_index(0, 0, 0)];
  treated.treated = 1;
  treated.outward.counts = {{1, 3}};  // 3 trips to station 1
  auto& c1 = p.units[p.unit_index(0, 1, 0)];
  auto& c2 = p.units[p.unit_index(0, 2, 0)];
  c1.outward.counts = {{1, 3}};
  c2.outward.counts = {{1, 3}};
  MatchSet ms;
  ms.cfg.m = 2;
  ms.matched = {{p.unit_index(0, 0, 0), {p.unit_index(0, 1, 0), p.unit_index(0, 2, 0)}, false}};

  SUBCASE("identical flows give zero everywhere") {
    for (auto dk : {DistanceKind::Euclidean, DistanceKind::Hellinger, DistanceKind::KL}) {
      auto r = ate_flow(p, ms, FlowDirection::Outward, dk);
      REQUIRE(r.per_station.size() == 1);
      CHECK(r.per_station[0].tau == doctest::Approx(0.0));
    }
  }
  SUBCASE("empty controls reduce euclidean to the raw norm") {
    treated.outward.counts = {{1, 3}};
    p.units[p.unit_index(0, 0, 0)].outward.counts = {{1, 3}};
    c1.outward.counts.clear();
    c2.outward.counts.clear();
    // treated vector (0,3); for a 2-station panel with a second dest of 4 we
    // extend: use counts {1:3} plus second station impossible, so check 3-4-5
    // with an inward example on a 3-station panel instead
    auto p3 = make_panel(3, 3, 1);
    auto& t3 = p3.units[p3.unit_index(0, 0, 0)];
    t3.treated = 1;
    t3.outward.counts = {{1, 3}, {2, 4}};
    MatchSet ms3;
    ms3.cfg.m = 2;
    ms3.matched = {{p3.unit_index(0, 0, 0), {p3.unit_index(0, 1, 0), p3.unit_index(0, 2, 0)}, false}};
    auto r = ate_flow(p3, ms3, FlowDirection::Outward, DistanceKind::Euclidean);
    REQUIRE(r.per_station.size() == 1);
    CHECK(r.per_station[0].tau == doctest::Approx(5.0));
  }
  SUBCASE("both sides empty: zero for euclidean, skipped for the normalized pair") {
    treated.outward.counts.clear();
    c1.outward.counts.clear();
    c2.outward.counts.clear();
    auto ed = ate_flow(p, ms, FlowDirection::Outward, DistanceKind::Euclidean);
    REQUIRE(ed.per_station.size() == 1);
    CHECK(ed.per_station[0].tau == 0.0);
    CHECK(ed.skipped_both_zero == 0);
    auto hd = ate_flow(p, ms, FlowDirection::Outward, DistanceKind::Hellinger);
    CHECK(hd.per_station.empty());
    CHECK(hd.skipped_both_zero == 1);
  }
  SUBCASE("zero treated side with nonzero control smooths and flags") {
    treated.outward.counts.clear();
    auto hd = ate_flow(p, ms, FlowDirection::Outward, DistanceKind::Hellinger);
    REQUIRE(hd.per_station.size() == 1);
    CHECK(hd.smoothed_units == 1);
    CHECK(hd.per_station[0].tau > 0.5);  // point mass vs near-uniform smoothed
  }
}

TEST_CASE("composite control averages elementwise before the distance") {
  auto p = make_panel(3, 3, 1);
  auto& t = p.units[p.unit_index(0, 0, 0)];
  t.treated = 1;
  t.outward.counts = {{1, 4}, {2, 4}};
  p.units[p.unit_index(0, 1, 0)].outward.counts = {{1, 8}};
  p.units[p.unit_index(0, 2, 0)].outward.counts = {{2, 8}};
  MatchSet ms;
  ms.cfg.m = 2;
  ms.matched = {{p.unit_index(0, 0, 0), {p.unit_index(0, 1, 0), p.unit_index(0, 2, 0)}, false}};
  // composite control = (0, 4, 4) exactly; all distances zero
  auto ed = ate_flow(p, ms, FlowDirection::Outward, DistanceKind::Euclidean);
  CHECK(ed.per_station[0].tau == doctest::Approx(0.0));
  auto kl = ate_flow(p, ms, FlowDirection::Outward, DistanceKind::KL);
  CHECK(kl.per_station[0].tau == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("matched-pair estimator equals a brute-force recomputation") {
  // 3 stations, 8 days, 2 slots, randomized outcomes and matches
  std::mt19937_64 rng(2212);
  auto p = make_panel(3, 8, 2);
  for (auto& u : p.units) {
    u.entry_ridership = rng() % 40;
    u.treated = rng() % 5 == 0;
  }
  std::vector<double> scores(p.size());
  for (auto& s : scores) s = static_cast<double>(rng() % 1000) / 1000.0;
  MatchConfig cfg;
  cfg.m = 2;
  auto ms = nn_match(p, scores, cfg);
  auto est = ate_scalar(p, ms, ScalarOutcome::Entry);

  std::map<StationIdx, std::pair<double, int>> brute;
  for (const auto& m : ms.matched) {
    double y0 = 0;
    for (auto c : m.controls) y0 += p.units[c].entry_ridership;
    y0 /= static_cast<double>(m.controls.size());
    auto& [sum, n] = brute[p.station_of(m.unit)];
    sum += p.units[m.unit].entry_ridership - y0;
    ++n;
  }
  REQUIRE(!est.empty());
  for (const auto& e : est) {
    auto it = brute.find(e.station);
    REQUIRE(it != brute.end());
    CHECK(e.tau == it->second.first / it->second.second);
    CHECK(e.t_d == static_cast<std::uint32_t>(it->second.second));
  }
}
