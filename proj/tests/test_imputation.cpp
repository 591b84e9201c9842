#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "metrovuln/imputation.hpp"
#include "test_util.hpp"

using namespace metrovuln;

namespace {

// nonlinear target with a nuisance feature
void nonlinear_fixture(std::size_t n, std::uint64_t seed, Eigen::MatrixXd& x, Eigen::VectorXd& y) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u1(0, 6), u2(0, 2), u3(0, 1);
  std::normal_distribution<double> noise(0, 0.5);
  x.resize(static_cast<Eigen::Index>(n), 3);
  y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    auto idx = static_cast<Eigen::Index>(i);
    x(idx, 0) = u1(rng);
    x(idx, 1) = u2(rng);
    x(idx, 2) = u3(rng);
    y[idx] = 10.0 * std::sin(x(idx, 0)) * x(idx, 1) + noise(rng);
  }
}

}  // namespace

TEST_CASE("regression error measures") {
  Eigen::VectorXd yt(3), yp(3);
  yt << 1, 2, 3;
  yp << 1, 2, 6;
  auto e = eval_regression(yt, yp);
  CHECK(e.mae == doctest::Approx(1.0));
  CHECK(e.rmse == doctest::Approx(std::sqrt(3.0)));
  // sum |e| = 3 over sum |y - mean| = 2
  CHECK(*e.rae == doctest::Approx(1.5));
  CHECK(*e.rse == doctest::Approx(4.5));

  auto zero = eval_regression(yt, yt);
  CHECK(zero.mae == 0.0);
  CHECK(zero.rmse == 0.0);
  CHECK(*zero.rae == 0.0);
  CHECK(*zero.rse == 0.0);

  Eigen::VectorXd mean_pred = Eigen::VectorXd::Constant(3, 2.0);
  auto unit = eval_regression(yt, mean_pred);
  CHECK(*unit.rae == doctest::Approx(1.0));
  CHECK(*unit.rse == doctest::Approx(1.0));

  Eigen::VectorXd flat = Eigen::VectorXd::Constant(3, 4.0);
  auto undef = eval_regression(flat, yp);
  CHECK(!undef.rae.has_value());
  CHECK(!undef.rse.has_value());

  CHECK_THROWS(eval_regression(yt, Eigen::VectorXd::Zero(2)));
}

TEST_CASE("constant target predicts the constant exactly") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(40, 4);
  Eigen::VectorXd y = Eigen::VectorXd::Constant(40, 7.0);
  ForestHyper h;
  h.n_trees = 30;
  h.mtry = 2;
  h.seed = 5;
  auto f = RegressionForest::fit(x, y, h);
  for (int i = 0; i < 10; ++i)
    CHECK(f.predict(Eigen::RowVectorXd::Random(4)) == 7.0);
}

TEST_CASE("a single all-leaf tree predicts its bootstrap mean") {
  std::mt19937_64 rng(3);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(25, 2);
  Eigen::VectorXd y(25);
  for (int i = 0; i < 25; ++i) y[i] = static_cast<double>(rng() % 50);
  ForestHyper h;
  h.n_trees = 1;
  h.mtry = 1;
  h.min_node = 25;  // forces the root to stay a leaf
  h.seed = 9;
  auto f = RegressionForest::fit(x, y, h);
  double bag_mean = 0;
  std::size_t bag_n = 0;
  for (std::size_t i = 0; i < 25; ++i) {
    bag_mean += y[static_cast<Eigen::Index>(i)] * f.inbag_counts(0)[i];
    bag_n += f.inbag_counts(0)[i];
  }
  bag_mean /= static_cast<double>(bag_n);
  CHECK(bag_n == 25);
  CHECK(f.predict(Eigen::RowVectorXd::Random(2)) == doctest::Approx(bag_mean).epsilon(1e-12));

  // averaged over many bootstrap draws the prediction approaches mean(y)
  h.n_trees = 400;
  auto big = RegressionForest::fit(x, y, h);
  CHECK(big.predict(Eigen::RowVectorXd::Random(2)) ==
        doctest::Approx(y.mean()).epsilon(0.05));
}

TEST_CASE("forest beats the linear baseline on the nonlinear fixture") {
  Eigen::MatrixXd x_train, x_test;
  Eigen::VectorXd y_train, y_test;
  nonlinear_fixture(200, 41, x_train, y_train);
  nonlinear_fixture(200, 42, x_test, y_test);
  ForestHyper h;
  h.n_trees = 300;
  h.mtry = 2;
  h.seed = 11;
  auto forest = RegressionForest::fit(x_train, y_train, h);
  auto linear = fit_linear(x_train, y_train);

  Eigen::VectorXd pf(200), pl(200);
  for (int i = 0; i < 200; ++i) {
    pf[i] = forest.predict(x_test.row(i));
    pl[i] = linear.predict(x_test.row(i));
  }
  auto ef = eval_regression(y_test, pf);
  auto el = eval_regression(y_test, pl);
  CHECK(ef.mae < el.mae);
  CHECK(ef.mae <= 0.8 * el.mae);  // at least 20% better
  CHECK(ef.rmse < el.rmse);
}

TEST_CASE("predictions stay inside the training target range") {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  nonlinear_fixture(150, 6, x, y);
  ForestHyper h;
  h.n_trees = 60;
  h.mtry = 3;
  h.seed = 2;
  auto f = RegressionForest::fit(x, y, h);
  for (int i = 0; i < 50; ++i) {
    Eigen::RowVectorXd q(3);
    q << 6.0 * (i / 50.0), 2.0 * ((i * 7) % 50) / 50.0, 0.5;
    double p = f.predict(q);
    CHECK(p >= y.minCoeff() - 1e-12);
    CHECK(p <= y.maxCoeff() + 1e-12);
  }
}

TEST_CASE("training is deterministic for any thread count") {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  nonlinear_fixture(150, 12, x, y);
  ForestHyper h1;
  h1.n_trees = 64;
  h1.mtry = 2;
  h1.seed = 77;
  h1.n_threads = 1;
  auto a = RegressionForest::fit(x, y, h1);
  h1.n_threads = 4;
  auto b = RegressionForest::fit(x, y, h1);
  h1.n_threads = 3;
  auto c = RegressionForest::fit(x, y, h1);
  for (int i = 0; i < 40; ++i) {
    Eigen::RowVectorXd q(3);
    q << (i % 7) * 0.8, (i % 3) * 0.6, (i % 5) * 0.2;
    double pa = a.predict(q);
    CHECK(pa == b.predict(q));
    CHECK(pa == c.predict(q));
  }
}

TEST_CASE("prediction variance shrinks as trees are added") {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  nonlinear_fixture(120, 21, x, y);
  Eigen::RowVectorXd q(3);
  q << 3.0, 1.0, 0.5;
  auto variance_at = [&](int n_trees) {
    std::vector<double> preds;
    for (std::uint64_t s = 1; s <= 12; ++s) {
      ForestHyper h;
      h.n_trees = n_trees;
      h.mtry = 2;
      h.seed = s * 1000;
      preds.push_back(RegressionForest::fit(x, y, h).predict(q));
    }
    double m = 0, v = 0;
    for (double p : preds) m += p;
    m /= preds.size();
    for (double p : preds) v += (p - m) * (p - m);
    return v / (preds.size() - 1);
  };
  double v_small = variance_at(20);
  double v_large = variance_at(120);
  CHECK(v_large < v_small);
}

TEST_CASE("hyperparameter validation") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(30, 3);
  Eigen::VectorXd y = Eigen::VectorXd::Random(30);
  ForestHyper h;
  h.mtry = 9;
  CHECK_THROWS_WITH_AS(RegressionForest::fit(x, y, h), doctest::Contains("mtry"),
                       std::invalid_argument);
  h.mtry = 2;
  h.min_node = 16;
  CHECK_THROWS_WITH_AS(RegressionForest::fit(x, y, h), doctest::Contains("min_node"),
                       std::invalid_argument);
  h.min_node = 2;
  auto f = RegressionForest::fit(x, y, h);
  CHECK_THROWS_WITH_AS(f.predict(Eigen::RowVectorXd::Random(5)),
                       doctest::Contains("feature count"), std::invalid_argument);
}

namespace {

// synthetic vulnerability records over a feature table with a learnable link
struct ImputeWorld {
  StationFeatures features;
  std::vector<StationBaseline> baselines;
  std::vector<VulnerabilityRecord> records;
  std::vector<double> truth;
};

ImputeWorld impute_world(std::size_t n_stations, const std::vector<StationIdx>& withheld) {
  ImputeWorld w;
  std::mt19937_64 rng(808);
  w.features.names = {"f1", "f2", "f3"};
  w.features.x.resize(static_cast<Eigen::Index>(n_stations), 3);
  w.baselines.resize(n_stations);
  std::normal_distribution<double> noise(0, 0.4);
  for (StationIdx s = 0; s < n_stations; ++s) {
    double f1 = (rng() % 100) / 10.0, f2 = (rng() % 40) / 10.0, f3 = (rng() % 2);
    w.features.x(s, 0) = f1;
    w.features.x(s, 1) = f2;
    w.features.x(s, 2) = f3;
    w.baselines[s].mean_entry = 100;
    w.baselines[s].mean_speed = 25;
    w.truth.push_back(3.0 + 2.0 * f1 + f2 * f2 + 4.0 * f3);
    if (std::find(withheld.begin(), withheld.end(), s) != withheld.end()) continue;
    VulnerabilityRecord r;
    r.station = s;
    r.demand_loss = w.truth.back() + noise(rng);
    r.tau_entry = -*r.demand_loss;
    r.demand_loss_pct = *r.demand_loss / 100.0 * 100.0;
    w.records.push_back(std::move(r));
  }
  return w;
}

}  // namespace

TEST_CASE("imputation fills missing stations and reports the benchmark") {
  auto w = impute_world(40, {3, 17, 31});
  ForestHyper h;
  h.n_trees = 150;
  h.mtry = 2;
  h.seed = 3;
  auto report = impute_missing(w.records, w.features, w.baselines, h);
  CHECK(!report.refused);
  CHECK(report.n_train == 37);
  CHECK(report.n_imputed_stations == 3);
  CHECK(w.records.size() == 40);

  for (auto s : {3u, 17u, 31u}) {
    auto it = std::find_if(w.records.begin(), w.records.end(),
                           [&](const auto& r) { return r.station == s; });
    REQUIRE(it != w.records.end());
    CHECK(it->imputed);
    REQUIRE(it->demand_loss.has_value());
    // within the plausible range of the training targets
    CHECK(*it->demand_loss > 0);
    CHECK(std::abs(*it->demand_loss - w.truth[s]) < 8.0);
    CHECK(it->demand_loss_pct.has_value());  // normalized counterpart filled
  }
  // benchmark rows exist for the one populated metric, both methods
  bool forest_row = false, linear_row = false;
  for (const auto& row : report.rows) {
    if (row.metric != "demand_loss") continue;
    if (row.method == "random_forest") forest_row = true;
    if (row.method == "linear_regression") linear_row = true;
  }
  CHECK(forest_row);
  CHECK(linear_row);
  CHECK(report.oob_r2.count("demand_loss") == 1);
  CHECK(report.oob_r2["demand_loss"] > 0.5);  // the link is learnable
}

TEST_CASE("no missing stations leaves records unchanged") {
  auto w = impute_world(20, {});
  auto before = w.records;
  ForestHyper h;
  h.n_trees = 50;
  h.mtry = 2;
  h.seed = 3;
  auto report = impute_missing(w.records, w.features, w.baselines, h);
  CHECK(report.n_imputed_stations == 0);
  REQUIRE(w.records.size() == before.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(w.records[i].station == before[i].station);
    CHECK(w.records[i].demand_loss == before[i].demand_loss);
    CHECK(!w.records[i].imputed);
  }
}

TEST_CASE("fewer than ten training stations refuses to impute") {
  auto w = impute_world(12, {0, 1, 2, 3});  // 8 estimated
  ForestHyper h;
  h.seed = 3;
  auto report = impute_missing(w.records, w.features, w.baselines, h);
  CHECK(report.refused);
  CHECK(w.records.size() == 8);  // untouched
}
