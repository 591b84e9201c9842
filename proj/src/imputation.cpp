#include "metrovuln/imputation.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace metrovuln {

RegressionForest RegressionForest::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                       const ForestHyper& hyper) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  if (n == 0 || p == 0) throw std::invalid_argument("empty training data");
  if (y.size() != x.rows()) throw std::invalid_argument("x/y row mismatch");
  if (hyper.mtry > static_cast<int>(p))
    throw std::invalid_argument("mtry " + std::to_string(hyper.mtry) + " exceeds feature count " +
                                std::to_string(p));
  if (hyper.n_trees < 1 || hyper.min_node < 1)
    throw std::invalid_argument("n_trees and min_node must be positive");
  if (n < 2 * static_cast<std::size_t>(hyper.min_node))
    throw std::invalid_argument("need at least 2*min_node training rows");

  RegressionForest forest;
  forest.n_features_ = p;
  forest.trees_.resize(hyper.n_trees);

  auto grow_tree = [&](int b) {
    std::seed_seq seq{hyper.seed, static_cast<std::uint64_t>(b), std::uint64_t{0x9e3779b97f4a7c15}};
    std::mt19937_64 rng(seq);
    Tree& tree = forest.trees_[b];
    tree.inbag.assign(n, 0);
    std::vector<std::uint32_t> members(n);
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 1));
    for (std::size_t i = 0; i < n; ++i) {
      auto r = pick(rng);
      members[i] = r;
      ++tree.inbag[r];
    }

    std::vector<int> feature_pool(p);
    std::iota(feature_pool.begin(), feature_pool.end(), 0);
    std::vector<std::pair<double, double>> sorted;

    // recursive CART growth; returns node index
    auto grow = [&](auto&& self, std::vector<std::uint32_t> rows) -> int {
      double sum = 0, sumsq = 0;
      for (auto r : rows) {
        sum += y[r];
        sumsq += y[r] * y[r];
      }
      const double node_n = static_cast<double>(rows.size());
      const double node_mean = sum / node_n;
      const double node_sse = std::max(sumsq - sum * sum / node_n, 0.0);

      auto make_leaf = [&]() {
        Node leaf;
        leaf.value = node_mean;
        tree.nodes.push_back(leaf);
        return static_cast<int>(tree.nodes.size() - 1);
      };
      if (rows.size() < 2 * static_cast<std::size_t>(hyper.min_node) || node_sse <= 1e-12)
        return make_leaf();

      // sample mtry candidate features without replacement
      for (int k = 0; k < hyper.mtry; ++k) {
        std::uniform_int_distribution<int> d(k, static_cast<int>(p) - 1);
        std::swap(feature_pool[k], feature_pool[d(rng)]);
      }

      int best_feature = -1;
      double best_threshold = 0, best_sse = node_sse - 1e-12;
      for (int k = 0; k < hyper.mtry; ++k) {
        int f = feature_pool[k];
        sorted.clear();
        for (auto r : rows) sorted.emplace_back(x(r, f), y[r]);
        std::sort(sorted.begin(), sorted.end());

        double left_sum = 0, left_sumsq = 0;
        for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
          left_sum += sorted[i].second;
          left_sumsq += sorted[i].second * sorted[i].second;
          std::size_t nl = i + 1, nr = sorted.size() - nl;
          if (nl < static_cast<std::size_t>(hyper.min_node) ||
              nr < static_cast<std::size_t>(hyper.min_node))
            continue;
          if (sorted[i].first == sorted[i + 1].first) continue;  // not a distinct-value boundary
          double right_sum = sum - left_sum, right_sumsq = sumsq - left_sumsq;
          double sse = (left_sumsq - left_sum * left_sum / nl) +
                       (right_sumsq - right_sum * right_sum / nr);
          if (sse < best_sse) {
            best_sse = sse;
            best_feature = f;
            best_threshold = sorted[i].first + (sorted[i + 1].first - sorted[i].first) / 2.0;
          }
        }
      }
      if (best_feature < 0) return make_leaf();
      assert(best_sse < node_sse);  // every split strictly reduces squared error

      std::vector<std::uint32_t> left, right;
      for (auto r : rows) (x(r, best_feature) <= best_threshold ? left : right).push_back(r);
      rows.clear();
      rows.shrink_to_fit();

      int idx = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes[idx].feature = best_feature;
      tree.nodes[idx].threshold = best_threshold;
      int l = self(self, std::move(left));
      int r = self(self, std::move(right));
      tree.nodes[idx].left = l;
      tree.nodes[idx].right = r;
      return idx;
    };
    grow(grow, std::move(members));
  };

  int n_threads = std::max(hyper.n_threads, 1);
  if (n_threads == 1) {
    for (int b = 0; b < hyper.n_trees; ++b) grow_tree(b);
  } else {
    std::vector<std::thread> workers;
    std::atomic<int> next{0};
    for (int t = 0; t < n_threads; ++t) {
      workers.emplace_back([&] {
        for (int b = next.fetch_add(1); b < hyper.n_trees; b = next.fetch_add(1)) grow_tree(b);
      });
    }
    for (auto& w : workers) w.join();
  }
  return forest;
}

double RegressionForest::predict_tree(const Tree& t, const Eigen::RowVectorXd& x) const {
  int i = 0;
  while (t.nodes[i].feature >= 0)
    i = x[t.nodes[i].feature] <= t.nodes[i].threshold ? t.nodes[i].left : t.nodes[i].right;
  return t.nodes[i].value;
}

double RegressionForest::predict(const Eigen::RowVectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != n_features_)
    throw std::invalid_argument("feature count mismatch: model expects " +
                                std::to_string(n_features_) + ", got " + std::to_string(x.size()));
  double s = 0;
  for (const auto& t : trees_) s += predict_tree(t, x);
  return s / static_cast<double>(trees_.size());
}

Eigen::VectorXd RegressionForest::predict_all(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i));
  return out;
}

std::vector<std::optional<double>> RegressionForest::oob_predictions(
    const Eigen::MatrixXd& x) const {
  std::vector<std::optional<double>> out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double s = 0;
    int k = 0;
    for (const auto& t : trees_) {
      if (t.inbag[static_cast<std::size_t>(i)] > 0) continue;
      s += predict_tree(t, x.row(i));
      ++k;
    }
    if (k > 0) out[static_cast<std::size_t>(i)] = s / k;
  }
  return out;
}

RegressionEval eval_regression(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() != y_pred.size() || y_true.size() < 2)
    throw std::invalid_argument("need two equally sized vectors");
  const auto n = static_cast<double>(y_true.size());
  Eigen::VectorXd e = y_pred - y_true;
  RegressionEval r;
  r.mae = e.cwiseAbs().mean();
  r.rmse = std::sqrt(e.squaredNorm() / n);
  double mean = y_true.mean();
  double abs_dev = (y_true.array() - mean).abs().sum();
  double sq_dev = (y_true.array() - mean).square().sum();
  if (abs_dev > 0) r.rae = e.cwiseAbs().sum() / abs_dev;
  if (sq_dev > 0) r.rse = e.squaredNorm() / sq_dev;
  return r;
}

LinearModel fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  Eigen::VectorXd beta = design.colPivHouseholderQr().solve(y);
  LinearModel m;
  m.intercept = beta[0];
  m.coef = beta.tail(x.cols());
  return m;
}

StationFeatures build_station_features(const Panel& panel, const StationTable& stations,
                                       const NetworkGraph& graph) {
  StationFeatures f;
  int max_zone = 1;
  for (const auto& a : stations.rows) max_zone = std::max(max_zone, a.zone);

  f.names = {"daily_entry",   "daily_exit",     "daily_speed",     "rail",
             "overground",    "terminal",       "screen_door",     "n_lines",
             "avg_adjacent_km", "station_age",  "rolling_stock_age"};
  for (int z = 2; z <= max_zone; ++z) f.names.push_back("zone" + std::to_string(z));
  const std::vector<std::string> extra = {"population", "employment",       "imd",
                                          "domestic_area", "nondomestic_area", "other_area",
                                          "bus_stops",  "biking",           "parking",
                                          "road_area",  "path_area"};
  f.names.insert(f.names.end(), extra.begin(), extra.end());

  f.x.setZero(stations.size(), static_cast<Eigen::Index>(f.names.size()));
  for (StationIdx s = 0; s < stations.size(); ++s) {
    const auto& a = stations.rows[s];
    double entry = 0, exit = 0, speed_sum = 0;
    std::size_t speed_n = 0;
    for (int d = 0; d < panel.n_days; ++d) {
      for (int k = 0; k < panel.slots_per_day; ++k) {
        const auto& u = panel.units[panel.unit_index(s, d, k)];
        entry += u.entry_ridership;
        exit += u.exit_ridership;
        if (u.has_speed) {
          speed_sum += u.avg_speed;
          ++speed_n;
        }
      }
    }
    Eigen::Index c = 0;
    auto put = [&](double v) { f.x(s, c++) = v; };
    put(entry / panel.n_days);
    put(exit / panel.n_days);
    put(speed_n > 0 ? speed_sum / static_cast<double>(speed_n) : 0.0);
    put(a.rail_connect);
    put(a.overground);
    put(a.terminal);
    put(a.screen_door);
    put(a.n_lines);
    put(graph.avg_adjacent_km(s));
    put(a.station_age);
    put(a.rolling_stock_age);
    for (int z = 2; z <= max_zone; ++z) put(a.zone == z ? 1.0 : 0.0);
    put(a.population);
    put(a.employment);
    put(a.imd);
    put(a.domestic_area);
    put(a.nondomestic_area);
    put(a.other_area);
    put(a.bus_stops);
    put(a.biking);
    put(a.parking);
    put(a.road_area);
    put(a.path_area);
  }
  return f;
}

namespace {

using MetricGetter = std::optional<double> VulnerabilityRecord::*;

const std::vector<std::pair<std::string, MetricGetter>> kImputableMetrics = {
    {"demand_loss", &VulnerabilityRecord::demand_loss},
    {"avg_speed_loss", &VulnerabilityRecord::avg_speed_loss},
    {"gross_speed_loss", &VulnerabilityRecord::gross_speed_loss},
    {"ed_out", &VulnerabilityRecord::ed_out},
    {"ed_in", &VulnerabilityRecord::ed_in},
    {"hd_out", &VulnerabilityRecord::hd_out},
    {"hd_in", &VulnerabilityRecord::hd_in},
    {"kl_out", &VulnerabilityRecord::kl_out},
    {"kl_in", &VulnerabilityRecord::kl_in}};

}  // namespace

ImputationReport impute_missing(std::vector<VulnerabilityRecord>& records,
                                const StationFeatures& features,
                                const std::vector<StationBaseline>& baselines,
                                const ForestHyper& hyper) {
  ImputationReport report;
  const StationIdx n_stations = static_cast<StationIdx>(features.x.rows());

  std::vector<const VulnerabilityRecord*> by_station(n_stations, nullptr);
  for (const auto& r : records) by_station[r.station] = &r;

  std::size_t n_with_estimates = records.size();
  report.n_train = n_with_estimates;
  if (n_with_estimates < 10) {
    report.refused = true;
    return report;
  }

  ForestHyper h = hyper;
  h.mtry = std::min<int>(h.mtry, static_cast<int>(features.x.cols()));

  // records for stations that had no estimates at all
  std::vector<VulnerabilityRecord> added;
  for (StationIdx s = 0; s < n_stations; ++s) {
    if (by_station[s]) continue;
    VulnerabilityRecord r;
    r.station = s;
    r.baseline_entry = baselines[s].mean_entry;
    r.baseline_speed = baselines[s].mean_speed;
    r.imputed = true;
    added.push_back(r);
  }
  report.n_imputed_stations = added.size();
  records.insert(records.end(), added.begin(), added.end());

  int metric_index = 0;
  for (const auto& [name, member] : kImputableMetrics) {
    std::vector<StationIdx> train_stations;
    std::vector<double> train_y;
    for (const auto& r : records) {
      if (r.*member) {
        train_stations.push_back(r.station);
        train_y.push_back(*(r.*member));
      }
    }
    if (train_stations.size() < 10) {
      ++metric_index;
      continue;  // not enough support for this specific metric
    }
    Eigen::MatrixXd x_train(train_stations.size(), features.x.cols());
    Eigen::VectorXd y_train(train_stations.size());
    for (std::size_t i = 0; i < train_stations.size(); ++i) {
      x_train.row(static_cast<Eigen::Index>(i)) = features.x.row(train_stations[i]);
      y_train[static_cast<Eigen::Index>(i)] = train_y[i];
    }

    ForestHyper hm = h;
    hm.seed = h.seed + static_cast<std::uint64_t>(metric_index) * 0x51ed2701;
    auto forest = RegressionForest::fit(x_train, y_train, hm);

    // out-of-bag R^2
    auto oob = forest.oob_predictions(x_train);
    double ss_res = 0, ss_tot = 0, mean_y = y_train.mean();
    std::size_t oob_n = 0;
    for (std::size_t i = 0; i < oob.size(); ++i) {
      if (!oob[i]) continue;
      double e = *oob[i] - y_train[static_cast<Eigen::Index>(i)];
      ss_res += e * e;
      ss_tot += (y_train[static_cast<Eigen::Index>(i)] - mean_y) *
                (y_train[static_cast<Eigen::Index>(i)] - mean_y);
      ++oob_n;
    }
    if (oob_n > 1 && ss_tot > 0) report.oob_r2[name] = 1.0 - ss_res / ss_tot;

    // shared 5-fold cross-validation for the forest/linear comparison
    const int n_folds = 5;
    std::vector<int> fold(train_stations.size());
    {
      std::seed_seq seq{hm.seed, std::uint64_t{0xf01d}};
      std::mt19937_64 rng(seq);
      for (std::size_t i = 0; i < fold.size(); ++i) fold[i] = static_cast<int>(i % n_folds);
      std::shuffle(fold.begin(), fold.end(), rng);
    }
    Eigen::VectorXd cv_forest = Eigen::VectorXd::Zero(train_stations.size());
    Eigen::VectorXd cv_linear = Eigen::VectorXd::Zero(train_stations.size());
    for (int f = 0; f < n_folds; ++f) {
      std::vector<Eigen::Index> tr, te;
      for (std::size_t i = 0; i < fold.size(); ++i)
        (fold[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
      if (te.empty() || tr.size() < 2 * static_cast<std::size_t>(h.min_node)) continue;
      Eigen::MatrixXd xf(tr.size(), features.x.cols());
      Eigen::VectorXd yf(tr.size());
      for (std::size_t i = 0; i < tr.size(); ++i) {
        xf.row(static_cast<Eigen::Index>(i)) = x_train.row(tr[i]);
        yf[static_cast<Eigen::Index>(i)] = y_train[tr[i]];
      }
      ForestHyper hf = hm;
      hf.seed = hm.seed + 7777 + static_cast<std::uint64_t>(f);
      auto fold_forest = RegressionForest::fit(xf, yf, hf);
      auto fold_linear = fit_linear(xf, yf);
      for (auto i : te) {
        cv_forest[i] = fold_forest.predict(x_train.row(i));
        cv_linear[i] = fold_linear.predict(x_train.row(i));
      }
    }
    report.rows.push_back({name, "random_forest", eval_regression(y_train, cv_forest)});
    report.rows.push_back({name, "linear_regression", eval_regression(y_train, cv_linear)});

    // fill the missing cells
    for (auto& r : records) {
      if (r.*member) continue;
      r.*member = forest.predict(features.x.row(r.station));
      r.imputed = true;
    }
    ++metric_index;
  }

  // normalized counterparts for freshly filled cells
  for (auto& r : records) {
    if (!r.imputed) continue;
    if (r.demand_loss && !r.demand_loss_pct && r.baseline_entry > 0)
      r.demand_loss_pct = *r.demand_loss / r.baseline_entry * 100.0;
    if (r.avg_speed_loss && !r.avg_speed_loss_pct && r.baseline_speed && *r.baseline_speed > 0)
      r.avg_speed_loss_pct = *r.avg_speed_loss / *r.baseline_speed * 100.0;
    if (r.gross_speed_loss && !r.gross_speed_loss_pct && r.baseline_speed &&
        *r.baseline_speed > 0 && r.baseline_entry > 0)
      r.gross_speed_loss_pct =
          *r.gross_speed_loss / (*r.baseline_speed * r.baseline_entry) * 100.0;
  }
  return report;
}

}  // namespace metrovuln
