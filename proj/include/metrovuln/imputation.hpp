#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metrovuln/metrics.hpp"
#include "metrovuln/network.hpp"

namespace metrovuln {

struct ForestHyper {
  int n_trees = 500;
  int mtry = 7;        // clamped to the feature count
  int min_node = 2;    // minimum rows per leaf
  std::uint64_t seed = 0;
  int n_threads = 1;   // predictions are identical for any thread count
};

// Bagged CART regression trees. Each tree is grown on a bootstrap resample
// of the rows; at every node `mtry` features are sampled without replacement
// and the split minimizing the summed child squared error is taken, with
// thresholds at midpoints between consecutive distinct sorted values. A node
// becomes a leaf when it is smaller than 2*min_node, has (near) zero
// variance, or no split strictly reduces the squared error.
//
// Tree b depends only on (data, hyper.seed, b), never on thread scheduling.
class RegressionForest {
 public:
  static RegressionForest fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const ForestHyper& hyper);

  double predict(const Eigen::RowVectorXd& x) const;
  Eigen::VectorXd predict_all(const Eigen::MatrixXd& x) const;

  // Mean prediction of the trees whose bootstrap sample skipped each
  // training row; empty optional for rows present in every bag.
  std::vector<std::optional<double>> oob_predictions(const Eigen::MatrixXd& x) const;

  int n_trees() const { return static_cast<int>(trees_.size()); }
  std::size_t n_features() const { return n_features_; }
  const std::vector<std::uint32_t>& inbag_counts(int tree) const { return trees_[tree].inbag; }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0;
    int left = -1, right = -1;
    double value = 0;
  };
  struct Tree {
    std::vector<Node> nodes;
    std::vector<std::uint32_t> inbag;  // bootstrap multiplicity per training row
  };

  double predict_tree(const Tree& t, const Eigen::RowVectorXd& x) const;

  std::vector<Tree> trees_;
  std::size_t n_features_ = 0;
};

struct RegressionEval {
  double mae = 0;
  double rmse = 0;
  std::optional<double> rae, rse;  // undefined when y_true is constant
};

RegressionEval eval_regression(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);

// Ordinary least squares with an implicit intercept; rank-deficient designs
// fall back to the pivoted-QR least-squares solution.
struct LinearModel {
  double intercept = 0;
  Eigen::VectorXd coef;
  double predict(const Eigen::RowVectorXd& x) const { return intercept + x * coef; }
};

LinearModel fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

// Stage 3 station-level feature table: realized daily ridership and speed,
// engineering design, zone one-hots, affected-area covariates.
struct StationFeatures {
  std::vector<std::string> names;
  Eigen::MatrixXd x;  // one row per station
};

StationFeatures build_station_features(const Panel& panel, const StationTable& stations,
                                       const NetworkGraph& graph);

struct ImputationEvalRow {
  std::string metric;
  std::string method;  // "random_forest" | "linear_regression"
  RegressionEval eval;
};

struct ImputationReport {
  std::vector<ImputationEvalRow> rows;       // cross-validated, shared folds
  std::map<std::string, double> oob_r2;      // forest out-of-bag R^2 per metric
  std::size_t n_train = 0;
  std::size_t n_imputed_stations = 0;
  bool refused = false;                      // fewer than 10 training stations
};

// Fills every missing metric cell with a forest trained on the stations
// where that metric was estimated, adds records for stations that had none,
// and benchmarks the forest against the linear baseline on shared
// cross-validation folds. Records gain imputed=true when any cell was
// predicted. Refuses (and reports) when fewer than 10 stations carry
// estimates.
ImputationReport impute_missing(std::vector<VulnerabilityRecord>& records,
                                const StationFeatures& features,
                                const std::vector<StationBaseline>& baselines,
                                const ForestHyper& hyper);

}  // namespace metrovuln
