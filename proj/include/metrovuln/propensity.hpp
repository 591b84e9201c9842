#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "metrovuln/panel.hpp"

namespace metrovuln {

// Term grammar: a base covariate name, `a:b` for an interaction, or `a^2`
// for a polynomial expansion of a continuous covariate.
//
// Base covariates: past_disruptions, time0..time7, temp_c, wind_kmh, rain,
// rail, overground, terminal, screen_door, n_lines, avg_adjacent_km,
// station_age, rolling_stock_age, pre_entry, pre_exit, zone2..zoneK.
std::vector<std::string> default_formula();

struct DesignMatrix {
  std::vector<std::string> columns;        // no intercept column
  Eigen::MatrixXd x;                       // one row per panel unit, panel order
  Eigen::VectorXd y;                       // treatment indicator
};

DesignMatrix build_design(const Panel& panel, const StationTable& stations,
                          const NetworkGraph& graph, const std::vector<std::string>& terms);

struct PropensityModel {
  std::vector<std::string> terms;
  double intercept = 0;                    // original covariate scale
  Eigen::VectorXd coef;
  double intercept_std = 0;                // standardized scale, kept for diagnostics
  Eigen::VectorXd coef_std;
  Eigen::VectorXd col_mean, col_sd;        // standardization used at fit time
};

struct FitReport {
  int iterations = 0;
  double deviance = 0;
  double null_deviance = 0;
  double mcfadden_r2 = 0;
  std::vector<double> deviance_path;       // per-iteration deviance, non-increasing
  Eigen::VectorXd se;                      // [intercept, coefs...] on the original scale
};

struct FitOptions {
  int max_iterations = 100;
  double deviance_tol = 1e-8;
  double separation_bound = 1e3;           // on standardized coefficients
};

// Maximum-likelihood logistic fit by iteratively reweighted least squares
// with step halving, so the deviance never increases between iterations.
// Throws on single-class data, rank deficiency (naming the dependent
// columns) and apparent perfect separation.
std::pair<PropensityModel, FitReport> fit_logistic(const DesignMatrix& d,
                                                   const FitOptions& opts = {});

// Scores for every unit of the panel, strictly inside (0,1).
std::vector<double> predict_scores(const PropensityModel& model, const Panel& panel,
                                   const StationTable& stations, const NetworkGraph& graph);

// Rank-statistic AUC with tied scores counted half. Equals the probability
// that a random treated unit outranks a random control.
double auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

double mcfadden_r2(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

struct SupportBin {
  double lo = 0, hi = 0;
  std::size_t treated = 0, control = 0;
};

struct SupportReport {
  std::vector<SupportBin> bins;
  std::vector<std::size_t> out_of_support;  // treated unit indices beyond the control range
  double control_min = 0, control_max = 0;
};

SupportReport common_support(const std::vector<double>& scores,
                             const std::vector<std::uint8_t>& labels, int bins);

// Single-pass likelihood-ratio forward selection at the given significance
// level, starting from the key covariates (past disruptions, time of day,
// real-time demand) and trying the remaining Stage 1 covariates in a fixed
// order. Returns the selected term list.
std::vector<std::string> forward_select(const Panel& panel, const StationTable& stations,
                                        const NetworkGraph& graph, double alpha = 0.05);

// Regularized upper incomplete gamma Q(a, x); chi-square survival function
// is Q(df/2, x/2).
double gamma_q(double a, double x);

}  // namespace metrovuln
