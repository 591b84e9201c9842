#include "metrovuln/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace metrovuln {

std::vector<std::string> default_formula() {
  return {"past_disruptions", "time0", "time1", "time2", "time3", "time4", "time5", "time6",
          "time7", "temp_c", "wind_kmh", "rain", "rail", "overground", "avg_adjacent_km",
          "station_age", "pre_entry", "rolling_stock_age", "overground:wind_kmh"};
}

namespace {

// Value of one base covariate for one unit.
double base_value(const std::string& name, const StudyUnit& u, const StationAttrs& a,
                  double avg_adj) {
  if (name == "past_disruptions") return u.past_disruptions;
  if (name.size() == 5 && name.rfind("time", 0) == 0) {
    int band = name[4] - '0';
    if (band >= 0 && band <= 8) return u.time_band == band ? 1.0 : 0.0;
  }
  if (name == "temp_c") return u.temp_c;
  if (name == "wind_kmh") return u.wind_kmh;
  if (name == "rain") return u.rain;
  if (name == "rail") return a.rail_connect ? 1.0 : 0.0;
  if (name == "overground") return a.overground ? 1.0 : 0.0;
  if (name == "terminal") return a.terminal ? 1.0 : 0.0;
  if (name == "screen_door") return a.screen_door ? 1.0 : 0.0;
  if (name == "n_lines") return a.n_lines;
  if (name == "avg_adjacent_km") return avg_adj;
  if (name == "station_age") return a.station_age;
  if (name == "rolling_stock_age") return a.rolling_stock_age;
  if (name == "pre_entry") return u.pre_entry;
  if (name == "pre_exit") return u.pre_exit;
  if (name.rfind("zone", 0) == 0 && name.size() > 4) {
    int z = std::atoi(name.c_str() + 4);
    if (z >= 2) return a.zone == z ? 1.0 : 0.0;
  }
  throw std::invalid_argument("unknown covariate \"" + name + "\"");
}

double term_value(const std::string& term, const StudyUnit& u, const StationAttrs& a,
                  double avg_adj) {
  auto colon = term.find(':');
  if (colon != std::string::npos) {
    return base_value(term.substr(0, colon), u, a, avg_adj) *
           base_value(term.substr(colon + 1), u, a, avg_adj);
  }
  auto caret = term.find('^');
  if (caret != std::string::npos) {
    int p = std::atoi(term.c_str() + caret + 1);
    if (p < 2) throw std::invalid_argument("bad power in term \"" + term + "\"");
    return std::pow(base_value(term.substr(0, caret), u, a, avg_adj), p);
  }
  return base_value(term, u, a, avg_adj);
}

double bernoulli_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  double ll = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    // log(1 + e^eta) evaluated stably on both tails
    double e = eta[i];
    double log1pe = e > 30 ? e : std::log1p(std::exp(e));
    ll += y[i] * e - log1pe;
  }
  return -2.0 * ll;
}

}  // namespace

DesignMatrix build_design(const Panel& panel, const StationTable& stations,
                          const NetworkGraph& graph, const std::vector<std::string>& terms) {
  DesignMatrix d;
  d.columns = terms;
  d.x.resize(static_cast<Eigen::Index>(panel.size()), static_cast<Eigen::Index>(terms.size()));
  d.y.resize(static_cast<Eigen::Index>(panel.size()));
  for (std::size_t i = 0; i < panel.size(); ++i) {
    StationIdx s = panel.station_of(i);
    const auto& u = panel.units[i];
    const auto& a = stations.rows[s];
    double adj = graph.avg_adjacent_km(s);
    for (std::size_t j = 0; j < terms.size(); ++j)
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          term_value(terms[j], u, a, adj);
    d.y[static_cast<Eigen::Index>(i)] = u.treated;
  }
  return d;
}

std::pair<PropensityModel, FitReport> fit_logistic(const DesignMatrix& d, const FitOptions& opts) {
  const Eigen::Index n = d.x.rows(), p = d.x.cols();
  if (n == 0) throw std::invalid_argument("empty design matrix");
  double y_sum = d.y.sum();
  if (y_sum == 0 || y_sum == n)
    throw std::runtime_error("treatment indicator is single-class; logistic fit undefined");

  // Standardize non-binary columns for conditioning; constants are invalid.
  Eigen::VectorXd mean(p), sd(p);
  std::vector<std::string> constant_cols;
  for (Eigen::Index j = 0; j < p; ++j) {
    auto col = d.x.col(j);
    double m = col.mean();
    double var = (col.array() - m).square().sum() / std::max<Eigen::Index>(n - 1, 1);
    bool binary01 = ((col.array() == 0.0) || (col.array() == 1.0)).all();
    if (var == 0) {
      constant_cols.push_back(d.columns[j]);
      mean[j] = 0;
      sd[j] = 1;
    } else if (binary01) {
      mean[j] = 0;
      sd[j] = 1;
    } else {
      mean[j] = m;
      sd[j] = std::sqrt(var);
    }
  }
  if (!constant_cols.empty()) {
    std::string msg = "constant design columns:";
    for (auto& c : constant_cols) msg += " " + c;
    throw std::runtime_error(msg);
  }

  Eigen::MatrixXd X(n, p + 1);
  X.col(0).setOnes();
  for (Eigen::Index j = 0; j < p; ++j) X.col(j + 1) = (d.x.col(j).array() - mean[j]) / sd[j];

  // Rank check; report the columns a pivoted QR would drop.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < p + 1) {
    const auto& perm = qr.colsPermutation().indices();
    std::string msg = "rank-deficient design, dependent columns:";
    for (Eigen::Index k = qr.rank(); k < p + 1; ++k) {
      Eigen::Index orig = perm[k];
      msg += " " + (orig == 0 ? std::string("(intercept)") : d.columns[orig - 1]);
    }
    throw std::runtime_error(msg);
  }

  FitReport report;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  double base_rate = y_sum / n;
  beta[0] = std::log(base_rate / (1.0 - base_rate));
  Eigen::VectorXd eta = X * beta;
  double deviance = bernoulli_deviance(d.y, eta);
  report.null_deviance = deviance;  // intercept-only start
  report.deviance_path.push_back(deviance);

  Eigen::MatrixXd xtwx(p + 1, p + 1);
  constexpr double w_floor = 1e-10;
  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    Eigen::VectorXd mu = (1.0 + (-eta.array()).exp()).inverse();
    Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).max(w_floor);
    Eigen::VectorXd z = eta.array() + (d.y - mu).array() / w.array();

    xtwx.noalias() = X.transpose() * w.asDiagonal() * X;
    Eigen::VectorXd xtwz = X.transpose() * (w.asDiagonal() * z);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtwx);
    if (ldlt.info() != Eigen::Success)
      throw std::runtime_error("IRLS normal equations not solvable");
    Eigen::VectorXd beta_new = ldlt.solve(xtwz);

    // Step halving keeps the deviance monotone.
    double new_dev = bernoulli_deviance(d.y, X * beta_new);
    Eigen::VectorXd step = beta_new - beta;
    int halvings = 0;
    while (new_dev > deviance + 1e-12 && halvings < 30) {
      step *= 0.5;
      beta_new = beta + step;
      new_dev = bernoulli_deviance(d.y, X * beta_new);
      ++halvings;
    }
    if (new_dev > deviance + 1e-12)
      throw std::runtime_error("IRLS failed to decrease the deviance");

    double delta = deviance - new_dev;
    beta = beta_new;
    eta = X * beta;
    deviance = new_dev;
    report.deviance_path.push_back(deviance);
    if (beta.cwiseAbs().maxCoeff() > opts.separation_bound)
      throw std::runtime_error(
          "coefficients diverging; data appear perfectly separated");
    if (std::abs(delta) < opts.deviance_tol) {
      ++iter;
      break;
    }
  }
  report.iterations = iter;
  report.deviance = deviance;
  // a deviance at machine zero means every unit is fitted exactly
  if (deviance < 1e-6)
    throw std::runtime_error("data appear perfectly separated: deviance collapsed to zero");

  double p_bar = base_rate;
  double null_ll = n * (p_bar * std::log(p_bar) + (1 - p_bar) * std::log(1 - p_bar));
  report.null_deviance = -2.0 * null_ll;
  report.mcfadden_r2 = 1.0 - deviance / report.null_deviance;

  // Covariance on the standardized scale, then mapped back.
  Eigen::VectorXd mu = (1.0 + (-eta.array()).exp()).inverse();
  Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).max(w_floor);
  xtwx.noalias() = X.transpose() * w.asDiagonal() * X;
  Eigen::MatrixXd cov_std = xtwx.ldlt().solve(Eigen::MatrixXd::Identity(p + 1, p + 1));
  Eigen::MatrixXd unscale = Eigen::MatrixXd::Zero(p + 1, p + 1);
  unscale(0, 0) = 1;
  for (Eigen::Index j = 0; j < p; ++j) {
    unscale(0, j + 1) = -mean[j] / sd[j];
    unscale(j + 1, j + 1) = 1.0 / sd[j];
  }
  Eigen::MatrixXd cov = unscale * cov_std * unscale.transpose();

  PropensityModel model;
  model.terms = d.columns;
  model.col_mean = mean;
  model.col_sd = sd;
  model.intercept_std = beta[0];
  model.coef_std = beta.tail(p);
  model.coef.resize(p);
  model.intercept = beta[0];
  for (Eigen::Index j = 0; j < p; ++j) {
    model.coef[j] = beta[j + 1] / sd[j];
    model.intercept -= beta[j + 1] * mean[j] / sd[j];
  }
  report.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return {std::move(model), std::move(report)};
}

std::vector<double> predict_scores(const PropensityModel& model, const Panel& panel,
                                   const StationTable& stations, const NetworkGraph& graph) {
  std::vector<double> scores(panel.size());
  for (std::size_t i = 0; i < panel.size(); ++i) {
    StationIdx s = panel.station_of(i);
    const auto& u = panel.units[i];
    const auto& a = stations.rows[s];
    double adj = graph.avg_adjacent_km(s);
    double eta = model.intercept;
    for (std::size_t j = 0; j < model.terms.size(); ++j)
      eta += model.coef[static_cast<Eigen::Index>(j)] * term_value(model.terms[j], u, a, adj);
    scores[i] = 1.0 / (1.0 + std::exp(-eta));
  }
  return scores;
}

double auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: size mismatch");
  std::size_t n = scores.size();
  std::size_t n_pos = std::accumulate(labels.begin(), labels.end(), std::size_t{0});
  if (n_pos == 0 || n_pos == n) throw std::runtime_error("auc undefined for single-class labels");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Rank sum of positives with average ranks over tie groups.
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum_pos += avg_rank;
    i = j;
  }
  double n1 = static_cast<double>(n_pos), n0 = static_cast<double>(n - n_pos);
  return (rank_sum_pos - n1 * (n1 + 1) / 2.0) / (n1 * n0);
}

double mcfadden_r2(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  std::size_t n = scores.size();
  std::size_t n_pos = std::accumulate(labels.begin(), labels.end(), std::size_t{0});
  if (n_pos == 0 || n_pos == n)
    throw std::runtime_error("mcfadden_r2 undefined for single-class labels");
  double ll = 0;
  for (std::size_t i = 0; i < n; ++i)
    ll += labels[i] ? std::log(scores[i]) : std::log1p(-scores[i]);
  double p_bar = static_cast<double>(n_pos) / n;
  double ll0 = n * (p_bar * std::log(p_bar) + (1 - p_bar) * std::log(1 - p_bar));
  return 1.0 - ll / ll0;
}

SupportReport common_support(const std::vector<double>& scores,
                             const std::vector<std::uint8_t>& labels, int bins) {
  if (bins < 1) throw std::invalid_argument("need at least one histogram bin");
  SupportReport r;
  double lo = scores[0], hi = scores[0];
  r.control_min = std::numeric_limits<double>::infinity();
  r.control_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    lo = std::min(lo, scores[i]);
    hi = std::max(hi, scores[i]);
    if (!labels[i]) {
      r.control_min = std::min(r.control_min, scores[i]);
      r.control_max = std::max(r.control_max, scores[i]);
    }
  }
  double width = (hi - lo) / bins;
  if (width == 0) width = 1;
  r.bins.resize(bins);
  for (int b = 0; b < bins; ++b) {
    r.bins[b].lo = lo + b * width;
    r.bins[b].hi = lo + (b + 1) * width;
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    int b = std::min<int>(static_cast<int>((scores[i] - lo) / width), bins - 1);
    if (labels[i]) ++r.bins[b].treated;
    else ++r.bins[b].control;
    if (labels[i] && (scores[i] > r.control_max || scores[i] < r.control_min))
      r.out_of_support.push_back(i);
  }
  return r;
}

double gamma_q(double a, double x) {
  if (x < 0 || a <= 0) throw std::invalid_argument("gamma_q domain");
  if (x == 0) return 1.0;
  if (x < a + 1.0) {
    // series for P(a,x), return 1 - P
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    double p = sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    return 1.0 - p;
  }
  // continued fraction for Q(a,x)
  double b = x + 1.0 - a, c = 1e308, dd = 1.0 / b, h = dd;
  for (int i = 1; i <= 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    dd = an * dd + b;
    if (std::abs(dd) < 1e-300) dd = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    dd = 1.0 / dd;
    double del = dd * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

std::vector<std::string> forward_select(const Panel& panel, const StationTable& stations,
                                        const NetworkGraph& graph, double alpha) {
  std::vector<std::string> current = {"past_disruptions", "time0", "time1", "time2", "time3",
                                      "time4", "time5", "time6", "time7", "pre_entry"};

  int max_zone = 1;
  for (const auto& a : stations.rows) max_zone = std::max(max_zone, a.zone);
  std::vector<std::vector<std::string>> candidates = {
      {"pre_exit"},       {"temp_c"},          {"wind_kmh"},       {"rain"},
      {"rail"},           {"overground"},      {"terminal"},       {"screen_door"},
      {"n_lines"},        {"avg_adjacent_km"}, {"station_age"},    {"rolling_stock_age"}};
  std::vector<std::string> zone_dummies;
  for (int z = 2; z <= max_zone; ++z) zone_dummies.push_back("zone" + std::to_string(z));
  if (!zone_dummies.empty()) candidates.push_back(zone_dummies);
  candidates.push_back({"overground:wind_kmh"});

  auto deviance_of = [&](const std::vector<std::string>& terms) {
    auto d = build_design(panel, stations, graph, terms);
    return fit_logistic(d).second.deviance;
  };

  double dev = deviance_of(current);
  for (const auto& group : candidates) {
    // an interaction is only tried when its main effects survived
    if (group.size() == 1 && group[0] == "overground:wind_kmh") {
      bool mains = std::count(current.begin(), current.end(), "overground") &&
                   std::count(current.begin(), current.end(), "wind_kmh");
      if (!mains) continue;
    }
    auto trial = current;
    trial.insert(trial.end(), group.begin(), group.end());
    double trial_dev;
    try {
      trial_dev = deviance_of(trial);
    } catch (const std::runtime_error&) {
      continue;  // constant or collinear candidate on this panel
    }
    double lr = dev - trial_dev;
    double p_value = gamma_q(static_cast<double>(group.size()) / 2.0, std::max(lr, 0.0) / 2.0);
    if (p_value < alpha) {
      current = std::move(trial);
      dev = trial_dev;
    }
  }
  return current;
}

}  // namespace metrovuln
