#include "lre/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace lre {

std::vector<int> classify_tiers(const std::vector<double>& points) {
  const int J = static_cast<int>(points.size());
  if (J < 3) throw std::invalid_argument("tier classification needs J >= 3");
  std::vector<int> order(J);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (points[a] != points[b]) return points[a] < points[b];
    return a < b;
  });
  const int n_extreme = static_cast<int>(std::floor(0.3 * J));
  std::vector<int> tiers(J, 2);
  for (int r = 0; r < n_extreme; ++r) tiers[order[r]] = 1;
  for (int r = J - n_extreme; r < J; ++r) tiers[order[r]] = 3;
  return tiers;
}

std::vector<int> classify_tiers(const VectorXd& points) {
  return classify_tiers(
      std::vector<double>(points.data(), points.data() + points.size()));
}

namespace {

// Per-site bias (mean over replications minus truth), raw outcome units.
VectorXd site_bias(const MatrixXd& estimates, const VectorXd& theta) {
  return estimates.colwise().mean().transpose() - theta;
}

// Per-site empirical variance with the 1/R denominator.
VectorXd site_emp_var(const MatrixXd& estimates) {
  const auto R = estimates.rows();
  MatrixXd centered = estimates.rowwise() - estimates.colwise().mean();
  return centered.colwise().squaredNorm().transpose() /
         static_cast<double>(R);
}

}  // namespace

std::pair<double, double> bias_stats(const MatrixXd& estimates,
                                     const VectorXd& theta, double sigma) {
  const VectorXd bias = site_bias(estimates, theta) / sigma;
  const double mean = bias.mean();
  if (estimates.rows() < 2) {
    return {mean, std::numeric_limits<double>::quiet_NaN()};
  }
  const double ssd = (bias.array() - mean).square().sum();
  return {mean, std::sqrt(ssd / static_cast<double>(bias.size() - 1))};
}

double avg_empirical_variance(const MatrixXd& estimates, double sigma) {
  return site_emp_var(estimates).mean() / (sigma * sigma);
}

double rmse_summary(const MatrixXd& estimates, const VectorXd& theta,
                    double sigma) {
  const VectorXd bias = site_bias(estimates, theta);
  const VectorXd var = site_emp_var(estimates);
  return (var.array() + bias.array().square()).sqrt().mean() / sigma;
}

std::pair<double, double> classification_rates(
    const MatrixXd& estimates, const std::vector<int>& true_tiers) {
  const auto R = estimates.rows();
  const auto J = estimates.cols();
  if (static_cast<long>(true_tiers.size()) != J) {
    throw std::invalid_argument("tier vector length mismatch");
  }
  long severe = 0, moderate = 0;
  std::vector<double> row(J);
  for (long r = 0; r < R; ++r) {
    for (long j = 0; j < J; ++j) row[j] = estimates(r, j);
    const std::vector<int> est = classify_tiers(row);
    for (long j = 0; j < J; ++j) {
      const int d = est[j] - true_tiers[j];
      if (d * d == 4) ++severe;
      if (d * d == 1) ++moderate;
    }
  }
  const double denom = static_cast<double>(R) * static_cast<double>(J);
  return {severe / denom, moderate / denom};
}

CellSummary summarize_cell(const std::string& strategy,
                           const MatrixXd& estimates, const VectorXd& theta,
                           const std::vector<int>& true_tiers, double sigma) {
  CellSummary s;
  s.strategy = strategy;
  s.replications = estimates.rows();
  std::tie(s.mean_bias, s.sd_bias) = bias_stats(estimates, theta, sigma);
  s.avg_emp_var = avg_empirical_variance(estimates, sigma);
  s.avg_rmse = rmse_summary(estimates, theta, sigma);
  std::tie(s.sce_rate, s.mce_rate) = classification_rates(estimates, true_tiers);
  s.variance_ratio = std::numeric_limits<double>::quiet_NaN();
  s.rmse_reduction = std::numeric_limits<double>::quiet_NaN();
  return s;
}

void finalize_ratios(CellSummary& summary, const CellSummary& naive) {
  summary.variance_ratio = summary.avg_emp_var / naive.avg_emp_var;
  summary.rmse_reduction = 1.0 - summary.avg_rmse / naive.avg_rmse;
}

}  // namespace lre
