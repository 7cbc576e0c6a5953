#pragma once
#include <string>
#include <vector>

#include "lre/types.hpp"

namespace lre {

// Rank-based 30/40/30 tier split: sort ascending, bottom floor(0.3J) -> 1,
// top floor(0.3J) -> 3, remainder -> 2; ties broken by site index.
std::vector<int> classify_tiers(const std::vector<double>& points);
std::vector<int> classify_tiers(const VectorXd& points);

// Aggregated evaluation criteria for one (cell, strategy): bias statistics
// and RMSE in scaling-unit fractions, empirical variance in squared scaling
// units, tier classification error rates. `estimates` is R x J (replication
// by site); `theta` is the fixed per-site truth.
struct CellSummary {
  std::string strategy;
  double mean_bias = 0.0;
  double sd_bias = 0.0;        // NaN when R < 2 makes it undefined
  double avg_emp_var = 0.0;
  double variance_ratio = 0.0;  // vs the naive strategy; NaN when absent
  double avg_rmse = 0.0;
  double rmse_reduction = 0.0;  // vs the naive strategy; NaN when absent
  double sce_rate = 0.0;
  double mce_rate = 0.0;
  long replications = 0;
};

// (mean, sd) across sites of the per-site bias mean_r(estimate) - theta_j,
// in units of sigma; sd uses the J-1 denominator and is NaN when R < 2.
std::pair<double, double> bias_stats(const MatrixXd& estimates,
                                     const VectorXd& theta, double sigma);

// Average across sites of sqrt(empirical variance + squared bias) / sigma;
// the empirical variance divides by R so the decomposition is exact.
double rmse_summary(const MatrixXd& estimates, const VectorXd& theta,
                    double sigma);

double avg_empirical_variance(const MatrixXd& estimates, double sigma);

// (sce_rate, mce_rate): per replication, estimates are re-tiered and compared
// with the fixed true tiers; (est - true)^2 = 4 is severe, = 1 moderate.
std::pair<double, double> classification_rates(const MatrixXd& estimates,
                                               const std::vector<int>& true_tiers);

CellSummary summarize_cell(const std::string& strategy,
                           const MatrixXd& estimates, const VectorXd& theta,
                           const std::vector<int>& true_tiers, double sigma);

// Fills variance_ratio and rmse_reduction of `summary` relative to `naive`.
void finalize_ratios(CellSummary& summary, const CellSummary& naive);

}  // namespace lre
