#include "lre/strategies.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lre {

const char* strategy_name(StrategyId s) {
  switch (s) {
    case StrategyId::itt: return "itt";
    case StrategyId::itt_adj: return "itt_adj";
    case StrategyId::me: return "me";
    case StrategyId::me_adj_x: return "me_adj_x";
    case StrategyId::me_adj_x_y0: return "me_adj_x_y0";
    case StrategyId::twostep: return "twostep";
    case StrategyId::me_adj_x_u: return "me_adj_x_u";
  }
  return "?";
}

std::optional<StrategyId> parse_strategy(const std::string& name) {
  for (StrategyId s : all_strategies()) {
    if (name == strategy_name(s)) return s;
  }
  return std::nullopt;
}

std::vector<StrategyId> all_strategies() {
  return {StrategyId::itt,         StrategyId::itt_adj,
          StrategyId::me,          StrategyId::me_adj_x,
          StrategyId::me_adj_x_y0, StrategyId::twostep,
          StrategyId::me_adj_x_u};
}

bool strategy_needs_truth(StrategyId s) { return s == StrategyId::me_adj_x_u; }
bool strategy_needs_records(StrategyId s) { return s == StrategyId::itt_adj; }
bool strategy_is_centered(StrategyId s) {
  return s != StrategyId::itt && s != StrategyId::itt_adj;
}

VectorXd StrategyResult::points() const {
  VectorXd v(static_cast<long>(estimates.size()));
  for (size_t j = 0; j < estimates.size(); ++j) v[j] = estimates[j].point;
  return v;
}

namespace {

void check_truth_usage(StrategyId strategy, const SyntheticTruth* truth,
                       long J) {
  if (strategy_needs_truth(strategy)) {
    if (!truth) {
      throw std::invalid_argument(std::string(strategy_name(strategy)) +
                                  " requires simulation truth");
    }
    if (static_cast<long>(truth->mu_u1.size()) != J ||
        static_cast<long>(truth->mu_u2.size()) != J) {
      throw std::invalid_argument("simulation truth does not match dataset");
    }
  } else if (truth) {
    throw std::invalid_argument(std::string(strategy_name(strategy)) +
                                " must not be given simulation truth");
  }
}

StrategyResult make_result(StrategyId s,
                           const std::vector<SiteSufficientStats>& stats) {
  StrategyResult r;
  r.strategy = s;
  r.estimates.resize(stats.size());
  for (size_t j = 0; j < stats.size(); ++j) {
    r.estimates[j].site_id = stats[j].site_id;
    r.estimates[j].strategy = s;
  }
  return r;
}

void center_points(StrategyResult& r) {
  double m = 0.0;
  for (const auto& e : r.estimates) m += e.point;
  m /= static_cast<double>(r.estimates.size());
  for (auto& e : r.estimates) e.point -= m;
}

StrategyResult run_mixed(StrategyId strategy,
                         const std::vector<SiteSufficientStats>& stats,
                         const MatrixXd& W) {
  StrategyResult r = make_result(strategy, stats);
  auto fit = std::make_shared<RandomSlopeFit>(fit_random_slope(stats, W));
  r.converged = fit->converged;
  if (!fit->converged) r.warning = "effect-model fit did not converge";
  r.eb.reserve(stats.size());
  for (size_t j = 0; j < stats.size(); ++j) {
    EbSlope e = posterior_slope(stats[j], *fit,
                                W.row(static_cast<long>(j)).transpose());
    r.estimates[j].point = e.v1_star;
    r.estimates[j].post_var = e.post_var;
    r.estimates[j].has_post_var = true;
    if (e.post_var_clamped) ++r.clamped_post_vars;
    r.eb.push_back(std::move(e));
  }
  r.slope_fit = std::move(fit);
  center_points(r);
  return r;
}

StrategyResult run_twostep(const std::vector<SiteSufficientStats>& stats,
                           const MatrixXd& site_covariates) {
  const long J = static_cast<long>(stats.size());
  StrategyResult r = make_result(StrategyId::twostep, stats);
  const MatrixXd W1 = build_design(J, site_covariates);
  auto fit1 =
      std::make_shared<RandomInterceptFit>(fit_random_intercept(stats, W1));
  VectorXd eta0(J);
  r.eb0.reserve(stats.size());
  for (long j = 0; j < J; ++j) {
    EbIntercept e = posterior_intercept(stats[static_cast<size_t>(j)], *fit1,
                                        W1.row(j).transpose());
    eta0[j] = e.eta0_star;
    r.eb0.push_back(e);
  }
  // A zero-variance step 1 shrinks every eta0* to 0; the column would be
  // collinear, so step 2 then runs without it. The spread check catches the
  // same degeneracy when the variance stops just short of the boundary.
  const double eta_sd =
      std::sqrt((eta0.array() - eta0.mean()).square().sum() /
                static_cast<double>(J));
  const bool drop_eta = fit1->boundary_omega00 ||
                        eta_sd <= 1e-9 * (1.0 + std::sqrt(fit1->sigma0_sq));
  const MatrixXd W2 =
      drop_eta ? W1 : build_design(J, site_covariates, eta0);
  auto fit2 = std::make_shared<RandomSlopeFit>(fit_random_slope(stats, W2));
  r.converged = fit1->converged && fit2->converged;
  if (!r.converged) r.warning = "a model fit did not converge";
  if (drop_eta) {
    r.warning = r.warning.empty()
                    ? "step 1 found no site variation; eta0* column dropped"
                    : r.warning + "; eta0* column dropped";
  }
  r.eb.reserve(stats.size());
  for (long j = 0; j < J; ++j) {
    EbSlope e = posterior_slope(stats[static_cast<size_t>(j)], *fit2,
                                W2.row(j).transpose());
    r.estimates[static_cast<size_t>(j)].point = e.v1_star;
    r.estimates[static_cast<size_t>(j)].post_var = e.post_var;
    r.estimates[static_cast<size_t>(j)].has_post_var = true;
    if (e.post_var_clamped) ++r.clamped_post_vars;
    r.eb.push_back(std::move(e));
  }
  r.intercept_fit = std::move(fit1);
  r.slope_fit = std::move(fit2);
  center_points(r);
  return r;
}

}  // namespace

StrategyResult estimate_lre(StrategyId strategy,
                            const std::vector<SiteSufficientStats>& stats,
                            const MatrixXd& site_covariates,
                            const SyntheticTruth* truth) {
  const long J = static_cast<long>(stats.size());
  check_truth_usage(strategy, truth, J);
  if (site_covariates.rows() != 0 && site_covariates.rows() != J) {
    throw std::invalid_argument("site covariate rows do not match site count");
  }

  switch (strategy) {
    case StrategyId::itt: {
      StrategyResult r = make_result(strategy, stats);
      for (size_t j = 0; j < stats.size(); ++j) {
        r.estimates[j].point = stats[j].ybar1 - stats[j].ybar0;
      }
      return r;
    }
    case StrategyId::itt_adj:
      throw std::invalid_argument(
          "itt_adj needs individual records, not site statistics");
    case StrategyId::me:
      return run_mixed(strategy, stats, build_design(J, MatrixXd(0, 0)));
    case StrategyId::me_adj_x:
      return run_mixed(strategy, stats, build_design(J, site_covariates));
    case StrategyId::me_adj_x_y0: {
      VectorXd ybar0(J);
      for (long j = 0; j < J; ++j) ybar0[j] = stats[static_cast<size_t>(j)].ybar0;
      return run_mixed(strategy, stats,
                       build_design(J, site_covariates, ybar0));
    }
    case StrategyId::twostep:
      return run_twostep(stats, site_covariates);
    case StrategyId::me_adj_x_u: {
      MatrixXd covs(J, site_covariates.cols() + 2);
      if (site_covariates.cols() > 0) {
        covs.leftCols(site_covariates.cols()) = site_covariates;
      }
      covs.col(site_covariates.cols()) =
          Eigen::Map<const VectorXd>(truth->mu_u1.data(), J);
      covs.col(site_covariates.cols() + 1) =
          Eigen::Map<const VectorXd>(truth->mu_u2.data(), J);
      return run_mixed(strategy, stats, build_design(J, covs));
    }
  }
  throw std::logic_error("unknown strategy");
}

StrategyResult estimate_lre(StrategyId strategy, const TrialDataset& data,
                            const SyntheticTruth* truth) {
  if (strategy != StrategyId::itt_adj) {
    return estimate_lre(strategy, summarize_sites(data),
                        data.site_covariate_matrix(), truth);
  }
  check_truth_usage(strategy, truth, data.num_sites());
  const auto stats = summarize_sites(data);
  StrategyResult r = make_result(strategy, stats);

  // Per-site OLS of y on (1, z, x); a site whose design is rank deficient
  // falls back to the raw mean difference and is counted.
  const long J = data.num_sites();
  std::vector<std::vector<size_t>> by_site(static_cast<size_t>(J));
  for (size_t i = 0; i < data.records().size(); ++i) {
    const auto& rec = data.records()[i];
    by_site[static_cast<size_t>(data.site_index(rec.site_id))].push_back(i);
  }
  const long k = data.num_individual_covariates();
  for (long j = 0; j < J; ++j) {
    const auto& idx = by_site[static_cast<size_t>(j)];
    const long n = static_cast<long>(idx.size());
    MatrixXd X(n, 2 + k);
    VectorXd y(n);
    for (long i = 0; i < n; ++i) {
      const auto& rec = data.records()[idx[static_cast<size_t>(i)]];
      X(i, 0) = 1.0;
      X(i, 1) = rec.z ? 1.0 : 0.0;
      for (long c = 0; c < k; ++c) X(i, 2 + c) = rec.x[static_cast<size_t>(c)];
      y[i] = rec.y;
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
    if (qr.rank() < X.cols()) {
      const auto& s = stats[static_cast<size_t>(j)];
      r.estimates[static_cast<size_t>(j)].point = s.ybar1 - s.ybar0;
      ++r.fallback_sites;
    } else {
      r.estimates[static_cast<size_t>(j)].point = qr.solve(y)[1];
    }
  }
  if (r.fallback_sites > 0) {
    r.warning = std::to_string(r.fallback_sites) +
                " site(s) fell back to the raw mean difference";
  }
  return r;
}

std::vector<double> oracle_identification_check(const OracleWorld& world) {
  const size_t J = world.sites.size();
  for (const auto& s : world.sites) {
    double psum = 0.0;
    for (const auto& [v, p] : s.y0_dist) {
      (void)v;
      if (!(p >= 0.0)) {
        throw std::invalid_argument("control-outcome probabilities must be "
                                    "nonnegative");
      }
      psum += p;
    }
    if (std::fabs(psum - 1.0) > 1e-12) {
      throw std::invalid_argument(
          "control-outcome distribution must sum to one");
    }
  }

  auto same_profile = [](const OracleSite& a, const OracleSite& b) {
    if (a.phi_x.size() != b.phi_x.size()) return false;
    for (long i = 0; i < a.phi_x.size(); ++i) {
      if (a.phi_x[i] != b.phi_x[i]) return false;
    }
    if (a.y0_dist.size() != b.y0_dist.size()) return false;
    for (size_t i = 0; i < a.y0_dist.size(); ++i) {
      if (a.y0_dist[i] != b.y0_dist[i]) return false;
    }
    return true;
  };

  std::vector<long> group(J, -1);
  std::vector<std::vector<size_t>> groups;
  for (size_t j = 0; j < J; ++j) {
    for (size_t gi = 0; gi < groups.size(); ++gi) {
      if (same_profile(world.sites[groups[gi][0]], world.sites[j])) {
        group[j] = static_cast<long>(gi);
        groups[gi].push_back(j);
        break;
      }
    }
    if (group[j] < 0) {
      group[j] = static_cast<long>(groups.size());
      groups.push_back({j});
    }
  }

  std::vector<double> group_mean(groups.size());
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    double tsum = 0.0, tmax = 0.0, isum = 0.0;
    for (size_t j : groups[gi]) {
      tsum += world.sites[j].theta;
      tmax = std::max(tmax, std::fabs(world.sites[j].theta));
      isum += world.sites[j].site_itt;
    }
    if (std::fabs(tsum) > 1e-9 * (1.0 + tmax)) {
      throw std::invalid_argument(
          "matched group's site effects must sum to zero");
    }
    group_mean[gi] = isum / static_cast<double>(groups[gi].size());
  }

  std::vector<double> residual(J);
  for (size_t j = 0; j < J; ++j) {
    residual[j] = (world.sites[j].site_itt -
                   group_mean[static_cast<size_t>(group[j])]) -
                  world.sites[j].theta;
  }
  return residual;
}

}  // namespace lre
