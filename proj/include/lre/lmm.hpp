#pragma once
#include <cmath>
#include <stdexcept>
#include <vector>

#include "lre/trial_data.hpp"
#include "lre/types.hpp"

namespace lre {

// Marginal likelihoods over per-site sufficient statistics.
//
// Control-mean model (random intercept): for site j with n0 control units,
//   ybar0_j ~ N(w_j' alpha + eta0_j, sigma0^2 / n0),  eta0_j ~ N(0, omega00),
// and the within-site scatter ss0_j carries the residual-variance
// information lost by averaging.
//
// Effect model (random intercept + slope on the site effect): the site-level
// observation is t_j = (ybar0_j, d_j) with d_j = ybar1_j - ybar0_j,
//   t_j ~ N((w_j' beta0, w_j' beta1), T + V_j),
//   V_j = [[ s0/n0, -s0/n0 ], [ -s0/n0, s1/n1 + s0/n0 ]],
// where s0, s1 are arm-specific residual variances and T is the 2x2
// covariance of the site random effects (eta0_j, v1_j).

inline constexpr double kLog2Pi = 1.8378770664093454836;

// One-site log likelihood, control-mean model. resid = ybar0 - w'alpha.
// Requires omega00 >= 0, sigma0_sq > 0, n0 >= 1; ss0 must be 0 when n0 == 1.
template <class S>
S site_loglik_intercept(S omega00, S sigma0_sq, long n0, S resid, S ss0) {
  using std::log;
  const S v = omega00 + sigma0_sq / S(n0);
  return -S(0.5) * S(n0 - 1) * (S(kLog2Pi) + log(sigma0_sq)) -
         ss0 / (S(2) * sigma0_sq) - S(0.5) * log(S(n0)) -
         S(0.5) * S(kLog2Pi) - S(0.5) * log(v) - resid * resid / (S(2) * v);
}

// One-site log likelihood, effect model. resid = (ybar0 - w'beta0,
// d - w'beta1). Requires T PSD, sigmas > 0, n0 >= 1, n1 >= 1.
template <class S>
S site_loglik_slope(const Mat2<S>& T, S sigma0_sq, S sigma1_sq, long n0,
                    long n1, const Vec2<S>& resid, S ss0, S ss1) {
  using std::log;
  const S a = sigma0_sq / S(n0);
  const S b = sigma1_sq / S(n1);
  const S s00 = T(0, 0) + a;
  const S s01 = T(0, 1) - a;
  const S s11 = T(1, 1) + b + a;
  const S det = s00 * s11 - s01 * s01;
  const S quad = (resid[0] * (s11 * resid[0] - s01 * resid[1]) +
                  resid[1] * (s00 * resid[1] - s01 * resid[0])) /
                 det;
  return -S(0.5) * S(n0 - 1) * (S(kLog2Pi) + log(sigma0_sq)) -
         ss0 / (S(2) * sigma0_sq) -
         S(0.5) * S(n1 - 1) * (S(kLog2Pi) + log(sigma1_sq)) -
         ss1 / (S(2) * sigma1_sq) - S(0.5) * (log(S(n0)) + log(S(n1))) -
         S(kLog2Pi) - S(0.5) * log(det) - S(0.5) * quad;
}

// Site statistics rearranged into dense arrays for repeated evaluation.
// W rows are the per-site covariate vectors, leading intercept included.
struct LmmData {
  VectorXd n0, n1;      // arm sizes (as doubles; exact for realistic sizes)
  VectorXd ybar0, d;    // control mean and arm difference
  VectorXd ss0, ss1;    // within-arm scatter
  MatrixXd W;           // J x p site-level design
  long J() const { return n0.size(); }
  long p() const { return W.cols(); }
};

LmmData make_lmm_data(const std::vector<SiteSufficientStats>& stats,
                      const MatrixXd& W);

// Generalized least squares at fixed variance components. The effect-model
// solve stacks two whitened rows per site and uses a rank-revealing
// decomposition, so an exactly collinear design yields the minimum-norm
// solution instead of failing.
VectorXd gls_intercept(const LmmData& data, double omega00, double sigma0_sq);
VectorXd gls_slope(const LmmData& data, const Matrix2d& T, double sigma0_sq,
                   double sigma1_sq);  // returns (beta0; beta1), length 2p

// Full-data log likelihoods at explicit parameter values. Throw
// std::domain_error outside the parameter space (negative variances,
// T not positive semidefinite).
double marginal_loglik_intercept(const std::vector<SiteSufficientStats>& stats,
                                 const MatrixXd& W, const VectorXd& alpha,
                                 double omega00, double sigma0_sq);
double marginal_loglik_slope(const std::vector<SiteSufficientStats>& stats,
                             const MatrixXd& W, const VectorXd& beta0,
                             const VectorXd& beta1, const Matrix2d& T,
                             double sigma0_sq, double sigma1_sq);

// Profiled log likelihood and its analytic gradient in the unconstrained
// parameterization (log variances; log-Cholesky for T). Fixed effects are
// concentrated out by GLS, so by the envelope theorem the gradient needs
// only the variance-component partials. Exposed for gradient checks.
double ri_profiled_loglik(const LmmData& data, const Vector2d& phi,
                          Vector2d* grad, VectorXd* alpha_out);
double rs_profiled_loglik(const LmmData& data, const VectorXd& phi5,
                          VectorXd* grad, VectorXd* gamma_out);

Matrix2d t_from_log_cholesky(const VectorXd& phi5);

struct FitOptions {
  int max_iterations = 500;
  double rel_tol = 1e-10;
  double grad_tol = 1e-6;
};

struct RandomInterceptFit {
  VectorXd alpha;        // fixed effects, aligned with W columns
  double omega00 = 0.0;  // site intercept variance
  double sigma0_sq = 0.0;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  bool boundary_omega00 = false;  // omega00 driven to the zero boundary
  std::vector<double> loglik_trace;
};

struct RandomSlopeFit {
  VectorXd beta0, beta1;  // fixed effects for control mean and effect rows
  Matrix2d T;             // covariance of (eta0, v1)
  double sigma0_sq = 0.0, sigma1_sq = 0.0;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  bool boundary = false;  // a T eigenvalue driven to the zero boundary
  std::vector<double> loglik_trace;
};

// Maximum likelihood fits. W must have full column rank; a collinear design
// throws std::invalid_argument naming the dependent columns. Variance
// estimates under 1e-10 of sigma0_sq are reported as exact zeros with the
// boundary flag set.
RandomInterceptFit fit_random_intercept(
    const std::vector<SiteSufficientStats>& stats, const MatrixXd& W,
    const FitOptions& opts = {});
RandomSlopeFit fit_random_slope(const std::vector<SiteSufficientStats>& stats,
                                const MatrixXd& W, const FitOptions& opts = {});

// Convenience builders: design = [1, site_covariates] and, when present,
// [1, site_covariates, extra] (used for estimated-intercept regressors).
MatrixXd build_design(long J, const MatrixXd& site_covariates);
MatrixXd build_design(long J, const MatrixXd& site_covariates,
                      const VectorXd& extra);

}  // namespace lre
