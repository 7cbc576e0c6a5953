#pragma once
#include "lre/lmm.hpp"
#include "lre/trial_data.hpp"
#include "lre/types.hpp"

namespace lre {

// Empirical-Bayes (posterior mean) site effects at the fitted parameters.
//
// Intercept model: eta0_j | ybar0_j is normal with mean lambda * resid and
// variance omega00 * (1 - lambda), lambda = omega00 / (omega00 + s0/n0).
//
// Effect model: u_j = (eta0_j, v1_j) given t_j = (ybar0_j, d_j) has mean
// Lambda_j r_j with Lambda_j = T (T + V_j)^{-1} and covariance (I - Lambda_j) T.
// The local-effect estimate is the v1 component; its posterior variance is
// (1 - lambda11) tau11 - lambda10 tau01.

double reliability_intercept(double omega00, double sigma0_sq, long n0);

struct EbIntercept {
  double eta0_star = 0.0;
  double post_var = 0.0;
  double reliability = 0.0;
};

EbIntercept posterior_intercept(const SiteSufficientStats& site,
                                const RandomInterceptFit& fit,
                                const VectorXd& w_row);

// Lambda = T (T + V)^{-1}; throws std::domain_error when T + V is singular.
Matrix2d reliability_matrix(const Matrix2d& T, double sigma0_sq,
                            double sigma1_sq, long n0, long n1);

struct EbSlope {
  double v1_star = 0.0;
  double post_var = 0.0;      // clamped at zero when cancellation dips below
  bool post_var_clamped = false;
  Vector2d u_star{0.0, 0.0};  // (eta0*, v1*)
  Matrix2d lambda;
};

EbSlope posterior_slope(const SiteSufficientStats& site,
                        const RandomSlopeFit& fit, const VectorXd& w_row);

}  // namespace lre
