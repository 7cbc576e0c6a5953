#include "lre/eb.hpp"

#include <cmath>
#include <stdexcept>

namespace lre {

double reliability_intercept(double omega00, double sigma0_sq, long n0) {
  if (!(omega00 >= 0.0) || !(sigma0_sq > 0.0) || n0 < 1) {
    throw std::domain_error("reliability needs omega00 >= 0, sigma0_sq > 0, "
                            "n0 >= 1");
  }
  return omega00 / (omega00 + sigma0_sq / static_cast<double>(n0));
}

EbIntercept posterior_intercept(const SiteSufficientStats& site,
                                const RandomInterceptFit& fit,
                                const VectorXd& w_row) {
  if (w_row.size() != fit.alpha.size()) {
    throw std::invalid_argument("covariate row does not match fitted design");
  }
  EbIntercept out;
  out.reliability = reliability_intercept(fit.omega00, fit.sigma0_sq, site.n0);
  const double resid = site.ybar0 - w_row.dot(fit.alpha);
  out.eta0_star = out.reliability * resid;
  out.post_var = fit.omega00 * (1.0 - out.reliability);
  return out;
}

Matrix2d reliability_matrix(const Matrix2d& T, double sigma0_sq,
                            double sigma1_sq, long n0, long n1) {
  if (n0 < 1 || n1 < 1) {
    throw std::domain_error("reliability matrix needs n0 >= 1 and n1 >= 1");
  }
  const double a = sigma0_sq / static_cast<double>(n0);
  const double b = sigma1_sq / static_cast<double>(n1);
  Matrix2d S;
  S << T(0, 0) + a, T(0, 1) - a, T(1, 0) - a, T(1, 1) + b + a;
  const double det = S(0, 0) * S(1, 1) - S(0, 1) * S(1, 0);
  if (!(std::fabs(det) > 0.0) || !std::isfinite(det)) {
    throw std::domain_error("marginal site covariance is singular");
  }
  Matrix2d Sinv;
  Sinv << S(1, 1) / det, -S(0, 1) / det, -S(1, 0) / det, S(0, 0) / det;
  return T * Sinv;
}

EbSlope posterior_slope(const SiteSufficientStats& site,
                        const RandomSlopeFit& fit, const VectorXd& w_row) {
  if (w_row.size() != fit.beta0.size()) {
    throw std::invalid_argument("covariate row does not match fitted design");
  }
  EbSlope out;
  out.lambda = reliability_matrix(fit.T, fit.sigma0_sq, fit.sigma1_sq, site.n0,
                                  site.n1);
  const Vector2d r(site.ybar0 - w_row.dot(fit.beta0),
                   (site.ybar1 - site.ybar0) - w_row.dot(fit.beta1));
  out.u_star = out.lambda * r;
  out.v1_star = out.u_star[1];
  out.post_var = (1.0 - out.lambda(1, 1)) * fit.T(1, 1) -
                 out.lambda(1, 0) * fit.T(0, 1);
  if (out.post_var < 0.0) {
    out.post_var = 0.0;
    out.post_var_clamped = true;
  }
  return out;
}

}  // namespace lre
