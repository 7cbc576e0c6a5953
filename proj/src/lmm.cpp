#include "lre/lmm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "lre/optim.hpp"

namespace lre {

namespace {

void check_stats(const std::vector<SiteSufficientStats>& stats,
                 const MatrixXd& W, bool need_treated, long min_sites) {
  const long J = static_cast<long>(stats.size());
  if (J < min_sites) {
    throw std::invalid_argument("model needs at least " +
                                std::to_string(min_sites) + " sites, got " +
                                std::to_string(J));
  }
  if (W.rows() != J) {
    throw std::invalid_argument("design has " + std::to_string(W.rows()) +
                                " rows for " + std::to_string(J) + " sites");
  }
  for (const auto& s : stats) {
    if (s.n0 < 1 || !std::isfinite(s.ybar0) || s.ss0 < 0.0) {
      throw std::invalid_argument("site " + s.site_id +
                                  ": invalid control-arm statistics");
    }
    if (need_treated && (s.n1 < 1 || !std::isfinite(s.ybar1) || s.ss1 < 0.0)) {
      throw std::invalid_argument("site " + s.site_id +
                                  ": invalid treated-arm statistics");
    }
  }
}

// Full column rank or an error naming the dependent columns.
void check_design_rank(const MatrixXd& W) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(W);
  const long rank = qr.rank();
  const long p = W.cols();
  if (rank >= p) return;
  const auto& perm = qr.colsPermutation().indices();
  std::ostringstream msg;
  msg << "site design is collinear (rank " << rank << " of " << p
      << "); dependent columns:";
  for (long k = rank; k < p; ++k) msg << ' ' << perm[k];
  throw std::invalid_argument(msg.str());
}

struct SiteChol {  // lower Cholesky factor of Sigma_j
  double c00, c10, c11;
};

// Sigma_j = T + V_j factored per site; false when a pivot is not positive
// (possible only through floating overflow, the model keeps Sigma PD).
bool factor_sites(const LmmData& data, const Matrix2d& T, double s0, double s1,
                  std::vector<SiteChol>& chol) {
  const long J = data.J();
  chol.resize(static_cast<size_t>(J));
  for (long j = 0; j < J; ++j) {
    const double a = s0 / data.n0[j];
    const double b = s1 / data.n1[j];
    const double s00 = T(0, 0) + a;
    const double s01 = T(0, 1) - a;
    const double s11 = T(1, 1) + b + a;
    if (!(s00 > 0.0) || !std::isfinite(s00)) return false;
    const double c00 = std::sqrt(s00);
    const double c10 = s01 / c00;
    const double rem = s11 - c10 * c10;
    if (!(rem > 0.0) || !std::isfinite(rem)) return false;
    chol[static_cast<size_t>(j)] = SiteChol{c00, c10, std::sqrt(rem)};
  }
  return true;
}

// GLS fixed effects given the per-site factors: whiten the two stacked rows
// [w 0; 0 w] and the targets (ybar0, d) by C_j^{-1}, then least squares.
VectorXd gls_slope_factored(const LmmData& data,
                            const std::vector<SiteChol>& chol) {
  const long J = data.J();
  const long p = data.p();
  MatrixXd A = MatrixXd::Zero(2 * J, 2 * p);
  VectorXd t(2 * J);
  for (long j = 0; j < J; ++j) {
    const auto& c = chol[static_cast<size_t>(j)];
    const auto w = data.W.row(j);
    A.block(2 * j, 0, 1, p) = w / c.c00;
    A.block(2 * j + 1, 0, 1, p) = -(c.c10 / c.c11) * (w / c.c00);
    A.block(2 * j + 1, p, 1, p) = w / c.c11;
    const double z0 = data.ybar0[j] / c.c00;
    t[2 * j] = z0;
    t[2 * j + 1] = (data.d[j] - c.c10 * z0) / c.c11;
  }
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(A);
  return cod.solve(t);
}

double sum_finite_guard(double x) { return std::isfinite(x) ? x : -1e300; }

}  // namespace

LmmData make_lmm_data(const std::vector<SiteSufficientStats>& stats,
                      const MatrixXd& W) {
  const long J = static_cast<long>(stats.size());
  LmmData d;
  d.n0.resize(J);
  d.n1.resize(J);
  d.ybar0.resize(J);
  d.d.resize(J);
  d.ss0.resize(J);
  d.ss1.resize(J);
  d.W = W;
  for (long j = 0; j < J; ++j) {
    const auto& s = stats[static_cast<size_t>(j)];
    d.n0[j] = static_cast<double>(s.n0);
    d.n1[j] = static_cast<double>(s.n1);
    d.ybar0[j] = s.ybar0;
    d.d[j] = s.ybar1 - s.ybar0;
    d.ss0[j] = s.ss0;
    d.ss1[j] = s.ss1;
  }
  return d;
}

VectorXd gls_intercept(const LmmData& data, double omega00, double sigma0_sq) {
  const long J = data.J();
  MatrixXd A(J, data.p());
  VectorXd t(J);
  for (long j = 0; j < J; ++j) {
    const double u = 1.0 / std::sqrt(omega00 + sigma0_sq / data.n0[j]);
    A.row(j) = data.W.row(j) * u;
    t[j] = data.ybar0[j] * u;
  }
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(A);
  return cod.solve(t);
}

VectorXd gls_slope(const LmmData& data, const Matrix2d& T, double sigma0_sq,
                   double sigma1_sq) {
  std::vector<SiteChol> chol;
  if (!factor_sites(data, T, sigma0_sq, sigma1_sq, chol)) {
    throw std::domain_error("site covariance is not positive definite");
  }
  return gls_slope_factored(data, chol);
}

double marginal_loglik_intercept(const std::vector<SiteSufficientStats>& stats,
                                 const MatrixXd& W, const VectorXd& alpha,
                                 double omega00, double sigma0_sq) {
  check_stats(stats, W, false, 1);
  if (!(omega00 >= 0.0) || !std::isfinite(omega00)) {
    throw std::domain_error("omega00 must be nonnegative");
  }
  if (!(sigma0_sq > 0.0) || !std::isfinite(sigma0_sq)) {
    throw std::domain_error("sigma0_sq must be positive");
  }
  if (alpha.size() != W.cols()) {
    throw std::invalid_argument("alpha length does not match design");
  }
  double ll = 0.0;
  for (size_t j = 0; j < stats.size(); ++j) {
    const auto& s = stats[j];
    const double resid = s.ybar0 - W.row(static_cast<long>(j)).dot(alpha);
    ll += site_loglik_intercept<double>(omega00, sigma0_sq, s.n0, resid, s.ss0);
  }
  return ll;
}

double marginal_loglik_slope(const std::vector<SiteSufficientStats>& stats,
                             const MatrixXd& W, const VectorXd& beta0,
                             const VectorXd& beta1, const Matrix2d& T,
                             double sigma0_sq, double sigma1_sq) {
  check_stats(stats, W, true, 1);
  const double scale = std::max({std::fabs(T(0, 0)), std::fabs(T(1, 1)), 1.0});
  if (!(T(0, 0) >= 0.0) || !(T(1, 1) >= 0.0) ||
      T(0, 0) * T(1, 1) - T(0, 1) * T(1, 0) < -1e-12 * scale * scale ||
      T(0, 1) != T(1, 0)) {
    throw std::domain_error("T must be symmetric positive semidefinite");
  }
  if (!(sigma0_sq > 0.0) || !(sigma1_sq > 0.0)) {
    throw std::domain_error("residual variances must be positive");
  }
  if (beta0.size() != W.cols() || beta1.size() != W.cols()) {
    throw std::invalid_argument("coefficient length does not match design");
  }
  Mat2<double> Td = T;
  double ll = 0.0;
  for (size_t j = 0; j < stats.size(); ++j) {
    const auto& s = stats[j];
    const auto w = W.row(static_cast<long>(j));
    Vec2<double> r(s.ybar0 - w.dot(beta0),
                   (s.ybar1 - s.ybar0) - w.dot(beta1));
    ll += site_loglik_slope<double>(Td, sigma0_sq, sigma1_sq, s.n0, s.n1, r,
                                    s.ss0, s.ss1);
  }
  return ll;
}

double ri_profiled_loglik(const LmmData& data, const Vector2d& phi,
                          Vector2d* grad, VectorXd* alpha_out) {
  const double omega00 = std::exp(std::min(phi[0], 700.0));
  const double sigma0_sq = std::exp(std::min(phi[1], 700.0));
  const VectorXd alpha = gls_intercept(data, omega00, sigma0_sq);
  if (alpha_out) *alpha_out = alpha;
  const long J = data.J();
  const VectorXd resid = data.ybar0 - data.W * alpha;
  double ll = 0.0;
  double g_omega = 0.0, g_sigma = 0.0;
  for (long j = 0; j < J; ++j) {
    const long n0 = static_cast<long>(data.n0[j]);
    ll += site_loglik_intercept<double>(omega00, sigma0_sq, n0, resid[j],
                                        data.ss0[j]);
    const double v = omega00 + sigma0_sq / data.n0[j];
    const double dv = -0.5 / v + resid[j] * resid[j] / (2.0 * v * v);
    g_omega += dv;
    g_sigma += -(data.n0[j] - 1.0) / (2.0 * sigma0_sq) +
               data.ss0[j] / (2.0 * sigma0_sq * sigma0_sq) + dv / data.n0[j];
  }
  if (grad) {
    (*grad)[0] = omega00 * g_omega;
    (*grad)[1] = sigma0_sq * g_sigma;
  }
  return sum_finite_guard(ll);
}

Matrix2d t_from_log_cholesky(const VectorXd& phi5) {
  const double e0 = std::exp(std::min(phi5[0], 350.0));
  const double c = phi5[1];
  const double e1 = std::exp(std::min(phi5[2], 350.0));
  Matrix2d T;
  T << e0 * e0, c * e0, c * e0, c * c + e1 * e1;
  return T;
}

double rs_profiled_loglik(const LmmData& data, const VectorXd& phi5,
                          VectorXd* grad, VectorXd* gamma_out) {
  if (phi5.size() != 5) {
    throw std::invalid_argument("effect-model parameter vector has 5 entries");
  }
  const double e0 = std::exp(std::min(phi5[0], 350.0));
  const double c = phi5[1];
  const double e1 = std::exp(std::min(phi5[2], 350.0));
  const double s0 = std::exp(std::min(phi5[3], 700.0));
  const double s1 = std::exp(std::min(phi5[4], 700.0));
  Matrix2d T;
  T << e0 * e0, c * e0, c * e0, c * c + e1 * e1;

  std::vector<SiteChol> chol;
  if (!factor_sites(data, T, s0, s1, chol)) return -1e300;
  const VectorXd gamma = gls_slope_factored(data, chol);
  if (gamma_out) *gamma_out = gamma;
  const long J = data.J();
  const long p = data.p();

  double ll = 0.0;
  double g_l0 = 0.0, g_c = 0.0, g_l1 = 0.0, g_s0 = 0.0, g_s1 = 0.0;
  for (long j = 0; j < J; ++j) {
    const auto w = data.W.row(j);
    const double r0 = data.ybar0[j] - w.dot(gamma.head(p));
    const double r1 = data.d[j] - w.dot(gamma.tail(p));
    const auto& ch = chol[static_cast<size_t>(j)];
    const double det = (ch.c00 * ch.c11) * (ch.c00 * ch.c11);
    const double a = s0 / data.n0[j];
    const double b = s1 / data.n1[j];
    const double s00 = T(0, 0) + a;
    const double s01 = T(0, 1) - a;
    const double s11 = T(1, 1) + b + a;
    // inverse and G = -1/2 Sigma^-1 + 1/2 (Sigma^-1 r)(Sigma^-1 r)'
    const double i00 = s11 / det, i01 = -s01 / det, i11 = s00 / det;
    const double q0 = i00 * r0 + i01 * r1;
    const double q1 = i01 * r0 + i11 * r1;
    const double G00 = -0.5 * i00 + 0.5 * q0 * q0;
    const double G01 = -0.5 * i01 + 0.5 * q0 * q1;
    const double G11 = -0.5 * i11 + 0.5 * q1 * q1;

    const double n0 = data.n0[j];
    const double n1 = data.n1[j];
    ll += -0.5 * (n0 - 1.0) * (kLog2Pi + std::log(s0)) -
          data.ss0[j] / (2.0 * s0) -
          0.5 * (n1 - 1.0) * (kLog2Pi + std::log(s1)) -
          data.ss1[j] / (2.0 * s1) - 0.5 * (std::log(n0) + std::log(n1)) -
          kLog2Pi - 0.5 * std::log(det) - 0.5 * (r0 * q0 + r1 * q1);

    g_l0 += G00 * 2.0 * e0 * e0 + 2.0 * G01 * c * e0;
    g_c += 2.0 * G01 * e0 + G11 * 2.0 * c;
    g_l1 += G11 * 2.0 * e1 * e1;
    g_s0 += -(n0 - 1.0) / (2.0 * s0) + data.ss0[j] / (2.0 * s0 * s0) +
            (G00 - 2.0 * G01 + G11) / n0;
    g_s1 += -(n1 - 1.0) / (2.0 * s1) + data.ss1[j] / (2.0 * s1 * s1) + G11 / n1;
  }
  if (grad) {
    grad->resize(5);
    (*grad)[0] = g_l0;
    (*grad)[1] = g_c;
    (*grad)[2] = g_l1;
    (*grad)[3] = s0 * g_s0;
    (*grad)[4] = s1 * g_s1;
  }
  return sum_finite_guard(ll);
}

namespace {

// Pooled within-arm variance; falls back to the between-site spread when no
// site has two observations in the arm.
double start_sigma_sq(const VectorXd& n, const VectorXd& ss,
                      const VectorXd& resid) {
  const double dof = (n.array() - 1.0).sum();
  if (dof > 0.5) {
    const double v = ss.sum() / dof;
    if (v > 0.0) return v;
  }
  const double v = resid.squaredNorm() / std::max<long>(resid.size(), 1);
  return std::max(v, 1e-8);
}

VectorXd ols(const MatrixXd& W, const VectorXd& y) {
  return Eigen::CompleteOrthogonalDecomposition<MatrixXd>(W).solve(y);
}

}  // namespace

RandomInterceptFit fit_random_intercept(
    const std::vector<SiteSufficientStats>& stats, const MatrixXd& W,
    const FitOptions& opts) {
  check_stats(stats, W, false, 2);
  check_design_rank(W);
  if (W.rows() <= W.cols()) {
    throw std::invalid_argument("need more sites than design columns");
  }
  const LmmData data = make_lmm_data(stats, W);
  const long J = data.J();

  const VectorXd resid0 = data.ybar0 - data.W * ols(data.W, data.ybar0);
  const double s0_start = start_sigma_sq(data.n0, data.ss0, resid0);
  const double var0 =
      resid0.squaredNorm() / std::max<long>(J - data.p(), 1);
  const double mean_inv_n = (1.0 / data.n0.array()).mean();
  const double omega_start = std::max(
      {var0 - s0_start * mean_inv_n, 0.05 * var0, 1e-6 * s0_start, 1e-12});

  Vector2d phi0(std::log(omega_start), std::log(s0_start));
  OptimOptions oopts;
  oopts.max_iterations = opts.max_iterations;
  oopts.rel_f_tol = opts.rel_tol;
  oopts.grad_tol = opts.grad_tol;
  oopts.param_cap = 60.0;
  auto objective = [&](const VectorXd& x, VectorXd& g) {
    Vector2d gphi;
    const double ll = ri_profiled_loglik(data, Vector2d(x[0], x[1]), &gphi,
                                         nullptr);
    g.resize(2);
    g = -gphi;
    return -ll;
  };
  OptimResult opt = bfgs_minimize(objective, VectorXd(phi0), oopts);

  RandomInterceptFit fit;
  fit.omega00 = std::exp(opt.x[0]);
  fit.sigma0_sq = std::exp(opt.x[1]);
  Vector2d gdummy;
  fit.loglik =
      ri_profiled_loglik(data, Vector2d(opt.x[0], opt.x[1]), &gdummy,
                         &fit.alpha);
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;
  fit.grad_norm = opt.grad_norm;
  fit.loglik_trace.reserve(opt.f_trace.size());
  for (double f : opt.f_trace) fit.loglik_trace.push_back(-f);
  if (fit.omega00 < 1e-10 * fit.sigma0_sq) {
    fit.omega00 = 0.0;
    fit.boundary_omega00 = true;
    fit.alpha = gls_intercept(data, 0.0, fit.sigma0_sq);
    fit.loglik =
        marginal_loglik_intercept(stats, W, fit.alpha, 0.0, fit.sigma0_sq);
  }
  return fit;
}

RandomSlopeFit fit_random_slope(const std::vector<SiteSufficientStats>& stats,
                                const MatrixXd& W, const FitOptions& opts) {
  check_stats(stats, W, true, 3);
  check_design_rank(W);
  if (W.rows() <= W.cols()) {
    throw std::invalid_argument("need more sites than design columns");
  }
  const LmmData data = make_lmm_data(stats, W);
  const long J = data.J();
  const long p = data.p();

  const VectorXd r0 = data.ybar0 - data.W * ols(data.W, data.ybar0);
  const VectorXd rd = data.d - data.W * ols(data.W, data.d);
  const double s0_start = start_sigma_sq(data.n0, data.ss0, r0);
  const double s1_start = start_sigma_sq(data.n1, data.ss1, rd);

  const double dof = static_cast<double>(std::max<long>(J - p, 1));
  Matrix2d C;
  C << r0.squaredNorm() / dof, r0.dot(rd) / dof, r0.dot(rd) / dof,
      rd.squaredNorm() / dof;
  Matrix2d Vbar = Matrix2d::Zero();
  for (long j = 0; j < J; ++j) {
    const double a = s0_start / data.n0[j];
    const double b = s1_start / data.n1[j];
    Vbar(0, 0) += a;
    Vbar(0, 1) += -a;
    Vbar(1, 0) += -a;
    Vbar(1, 1) += b + a;
  }
  Vbar /= static_cast<double>(J);
  Matrix2d T0 = C - Vbar;
  Eigen::SelfAdjointEigenSolver<Matrix2d> eig(T0);
  const double floor =
      std::max(1e-4 * std::fabs(eig.eigenvalues().maxCoeff()), 1e-8 * s0_start);
  Vector2d ev = eig.eigenvalues().cwiseMax(floor);
  T0 = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();

  const double l0 = 0.5 * std::log(T0(0, 0));
  const double cc = T0(0, 1) / std::sqrt(T0(0, 0));
  const double rem = std::max(T0(1, 1) - cc * cc, 1e-8 * s0_start);
  VectorXd phi0(5);
  phi0 << l0, cc, 0.5 * std::log(rem), std::log(s0_start), std::log(s1_start);

  OptimOptions oopts;
  oopts.max_iterations = opts.max_iterations;
  oopts.rel_f_tol = opts.rel_tol;
  oopts.grad_tol = opts.grad_tol;
  oopts.lower = VectorXd(5);
  oopts.upper = VectorXd(5);
  oopts.lower << -60.0, -1e9, -60.0, -60.0, -60.0;
  oopts.upper << 60.0, 1e9, 60.0, 60.0, 60.0;
  auto objective = [&](const VectorXd& x, VectorXd& g) {
    VectorXd gphi;
    const double ll = rs_profiled_loglik(data, x, &gphi, nullptr);
    if (!std::isfinite(ll) || ll <= -1e299) {
      g = VectorXd::Zero(5);
      return std::numeric_limits<double>::infinity();
    }
    g = -gphi;
    return -ll;
  };
  OptimResult opt = bfgs_minimize(objective, phi0, oopts);

  RandomSlopeFit fit;
  fit.T = t_from_log_cholesky(opt.x);
  fit.sigma0_sq = std::exp(opt.x[3]);
  fit.sigma1_sq = std::exp(opt.x[4]);
  VectorXd gamma;
  VectorXd gdummy;
  fit.loglik = rs_profiled_loglik(data, opt.x, &gdummy, &gamma);
  fit.beta0 = gamma.head(p);
  fit.beta1 = gamma.tail(p);
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;
  fit.grad_norm = opt.grad_norm;
  fit.loglik_trace.reserve(opt.f_trace.size());
  for (double f : opt.f_trace) fit.loglik_trace.push_back(-f);

  const double thr = 1e-10 * fit.sigma0_sq;
  bool rezero = false;
  if (fit.T(0, 0) < thr) {
    fit.T(0, 0) = 0.0;
    fit.T(0, 1) = fit.T(1, 0) = 0.0;
    fit.boundary = true;
    rezero = true;
  }
  if (fit.T(1, 1) < thr) {
    fit.T(1, 1) = 0.0;
    fit.T(0, 1) = fit.T(1, 0) = 0.0;
    fit.boundary = true;
    rezero = true;
  }
  if (rezero) {
    const VectorXd g2 = gls_slope(data, fit.T, fit.sigma0_sq, fit.sigma1_sq);
    fit.beta0 = g2.head(p);
    fit.beta1 = g2.tail(p);
    fit.loglik = marginal_loglik_slope(stats, W, fit.beta0, fit.beta1, fit.T,
                                       fit.sigma0_sq, fit.sigma1_sq);
  }
  return fit;
}

MatrixXd build_design(long J, const MatrixXd& site_covariates) {
  if (site_covariates.rows() != 0 && site_covariates.rows() != J) {
    throw std::invalid_argument("site covariate rows do not match site count");
  }
  MatrixXd W(J, 1 + site_covariates.cols());
  W.col(0).setOnes();
  if (site_covariates.cols() > 0) {
    W.rightCols(site_covariates.cols()) = site_covariates;
  }
  return W;
}

MatrixXd build_design(long J, const MatrixXd& site_covariates,
                      const VectorXd& extra) {
  if (extra.size() != J) {
    throw std::invalid_argument("extra regressor length does not match sites");
  }
  MatrixXd base = build_design(J, site_covariates);
  MatrixXd W(J, base.cols() + 1);
  W.leftCols(base.cols()) = base;
  W.col(base.cols()) = extra;
  return W;
}

}  // namespace lre
