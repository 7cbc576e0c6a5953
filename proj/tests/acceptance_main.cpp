// Acceptance suite: runs the full Monte Carlo strategy comparison plus the
// analytic oracles and prints one [PASS]/[FAIL] line per criterion with the
// measured values. The exit code is the number of failed criteria, so a
// clean run exits 0. Progress goes to stderr; results go to stdout.
#include <unistd.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lre/eb.hpp"
#include "lre/harness.hpp"
#include "lre/lmm.hpp"
#include "lre/metrics.hpp"
#include "lre/optim.hpp"
#include "lre/rng.hpp"
#include "lre/simgen.hpp"
#include "lre/strategies.hpp"
#include "lre/trial_data.hpp"

using namespace lre;
namespace fs = std::filesystem;

namespace {

int g_failed = 0;

struct Criterion {
  int id;
  std::string title;
  bool ok = true;
  std::vector<std::string> lines;

  Criterion(int id_, std::string title_) : id(id_), title(std::move(title_)) {}

  void expect(bool cond, const std::string& what) {
    if (!cond) ok = false;
    lines.push_back(std::string(cond ? "    ok   " : "    FAIL ") + what);
  }
  void note(const std::string& what) { lines.push_back("    note " + what); }
};

void report(const Criterion& c) {
  std::printf("[%s] %d: %s\n", c.ok ? "PASS" : "FAIL", c.id, c.title.c_str());
  for (const auto& line : c.lines) std::printf("%s\n", line.c_str());
  std::fflush(stdout);
  if (!c.ok) ++g_failed;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

void progress(const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); }

const CellResult& find_cell(const StudySummary& s, int scenario, double psi,
                            long J, long n_low) {
  for (const auto& c : s.cells) {
    if (c.key.scenario == scenario && c.key.psi_std == psi &&
        c.key.size.J == J && c.key.size.n_low == n_low) {
      return c;
    }
  }
  throw std::logic_error("cell not found in study summary");
}

const CellSummary& find_row(const CellResult& c, StrategyId id) {
  for (const auto& r : c.rows) {
    if (r.strategy == strategy_name(id)) return r;
  }
  throw std::logic_error("strategy row not found in cell");
}

// ------------------------------------------------------------ dense oracle
// Extended-precision joint normal density over raw observations; the
// sufficient-statistic likelihoods must agree with it to near machine
// precision.

using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using VecL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

long double dense_normal_logpdf(const VecL& y, const VecL& mean,
                                const MatL& cov) {
  const long n = y.size();
  Eigen::LLT<MatL> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("dense oracle covariance is not PD");
  }
  VecL z = llt.matrixL().solve(VecL(y - mean));
  long double logdet = 0.0L;
  for (long i = 0; i < n; ++i) {
    logdet += 2.0L * std::log(static_cast<long double>(llt.matrixL()(i, i)));
  }
  const long double log2pi = 1.837877066409345483560659472811235279723L;
  return -0.5L * (n * log2pi + logdet + z.squaredNorm());
}

long double dense_site_intercept(const std::vector<double>& y0, double mean,
                                 double omega00, double sigma0_sq) {
  const long n = static_cast<long>(y0.size());
  VecL y(n), m(n);
  MatL cov(n, n);
  for (long i = 0; i < n; ++i) {
    y[i] = y0[static_cast<size_t>(i)];
    m[i] = mean;
    for (long k = 0; k < n; ++k) {
      cov(i, k) = omega00 + (i == k ? sigma0_sq : 0.0);
    }
  }
  return dense_normal_logpdf(y, m, cov);
}

long double dense_site_slope(const std::vector<double>& y0,
                             const std::vector<double>& y1, double m0,
                             double m1, const Matrix2d& T, double s0,
                             double s1) {
  const long n0 = static_cast<long>(y0.size());
  const long n1 = static_cast<long>(y1.size());
  const long n = n0 + n1;
  VecL y(n), m(n);
  MatL cov(n, n);
  for (long i = 0; i < n; ++i) {
    const bool ti = i >= n0;
    y[i] = ti ? y1[static_cast<size_t>(i - n0)] : y0[static_cast<size_t>(i)];
    m[i] = ti ? m0 + m1 : m0;
    for (long k = 0; k < n; ++k) {
      const bool tk = k >= n0;
      long double cval = T(0, 0);
      if (ti != tk) cval += T(0, 1);
      if (ti && tk) cval += 2.0L * T(0, 1) + T(1, 1);
      if (i == k) cval += ti ? s1 : s0;
      cov(i, k) = cval;
    }
  }
  return dense_normal_logpdf(y, m, cov);
}

SiteSufficientStats stats_from_raw(const std::string& id,
                                   const std::vector<double>& y0,
                                   const std::vector<double>& y1) {
  ArmAccumulator a0, a1;
  for (double v : y0) a0.add(v);
  for (double v : y1) a1.add(v);
  SiteSufficientStats s;
  s.site_id = id;
  s.n0 = a0.n;
  s.n1 = a1.n;
  s.ybar0 = a0.mean;
  s.ybar1 = a1.mean;
  s.ss0 = a0.ss;
  s.ss1 = a1.ss;
  return s;
}

// Synthetic stats and site covariates for the gradient and identity checks.
struct SimData {
  std::vector<SiteSufficientStats> stats;
  MatrixXd phi;
  SyntheticTruth truth;
};

SimData simulate_stats(const GeneratorConfig& cfg) {
  SimData out;
  out.truth = draw_truth(cfg, cfg.seed);
  out.stats = draw_dataset_stats(cfg, out.truth, derive_seed(cfg.seed, 3, 0))
                  .stats;
  out.phi.resize(cfg.J, 2);
  for (long j = 0; j < cfg.J; ++j) {
    out.phi(j, 0) = out.truth.mu_x1[static_cast<size_t>(j)];
    out.phi(j, 1) = out.truth.mu_x2[static_cast<size_t>(j)];
  }
  return out;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// ----------------------------------------------------------- criteria 1-5

void criterion_1(const StudySummary& study) {
  Criterion c(1, "severe-misclassification headline (scenario 1, J=100, "
                 "n in [30,170], 500 reps)");
  const CellResult& cell = find_cell(study, 1, 0.1, 100, 30);
  const double tw = find_row(cell, StrategyId::twostep).sce_rate;
  const double itt = find_row(cell, StrategyId::itt).sce_rate;
  const double mx = find_row(cell, StrategyId::me_adj_x).sce_rate;
  c.expect(std::abs(tw - 0.02) <= 0.02,
           "twostep sce_rate " + fmt(tw) + " within 0.02 +/- 0.02");
  c.expect(itt >= 0.08 && itt <= 0.18,
           "itt sce_rate " + fmt(itt) + " in [0.08, 0.18]");
  c.expect(mx >= 0.08 && mx <= 0.18,
           "me_adj_x sce_rate " + fmt(mx) + " in [0.08, 0.18]");
  c.expect(itt >= 4.0 * tw,
           "itt sce_rate " + fmt(itt) + " >= 4x twostep " + fmt(tw));
  c.expect(mx >= 4.0 * tw,
           "me_adj_x sce_rate " + fmt(mx) + " >= 4x twostep " + fmt(tw));
  report(c);
}

void criterion_2(const StudySummary& study) {
  Criterion c(2, "severe misclassification with large sites (scenario 1, "
                 "J=100, n in [400,1000])");
  const CellResult& cell = find_cell(study, 1, 0.1, 100, 400);
  const double tw = find_row(cell, StrategyId::twostep).sce_rate;
  const double itt = find_row(cell, StrategyId::itt).sce_rate;
  const double mx = find_row(cell, StrategyId::me_adj_x).sce_rate;
  c.expect(tw < 0.005, "twostep sce_rate " + fmt(tw) + " < 0.005");
  c.expect(itt >= 0.09 && itt <= 0.14,
           "itt sce_rate " + fmt(itt) + " in [0.09, 0.14]");
  c.expect(mx >= 0.09 && mx <= 0.14,
           "me_adj_x sce_rate " + fmt(mx) + " in [0.09, 0.14]");
  report(c);
}

void criterion_3() {
  Criterion c(3, "single-dataset consistency grid (avg |bias| and bias SD "
                 "in sigma units)");
  struct Spec {
    long J, n;
    double psi, want_abs, tol_abs, want_sd, tol_sd;
  };
  const Spec specs[] = {
      {100, 100, 0.1, 0.075, 0.02, 0.097, 0.02},
      {1000, 1000, 0.1, 0.031, 0.01, 0.039, 0.01},
      {100, 100, 0.35, 0.106, 0.03, 0.140, 0.03},
  };
  for (const Spec& s : specs) {
    ConsistencyGridConfig g;
    g.J_values = {s.J};
    g.n_values = {s.n};
    g.psi_grid = {s.psi};
    g.scenario = 1;
    g.datasets_per_cell = 1;
    g.master_seed = 1;
    const auto cells = run_consistency_grid(g, progress);
    const ConsistencyCell& cell = cells.at(0);
    const std::string tag = "J=" + std::to_string(s.J) +
                            " n=" + std::to_string(s.n) + " psi=" + fmt(s.psi);
    c.expect(!cell.skipped, tag + " computed");
    c.expect(std::abs(cell.avg_abs_bias - s.want_abs) <= s.tol_abs,
             tag + ": avg |bias| " + fmt(cell.avg_abs_bias) + " within " +
                 fmt(s.want_abs) + " +/- " + fmt(s.tol_abs));
    c.expect(std::abs(cell.sd_bias - s.want_sd) <= s.tol_sd,
             tag + ": bias SD " + fmt(cell.sd_bias) + " within " +
                 fmt(s.want_sd) + " +/- " + fmt(s.tol_sd));
  }
  report(c);
}

void criterion_4(const StudyConfig& cfg, const StudySummary& study) {
  Criterion c(4, "bias-spread ordering (scenario 1, every cell): me_adj_x_u "
                 "<= twostep + 0.01 < me_adj_x < itt");
  for (double psi : cfg.psi_grid) {
    for (const auto& size : cfg.size_settings) {
      const CellResult& cell = find_cell(study, 1, psi, size.J, size.n_low);
      const double u = find_row(cell, StrategyId::me_adj_x_u).sd_bias;
      const double tw = find_row(cell, StrategyId::twostep).sd_bias;
      const double mx = find_row(cell, StrategyId::me_adj_x).sd_bias;
      const double itt = find_row(cell, StrategyId::itt).sd_bias;
      const bool ok = u <= tw + 0.01 && tw < mx && mx < itt;
      c.expect(ok, cell.key.label() + ": sd_bias u " + fmt(u) + " | twostep " +
                       fmt(tw) + " | me_adj_x " + fmt(mx) + " | itt " +
                       fmt(itt));
    }
  }
  report(c);
}

void criterion_5(const StudyConfig& cfg, const StudySummary& study) {
  Criterion c(5, "twostep strictly between me_adj_x_u and me_adj_x "
                 "(scenario 2, every cell; bias SD, RMSE, sce_rate)");
  for (double psi : cfg.psi_grid) {
    for (const auto& size : cfg.size_settings) {
      const CellResult& cell = find_cell(study, 2, psi, size.J, size.n_low);
      const CellSummary& u = find_row(cell, StrategyId::me_adj_x_u);
      const CellSummary& tw = find_row(cell, StrategyId::twostep);
      const CellSummary& mx = find_row(cell, StrategyId::me_adj_x);
      const bool sd_ok = u.sd_bias < tw.sd_bias && tw.sd_bias < mx.sd_bias;
      const bool rmse_ok = u.avg_rmse < tw.avg_rmse && tw.avg_rmse < mx.avg_rmse;
      const bool sce_ok = u.sce_rate < tw.sce_rate && tw.sce_rate < mx.sce_rate;
      c.expect(sd_ok && rmse_ok && sce_ok,
               cell.key.label() + ": sd " + fmt(u.sd_bias) + "/" +
                   fmt(tw.sd_bias) + "/" + fmt(mx.sd_bias) + "; rmse " +
                   fmt(u.avg_rmse) + "/" + fmt(tw.avg_rmse) + "/" +
                   fmt(mx.avg_rmse) + "; sce " + fmt(u.sce_rate) + "/" +
                   fmt(tw.sce_rate) + "/" + fmt(mx.sce_rate));
    }
  }
  report(c);
}

// ---------------------------------------------------------- criteria 6-10

void criterion_6() {
  Criterion c(6, "generator calibration (grand control mean, within-site "
                 "control SD, mean site effect)");
  GeneratorConfig g;
  g.scenario = 1;
  g.J = 10000;
  g.n_low = g.n_high = 100;
  g.psi_std = 0.1;
  g.seed = 1;
  g.validate();

  const auto pooled = [](const std::vector<SiteSufficientStats>& stats) {
    double n = 0.0, sum = 0.0, ss = 0.0, df = 0.0;
    for (const auto& s : stats) {
      n += static_cast<double>(s.n0);
      sum += static_cast<double>(s.n0) * s.ybar0;
      ss += s.ss0;
      df += static_cast<double>(s.n0 - 1);
    }
    return std::pair<double, double>(sum / n, std::sqrt(ss / df));
  };

  progress("calibration draw (main variant, 1M individuals)...");
  const SyntheticTruth truth = draw_truth(g, g.seed);
  const auto stats = draw_dataset_stats(g, truth, derive_seed(g.seed, 3, 0));
  const auto [grand, sd] = pooled(stats.stats);
  c.expect(std::abs(grand - 197.0) <= 2.0,
           "grand control mean " + fmt(grand) + " within 197 +/- 2");
  c.expect(std::abs(sd - 183.0) <= 3.0,
           "within-site control SD " + fmt(sd) + " within 183 +/- 3");

  progress("calibration draw (consistency variant)...");
  GeneratorConfig gv = g;
  gv.consistency_variant = true;
  const SyntheticTruth truth_v = draw_truth(gv, gv.seed);
  const auto stats_v = draw_dataset_stats(gv, truth_v, derive_seed(gv.seed, 3, 0));
  const double sd_v = pooled(stats_v.stats).second;
  c.expect(std::abs(sd_v - 175.0) <= 3.0,
           "consistency-variant within-site SD " + fmt(sd_v) +
               " within 175 +/- 3");

  GeneratorConfig g0 = g;
  g0.psi_std = 0.0;
  const SyntheticTruth truth0 = draw_truth(g0, g0.seed);
  double mean_itt = 0.0;
  for (double v : truth0.site_itt) mean_itt += v;
  mean_itt /= static_cast<double>(truth0.site_itt.size());
  c.expect(std::abs(mean_itt - 13.0) <= 1.5,
           "mean site ITT at psi=0 over J=10000 is " + fmt(mean_itt) +
               " within 13 +/- 1.5");
  report(c);
}

void criterion_7() {
  Criterion c(7, "joint covariance fit matches the conditional fit on the "
                 "true control deviation (J=1000, n=1000)");
  GeneratorConfig g;
  g.scenario = 1;
  g.J = 1000;
  g.n_low = g.n_high = 1000;
  g.psi_std = 0.1;
  g.seed = 1;
  g.validate();
  progress("identity-check draw (1M individuals) and two fits...");
  const SimData sim = simulate_stats(g);

  VectorXd eta0_true(g.J);
  for (long j = 0; j < g.J; ++j) {
    // True control-mean deviation net of the site covariates.
    eta0_true[j] = 80.0 * sim.truth.mu_u1[static_cast<size_t>(j)] -
                   70.0 * sim.truth.mu_u2[static_cast<size_t>(j)];
  }
  const RandomSlopeFit joint =
      fit_random_slope(sim.stats, build_design(g.J, sim.phi));
  const RandomSlopeFit cond =
      fit_random_slope(sim.stats, build_design(g.J, sim.phi, eta0_true));
  c.expect(joint.converged && cond.converged, "both fits converged");

  const double w00 = joint.T(0, 0), w01 = joint.T(0, 1), w11 = joint.T(1, 1);
  const double gamma12 = cond.beta1[cond.beta1.size() - 1];
  const double tau11 = cond.T(1, 1);
  const double want_gamma = w01 / w00;
  const double want_tau = (1.0 - w01 * w01 / (w00 * w11)) * w11;
  c.expect(std::abs(gamma12 - want_gamma) <= 0.05 * std::abs(want_gamma),
           "slope on the control deviation " + fmt(gamma12) +
               " vs joint-fit ratio " + fmt(want_gamma) + " (5% relative)");
  c.expect(std::abs(tau11 - want_tau) <= 0.05 * std::abs(want_tau),
           "conditional effect variance " + fmt(tau11) +
               " vs joint-fit complement " + fmt(want_tau) + " (5% relative)");
  report(c);
}

void criterion_8() {
  Criterion c(8, "identification oracle: exact recovery, and residuals equal "
                 "an injected violation");
  OracleWorld world;
  const std::vector<std::pair<double, double>> dist1 = {
      {0.0, 0.25}, {10.0, 0.5}, {20.0, 0.25}};
  const std::vector<std::pair<double, double>> dist2 = {{-5.0, 0.5},
                                                        {5.0, 0.5}};
  VectorXd phi1(2), phi2(2), phi3(2);
  phi1 << 1.0, 2.0;
  phi2 << 0.0, 0.0;
  phi3 << 4.0, -1.0;
  world.sites.push_back({phi1, dist1, 2.0 + 0.75, 0.75});
  world.sites.push_back({phi1, dist1, 2.0 - 0.75, -0.75});
  world.sites.push_back({phi2, dist2, -3.0 + 0.5, 0.5});
  world.sites.push_back({phi2, dist2, -3.0 + 0.5, 0.5});
  world.sites.push_back({phi2, dist2, -3.0 - 1.0, -1.0});
  world.sites.push_back({phi3, {{1.0, 1.0}}, 7.5, 0.0});

  const std::vector<double> resid = oracle_identification_check(world);
  bool all_zero = resid.size() == world.sites.size();
  for (double r : resid) all_zero = all_zero && r == 0.0;
  c.expect(all_zero, "residuals identically zero on a compliant world ("
                     "matched pair, matched triple, singleton)");

  OracleWorld broken = world;
  broken.sites[0].site_itt += 0.5;  // group-internal shift not carried by theta
  const std::vector<double> r2 = oracle_identification_check(broken);
  const bool expected = r2[0] == 0.25 && r2[1] == -0.25 && r2[2] == 0.0 &&
                        r2[3] == 0.0 && r2[4] == 0.0 && r2[5] == 0.0;
  c.expect(expected,
           "injecting +0.5 into one matched site leaves exactly the centered "
           "perturbation (+0.25, -0.25): got (" +
               fmt(r2[0]) + ", " + fmt(r2[1]) + ")");
  report(c);
}

void criterion_9() {
  Criterion c(9, "numeric core: analytic gradients, dense-likelihood oracle, "
                 "reliability identities");

  // Analytic vs finite-difference gradients on simulated data.
  GeneratorConfig g;
  g.scenario = 1;
  g.J = 40;
  g.n_low = 20;
  g.n_high = 60;
  g.psi_std = 0.15;
  g.seed = 77;
  const SimData sim = simulate_stats(g);
  const LmmData data = make_lmm_data(sim.stats, build_design(g.J, sim.phi));
  Rng rng(4242);
  double worst_ri = 0.0, worst_rs = 0.0;
  for (int k = 0; k < 20; ++k) {
    Vector2d p(4.6 + 4.0 * rng.uniform(), 9.5 + 1.5 * rng.uniform());
    Vector2d ga;
    ri_profiled_loglik(data, p, &ga, nullptr);
    const VectorXd gfd = fd_gradient(
        [&](const VectorXd& x) {
          return ri_profiled_loglik(data, Vector2d(x[0], x[1]), nullptr,
                                    nullptr);
        },
        VectorXd(p));
    worst_ri = std::max(worst_ri, (VectorXd(ga) - gfd).norm() /
                                      std::max(1.0, ga.norm()));
  }
  for (int k = 0; k < 20; ++k) {
    VectorXd p(5);
    p << 1.5 + 2.5 * rng.uniform(), -40.0 + 80.0 * rng.uniform(),
        1.5 + 2.5 * rng.uniform(), 9.5 + 1.5 * rng.uniform(),
        9.5 + 1.5 * rng.uniform();
    VectorXd ga;
    rs_profiled_loglik(data, p, &ga, nullptr);
    const VectorXd gfd = fd_gradient(
        [&](const VectorXd& x) {
          return rs_profiled_loglik(data, x, nullptr, nullptr);
        },
        p);
    worst_rs =
        std::max(worst_rs, (ga - gfd).norm() / std::max(1.0, ga.norm()));
  }
  c.expect(worst_ri < 1e-4, "control-model gradient vs central differences: "
                            "worst rel err " + fmt(worst_ri) + " < 1e-4");
  c.expect(worst_rs < 1e-4, "effect-model gradient vs central differences: "
                            "worst rel err " + fmt(worst_rs) + " < 1e-4");

  // Sufficient-statistic likelihoods vs the dense joint density.
  Rng draw(2001);
  const long n0s[6] = {1, 2, 3, 1, 4, 2};
  const long n1s[6] = {2, 1, 2, 1, 3, 4};
  std::vector<std::vector<double>> y0(6), y1(6);
  std::vector<SiteSufficientStats> stats;
  MatrixXd W(6, 2);
  for (int j = 0; j < 6; ++j) {
    for (long i = 0; i < n0s[j]; ++i) y0[j].push_back(draw.normal(10.0, 4.0));
    for (long i = 0; i < n1s[j]; ++i) y1[j].push_back(draw.normal(14.0, 5.0));
    stats.push_back(stats_from_raw("s" + std::to_string(j + 1), y0[j], y1[j]));
    W(j, 0) = 1.0;
    W(j, 1) = draw.normal();
  }
  VectorXd alpha(2), beta1(2);
  alpha << 9.0, 1.3;
  beta1 << 2.0, -0.7;
  const double omega00 = 3.7, sigma0_sq = 5.2;
  long double dense_ri = 0.0L;
  for (int j = 0; j < 6; ++j) {
    dense_ri += dense_site_intercept(y0[j], W.row(j).dot(alpha), omega00,
                                     sigma0_sq);
  }
  const double got_ri =
      marginal_loglik_intercept(stats, W, alpha, omega00, sigma0_sq);
  const double err_ri =
      std::abs(got_ri - static_cast<double>(dense_ri));
  c.expect(err_ri < 1e-9, "control-model likelihood vs dense oracle: |diff| " +
                              fmt(err_ri) + " < 1e-9");

  Matrix2d L;
  L << 1.2, 0.0, -0.8, 0.9;
  const Matrix2d T = L * L.transpose();
  const double s0 = 2.1, s1 = 3.3;
  long double dense_rs = 0.0L;
  for (int j = 0; j < 6; ++j) {
    dense_rs += dense_site_slope(y0[j], y1[j], W.row(j).dot(alpha),
                                 W.row(j).dot(beta1), T, s0, s1);
  }
  const double got_rs =
      marginal_loglik_slope(stats, W, alpha, beta1, T, s0, s1);
  const double err_rs =
      std::abs(got_rs - static_cast<double>(dense_rs));
  c.expect(err_rs < 1e-9, "effect-model likelihood vs dense oracle: |diff| " +
                              fmt(err_rs) + " < 1e-9");

  // Reliability formulas against hand values.
  const double lam = reliability_intercept(6.0, 12.0, 4);
  c.expect(lam == 6.0 / 9.0,
           "intercept reliability 6/(6+12/4) reproduced exactly: " + fmt(lam));
  Matrix2d T0 = Matrix2d::Zero();
  T0(1, 1) = 400.0;
  const Matrix2d lam2 = reliability_matrix(T0, 500.0, 33500.0, 50, 100);
  const double hand = 400.0 * (10.0 / 7350.0);  // = tau11 / (tau11 + s1/n1)
  c.expect(lam2(0, 0) == 0.0 && lam2(0, 1) == 0.0 && lam2(1, 0) == lam2(1, 1) &&
               lam2(1, 1) == hand,
           "zero intercept variance collapses the reliability matrix to "
           "scalar shrinkage: lambda11 = " + fmt(lam2(1, 1)));
  const double scalar = 400.0 / (400.0 + 335.0);
  c.expect(std::abs(lam2(1, 1) - scalar) <= 1e-12 * scalar,
           "lambda11 " + fmt(lam2(1, 1)) + " equals 400/735 within 1e-12");
  report(c);
}

void criterion_10() {
  Criterion c(10, "study summaries are byte-identical across reruns and "
                  "worker counts");
  StudyConfig cfg;
  cfg.scenarios = {1};
  cfg.psi_grid = {0.2};
  cfg.size_settings = {{20, 10, 40}};
  cfg.replications = 10;
  cfg.strategies = {StrategyId::itt, StrategyId::me_adj_x,
                    StrategyId::twostep};
  cfg.master_seed = 99;

  const fs::path base =
      fs::temp_directory_path() / ("lre_acceptance_" + std::to_string(::getpid()));
  std::vector<std::string> outputs;
  for (int jobs : {1, 3, 3}) {
    StudyConfig run = cfg;
    run.jobs = jobs;
    run.out_dir = (base / ("jobs" + std::to_string(outputs.size()))).string();
    run_study(run);
    outputs.push_back(slurp(fs::path(run.out_dir) / "summary.csv"));
  }
  c.expect(!outputs[0].empty(), "summary.csv written");
  c.expect(outputs[0] == outputs[1],
           "jobs=1 and jobs=3 summaries are byte-identical");
  c.expect(outputs[1] == outputs[2],
           "repeated jobs=3 runs are byte-identical");
  fs::remove_all(base);
  report(c);
}

}  // namespace

int main() {
  std::printf("acceptance: default study grid, then targeted checks\n");
  std::fflush(stdout);

  StudyConfig cfg;  // the default grid: 2 scenarios x 3 psi x 4 sizes, R=500
  cfg.jobs = 1;
  StudySummary study;
  bool study_ok = false;
  try {
    progress("running the default study (24 cells x 500 replications)...");
    study = run_study(cfg, progress);
    study_ok = true;
  } catch (const std::exception& e) {
    progress(std::string("default study failed: ") + e.what());
  }

  const auto guard = [&](int id, const std::function<void()>& body,
                         bool needs_study = false) {
    if (needs_study && !study_ok) {
      Criterion c(id, "default-study criterion");
      c.expect(false, "default study run threw; see the log above");
      report(c);
      return;
    }
    try {
      body();
    } catch (const std::exception& e) {
      Criterion c(id, "criterion aborted");
      c.expect(false, std::string("unhandled exception: ") + e.what());
      report(c);
    }
  };

  guard(1, [&] { criterion_1(study); }, true);
  guard(2, [&] { criterion_2(study); }, true);
  guard(3, [] { criterion_3(); });
  guard(4, [&] { criterion_4(cfg, study); }, true);
  guard(5, [&] { criterion_5(cfg, study); }, true);
  guard(6, [] { criterion_6(); });
  guard(7, [] { criterion_7(); });
  guard(8, [] { criterion_8(); });
  guard(9, [] { criterion_9(); });
  guard(10, [] { criterion_10(); });

  std::printf("acceptance: %d of 10 criteria passed\n", 10 - g_failed);
  return g_failed;
}
