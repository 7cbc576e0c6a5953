#pragma once
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "lre/types.hpp"

namespace lre {

struct OptimOptions {
  int max_iterations = 500;
  double rel_f_tol = 1e-10;   // relative objective change
  double grad_tol = 1e-6;     // Euclidean gradient norm
  double param_cap = 40.0;    // default projection box [-cap, cap]
  VectorXd lower, upper;      // per-component box; overrides cap when sized
};

struct OptimResult {
  VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  VectorXd grad;
  double grad_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> f_trace;  // accepted objective values, nonincreasing
};

// BFGS with Armijo backtracking on a smooth objective; fn(x, grad) returns
// the objective value and fills the gradient. Non-finite trial values are
// treated as +inf so the line search backs away from invalid regions.
template <class F>
OptimResult bfgs_minimize(F&& fn, VectorXd x0, const OptimOptions& opts = {}) {
  const int p = static_cast<int>(x0.size());
  OptimResult res;
  auto project = [&](VectorXd& v) {
    for (int i = 0; i < p; ++i) {
      const double lo =
          opts.lower.size() == p ? opts.lower[i] : -opts.param_cap;
      const double hi = opts.upper.size() == p ? opts.upper[i] : opts.param_cap;
      v[i] = std::min(hi, std::max(lo, v[i]));
    }
  };
  project(x0);

  VectorXd g(p), g_new(p);
  double f = fn(x0, g);
  if (!std::isfinite(f)) {
    res.x = x0;
    res.grad = g;
    return res;
  }
  res.f_trace.push_back(f);
  MatrixXd H = MatrixXd::Identity(p, p);
  VectorXd x = x0;

  // The line search compares objective values, so it cannot verify an
  // improvement smaller than roughly one ulp of f; once the quadratic
  // model's predicted decrease -slope/2 falls below that resolution the
  // iterate is optimal to within double precision no matter how large the
  // raw gradient norm is (it scales with the data size).
  const auto resolution_floor = [](double fval) {
    return 4.0 * std::numeric_limits<double>::epsilon() *
           (1.0 + std::fabs(fval));
  };

  for (int it = 0; it < opts.max_iterations; ++it) {
    const double gnorm = g.norm();
    if (gnorm <= opts.grad_tol && it > 0) {
      res.converged = true;
      break;
    }
    VectorXd dir = -(H * g);
    double slope = dir.dot(g);
    if (!(slope < 0.0)) {  // not a descent direction: reset curvature model
      H.setIdentity();
      dir = -g;
      slope = -gnorm * gnorm;
    }
    if (it > 0 && -0.5 * slope <= resolution_floor(f)) {
      res.converged = true;
      break;
    }

    double t = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + t * dir;
      project(x_new);
      f_new = fn(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      res.converged =
          gnorm <= opts.grad_tol || -0.5 * slope <= resolution_floor(f);
      break;
    }

    const VectorXd s = x_new - x;
    const VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const MatrixXd I = MatrixXd::Identity(p, p);
      H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) +
          rho * s * s.transpose();
    }

    const double df = f - f_new;
    x = x_new;
    g = g_new;
    f = f_new;
    res.f_trace.push_back(f);
    res.iterations = it + 1;
    if (df <= opts.rel_f_tol * (1.0 + std::fabs(f)) &&
        g.norm() <= opts.grad_tol) {
      res.converged = true;
      break;
    }
  }

  res.x = x;
  res.f = f;
  res.grad = g;
  res.grad_norm = g.norm();
  return res;
}

// Central finite differences, h_i = step * (1 + |x_i|); for gradient checks.
VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f,
                     const VectorXd& x, double step = 1e-6);

}  // namespace lre
