#pragma once

// Small-scale nonlinear least-squares engines: BFGS with Armijo backtracking,
// Levenberg-Marquardt, and Powell's Dog Leg, all minimizing
// Psi(X) = 0.5 |F(X)|^2 for a ResidualSystem F: R^n -> R^m.
//
// Conventions shared by all three:
//   g = J^T F is the objective gradient;
//   LM solves the damped normal equations (J^T J + lambda I) d = -g (the
//   m x m variant is dimensionally wrong for rectangular J);
//   Dog Leg uses the Cauchy point alpha*(-g) with alpha = |g|^2 / |J g|^2;
//   LM and Dog Leg accept a step only when the gain ratio is positive, so
//   accepted objective values decrease strictly monotonically.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "pstereo/core.hpp"

namespace pstereo {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ResidualSystem {
  int dim_x = 0;  // unknowns n
  int dim_f = 0;  // residuals m
  std::function<VectorXd(const VectorXd&)> residual;
  std::function<MatrixXd(const VectorXd&)> jacobian;  // empty -> fd fallback
};

inline double objective(const ResidualSystem& sys, const VectorXd& x) {
  return 0.5 * sys.residual(x).squaredNorm();
}

// Central-difference Jacobian; h is relative to max(1, |x_j|).
inline MatrixXd fd_jacobian(const ResidualSystem& sys, const VectorXd& x,
                            double h = 1e-6) {
  MatrixXd J(sys.dim_f, sys.dim_x);
  VectorXd xp = x, xm = x;
  for (int j = 0; j < sys.dim_x; ++j) {
    const double hj = h * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + hj;
    xm[j] = x[j] - hj;
    J.col(j) = (sys.residual(xp) - sys.residual(xm)) / (2.0 * hj);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return J;
}

inline MatrixXd system_jacobian(const ResidualSystem& sys, const VectorXd& x) {
  return sys.jacobian ? sys.jacobian(x) : fd_jacobian(sys, x);
}

enum class SolverChoice { Bfgs, Lm, Dogleg };
enum class SolveStatus { Converged, MaxIter, Stalled, TrustRegionCollapse };

struct BfgsOptions {
  double eps = 1e-12;    // gradient-norm stop
  int k_max = 200;
  int theta_max = 4000;  // total line-search trial budget
  double c1 = 1e-4;      // Armijo slope fraction
  int max_trials = 60;   // per-call backtracking budget
};

struct LmOptions {
  double eps1 = 1e-15;  // |g|_inf stop
  double eps2 = 1e-15;  // step-collapse stop
  double tau = 9e-2;    // damping seed
  int k_max = 200;
};

struct DoglegOptions {
  double eps1 = 1e-12;   // |F|_inf stop
  double eps2 = 1e-12;   // |g|_inf stop
  double eps3 = 1e-12;   // step/radius collapse
  double delta0 = 0.5;   // initial trust radius
  int k_max = 200;
};

struct SolverConfig {
  SolverChoice choice = SolverChoice::Dogleg;
  BfgsOptions bfgs;
  LmOptions lm;
  DoglegOptions dogleg;
};

struct SolverReport {
  VectorXd x;                  // X*
  int iterations = 0;
  double final_objective = 0;  // Psi(X*)
  double grad_norm = 0;        // |J^T F|_2 at X*
  SolveStatus status = SolveStatus::Converged;
  int ls_trials = 0;           // BFGS: line-search evaluations consumed
  std::vector<double> objective_history;  // accepted Psi values, x0 first
  MatrixXd bfgs_B;             // BFGS: final Hessian approximation
};

// ---------------------------------------------------------------------------
// Line search (Armijo backtracking, t in {1, 1/2, 1/4, ...}).
// ---------------------------------------------------------------------------

struct LineSearchResult {
  VectorXd x;
  double psi = 0;
  int trials = 0;  // candidate evaluations consumed
  bool ok = false; // false = StallSignal (no decrease within budget)
};

namespace detail {

// Core search with precomputed Psi(x) and gradient. Resets non-descent
// directions to steepest descent before searching.
inline LineSearchResult line_search_impl(const ResidualSystem& sys, const VectorXd& x,
                                         VectorXd d, const VectorXd& grad, double psi0,
                                         int budget, double c1) {
  LineSearchResult r;
  r.x = x;
  r.psi = psi0;
  double slope = grad.dot(d);
  if (slope >= 0.0) {  // safeguard: ascent or orthogonal direction supplied
    d = -grad;
    slope = -grad.squaredNorm();
    if (slope == 0.0) return r;  // stationary point; nothing to do
  }
  double t = 1.0;
  for (int i = 0; i < budget; ++i, t *= 0.5) {
    ++r.trials;
    VectorXd cand = x + t * d;
    double psi = objective(sys, cand);
    if (psi <= psi0 + c1 * t * slope && psi < psi0) {
      r.x = std::move(cand);
      r.psi = psi;
      r.ok = true;
      return r;
    }
  }
  return r;  // StallSignal
}

}  // namespace detail

inline LineSearchResult line_search(const ResidualSystem& sys, const VectorXd& x,
                                    const VectorXd& d, int budget, double c1 = 1e-4) {
  const VectorXd F = sys.residual(x);
  const VectorXd grad = system_jacobian(sys, x).transpose() * F;
  return detail::line_search_impl(sys, x, d, grad, 0.5 * F.squaredNorm(), budget, c1);
}

// ---------------------------------------------------------------------------
// BFGS. B starts at identity; the curvature guard skips the rank-two update
// unless Theta^T Y > sqrt(machine eps) * |Theta| |Y|, keeping B positive
// definite.
// ---------------------------------------------------------------------------

inline SolverReport solve_bfgs(const ResidualSystem& sys, const VectorXd& x0,
                               const SolverConfig& cfg = {}) {
  const BfgsOptions& opt = cfg.bfgs;
  const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());

  SolverReport rep;
  VectorXd x = x0;
  MatrixXd B = MatrixXd::Identity(sys.dim_x, sys.dim_x);
  VectorXd F = sys.residual(x);
  VectorXd g = system_jacobian(sys, x).transpose() * F;
  double psi = 0.5 * F.squaredNorm();
  rep.objective_history.push_back(psi);

  int k = 0;
  bool stalled = false;
  while (g.norm() > opt.eps && k < opt.k_max && rep.ls_trials < opt.theta_max) {
    const VectorXd d = -B.ldlt().solve(g);
    const int budget = std::min(opt.max_trials, opt.theta_max - rep.ls_trials);
    const LineSearchResult ls =
        detail::line_search_impl(sys, x, d, g, psi, budget, opt.c1);
    rep.ls_trials += ls.trials;
    if (!ls.ok) {
      stalled = true;
      break;
    }
    const VectorXd g_new = system_jacobian(sys, ls.x).transpose() * sys.residual(ls.x);
    const VectorXd Theta = ls.x - x;
    const VectorXd Y = g_new - g;
    const double ty = Theta.dot(Y);
    if (ty > sqrt_eps * Theta.norm() * Y.norm()) {
      const VectorXd U = B * Theta;
      B += (Y * Y.transpose()) / ty - (U * U.transpose()) / Theta.dot(U);
    }
    x = ls.x;
    g = g_new;
    psi = ls.psi;
    rep.objective_history.push_back(psi);
    ++k;
  }

  rep.x = x;
  rep.iterations = k;
  rep.final_objective = psi;
  rep.grad_norm = g.norm();
  rep.bfgs_B = B;
  if (g.norm() <= opt.eps)
    rep.status = SolveStatus::Converged;
  else if (stalled || rep.ls_trials >= opt.theta_max)
    rep.status = SolveStatus::Stalled;
  else
    rep.status = SolveStatus::MaxIter;
  return rep;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt, damped normal equations with Nielsen's damping update
// lambda <- lambda * max{1/3, 1 - (2 rho - 1)^3} on acceptance, lambda * nu
// with nu doubling on rejection.
// ---------------------------------------------------------------------------

inline SolverReport solve_lm(const ResidualSystem& sys, const VectorXd& x0,
                             const SolverConfig& cfg = {}) {
  const LmOptions& opt = cfg.lm;

  SolverReport rep;
  VectorXd x = x0;
  VectorXd F = sys.residual(x);
  MatrixXd J = system_jacobian(sys, x);
  MatrixXd A = J.transpose() * J;
  VectorXd g = J.transpose() * F;
  double psi = 0.5 * F.squaredNorm();
  rep.objective_history.push_back(psi);

  // lambda0 = tau * max diag(J J^T) = tau * max squared row norm.
  double max_diag = 0.0;
  for (int i = 0; i < J.rows(); ++i) max_diag = std::max(max_diag, J.row(i).squaredNorm());
  double lambda = opt.tau * max_diag;
  if (!(lambda > 0.0)) lambda = opt.tau;
  double nu = 2.0;

  bool found = g.lpNorm<Eigen::Infinity>() <= opt.eps1;
  int k = 0;
  while (!found && k < opt.k_max) {
    ++k;
    MatrixXd M = A;
    M.diagonal().array() += lambda;
    const VectorXd d = M.ldlt().solve(-g);
    if (d.norm() <= opt.eps2 * (x.norm() + opt.eps2)) {
      found = true;
      break;
    }
    const VectorXd x_new = x + d;
    const VectorXd F_new = sys.residual(x_new);
    const double psi_new = 0.5 * F_new.squaredNorm();
    const double predicted = 0.5 * d.dot(lambda * d - g);  // > 0 by construction
    const double rho = (psi - psi_new) / predicted;
    if (rho > 0.0) {
      x = x_new;
      F = F_new;
      J = system_jacobian(sys, x);
      A = J.transpose() * J;
      g = J.transpose() * F;
      psi = psi_new;
      rep.objective_history.push_back(psi);
      const double c = 2.0 * rho - 1.0;
      lambda *= std::max(1.0 / 3.0, 1.0 - c * c * c);
      nu = 2.0;
      found = g.lpNorm<Eigen::Infinity>() <= opt.eps1;
    } else {
      lambda *= nu;
      nu *= 2.0;
    }
  }

  rep.x = x;
  rep.iterations = k;
  rep.final_objective = psi;
  rep.grad_norm = g.norm();
  rep.status = found ? SolveStatus::Converged : SolveStatus::MaxIter;
  return rep;
}

// ---------------------------------------------------------------------------
// Powell's Dog Leg. Gauss-Newton step from a rank-revealing QR when J has
// full column rank, otherwise the steepest-descent branch carries the
// iteration. Model reduction L(0)-L(h) follows the three-case formula.
// ---------------------------------------------------------------------------

inline SolverReport solve_dogleg(const ResidualSystem& sys, const VectorXd& x0,
                                 const SolverConfig& cfg = {}) {
  const DoglegOptions& opt = cfg.dogleg;

  SolverReport rep;
  VectorXd x = x0;
  VectorXd F = sys.residual(x);
  MatrixXd J = system_jacobian(sys, x);
  VectorXd g = J.transpose() * F;
  double psi = 0.5 * F.squaredNorm();
  rep.objective_history.push_back(psi);

  double Delta = opt.delta0;
  bool found = F.lpNorm<Eigen::Infinity>() <= opt.eps1 ||
               g.lpNorm<Eigen::Infinity>() <= opt.eps2;
  bool collapsed = false;
  int k = 0;
  while (!found && !collapsed && k < opt.k_max) {
    ++k;
    const double gn = g.norm();
    const double Jg2 = (J * g).squaredNorm();
    const double alpha = Jg2 > 0.0 ? g.squaredNorm() / Jg2 : 1e300;

    Eigen::ColPivHouseholderQR<MatrixXd> qr(J);
    const bool gn_ok = qr.rank() == sys.dim_x;
    VectorXd h_gn;
    if (gn_ok) h_gn = qr.solve(-F);

    VectorXd h_dl;
    double reduction;  // L(0) - L(h_dl)
    if (gn_ok && h_gn.norm() <= Delta) {
      h_dl = h_gn;
      reduction = psi;
    } else if (alpha * gn >= Delta) {
      h_dl = -(Delta / gn) * g;
      reduction = Delta * (2.0 * alpha * gn - Delta) / (2.0 * alpha);
    } else if (gn_ok) {
      const VectorXd a = -alpha * g;  // Cauchy point
      const VectorXd ba = h_gn - a;
      const double c = a.dot(ba);
      const double ba2 = ba.squaredNorm();
      const double rad = Delta * Delta - a.squaredNorm();
      const double disc = std::sqrt(c * c + ba2 * rad);
      const double beta = c <= 0.0 ? (-c + disc) / ba2 : rad / (c + disc);
      h_dl = a + beta * ba;
      reduction = 0.5 * alpha * (1.0 - beta) * (1.0 - beta) * g.squaredNorm() +
                  beta * (2.0 - beta) * psi;
    } else {
      h_dl = -alpha * g;  // GN unavailable, Cauchy point is interior
      reduction = 0.5 * alpha * g.squaredNorm();
    }

    if (h_dl.norm() <= opt.eps3 * (x.norm() + opt.eps3)) {
      found = true;
      break;
    }
    const VectorXd x_new = x + h_dl;
    const VectorXd F_new = sys.residual(x_new);
    const double psi_new = 0.5 * F_new.squaredNorm();
    const double rho = (psi - psi_new) / reduction;
    if (rho > 0.0) {
      x = x_new;
      F = F_new;
      J = system_jacobian(sys, x);
      g = J.transpose() * F;
      psi = psi_new;
      rep.objective_history.push_back(psi);
      found = F.lpNorm<Eigen::Infinity>() <= opt.eps1 ||
              g.lpNorm<Eigen::Infinity>() <= opt.eps2;
    }
    if (rho > 0.75) {
      Delta = std::max(Delta, 3.0 * h_dl.norm());
    } else if (rho < 0.25) {
      Delta *= 0.5;
      if (Delta <= opt.eps3 * (x.norm() + opt.eps3)) collapsed = true;
    }
  }

  rep.x = x;
  rep.iterations = k;
  rep.final_objective = psi;
  rep.grad_norm = g.norm();
  if (found)
    rep.status = SolveStatus::Converged;
  else if (collapsed)
    rep.status = SolveStatus::TrustRegionCollapse;
  else
    rep.status = SolveStatus::MaxIter;
  return rep;
}

inline SolverReport solve(const ResidualSystem& sys, const VectorXd& x0,
                          const SolverConfig& cfg = {}) {
  switch (cfg.choice) {
    case SolverChoice::Bfgs: return solve_bfgs(sys, x0, cfg);
    case SolverChoice::Lm: return solve_lm(sys, x0, cfg);
    case SolverChoice::Dogleg: return solve_dogleg(sys, x0, cfg);
  }
  throw ConfigError("solve: unknown solver choice");
}

}  // namespace pstereo
