#include "zazou/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace zazou {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double soft_threshold(double c, double lambda, double xtx) {
  if (c > lambda) return (c - lambda) / xtx;
  if (c < -lambda) return (c + lambda) / xtx;
  return 0.0;
}

struct Interval {
  double lo = -kInf;
  double hi = kInf;
  bool feasible = true;
};

// feasible interval of u + v * theta <= 0
Interval feasible_interval(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  Interval iv;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] > 0.0) {
      iv.hi = std::min(iv.hi, -u[i] / v[i]);
    } else if (v[i] < 0.0) {
      iv.lo = std::max(iv.lo, -u[i] / v[i]);
    } else if (u[i] > 0.0) {
      iv.feasible = false;
      return iv;
    }
  }
  if (iv.lo > iv.hi) iv.feasible = false;
  return iv;
}

// Euclidean projection onto { d : T d <= 0 } through coordinate descent on
// the dual nonnegative QP  min_{mu >= 0} 1/2 ||T^T mu||^2 - mu^T (T v).
Eigen::VectorXd project_feasible(const Eigen::MatrixXd& T,
                                 const Eigen::VectorXd& v) {
  if (T.rows() == 0) return v;
  const Eigen::MatrixXd G = T * T.transpose();
  const Eigen::VectorXd b = T * v;
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(T.rows());
  Eigen::VectorXd Gmu = Eigen::VectorXd::Zero(T.rows());
  for (int s = 0; s < 500; ++s) {
    double change = 0.0;
    for (Eigen::Index i = 0; i < T.rows(); ++i) {
      if (G(i, i) <= 0.0) continue;
      const double mu_new = std::max(0.0, mu[i] - (Gmu[i] - b[i]) / G(i, i));
      const double d = mu_new - mu[i];
      if (d != 0.0) {
        Gmu += G.col(i) * d;
        mu[i] = mu_new;
        change = std::max(change, std::abs(d));
      }
    }
    if (change < 1e-14) break;
  }
  return v - T.transpose() * mu;
}

// Certify global optimality of a coordinate-descent fixed point through the
// duality gap. A multiplier candidate mu >= 0 is located by minimizing the
// clamped KKT stationarity residual (coordinates below zero_eps count as
// zero); the Lagrangian inner problem at that mu is an unconstrained lasso
// with an extra linear term, solved exactly by coordinate descent, and its
// value is a lower bound on the constrained optimum. A vanishing gap proves
// optimality; failure triggers a rescue round.
bool kkt_certified(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   const Eigen::MatrixXd& T, double lambda,
                   const Eigen::VectorXd& delta, double zero_eps,
                   const Eigen::VectorXd* mu_warm = nullptr) {
  const Eigen::Index n = X.cols();
  const Eigen::VectorXd g = X.transpose() * (X * delta - y);
  const double resid_scale =
      std::max({1.0, lambda, g.lpNorm<Eigen::Infinity>()});
  const double resid_tol = 1e-9 * resid_scale;

  // locate mu >= 0 minimizing || g + T^T mu - target ||^2, where target_j
  // is -lambda sign(delta_j) on the support and free in [-lambda, lambda]
  // off it; alternating exact coordinate updates with the target clamp
  Eigen::VectorXd rownorm2(T.rows());
  for (Eigen::Index i = 0; i < T.rows(); ++i) {
    rownorm2[i] = T.row(i).squaredNorm();
  }
  Eigen::VectorXd mu;
  auto clamped_residual = [&](Eigen::VectorXd& e) {
    const Eigen::VectorXd h = g + T.transpose() * mu;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (delta[j] > zero_eps) e[j] = h[j] + lambda;
      else if (delta[j] < -zero_eps) e[j] = h[j] - lambda;
      else e[j] = h[j] - std::clamp(h[j], -lambda, lambda);
    }
    return e.squaredNorm();
  };
  auto search = [&](const Eigen::VectorXd& mu0) {
    mu = mu0;
    Eigen::VectorXd e(n);
    double v = clamped_residual(e);
    double stagnation_ref = v;
    for (int round = 0; round < 20000 && v > resid_tol * resid_tol;
         ++round) {
      for (Eigen::Index i = 0; i < T.rows(); ++i) {
        if (rownorm2[i] <= 0.0) continue;
        const double mu_new =
            std::max(0.0, mu[i] - T.row(i).dot(e) / rownorm2[i]);
        const double d = mu_new - mu[i];
        if (d != 0.0) {
          e += T.row(i).transpose() * d;
          mu[i] = mu_new;
        }
      }
      v = clamped_residual(e);
      if (round % 2000 == 1999) {
        if (v > 0.999 * stagnation_ref) break;
        stagnation_ref = v;
      }
    }
    return v;
  };
  double v = mu_warm != nullptr
                 ? search(mu_warm->cwiseMax(0.0))
                 : std::numeric_limits<double>::infinity();
  if (v > resid_tol * resid_tol) {
    const Eigen::VectorXd best_mu = mu;
    if (search(Eigen::VectorXd::Zero(T.rows())) > v && mu_warm != nullptr) {
      mu = best_mu;  // keep the better of the two candidates
    }
  }

  // dual lower bound: min_d 0.5||y - X d||^2 + lambda ||d||_1 + (T^T mu)^T d
  const Eigen::MatrixXd H = X.transpose() * X;
  const Eigen::VectorXd b = X.transpose() * y - T.transpose() * mu;
  Eigen::VectorXd d = delta;
  Eigen::VectorXd q = H * d;
  for (int sweep = 0; sweep < 20000; ++sweep) {
    double mc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (H(j, j) <= 0.0) continue;
      const double c = b[j] - q[j] + H(j, j) * d[j];
      const double nd = soft_threshold(c, lambda, H(j, j));
      const double step = nd - d[j];
      if (step != 0.0) {
        q += H.col(j) * step;
        d[j] = nd;
        mc = std::max(mc, std::abs(step));
      }
    }
    if (mc < 1e-13) break;
  }
  const double dual = 0.5 * (y - X * d).squaredNorm() +
                      lambda * d.lpNorm<1>() + (T * d).dot(mu);
  const double primal =
      0.5 * (y - X * delta).squaredNorm() + lambda * delta.lpNorm<1>();
  return primal - dual <= 1e-8 * std::max(1.0, std::abs(primal));
}

// Newton-style polish of a converged coordinate-descent point: resolve the
// stationarity system restricted to the detected support and active rows.
// The refined point is flagged usable only when it is feasible,
// sign-consistent, and no worse in objective; the multipliers are returned
// regardless, as a warm start for the optimality certificate.
struct PolishedPoint {
  Eigen::VectorXd delta;
  Eigen::VectorXd mu;  // one entry per row of T
  bool delta_ok = false;
};

PolishedPoint polish_pattern(const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& y,
                             const Eigen::MatrixXd& T, double lambda,
                             const Eigen::VectorXd& delta, double zero_eps) {
  const Eigen::Index n = X.cols();
  const Eigen::VectorXd w = T * delta;
  const double act_eps =
      1e-7 * std::max(1.0, delta.lpNorm<Eigen::Infinity>());
  std::vector<Eigen::Index> support, act;
  std::vector<double> signs;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::abs(delta[j]) > zero_eps) {
      support.push_back(j);
      signs.push_back(delta[j] > 0.0 ? 1.0 : -1.0);
    }
  }
  for (Eigen::Index i = 0; i < T.rows(); ++i) {
    if (w[i] > -act_eps) act.push_back(i);
  }
  const Eigen::Index nf = static_cast<Eigen::Index>(support.size());
  const Eigen::Index na = static_cast<Eigen::Index>(act.size());

  Eigen::MatrixXd XF(X.rows(), nf), TAF(na, nf);
  for (Eigen::Index k = 0; k < nf; ++k) {
    XF.col(k) = X.col(support[static_cast<std::size_t>(k)]);
    for (Eigen::Index a = 0; a < na; ++a) {
      TAF(a, k) = T(act[static_cast<std::size_t>(a)],
                    support[static_cast<std::size_t>(k)]);
    }
  }
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nf + na, nf + na);
  K.topLeftCorner(nf, nf) = XF.transpose() * XF;
  K.topRightCorner(nf, na) = TAF.transpose();
  K.bottomLeftCorner(na, nf) = TAF;
  Eigen::VectorXd rhs(nf + na);
  for (Eigen::Index k = 0; k < nf; ++k) {
    rhs[k] = XF.col(k).dot(y) - lambda * signs[static_cast<std::size_t>(k)];
  }
  rhs.tail(na).setZero();
  const Eigen::VectorXd sol = K.completeOrthogonalDecomposition().solve(rhs);

  PolishedPoint out;
  out.mu = Eigen::VectorXd::Zero(T.rows());
  for (Eigen::Index a = 0; a < na; ++a) {
    out.mu[act[static_cast<std::size_t>(a)]] = sol[nf + a];
  }
  Eigen::VectorXd refined = Eigen::VectorXd::Zero(n);
  bool ok = true;
  for (Eigen::Index k = 0; k < nf; ++k) {
    if (sol[k] * signs[static_cast<std::size_t>(k)] < -1e-10) ok = false;
    refined[support[static_cast<std::size_t>(k)]] = sol[k];
  }
  if (T.rows() > 0 && (T * refined).maxCoeff() > 1e-10) ok = false;
  if (ok) {
    const double obj_old =
        0.5 * (y - X * delta).squaredNorm() + lambda * delta.lpNorm<1>();
    const double obj_new =
        0.5 * (y - X * refined).squaredNorm() + lambda * refined.lpNorm<1>();
    if (obj_new > obj_old + 1e-9 * std::max(1.0, obj_old)) ok = false;
  }
  out.delta = ok ? std::move(refined) : delta;
  out.delta_ok = ok;
  return out;
}

// Augmented-Lagrangian escape for stalled coordinate descent: relax the
// constraint with multipliers and a quadratic term (whose inner problem has
// a separable l1 part that plain coordinate descent solves exactly), then
// project the result back onto the feasible set.
Eigen::VectorXd alm_escape(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::MatrixXd& T, double lambda,
                           const Eigen::VectorXd& delta0) {
  const Eigen::Index n = X.cols();
  const Eigen::MatrixXd H0 = X.transpose() * X;
  double rho = std::max(1e-3, H0.trace() / static_cast<double>(n));
  const Eigen::VectorXd b0 = X.transpose() * y;

  Eigen::VectorXd delta = delta0;
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(T.rows());
  Eigen::MatrixXd H = H0 + rho * T.transpose() * T;
  double prev_violation = kInf;
  for (int outer = 0; outer < 300; ++outer) {
    Eigen::VectorXd w = T * delta;
    const Eigen::VectorXd s = (-(w + mu / rho)).cwiseMax(0.0);
    const Eigen::VectorXd b = b0 - T.transpose() * (mu + rho * s);
    Eigen::VectorXd q = H * delta;
    for (int sweep = 0; sweep < 50; ++sweep) {
      double mc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (H(j, j) <= 0.0) continue;
        const double c = b[j] - q[j] + H(j, j) * delta[j];
        const double nd = soft_threshold(c, lambda, H(j, j));
        const double d = nd - delta[j];
        if (d != 0.0) {
          q += H.col(j) * d;
          delta[j] = nd;
          mc = std::max(mc, std::abs(d));
        }
      }
      if (mc < 1e-11) break;
    }
    w = T * delta;
    mu = (mu + rho * w).cwiseMax(0.0);
    // ramp the penalty when the constraint violation stops shrinking
    const double violation = w.cwiseMax(0.0).lpNorm<Eigen::Infinity>();
    if (outer % 10 == 9) {
      if (violation > 0.5 * prev_violation && violation > 1e-12) {
        rho *= 2.0;
        H = H0 + rho * T.transpose() * T;
      }
      prev_violation = violation;
    }
  }
  return project_feasible(T, delta);
}

}  // namespace

std::optional<double> solve_univariate(const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& residual,
                                       const Eigen::VectorXd& u,
                                       const Eigen::VectorXd& v,
                                       double lambda) {
  const double xtx = x.squaredNorm();
  if (xtx == 0.0) return std::nullopt;
  const Interval iv = feasible_interval(u, v);
  if (!iv.feasible) return std::nullopt;
  const double theta = soft_threshold(residual.dot(x), lambda, xtx);
  return std::max(iv.lo, std::min(theta, iv.hi));
}

ShiftFit constrained_lasso(const ConstrainedLassoProblem& problem,
                           const Eigen::VectorXd& init,
                           const SolverOptions& opts) {
  const Eigen::MatrixXd& X = problem.X;
  const Eigen::MatrixXd& T = problem.T;
  const Eigen::VectorXd& y = problem.y;
  const double lambda = problem.lambda;
  const Eigen::Index n = X.cols();
  const bool constrained = T.rows() > 0;
  if (lambda < 0.0) throw std::invalid_argument("constrained_lasso: lambda < 0");
  if (init.size() != n) {
    throw std::invalid_argument("constrained_lasso: init size mismatch");
  }

  Eigen::VectorXd delta = init;
  Eigen::VectorXd r = y - X * delta;
  Eigen::VectorXd w = constrained ? Eigen::VectorXd(T * delta)
                                  : Eigen::VectorXd();
  if (constrained && w.maxCoeff() > opts.feas_eps) {
    throw std::invalid_argument("constrained_lasso: init is infeasible");
  }
  Eigen::VectorXd xtx(n);
  for (Eigen::Index j = 0; j < n; ++j) xtx[j] = X.col(j).squaredNorm();

  auto update_coord = [&](Eigen::Index j) -> double {
    if (xtx[j] == 0.0) return 0.0;
    const double c = X.col(j).dot(r) + xtx[j] * delta[j];
    double theta = soft_threshold(c, lambda, xtx[j]);
    if (constrained) {
      double lo = -kInf, hi = kInf;
      bool feasible = true;
      for (Eigen::Index i = 0; i < T.rows(); ++i) {
        const double v = T(i, j);
        if (v == 0.0) continue;
        const double u = w[i] - v * delta[j];
        if (v > 0.0) hi = std::min(hi, -u / v);
        else lo = std::max(lo, -u / v);
      }
      if (lo > hi) feasible = false;
      if (!feasible) return 0.0;  // leave the coordinate unchanged
      theta = std::max(lo, std::min(theta, hi));
    }
    const double change = theta - delta[j];
    if (change != 0.0) {
      r -= X.col(j) * change;
      if (constrained) w += T.col(j) * change;
      delta[j] = theta;
    }
    return std::abs(change);
  };

  ShiftFit fit;
  fit.lambda = lambda;
  int sweeps = 0;
  auto run_cd = [&]() {
    int local = 0;
    while (local < opts.max_sweeps) {
      // full sweep
      double max_change = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        max_change = std::max(max_change, update_coord(j));
      }
      ++local;
      if (max_change < opts.tol) {
        sweeps += local;
        return true;
      }
      // active-set passes until they stall, then re-verify with a full sweep
      std::vector<Eigen::Index> active;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (delta[j] != 0.0) active.push_back(j);
      }
      while (!active.empty() && local < opts.max_sweeps) {
        double ac = 0.0;
        for (Eigen::Index j : active) ac = std::max(ac, update_coord(j));
        ++local;
        if (ac < opts.tol) break;
      }
    }
    sweeps += local;
    return false;
  };

  bool converged = run_cd();
  if (constrained && converged && opts.certify) {
    // Cyclic descent can stall at a suboptimal corner of the polyhedron
    // because the constraint rows couple coordinates. Polish the fixed
    // point on its detected pattern and certify it through the KKT
    // multipliers; when the certificate fails, escape with an
    // augmented-Lagrangian pass and resume the coordinate sweeps.
    auto finalize = [&]() {
      const double mag = std::max(1.0, delta.lpNorm<Eigen::Infinity>());
      for (double ze : {1e-9 * mag, 1e-6 * mag}) {
        const PolishedPoint refined =
            polish_pattern(X, y, T, lambda, delta, ze);
        if (kkt_certified(X, y, T, lambda, refined.delta, ze,
                          &refined.mu)) {
          delta = refined.delta;
          return true;
        }
      }
      return false;
    };
    bool certified = finalize();
    for (int rescue = 0; rescue < 4 && !certified; ++rescue) {
      delta = alm_escape(X, y, T, lambda, delta);
      r = y - X * delta;
      w = T * delta;
      converged = run_cd();
      if (!converged) break;
      certified = finalize();
    }
    converged = converged && certified;
  }

  // refresh accumulated residuals
  r = y - X * delta;
  fit.delta = std::move(delta);
  fit.objective = 0.5 * r.squaredNorm() + lambda * fit.delta.lpNorm<1>();
  fit.iterations = sweeps;
  fit.converged = converged;
  fit.sigma_hat = std::numeric_limits<double>::quiet_NaN();
  return fit;
}

ShiftFit constrained_lasso(const ConstrainedLassoProblem& problem,
                           const SolverOptions& opts) {
  return constrained_lasso(problem,
                           Eigen::VectorXd::Zero(problem.X.cols()), opts);
}

double default_scaled_lasso_rate(int m, int n) {
  return std::sqrt(2.0 * std::log(static_cast<double>(n)) /
                   static_cast<double>(m));
}

ShiftFit scaled_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const Eigen::MatrixXd& T, double lambda0,
                      const SolverOptions& opts,
                      const Eigen::VectorXd* warm_start) {
  if (lambda0 <= 0.0) throw std::invalid_argument("scaled_lasso: lambda0 <= 0");
  const double m = static_cast<double>(X.rows());
  Eigen::VectorXd delta = warm_start != nullptr
                              ? *warm_start
                              : Eigen::VectorXd::Zero(X.cols());
  double sigma = (y - X * delta).norm() / std::sqrt(m);
  if (sigma < 1e-8) {
    throw std::runtime_error(
        "scaled_lasso: noise estimate collapsed below 1e-8 (degenerate fit; "
        "lambda0 too small or response is zero)");
  }

  // the intermediate solves are refined again right away, so only the final
  // one pays for the optimality certificate
  SolverOptions inner = opts;
  inner.certify = false;
  ShiftFit fit;
  for (int it = 0; it < 100; ++it) {
    ConstrainedLassoProblem prob{X, y, T, lambda0 * m * sigma};
    fit = constrained_lasso(prob, delta, inner);
    delta = fit.delta;
    const double sigma_new = (y - X * delta).norm() / std::sqrt(m);
    if (sigma_new < 1e-8) {
      throw std::runtime_error(
          "scaled_lasso: noise estimate collapsed below 1e-8 (degenerate "
          "fit; lambda0 too small or response is zero)");
    }
    const bool done = std::abs(sigma_new - sigma) < 1e-6;
    sigma = sigma_new;
    if (done) break;
  }
  if (opts.certify && T.rows() > 0) {
    ConstrainedLassoProblem prob{X, y, T, lambda0 * m * sigma};
    fit = constrained_lasso(prob, delta, opts);
    delta = fit.delta;
    const double sigma_new = (y - X * delta).norm() / std::sqrt(m);
    if (sigma_new < 1e-8) {
      throw std::runtime_error(
          "scaled_lasso: noise estimate collapsed below 1e-8 (degenerate "
          "fit; lambda0 too small or response is zero)");
    }
    sigma = sigma_new;
  }
  fit.sigma_hat = sigma;
  fit.lambda = lambda0;
  return fit;
}

}  // namespace zazou
