#pragma once

// Symmetric linear Markov perfect equilibrium under a static linear pricing rule
//
//     p(t) = q1' x(t) + q2' u(t)
//
// computed as a fixed point F* = f(F*) of the one-shot best-response map.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "oligo/errors.hpp"
#include "oligo/lti_core.hpp"

namespace oligo {

struct PricingRule {
  Eigen::VectorXd q1;  ///< weights on the backlog state
  Eigen::VectorXd q2;  ///< weights on the demand vector

  /// Price equal to aggregate demand.
  static PricingRule marginal_cost(const StateSpace& ss) {
    return {Eigen::VectorXd::Zero(ss.Dc), Eigen::VectorXd::Ones(ss.Dc)};
  }

  void validate(const StateSpace& ss) const {
    require(q1.size() == ss.Dc && q2.size() == ss.Dc, ErrorKind::InvalidParams,
            "pricing vectors must have length D_c = " + std::to_string(ss.Dc));
    require(q1.allFinite() && q2.allFinite(), ErrorKind::InvalidParams, "pricing vectors must be finite");
  }
};

enum class SweepMode { Jacobi, GaussSeidel };

inline const char* to_string(SweepMode m) { return m == SweepMode::Jacobi ? "jacobi" : "gauss-seidel"; }

enum class InitialGain { EvenSplit, BoundedlyRational };

struct FixedPointConfig {
  double tol = 1e-10;
  int max_iter = 20000;     ///< per damping level
  double damping = 0.5;     ///< weight of the new iterate
  SweepMode mode = SweepMode::Jacobi;
  InitialGain init = InitialGain::EvenSplit;
  bool adaptive_damping = true;  ///< halve the damping and restart when an attempt diverges or stalls
  double min_damping = 1.0 / 64.0;
  int patience = 2000;  ///< iterations without a new best residual before an attempt counts as stalled

  void validate() const {
    require(tol > 0.0 && std::isfinite(tol), ErrorKind::InvalidParams, "tol must be > 0");
    require(max_iter >= 1, ErrorKind::InvalidParams, "max_iter must be >= 1");
    require(damping > 0.0 && damping <= 1.0, ErrorKind::InvalidParams, "damping must lie in (0,1]");
    require(min_damping > 0.0 && min_damping <= damping, ErrorKind::InvalidParams, "min_damping must lie in (0, damping]");
    require(patience >= 1, ErrorKind::InvalidParams, "patience must be >= 1");
  }
};

struct MpeDiagnostics {
  int iterations = 0;  ///< total over all attempts
  int attempts = 0;
  double damping_used = 0.0;
  double residual = 0.0;  ///< sup-norm of f(F*) - F* for the undamped map
  std::vector<double> residual_history;  ///< final attempt
  double spectral_radius = 0.0;
  double stability_margin = 0.0;  ///< 1 - spectral radius
  SweepMode mode = SweepMode::Jacobi;
};

struct MpeResult {
  FeedbackGain gain;
  MpeDiagnostics diagnostics;
};

/// One application of the best-response map. Deadline rows become unit rows; every
/// other row solves its one-shot first-order condition given the rows of F.
/// In Gauss-Seidel mode rows are updated in position order and later rows see the
/// updated earlier ones.
inline Eigen::MatrixXd f_map(const Eigen::MatrixXd& F, const PricingRule& pr, const StateSpace& ss,
                             SweepMode mode = SweepMode::Jacobi) {
  require_gain_shape(F, ss);
  pr.validate(ss);
  const int n = ss.Dc;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd out = F;

  Eigen::MatrixXd G;
  Eigen::VectorXd v;
  auto refresh = [&](const Eigen::MatrixXd& cur) {
    G = ss.R1 * (I - cur);
    v = pr.q1 + cur.transpose() * pr.q2;
  };
  refresh(F);

  for (int j = 0; j < n; ++j) {
    const auto [l, tau] = ss.agent(j);
    if (tau == 1) {
      out.row(j).setZero();
      out(j, j) = 1.0;
      continue;
    }
    const Eigen::MatrixXd& cur = mode == SweepMode::Jacobi ? F : out;
    if (mode == SweepMode::GaussSeidel) refresh(cur);

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd Gk = I;  // G^(k-1)
    for (int k = 1; k < tau; ++k) {
      const Eigen::RowVectorXd row = cur.row(ss.index(l, tau - k));
      const Eigen::MatrixXd S = v * row;
      A.noalias() += Gk.transpose() * (S + S.transpose()) * Gk;
      Gk = (G * Gk).eval();
    }
    const Eigen::VectorXd r1e = ss.R1.col(j);
    const Eigen::RowVectorXd own = cur.row(j);
    const Eigen::RowVectorXd r1eA = r1e.transpose() * A;
    Eigen::MatrixXd others = cur;
    others.row(j).setZero();
    const Eigen::RowVectorXd num = r1eA * (G + r1e * own) - (pr.q1.transpose() + pr.q2.transpose() * others);
    const double den = r1eA.dot(r1e) + 2.0 * pr.q2(j);
    const double scale = std::max({1.0, r1eA.cwiseAbs().maxCoeff(), std::abs(pr.q2(j))});
    require(std::isfinite(den) && std::abs(den) > 1e-14 * scale, ErrorKind::SingularRow,
            "vanishing denominator in row (l=" + std::to_string(l) + ", tau=" + std::to_string(tau) + ")");
    out.row(j) = num / den;
  }
  return out;
}

namespace detail {

inline Eigen::MatrixXd initial_gain(InitialGain g, const StateSpace& ss) {
  return g == InitialGain::EvenSplit ? make_even_split(ss) : make_f_br(0.1, ss);
}

inline void reset_deadline_rows(Eigen::MatrixXd& F, const StateSpace& ss) {
  for (int j = 0; j < ss.L; ++j) {
    F.row(j).setZero();
    F(j, j) = 1.0;
  }
}

inline std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline std::string residual_trace(const std::vector<double>& h) {
  std::ostringstream os;
  os.precision(3);
  os << "residual trace:";
  const std::size_t n = h.size();
  const std::size_t step = std::max<std::size_t>(1, n / 8);
  for (std::size_t i = 0; i < n; i += step) os << " [" << i << "] " << h[i];
  if (n > 0 && (n - 1) % step != 0) os << " [" << n - 1 << "] " << h.back();
  return os.str();
}

}  // namespace detail

/// Damped fixed-point iteration F <- (1-lambda) F + lambda f(F). Convergence is
/// judged on the undamped residual. With adaptive damping, an attempt that
/// diverges, produces non-finite entries or stalls is restarted from the initial
/// gain with half the damping.
inline MpeResult solve_mpe(const PricingRule& pr, const StateSpace& ss, const FixedPointConfig& cfg = {}) {
  cfg.validate();
  pr.validate(ss);
  MpeDiagnostics diag;
  diag.mode = cfg.mode;
  const Eigen::MatrixXd F0 = detail::initial_gain(cfg.init, ss);
  double lambda = cfg.damping;
  std::string last_trace;

  for (;;) {
    ++diag.attempts;
    diag.damping_used = lambda;
    diag.residual_history.clear();
    Eigen::MatrixXd F = F0;
    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int it = 0; it < cfg.max_iter; ++it) {
      ++diag.iterations;
      const Eigen::MatrixXd Fn = f_map(F, pr, ss, cfg.mode);
      const double r = Fn.allFinite() ? (Fn - F).cwiseAbs().maxCoeff() : std::numeric_limits<double>::infinity();
      diag.residual_history.push_back(r);
      if (r <= cfg.tol) {
        const double rho = spectral_radius(closed_loop(F, ss));
        diag.residual = r;
        diag.spectral_radius = rho;
        diag.stability_margin = 1.0 - rho;
        require(rho < 1.0, ErrorKind::Unstable,
                "fixed point found (residual " + detail::num(r) + ") but closed loop spectral radius is " +
                    detail::num(rho));
        return {FeedbackGain{F}, diag};
      }
      if (!std::isfinite(r) || r > 1e8) break;
      if (r < best) {
        best = r;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
      F = (1.0 - lambda) * F + lambda * Fn;
      detail::reset_deadline_rows(F, ss);
    }
    last_trace = detail::residual_trace(diag.residual_history);
    if (!cfg.adaptive_damping || lambda / 2.0 < cfg.min_damping) break;
    lambda /= 2.0;
  }
  diag.residual = diag.residual_history.empty() ? 0.0 : diag.residual_history.back();
  fail(ErrorKind::NotConverged, "fixed point iteration (" + std::string(to_string(cfg.mode)) + ", last damping " +
                                    detail::num(diag.damping_used) + ") did not reach tol " +
                                    detail::num(cfg.tol) + "; " + last_trace);
}

}  // namespace oligo
