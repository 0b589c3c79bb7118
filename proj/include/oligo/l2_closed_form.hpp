#pragma once

// Closed-form linear load-scheduling strategies for the two-type market.
//
// Type-1 agents must consume their whole workload on arrival; a type-2 agent
// arriving at t splits its workload d2 across t and t+1 using
//
//     u(x, d2) = -a*x + b*d2 + g
//
// where x is the aggregate backlog that must be served this period.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "oligo/errors.hpp"

namespace oligo {

struct MarketParamsL2 {
  double q1 = 1.0;  ///< type-1 arrival probability
  double q2 = 0.5;  ///< type-2 arrival probability
  double mu1 = 0.0;
  double mu2 = 0.0;
  double sigma1 = 1.0;
  double sigma2 = 1.0;

  void validate() const {
    require(std::isfinite(q1) && q1 >= 0.0 && q1 <= 1.0, ErrorKind::InvalidParams, "q1 must lie in [0,1]");
    require(std::isfinite(q2) && q2 >= 0.0 && q2 <= 1.0, ErrorKind::InvalidParams, "q2 must lie in [0,1]");
    require(std::isfinite(mu1) && std::isfinite(mu2), ErrorKind::InvalidParams, "means must be finite");
    require(std::isfinite(sigma1) && sigma1 >= 0.0, ErrorKind::InvalidParams, "sigma1 must be >= 0");
    require(std::isfinite(sigma2) && sigma2 >= 0.0, ErrorKind::InvalidParams, "sigma2 must be >= 0");
  }
};

struct LinearStrategyL2 {
  double a = 0.0;
  double b = 0.0;
  double g = 0.0;

  double operator()(double x, double d2) const { return -a * x + b * d2 + g; }

  friend bool operator==(const LinearStrategyL2&, const LinearStrategyL2&) = default;
};

inline double max_abs_diff(const LinearStrategyL2& s, const LinearStrategyL2& t) {
  return std::max({std::abs(s.a - t.a), std::abs(s.b - t.b), std::abs(s.g - t.g)});
}

struct RiskSensitivity {
  double theta = 0.0;  ///< < 0 risk averse, > 0 risk loving
  double beta = 0.9;   ///< discount factor in (0,1)
};

/// Coefficients of the recursive quadratic cost c(x) = r0 + r1 x + r2 x^2.
/// r3 = beta*r2 / (1 + theta*sigma1^2*r2) is the effective continuation weight.
struct RiskSensitiveCoeffs {
  double r1 = 0.0;
  double r2 = 0.0;
  double r3 = 0.0;
  double residual = 0.0;  ///< sup-norm residual of the implicit coefficient system
  bool closed_form_accepted = true;
  std::string diagnostics;
};

/// Which mean enters the constant term of the risk-sensitive strategy.
///   SingleMean:  g = r3 (mu1 + r1/(2 r2)) / (1 + r3)
///   DoubledMean: g = r3 (2 mu1 + r1/(2 r2)) / (1 + r3)
/// SingleMean is what the first-order condition of the recursive cost yields.
enum class RiskConstantTerm { SingleMean, DoubledMean };

/// Value function V(x) = A_c x^2 + B_c x and average cost lambda_c of the
/// cooperative optimum.
struct CoopValue {
  double A_c = 0.0;
  double B_c = 0.0;
  double lambda_c = 0.0;          ///< average per-period cost, Bellman-consistent
  double lambda_c_printed = 0.0;  ///< legacy closed-form display, kept for auditing only
};

struct CongestionSolution {
  LinearStrategyL2 strategy;
  double cubic_residual = 0.0;
  int qualifying_roots = 0;  ///< > 1 means the smallest root was selected
};

namespace detail {

inline double sqrt_clamped(double v) { return std::sqrt(std::max(0.0, v)); }

// Real roots of c3 x^3 + c2 x^2 + c1 x + c0, each polished by Newton steps.
inline std::vector<double> real_cubic_roots(double c3, double c2, double c1, double c0) {
  std::vector<double> roots;
  const double scale = std::max({std::abs(c3), std::abs(c2), std::abs(c1), std::abs(c0)});
  if (scale == 0.0) return roots;
  auto poly = [&](double x) { return ((c3 * x + c2) * x + c1) * x + c0; };
  auto dpoly = [&](double x) { return (3.0 * c3 * x + 2.0 * c2) * x + c1; };

  if (std::abs(c3) <= 1e-14 * scale) {
    if (std::abs(c2) <= 1e-14 * scale) {
      if (c1 != 0.0) roots.push_back(-c0 / c1);
    } else {
      const double disc = c1 * c1 - 4.0 * c2 * c0;
      if (disc >= 0.0) {
        // Citardauq form avoids cancellation.
        const double t = -0.5 * (c1 + std::copysign(std::sqrt(disc), c1));
        if (t != 0.0) roots.push_back(c0 / t);
        roots.push_back(t / c2);
      }
    }
  } else {
    const double a = c2 / c3, b = c1 / c3, c = c0 / c3;
    // Depressed cubic t^3 + p t + q with x = t - a/3.
    const double p = b - a * a / 3.0;
    const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    const double shift = -a / 3.0;
    const double disc = q * q / 4.0 + p * p * p / 27.0;
    if (disc > 0.0) {
      const double s = std::sqrt(disc);
      roots.push_back(std::cbrt(-q / 2.0 + s) + std::cbrt(-q / 2.0 - s) + shift);
    } else if (p == 0.0) {
      roots.push_back(shift);
    } else {
      const double m = 2.0 * std::sqrt(-p / 3.0);
      const double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
      const double phi = std::acos(arg) / 3.0;
      const double two_pi_3 = 2.0943951023931954923;
      for (int k = 0; k < 3; ++k) roots.push_back(m * std::cos(phi - k * two_pi_3) + shift);
    }
  }

  for (double& r : roots) {
    for (int it = 0; it < 3; ++it) {
      const double d = dpoly(r);
      if (d == 0.0) break;
      const double next = r - poly(r) / d;
      if (!(std::abs(poly(next)) < std::abs(poly(r)))) break;
      r = next;
    }
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

}  // namespace detail

/// Non-cooperative Markov perfect symmetric equilibrium.
inline LinearStrategyL2 mpe_strategy(const MarketParamsL2& p) {
  p.validate();
  const double s = std::sqrt(1.0 - p.q2 / 2.0);
  LinearStrategyL2 out;
  out.a = 1.0 / (2.0 * (1.0 + s));
  out.b = 1.0 / (1.0 + 1.0 / s);
  out.g = (p.q1 * p.mu1 + p.q2 * p.mu2 / (1.0 + s)) / (2.0 * (1.0 + s));
  return out;
}

/// Optimal stationary cooperative strategy. At q2 = 1 the analytic limit is returned.
inline LinearStrategyL2 coop_strategy(const MarketParamsL2& p) {
  p.validate();
  const double s = std::sqrt(1.0 - p.q2);
  LinearStrategyL2 out;
  out.a = 1.0 / (1.0 + s);
  out.b = s > 0.0 ? 1.0 / (1.0 + 1.0 / s) : 0.0;
  out.g = (p.q1 * p.mu1 + p.q2 * p.mu2 / (1.0 + s)) / (1.0 + s);
  return out;
}

/// Value-function coefficients of the cooperative optimum.
///
/// The Bellman derivation conditions on a type-1 draw every period; for general
/// q1 the type-1 load enters through its first two moments, so mu1 is replaced by
/// the expected type-1 load q1*mu1 and sigma1^2 by Var(h1*d1).
inline CoopValue coop_value(const MarketParamsL2& p) {
  p.validate();
  const double q = p.q2;
  const double A = std::sqrt(1.0 - q);
  const double m1 = p.q1 * p.mu1;
  const double v1 = p.q1 * (p.mu1 * p.mu1 + p.sigma1 * p.sigma1) - m1 * m1;
  const double m = m1 + p.mu2;
  const double B = 2.0 * (1.0 - A) * m;
  CoopValue out;
  out.A_c = A;
  out.B_c = B;
  out.lambda_c = A * v1 + q * (A * (m * m + p.sigma2 * p.sigma2) + B * m - B * B / 4.0) / (1.0 + A) +
                 (1.0 - q) * (A * m1 * m1 + B * m1);
  const double s1 = p.sigma1 * p.sigma1, s2 = p.sigma2 * p.sigma2, mu1 = p.mu1;
  out.lambda_c_printed = A * s1 + A / (1.0 + A) * q * s2 + mu1 * mu1 +
                         (1.0 + A - A * A) / (1.0 + A) * q * mu1 * mu1 + 2.0 * q * mu1 * p.mu2;
  return out;
}

/// Strategy recovered from the value function; agrees with coop_strategy.
inline LinearStrategyL2 coop_strategy_from_value(const MarketParamsL2& p, const CoopValue& v) {
  const double A = v.A_c;
  return {1.0 / (1.0 + A), A / (1.0 + A), A * p.q1 * p.mu1 / (1.0 + A) + v.B_c / (2.0 * (1.0 + A))};
}

/// Equilibrium when each type-2 arrival is split among K identical agents.
inline LinearStrategyL2 k_agent_strategy(const MarketParamsL2& p, long long K) {
  p.validate();
  require(K >= 1, ErrorKind::InvalidParams, "K must be >= 1");
  const double ratio = static_cast<double>(K) / (static_cast<double>(K) + 1.0);
  const double s = std::sqrt(1.0 - ratio * p.q2);
  LinearStrategyL2 out;
  out.a = ratio / (1.0 + s);
  out.b = s > 0.0 ? 1.0 / (1.0 + 1.0 / s) : 0.0;
  out.g = ratio / (1.0 + s) * (p.q1 * p.mu1 + p.q2 * p.mu2 / (1.0 + s));
  return out;
}

/// Residual of the implicit coefficient system of the recursive risk-sensitive cost.
inline double risk_sensitive_residual(const MarketParamsL2& p, const RiskSensitivity& rs, double r1, double r2) {
  const double q = p.q2;
  const double s = rs.theta * p.sigma1 * p.sigma1;
  const double r3 = rs.beta * r2 / (1.0 + s * r2);
  const double e2 = r2 - (1.0 - q / (1.0 + r3));
  const double e1 = r1 - q / (1.0 + r3) * r3 * (2.0 * p.mu1 + 2.0 * p.mu2 + r1 / r2);
  return std::max(std::abs(e2), std::abs(e1) / (1.0 + std::abs(r1)));
}

/// Cooperative risk-sensitive (LEQG) coefficients for q1 = 1.
///
/// The closed form is checked against the implicit system; if it is rejected the
/// positive roots of the underlying quadratic are searched directly and the result
/// is flagged in `diagnostics`.
inline RiskSensitiveCoeffs risk_sensitive_coeffs(const MarketParamsL2& p, const RiskSensitivity& rs) {
  p.validate();
  require(p.q1 == 1.0, ErrorKind::InvalidParams, "risk-sensitive coefficients require q1 = 1");
  require(std::isfinite(rs.theta), ErrorKind::InvalidParams, "theta must be finite");
  require(rs.beta > 0.0 && rs.beta < 1.0, ErrorKind::InvalidParams, "beta must lie in (0,1)");

  const double q = p.q2;
  const double s = rs.theta * p.sigma1 * p.sigma1;
  const double lead = s + rs.beta;              // coefficient of r2^2
  const double lin = 1.0 - rs.beta - (1.0 - q) * s;  // coefficient of r2
  constexpr double kTol = 1e-10;

  auto admissible = [&](double r2) {
    return std::isfinite(r2) && r2 > 0.0 && 1.0 + s * r2 > 0.0 && 1.0 + rs.beta * r2 / (1.0 + s * r2) != 0.0;
  };
  auto r1_of = [&](double r2) {
    return 2.0 * rs.beta * r2 * (1.0 - r2) * (p.mu1 + p.mu2) / (1.0 + s * r2 - rs.beta * (1.0 - r2));
  };
  auto finish = [&](double r2, bool accepted, std::string diag) {
    RiskSensitiveCoeffs c;
    c.r2 = r2;
    c.r3 = rs.beta * r2 / (1.0 + s * r2);
    c.r1 = r1_of(r2);
    c.residual = risk_sensitive_residual(p, rs, c.r1, c.r2);
    c.closed_form_accepted = accepted;
    c.diagnostics = std::move(diag);
    return c;
  };

  double closed = std::numeric_limits<double>::quiet_NaN();
  if (lin != 0.0 && lead != 0.0) {
    closed = lin * (std::sqrt(1.0 + 4.0 * (1.0 - q) * lead / (lin * lin)) - 1.0) / (2.0 * lead);
  } else if (lead == 0.0 && lin != 0.0) {
    closed = (1.0 - q) / lin;
  }
  if (admissible(closed)) {
    auto c = finish(closed, true, "");
    if (std::isfinite(c.r1) && c.residual <= kTol) return c;
  }

  // Fallback: every admissible root of lead*r^2 + lin*r - (1-q) = 0.
  std::vector<double> roots = detail::real_cubic_roots(0.0, lead, lin, -(1.0 - q));
  for (double r2 : roots) {
    if (!admissible(r2)) continue;
    auto c = finish(r2, false, "closed form rejected; coefficients from direct root search");
    if (std::isfinite(c.r1) && c.residual <= kTol) return c;
  }
  fail(ErrorKind::NoSolution, "no admissible positive r2 for theta=" + std::to_string(rs.theta) +
                                  ", beta=" + std::to_string(rs.beta) + ", q=" + std::to_string(q));
}

inline LinearStrategyL2 risk_sensitive_strategy(const MarketParamsL2& p, const RiskSensitivity& rs,
                                                RiskConstantTerm variant = RiskConstantTerm::SingleMean) {
  const RiskSensitiveCoeffs c = risk_sensitive_coeffs(p, rs);
  const double mean_factor = variant == RiskConstantTerm::SingleMean ? 1.0 : 2.0;
  LinearStrategyL2 out;
  out.a = 1.0 / (1.0 + c.r3);
  out.b = c.r3 / (1.0 + c.r3);
  out.g = c.r3 * (mean_factor * p.mu1 + c.r1 / (2.0 * c.r2)) / (1.0 + c.r3);
  return out;
}

/// Cubic whose stable root is the backlog coefficient under congestion fee gamma.
inline double congestion_cubic(double a, double q, double gamma) {
  return gamma * q * a * a * a - (1.0 + gamma) * q * a * a + 2.0 * a - (1.0 + gamma) / 2.0;
}

/// Equilibrium when each agent also pays gamma times the others' demand.
/// The constant term uses the expected type-1 load q1*mu1.
inline CongestionSolution congestion_solve(const MarketParamsL2& p, double gamma) {
  p.validate();
  require(std::isfinite(gamma) && gamma >= 0.0 && gamma <= 1.0, ErrorKind::InvalidParams, "gamma must lie in [0,1]");
  const double q = p.q2;
  std::vector<double> roots =
      detail::real_cubic_roots(gamma * q, -(1.0 + gamma) * q, 2.0, -(1.0 + gamma) / 2.0);
  std::vector<double> ok;
  for (double r : roots)
    if (r > 0.0 && r < 1.0 && q * r * r < 1.0) ok.push_back(r);
  require(!ok.empty(), ErrorKind::NoStableRoot,
          "no stable root in (0,1) for gamma=" + std::to_string(gamma) + ", q=" + std::to_string(q));

  const double a = ok.front();
  const double b = 1.0 - 2.0 * a / (1.0 + gamma);
  const double m1 = p.q1 * p.mu1;
  const double k = 1.0 + gamma - 2.0 * gamma * a;
  const double num = ((1.0 + gamma) * (1.0 - q * a) - 2.0 * gamma * q * a * (1.0 - a)) * m1 + q * k * b * p.mu2;
  const double den = (1.0 + gamma) / a - q * k;

  CongestionSolution out;
  out.strategy = {a, b, num / den};
  out.cubic_residual = std::abs(congestion_cubic(a, q, gamma));
  out.qualifying_roots = static_cast<int>(ok.size());
  return out;
}

inline LinearStrategyL2 congestion_strategy(const MarketParamsL2& p, double gamma) {
  return congestion_solve(p, gamma).strategy;
}

/// {naive even split u = d2/2, no scheduling u = d2}.
inline std::array<LinearStrategyL2, 2> baseline_strategies() {
  return {LinearStrategyL2{0.0, 0.5, 0.0}, LinearStrategyL2{0.0, 1.0, 0.0}};
}

}  // namespace oligo
