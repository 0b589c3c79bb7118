#pragma once

// Stationary moments, efficiency and tail-risk bounds of a linear L=2 strategy.

#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "oligo/errors.hpp"
#include "oligo/l2_closed_form.hpp"

namespace oligo {

struct StationaryMoments {
  double mean_x = 0.0;
  double second_x = 0.0;
  double mean_u = 0.0;
  double second_u = 0.0;

  double var_x() const { return second_x - mean_x * mean_x; }
  double var_u() const { return second_u - mean_u * mean_u; }
};

struct RiskBound {
  double m1 = 0.0;
  double x_tail_bound = 0.0;
  std::optional<double> demand_risk_bound;  ///< leading term q2*x_tail_bound, only when the condition holds
  bool condition_holds = false;
};

namespace detail {

inline void require_stationary(const LinearStrategyL2& s, const MarketParamsL2& p) {
  require(std::isfinite(s.a) && std::isfinite(s.b) && std::isfinite(s.g), ErrorKind::InvalidParams,
          "strategy coefficients must be finite");
  require(p.q2 * s.a * s.a < 1.0 && p.q2 * s.a < 1.0, ErrorKind::NonStationary,
          "backlog recursion is not stationary (q2*a^2 = " + std::to_string(p.q2 * s.a * s.a) + ")");
}

struct XMoments {
  double mean;
  double second;
};

inline XMoments x_moments(const LinearStrategyL2& s, const MarketParamsL2& p) {
  const double q1 = p.q1, q2 = p.q2, a = s.a, b = s.b;
  const double c = (1.0 - b) * p.mu2 - s.g;  // mean carry-over per deferred type-2 load
  const double mean = (q1 * p.mu1 + q2 * c) / (1.0 - q2 * a);
  const double bracket = q1 * (p.mu1 * p.mu1 + p.sigma1 * p.sigma1) +
                         q2 * (c * c + (1.0 - b) * (1.0 - b) * p.sigma2 * p.sigma2) + 2.0 * q1 * q2 * p.mu1 * c +
                         2.0 * a / (1.0 - q2 * a) * (q2 * c + q1 * q2 * p.mu1) * (q2 * c + q1 * p.mu1);
  return {mean, bracket / (1.0 - q2 * a * a)};
}

inline double welfare_from(const LinearStrategyL2& s, const MarketParamsL2& p, const XMoments& m) {
  const double q2 = p.q2, a = s.a, b = s.b;
  const double k = b * p.mu2 + s.g;
  return -0.5 * ((1.0 - q2 + q2 * (1.0 - a) * (1.0 - a)) * m.second + 2.0 * q2 * (1.0 - a) * k * m.mean +
                 q2 * (k * k + b * b * p.sigma2 * p.sigma2));
}

inline void require_mixture_params(const LinearStrategyL2& s, const MarketParamsL2& p) {
  p.validate();
  require(p.q1 == 1.0, ErrorKind::InvalidParams, "the backlog mixture representation requires q1 = 1");
  require(s.a > 0.0 && s.a < 1.0, ErrorKind::InvalidParams, "a must lie in (0,1)");
}

}  // namespace detail

inline StationaryMoments stationary_moments(const LinearStrategyL2& s, const MarketParamsL2& p) {
  p.validate();
  detail::require_stationary(s, p);
  const auto xm = detail::x_moments(s, p);
  StationaryMoments out;
  out.mean_x = xm.mean;
  out.second_x = xm.second;
  out.mean_u = p.q1 * p.mu1 + p.q2 * p.mu2;
  out.second_u = -2.0 * detail::welfare_from(s, p, xm);
  return out;
}

/// Market efficiency W = -E[U^2]/2.
inline double efficiency(const LinearStrategyL2& s, const MarketParamsL2& p) {
  p.validate();
  detail::require_stationary(s, p);
  return detail::welfare_from(s, p, detail::x_moments(s, p));
}

/// (mean, variance) of the backlog conditioned on exactly k consecutive past type-2 deferrals.
inline std::pair<double, double> mixture_component_moments(const LinearStrategyL2& s, const MarketParamsL2& p,
                                                           long long k) {
  detail::require_mixture_params(s, p);
  require(k >= 0, ErrorKind::InvalidParams, "k must be >= 0");
  const double a = s.a;
  const double c = (1.0 - s.b) * p.mu2 - s.g;
  const double kk = static_cast<double>(k);
  const double ak = std::pow(a, kk), ak1 = std::pow(a, kk + 1.0);
  const double mean = ((1.0 - ak1) * p.mu1 + (1.0 - ak) * c) / (1.0 - a);
  const double var = ((1.0 - ak1 * ak1) * p.sigma1 * p.sigma1 +
                      (1.0 - ak * ak) * (1.0 - s.b) * (1.0 - s.b) * p.sigma2 * p.sigma2) /
                     (1.0 - a * a);
  return {mean, var};
}

/// Pr(x > M) from the Gaussian mixture over k; the sum runs to k_max and further
/// until the remaining weight q2^k is at most 1e-12.
inline double mixture_tail_probability(const LinearStrategyL2& s, const MarketParamsL2& p, double M,
                                       long long k_max = 200) {
  detail::require_mixture_params(s, p);
  const double q = p.q2;
  double total = 0.0;
  double w = 1.0;  // q^k
  for (long long k = 0;; ++k) {
    if (k >= k_max && w <= 1e-12) break;
    if (k > 1000000) break;
    const auto [m, v] = mixture_component_moments(s, p, k);
    double tail;
    if (v <= 0.0) {
      tail = m > M ? 1.0 : 0.0;
    } else {
      tail = 0.5 * std::erfc((M - m) / std::sqrt(2.0 * v));
    }
    total += w * (1.0 - q) * tail;
    if (q == 0.0) break;
    w *= q;
  }
  return total;
}

inline RiskBound risk_upper_bound(const LinearStrategyL2& s, const MarketParamsL2& p, double M) {
  detail::require_mixture_params(s, p);
  const double a = s.a, b = s.b;
  const double s1 = p.sigma1 * p.sigma1, s2 = p.sigma2 * p.sigma2;
  const double spread = (s1 + (1.0 - b) * (1.0 - b) * s2) / (1.0 - a * a);
  require(spread > 0.0, ErrorKind::InvalidParams, "limiting backlog variance must be positive");
  RiskBound out;
  out.m1 = (M - (p.mu1 + (1.0 - b) * p.mu2 - s.g) / (1.0 - a)) / std::sqrt(spread);
  require(out.m1 > 0.0, ErrorKind::InvalidMargin,
          "standardized margin m1 = " + std::to_string(out.m1) + " must be positive");
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  out.x_tail_bound = kInvSqrt2Pi / out.m1 * std::exp(-out.m1 * out.m1 / 2.0);

  const double lhs = (1.0 - (1.0 - a) * (1.0 - a)) / (1.0 - a * a);
  if (s1 > 0.0 && s2 > 0.0) {
    out.condition_holds = lhs > b * b / (s1 / s2 + (1.0 - b) * (1.0 - b));
  } else if (s2 == 0.0) {
    out.condition_holds = true;  // rhs -> 0
  } else {
    out.condition_holds = (1.0 - b) != 0.0 && lhs > b * b / ((1.0 - b) * (1.0 - b));
  }
  if (out.condition_holds) out.demand_risk_bound = p.q2 * out.x_tail_bound;
  return out;
}

}  // namespace oligo
