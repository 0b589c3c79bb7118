#pragma once

// Pricing design: choose (q1, q2) so that the induced equilibrium minimizes
// alpha1 * Var(aggregate demand) + alpha2 * Var(aggregate backlog).

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "oligo/errors.hpp"
#include "oligo/lti_core.hpp"
#include "oligo/mpe_fixed_point.hpp"
#include "oligo/nelder_mead.hpp"
#include "oligo/random.hpp"

namespace oligo {

struct OperatorWeights {
  double alpha1 = 1.0;
  double alpha2 = 1.0;

  void validate() const {
    require(std::isfinite(alpha1) && std::isfinite(alpha2) && alpha1 >= 0.0 && alpha2 >= 0.0, ErrorKind::InvalidParams,
            "operator weights must be finite and >= 0");
    require(alpha1 > 0.0 || alpha2 > 0.0, ErrorKind::InvalidParams, "operator weights must not both vanish");
  }
};

struct OperatorEval {
  double value = std::numeric_limits<double>::infinity();  ///< +inf when the equilibrium solve failed
  Eigen::MatrixXd F;
  std::string diagnostics;

  bool ok() const { return std::isfinite(value); }
};

/// Fixed-point settings used inside the pricing search: fewer iterations and
/// damping levels than the standalone defaults, so hopeless pricings fail fast.
inline FixedPointConfig operator_fixed_point_defaults() {
  FixedPointConfig c;
  c.max_iter = 3000;
  c.patience = 500;
  c.min_damping = 0.125;
  return c;
}

inline OperatorEval operator_objective(const PricingRule& pr, const OperatorWeights& w, const StateSpace& ss,
                                       const FixedPointConfig& fp = operator_fixed_point_defaults()) {
  w.validate();
  OperatorEval ev;
  try {
    const MpeResult mpe = solve_mpe(pr, ss, fp);
    const Eigen::MatrixXd Q = solve_lyapunov(mpe.gain.F, ss);
    const Eigen::VectorXd Fte = mpe.gain.F.transpose() * ss.e;
    ev.F = mpe.gain.F;
    ev.value = w.alpha1 * Fte.dot(Q * Fte) + w.alpha2 * ss.e.dot(Q * ss.e);
  } catch (const Error& e) {
    ev.diagnostics = e.what();
  }
  return ev;
}

struct OperatorOptions {
  int restarts = 2;             ///< perturbed starts besides marginal-cost pricing
  double box = 5.0;             ///< search box [-box, box] per coordinate
  double perturbation = 0.1;    ///< sd of the Gaussian start perturbations
  double initial_step = 0.25;
  double penalty = 1e12;        ///< value assigned to failed equilibrium solves
  FixedPointConfig fixed_point = operator_fixed_point_defaults();
};

struct OperatorResult {
  PricingRule pricing;
  FeedbackGain gain;
  double objective = 0.0;
  double baseline_objective = 0.0;
  int evaluations = 0;
};

namespace detail {

inline Eigen::VectorXd pack(const PricingRule& p) {
  Eigen::VectorXd x(p.q1.size() + p.q2.size());
  x << p.q1, p.q2;
  return x;
}

inline PricingRule unpack(const Eigen::VectorXd& x, int n) { return {x.head(n), x.tail(n)}; }

inline bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

}  // namespace detail

/// Multi-start Nelder-Mead over the 2*D_c pricing coordinates. The budget counts
/// objective evaluations, the marginal-cost baseline included; ties go to the
/// lexicographically smallest pricing vector.
inline OperatorResult optimize_pricing(const OperatorWeights& w, const StateSpace& ss, int budget, std::uint64_t seed,
                                       const OperatorOptions& opt = {}) {
  w.validate();
  require(budget >= 1, ErrorKind::InvalidParams, "budget must be >= 1");
  require(opt.restarts >= 0 && opt.box > 0.0, ErrorKind::InvalidParams, "restarts >= 0 and box > 0 required");
  const int n = ss.Dc;
  const PricingRule base = PricingRule::marginal_cost(ss);

  int evals = 0;
  auto objective = [&](const Eigen::VectorXd& x) {
    ++evals;
    const OperatorEval ev = operator_objective(detail::unpack(x, n), w, ss, opt.fixed_point);
    return ev.ok() ? ev.value : opt.penalty;
  };

  const Eigen::VectorXd x0 = detail::pack(base);
  double best_f = objective(x0);
  Eigen::VectorXd best_x = x0;
  const double baseline = best_f;

  std::vector<Eigen::VectorXd> starts{x0};
  Rng rng(seed, 0);
  for (int r = 0; r < opt.restarts; ++r) {
    Eigen::VectorXd x = x0;
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += opt.perturbation * rng.normal();
    starts.push_back(x);
  }

  NelderMeadOptions nm;
  nm.initial_step = opt.initial_step;
  nm.lower = Eigen::VectorXd::Constant(2 * n, -opt.box);
  nm.upper = Eigen::VectorXd::Constant(2 * n, opt.box);
  const int remaining = budget - 1;
  const int k = static_cast<int>(starts.size());
  for (int s = 0; s < k; ++s) {
    const int share = remaining / k + (s < remaining % k ? 1 : 0);
    if (share <= 0) continue;
    nm.max_evals = share;
    const NelderMeadResult r = nelder_mead(objective, starts[static_cast<std::size_t>(s)], nm);
    if (r.f < best_f || (r.f == best_f && detail::lex_less(r.x, best_x))) {
      best_f = r.f;
      best_x = r.x;
    }
  }

  OperatorResult res;
  res.pricing = detail::unpack(best_x, n);
  const OperatorEval final_eval = operator_objective(res.pricing, w, ss, opt.fixed_point);
  res.gain.F = final_eval.F;
  res.objective = best_f;
  res.baseline_objective = baseline;
  res.evaluations = evals;
  return res;
}

}  // namespace oligo
