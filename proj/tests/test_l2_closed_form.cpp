#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oligo/l2_analysis.hpp"
#include "oligo/l2_closed_form.hpp"
#include "oligo/mc_simulator.hpp"
#include "oracles.hpp"

using namespace oligo;

namespace {

MarketParamsL2 params(double q1, double q2, double mu1, double mu2, double s1, double s2) {
  return {q1, q2, mu1, mu2, s1, s2};
}

std::vector<double> q_grid(int n = 101) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(static_cast<double>(i) / (n - 1));
  return g;
}

}  // namespace

TEST(MpeStrategy, NoFlexibleArrivals) {
  const auto s = mpe_strategy(params(1, 0, 4, 0, 1, 1));
  EXPECT_DOUBLE_EQ(s.a, 0.25);
  EXPECT_DOUBLE_EQ(s.b, 0.5);
  EXPECT_DOUBLE_EQ(s.g, 1.0);
}

TEST(MpeStrategy, FullFlexibleArrivalsUpperEndpoint) {
  const auto s = mpe_strategy(params(1, 1, 0, 0, 1, 1));
  EXPECT_NEAR(s.a, 0.29289, 1e-5);
}

// The returned strategy is the best response of a single type-2 agent when all
// others follow it: minimize (x+u)u + (d2-u) E[p+] by line search.
TEST(MpeStrategy, MatchesBestResponseLineSearch) {
  for (double mu : {0.0, 3.0}) {
    const auto p = params(1, 0.75, mu, 2.0 * mu, 1, 1);
    const auto s = mpe_strategy(p);
    for (double x : {-2.0, 0.0, 1.5, 4.0})
      for (double d2 : {-1.0, 0.5, 3.0}) {
        auto cost = [&](double u) {
          const double carry = d2 - u;
          const double next_price = (1.0 - p.q2 * s.a) * (carry + p.q1 * p.mu1) + p.q2 * (s.b * p.mu2 + s.g);
          return (x + u) * u + carry * next_price;
        };
        const double u_star = oracle::golden_min(cost, -100.0, 100.0);
        EXPECT_NEAR(s(x, d2), u_star, 1e-4) << "x=" << x << " d2=" << d2 << " mu=" << mu;
      }
  }
}

TEST(CoopStrategy, ExactValues) {
  const auto s0 = coop_strategy(params(1, 0, 0, 0, 1, 1));
  EXPECT_DOUBLE_EQ(s0.a, 0.5);
  EXPECT_DOUBLE_EQ(s0.b, 0.5);
  const auto s = coop_strategy(params(1, 0.75, 0, 0, 1, 1));
  EXPECT_NEAR(s.a, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.b, 1.0 / 3.0, 1e-15);
}

TEST(CoopStrategy, SingularLimitAtFullArrivals) {
  const auto s = coop_strategy(params(0.5, 1, 2, 3, 1, 1));
  EXPECT_EQ(s.a, 1.0);
  EXPECT_EQ(s.b, 0.0);
  EXPECT_DOUBLE_EQ(s.g, 0.5 * 2 + 3);
}

// Common random numbers: every strategy sees the same arrivals and loads.
TEST(CoopStrategy, SimulatedCostNotBeatenByPerturbations) {
  const auto p = params(1, 0.6, 10, 10, 11, 11);
  const auto c = coop_strategy(p);
  SimConfig cfg;
  cfg.horizon = 400000;
  cfg.burn_in = 1000;
  cfg.replications = 2;
  cfg.seed = 2024;
  const auto base = simulate_l2(c, p, cfg);
  for (int coord = 0; coord < 3; ++coord)
    for (double f : {0.9, 1.1}) {
      auto t = c;
      (coord == 0 ? t.a : coord == 1 ? t.b : t.g) *= f;
      const auto st = simulate_l2(t, p, cfg);
      const double tol = 3.0 * std::hypot(base.second_u.se, st.second_u.se);
      EXPECT_LE(base.second_u.value, st.second_u.value + tol) << "coordinate " << coord << " factor " << f;
    }
}

TEST(CoopValue, ExactValues) {
  const auto v0 = coop_value(params(1, 0, 0, 0, 1, 1));
  EXPECT_EQ(v0.A_c, 1.0);
  EXPECT_EQ(v0.B_c, 0.0);
  const auto v = coop_value(params(1, 0.75, 1, 1, 1, 1));
  EXPECT_DOUBLE_EQ(v.A_c, 0.5);
  EXPECT_DOUBLE_EQ(v.B_c, 2.0);
}

TEST(CoopValue, StrategyFormsAgree) {
  for (double q : {0.1, 0.35, 0.6, 0.9})
    for (double mu1 : {0.0, 2.5})
      for (double mu2 : {-1.0, 4.0}) {
        const auto p = params(1, q, mu1, mu2, 1.3, 0.7);
        const auto v = coop_value(p);
        const auto s = coop_strategy(p);
        const double A = v.A_c, B = v.B_c;
        for (double x : {-1.0, 0.0, 2.0})
          for (double d2 : {0.0, 1.0, -3.0}) {
            const double literal = -x / (1 + A) + A * d2 / (1 + A) + A * mu1 / (1 + A) + B / (2 * (1 + A));
            EXPECT_NEAR(s(x, d2), literal, 1e-12);
          }
        const auto s2 = coop_strategy_from_value(p, v);
        EXPECT_LE(max_abs_diff(s, s2), 1e-12);
      }
}

TEST(CoopValue, AverageCostIsMinusTwiceEfficiency) {
  for (double q1 : {1.0, 0.6})
    for (double q2 : {0.2, 0.6, 0.95}) {
      const auto p = params(q1, q2, 3.0, 5.0, 2.0, 1.5);
      const auto v = coop_value(p);
      const double W = efficiency(coop_strategy(p), p);
      EXPECT_NEAR(v.lambda_c, -2.0 * W, 1e-9 * (1.0 + std::abs(W)));
    }
}

TEST(CoopValue, PrintedAverageCostDiffersWhenMeansArePresent) {
  const auto p = params(1, 1.0, 2.0, 0.0, 1.0, 1.0);
  const auto v = coop_value(p);
  EXPECT_NEAR(v.lambda_c, 4.0, 1e-12);
  EXPECT_NEAR(v.lambda_c_printed, 8.0, 1e-12);
}

TEST(KAgent, SingleAgentIsMpe) {
  for (double q : q_grid(11)) {
    const auto p = params(0.8, q, 2, 3, 1, 1);
    EXPECT_LE(max_abs_diff(k_agent_strategy(p, 1), mpe_strategy(p)), 1e-12);
  }
}

TEST(KAgent, ManyAgentsApproachCoop) {
  for (double q : q_grid(101)) {
    if (q == 1.0) continue;
    const auto p = params(1, q, 2, 3, 1, 1);
    EXPECT_LE(max_abs_diff(k_agent_strategy(p, 100000000LL), coop_strategy(p)), 1e-6) << "q=" << q;
  }
}

// At q2 = 1 the square root vanishes in the limit and the gap closes like K^{-1/2}.
TEST(KAgent, SquareRootRateAtFullArrivals) {
  const auto p = params(1, 1, 2, 3, 1, 1);
  for (long long K : {10000LL, 100000000LL}) {
    const double gap = max_abs_diff(k_agent_strategy(p, K), coop_strategy(p));
    const double scale = 1.0 / std::sqrt(static_cast<double>(K));
    EXPECT_GT(gap, 0.1 * scale);
    EXPECT_LT(gap, 20.0 * scale);
  }
}

TEST(KAgent, TwoAgents) {
  const auto s = k_agent_strategy(params(1, 0.75, 0, 0, 1, 1), 2);
  EXPECT_NEAR(s.a, (2.0 / 3.0) / (1 + std::sqrt(0.5)), 1e-15);
  EXPECT_NEAR(s.a, 0.39052, 1e-5);
}

TEST(KAgent, MonotoneInK) {
  for (double q : {0.3, 0.7, 1.0}) {
    const auto p = params(1, q, 1, 1, 1, 1);
    double prev = 0.0;
    for (long long K : {1LL, 2LL, 3LL, 5LL, 10LL, 100LL, 10000LL}) {
      const double a = k_agent_strategy(p, K).a;
      EXPECT_GE(a, prev);
      EXPECT_LE(a, coop_strategy(p).a + 1e-15);
      prev = a;
    }
  }
  EXPECT_THROW(k_agent_strategy(params(1, 0.5, 0, 0, 1, 1), 0), Error);
}

TEST(RiskSensitive, RiskNeutralClosedForm) {
  for (double beta : {0.2, 0.5, 0.9})
    for (double q : {0.1, 0.5, 0.9}) {
      const auto c = risk_sensitive_coeffs(params(1, q, 1, 2, 1, 1), {0.0, beta});
      // Root of beta r^2 + (1-beta) r - (1-q) = 0 via the conjugate form.
      const double disc = std::sqrt((1 - beta) * (1 - beta) + 4 * beta * (1 - q));
      const double r2 = 2 * (1 - q) / (disc + (1 - beta));
      EXPECT_NEAR(c.r2, r2, 1e-12);
      EXPECT_EQ(c.r3, beta * c.r2 / (1 + 0.0 * c.r2));
      EXPECT_TRUE(c.closed_form_accepted);
    }
}

TEST(RiskSensitive, UndiscountedLimitIsCoop) {
  const auto p = params(1, 0.5, 0, 0, 1, 1);
  const auto c = risk_sensitive_coeffs(p, {0.0, 1 - 1e-8});
  EXPECT_NEAR(c.r3, std::sqrt(0.5), 1e-3);
  const auto s = risk_sensitive_strategy(p, {0.0, 1 - 1e-8});
  const auto co = coop_strategy(p);
  EXPECT_NEAR(s.a, co.a, 1e-3);
  EXPECT_NEAR(s.b, co.b, 1e-3);
}

TEST(RiskSensitive, ImplicitSystemResidual) {
  const auto p = params(1, 0.5, 1.0, 2.0, 1.0, 1.0);
  const auto c = risk_sensitive_coeffs(p, {-0.1, 0.5});
  EXPECT_GT(c.r2, 0.0);
  EXPECT_LE(c.residual, 1e-10);
  EXPECT_LE(risk_sensitive_residual(p, {-0.1, 0.5}, c.r1, c.r2), 1e-10);
  EXPECT_EQ(c.r3, 0.5 * c.r2 / (1 + (-0.1) * 1.0 * c.r2));
}

TEST(RiskSensitive, ResidualAcrossGrid) {
  for (double theta : {-0.3, -0.1, 0.0, 0.2})
    for (double beta : {0.3, 0.6, 0.9})
      for (double q : {0.2, 0.5, 0.8}) {
        const auto p = params(1, q, 0.5, 1.5, 1.2, 0.8);
        RiskSensitiveCoeffs c;
        try {
          c = risk_sensitive_coeffs(p, {theta, beta});
        } catch (const Error& e) {
          EXPECT_EQ(e.kind(), ErrorKind::NoSolution);
          continue;
        }
        EXPECT_GT(c.r2, 0.0);
        EXPECT_LE(c.residual, 1e-10);
      }
}

TEST(RiskSensitive, ZeroMeansGiveZeroConstant) {
  const auto p = params(1, 0.5, 0, 0, 1, 1);
  EXPECT_EQ(risk_sensitive_strategy(p, {-0.1, 0.5}, RiskConstantTerm::SingleMean).g, 0.0);
  EXPECT_EQ(risk_sensitive_strategy(p, {-0.1, 0.5}, RiskConstantTerm::DoubledMean).g, 0.0);
}

TEST(RiskSensitive, VariantsDifferOnlyThroughTypeOneMean) {
  const auto p = params(1, 0.5, 2.0, 1.0, 1, 1);
  const auto s1 = risk_sensitive_strategy(p, {-0.1, 0.5}, RiskConstantTerm::SingleMean);
  const auto s2 = risk_sensitive_strategy(p, {-0.1, 0.5}, RiskConstantTerm::DoubledMean);
  EXPECT_EQ(s1.a, s2.a);
  EXPECT_EQ(s1.b, s2.b);
  EXPECT_NEAR(s2.g - s1.g, s1.b * 2.0, 1e-12);
}

// Minimize the one-step recursive objective with the continuation cost
// c(y) = r1 y + r2 y^2, the log-expectation over the next type-1 load computed by
// quadrature. The default constant term must reproduce the numerical argmin.
TEST(RiskSensitive, ConstantTermMatchesOneStepArgmin) {
  for (double theta : {-0.1, 0.15})
    for (double mu1 : {1.0, 2.0}) {
      const auto p = params(1, 0.5, mu1, 0.5, 1.0, 1.0);
      const RiskSensitivity rs{theta, 0.6};
      const auto c = risk_sensitive_coeffs(p, rs);
      const auto s = risk_sensitive_strategy(p, rs);
      for (double x : {-1.0, 0.5, 2.0})
        for (double d2 : {0.0, 1.5}) {
          auto objective = [&](double u) {
            const double carry = d2 - u;
            auto exponent = [&](double d1) {
              const double y = carry + d1;
              return -theta / 2.0 * (c.r1 * y + c.r2 * y * y) - (d1 - mu1) * (d1 - mu1) / 2.0;
            };
            const double shift = exponent(mu1);
            const double integral = oracle::simpson(
                [&](double d1) { return std::exp(exponent(d1) - shift); }, mu1 - 14.0, mu1 + 14.0, 4000);
            const double log_e = shift + std::log(integral / std::sqrt(2.0 * M_PI));
            return (x + u) * (x + u) - 2.0 * rs.beta / theta * log_e;
          };
          const double u_star = oracle::golden_min(objective, -50.0, 50.0);
          EXPECT_NEAR(s(x, d2), u_star, 1e-5) << "theta=" << theta << " mu1=" << mu1;
        }
    }
}

TEST(RiskSensitive, RiskAversionLowersExtremeQuantile) {
  const auto p = params(1, 0.5, 0, 0, 1, 1);
  const auto averse = risk_sensitive_strategy(p, {-0.2, 0.9});
  const auto neutral = risk_sensitive_strategy(p, {0.0, 0.9});
  EXPECT_NE(averse.a, neutral.a);
  SimConfig cfg;
  cfg.horizon = 1000000;
  cfg.burn_in = 1000;
  cfg.replications = 1;
  cfg.seed = 99;
  cfg.quantile_levels = {0.999};
  const auto qa = simulate_l2(averse, p, cfg).quantiles.at(0.999);
  const auto qn = simulate_l2(neutral, p, cfg).quantiles.at(0.999);
  EXPECT_LE(qa.value, qn.value);
}

TEST(RiskSensitive, Errors) {
  try {
    risk_sensitive_coeffs(params(0.9, 0.5, 0, 0, 1, 1), {0.0, 0.5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidParams);
  }
  try {
    risk_sensitive_coeffs(params(1, 0.5, 0, 0, 1, 1), {-2.0, 0.5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoSolution);
  }
  EXPECT_THROW(risk_sensitive_coeffs(params(1, 0.5, 0, 0, 1, 1), {0.0, 1.0}), Error);
}

TEST(Congestion, ZeroFeeIsMpe) {
  for (double q : q_grid(21)) {
    const auto p = params(0.7, q, 2.0, 3.0, 1, 1);
    EXPECT_LE(max_abs_diff(congestion_strategy(p, 0.0), mpe_strategy(p)), 1e-12) << "q=" << q;
  }
}

TEST(Congestion, FullFeeCloseToButNotCoop) {
  const auto p = params(1, 0.5, 0, 0, 1, 1);
  const double a = congestion_strategy(p, 1.0).a;
  const double ac = coop_strategy(p).a;
  EXPECT_GT(std::abs(a - ac), 1e-3);
  EXPECT_LT(std::abs(a - ac), 0.1);
}

TEST(Congestion, RootMatchesBisection) {
  const double q = 0.8, gamma = 0.5;
  const auto sol = congestion_solve(params(1, q, 0, 0, 1, 1), gamma);
  EXPECT_LE(sol.cubic_residual, 1e-12);
  const double r = oracle::bisect([&](double a) { return congestion_cubic(a, q, gamma); }, 0.0, 1.0);
  EXPECT_NEAR(sol.strategy.a, r, 1e-12);
  EXPECT_EQ(sol.qualifying_roots, 1);
}

// The constant term solves the stationary first-order condition: with all other
// agents on the strategy, the agent's own argmin of
//   (x+u)(u + gamma x) + (d2-u) E[p+] + gamma E[p+ (d1+ + h2+ u+)]
// is the strategy itself.
TEST(Congestion, ConstantTermMatchesBestResponse) {
  for (double gamma : {0.3, 1.0})
    for (double q1 : {1.0, 0.6}) {
      const auto p = params(q1, 0.6, 2.0, 3.0, 1.0, 1.0);
      const auto s = congestion_strategy(p, gamma);
      for (double x : {0.0, 2.0})
        for (double d2 : {1.0, 4.0}) {
          auto cost = [&](double u) {
            const double carry = d2 - u;
            // Next period: x+ = h1 d1 + carry, u+ = -a x+ + b d2+ + g when h2+.
            const double m1 = p.q1 * p.mu1, v1 = p.q1 * (p.mu1 * p.mu1 + p.sigma1 * p.sigma1);
            const double ex = m1 + carry, ex2 = v1 + 2 * m1 * carry + carry * carry;
            const double k = s.b * p.mu2 + s.g;
            const double k2 = s.b * s.b * (p.mu2 * p.mu2 + p.sigma2 * p.sigma2) + 2 * s.b * p.mu2 * s.g + s.g * s.g;
            // U+ = x+ + h2 u+ = (1 - h2 a) x+ + h2 (b d2+ + g)
            const double eU = (1 - p.q2 * s.a) * ex + p.q2 * k;
            // E[U+ * h1 d1+] and E[U+ * h2 u+]
            const double ex_d1 = v1 + carry * m1;  // E[x+ h1 d1]
            const double eU_d1 = (1 - p.q2 * s.a) * ex_d1 + p.q2 * k * m1;
            const double e_uplus_x = -s.a * ex2 + k * ex;   // E[(−a x + b d2 + g) x]
            const double e_uplus2 = s.a * s.a * ex2 - 2 * s.a * k * ex + k2;
            const double eU_hu = p.q2 * (e_uplus_x + e_uplus2);
            return (x + u) * (u + gamma * x) + carry * eU + gamma * (eU_d1 + eU_hu);
          };
          const double u_star = oracle::golden_min(cost, -100.0, 100.0);
          EXPECT_NEAR(s(x, d2), u_star, 1e-5) << "gamma=" << gamma << " q1=" << q1;
        }
    }
}

TEST(Congestion, MonotoneAndAccurateOnGrid) {
  for (double q : {0.2, 0.5, 0.9}) {
    double prev = 0.0;
    for (int i = 0; i <= 100; ++i) {
      const double gamma = i / 100.0;
      const auto sol = congestion_solve(params(1, q, 0, 0, 1, 1), gamma);
      EXPECT_LE(sol.cubic_residual, 1e-12);
      EXPECT_GE(sol.strategy.a, prev);
      prev = sol.strategy.a;
    }
  }
}

TEST(Congestion, NoStableRootAtFullFeeAndArrivals) {
  try {
    congestion_strategy(params(1, 1, 0, 0, 1, 1), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoStableRoot);
  }
}

TEST(Baselines, Values) {
  const auto [naive, none] = baseline_strategies();
  EXPECT_EQ(naive, (LinearStrategyL2{0, 0.5, 0}));
  EXPECT_EQ(none, (LinearStrategyL2{0, 1, 0}));
  for (const auto& s : {naive, none}) {
    EXPECT_GE(s.a, 0.0);
    EXPECT_LT(s.a, 1.0);
  }
}

TEST(Properties, CoefficientRangesAndOrdering) {
  double prev_anc = 0, prev_ac = 0, prev_bnc = 2, prev_bc = 2;
  for (double q : q_grid()) {
    const auto p = params(1, q, 1, 1, 1, 1);
    const auto nc = mpe_strategy(p), c = coop_strategy(p);
    EXPECT_GE(nc.a, 0.25);
    EXPECT_LE(nc.a, 0.29289 + 1e-5);
    EXPECT_GE(c.a, 0.5);
    EXPECT_LE(c.a, 1.0);
    if (q > 0) {
      EXPECT_LT(nc.a, c.a);
      EXPECT_GT(nc.b, c.b);
    }
    EXPECT_GE(nc.a, prev_anc);
    EXPECT_GE(c.a, prev_ac);
    EXPECT_LE(nc.b, prev_bnc);
    EXPECT_LE(c.b, prev_bc);
    prev_anc = nc.a, prev_ac = c.a, prev_bnc = nc.b, prev_bc = c.b;
  }
}

TEST(Properties, StrategyBoundsAcrossConstructors) {
  for (double q : q_grid(21)) {
    const auto p = params(1, q, 1, 1, 1, 1);
    std::vector<LinearStrategyL2> all{mpe_strategy(p), k_agent_strategy(p, 3), congestion_strategy(p, 0.5)};
    if (q < 1) all.push_back(coop_strategy(p));
    if (q < 1) all.push_back(risk_sensitive_strategy(p, {-0.1, 0.5}));
    for (const auto& s : all) {
      EXPECT_GT(s.a, 0.0);
      EXPECT_LT(s.a, 1.0);
      EXPECT_GE(s.b, 0.0);
      EXPECT_LE(s.b, 1.0);
    }
  }
}

TEST(Params, Validation) {
  EXPECT_THROW(mpe_strategy(params(1.5, 0.5, 0, 0, 1, 1)), Error);
  EXPECT_THROW(mpe_strategy(params(1, -0.1, 0, 0, 1, 1)), Error);
  EXPECT_THROW(mpe_strategy(params(1, 0.5, 0, 0, -1, 1)), Error);
}
