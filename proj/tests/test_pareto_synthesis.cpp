#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "oligo/lti_core.hpp"
#include "oligo/pareto_synthesis.hpp"

using namespace oligo;

namespace {

Eigen::MatrixXd random_stable_gain(const StateSpace& ss, std::mt19937_64& gen, double rho) {
  std::normal_distribution<double> n01;
  Eigen::MatrixXd G(ss.Dc, ss.Dc);
  for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = n01(gen);
  return Eigen::MatrixXd::Identity(ss.Dc, ss.Dc) - G * (rho / spectral_radius(ss.R1 * G));
}

bool strictly_dominates(const H2Report& a, const H2Report& b) {
  return a.z1sq < b.z1sq && a.z2sq < b.z2sq && a.z3sq < b.z3sq;
}

// Supporting-line lower bound on z1 at r.z2sq from loose points whose mismatch is
// at least r's; the loose points' optimality guarantees it for any gain.
double loose_slice_bound(const std::vector<ParetoPoint>& loose, const H2Report& r, int& used) {
  double best = -std::numeric_limits<double>::infinity();
  used = 0;
  for (const auto& l : loose) {
    if (r.z3sq > l.report.z3sq) continue;
    const double w1 = l.weights.alpha1 * l.weights.alpha1, w2 = l.weights.alpha2 * l.weights.alpha2;
    best = std::max(best, l.report.z1sq - w2 / w1 * (r.z2sq - l.report.z2sq));
    ++used;
  }
  return best;
}

}  // namespace

TEST(ObjectiveGradient, MatchesCentralDifferences) {
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> rho(0.2, 0.9), u01(0.0, 1.0);
  const auto ss = build_state_space(3);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd F = random_stable_gain(ss, gen, rho(gen));
    const auto w = OutputWeights::normalized(u01(gen), u01(gen), u01(gen));
    const auto ev = objective_and_gradient(F, w, ss, LyapunovMethod::Kronecker);
    Eigen::MatrixXd fd(ss.Dc, ss.Dc);
    for (int i = 0; i < ss.Dc; ++i)
      for (int j = 0; j < ss.Dc; ++j) {
        Eigen::MatrixXd Fp = F, Fm = F;
        Fp(i, j) += h;
        Fm(i, j) -= h;
        fd(i, j) = (objective_and_gradient(Fp, w, ss, LyapunovMethod::Kronecker).J -
                    objective_and_gradient(Fm, w, ss, LyapunovMethod::Kronecker).J) /
                   (2 * h);
      }
    // Entries far below the gradient scale have no meaningful relative error; they
    // are compared against a floor of 1e-4 times the largest entry.
    const double floor = 1e-4 * std::max(1.0, fd.cwiseAbs().maxCoeff());
    for (int i = 0; i < ss.Dc; ++i)
      for (int j = 0; j < ss.Dc; ++j)
        EXPECT_LE(std::abs(ev.grad(i, j) - fd(i, j)) / std::max(std::abs(fd(i, j)), floor), 1e-5)
            << "trial " << trial << " entry (" << i << "," << j << ")";
  }
}

TEST(ObjectiveGradient, TrivialMinimizers) {
  const auto ss = build_state_space(3);
  const auto z1 = objective_and_gradient(Eigen::MatrixXd::Zero(6, 6), {1, 0, 0}, ss);
  EXPECT_EQ(z1.J, 0.0);
  EXPECT_EQ(z1.grad.cwiseAbs().maxCoeff(), 0.0);
  const auto z3 = objective_and_gradient(Eigen::MatrixXd::Identity(6, 6), {0, 0, 1}, ss);
  EXPECT_NEAR(z3.J, 0.0, 1e-15);
}

TEST(ObjectiveGradient, ObjectiveEqualsWeightedReport) {
  std::mt19937_64 gen(11);
  const auto ss = build_state_space(4);
  const Eigen::MatrixXd F = random_stable_gain(ss, gen, 0.7);
  const auto w = OutputWeights::normalized(1, 2, 3);
  EXPECT_NEAR(objective_and_gradient(F, w, ss).J, h2_norms(F, ss).weighted(w), 1e-10);
}

TEST(Synthesize, PointInvariants) {
  const auto ss = build_state_space(3);
  const auto p = synthesize(OutputWeights::normalized(1, 1, 1), ss);
  EXPECT_TRUE(p.diagnostics.converged);
  EXPECT_LE(p.diagnostics.grad_norm, 1e-6);
  EXPECT_NEAR(p.objective, p.report.weighted(p.weights), 1e-10);
  EXPECT_LE(p.gain.spectral_radius(ss), 1.0 - 1e-6);
  const auto& hist = p.diagnostics.objective_history;
  ASSERT_GE(hist.size(), 2u);
  for (std::size_t i = 1; i < hist.size(); ++i) EXPECT_LE(hist[i], hist[i - 1]);
  EXPECT_LT(p.objective, h2_norms(make_even_split(ss), ss).weighted(p.weights));
}

TEST(Synthesize, DeadlineDominantWeights) {
  for (int L : {2, 3}) {
    const auto ss = build_state_space(L);
    for (auto [a1, a2] : {std::pair{1.0, 1.0}, std::pair{1.0, 0.2}, std::pair{0.2, 1.0}}) {
      const auto p = synthesize(OutputWeights::normalized(a1, a2, 100.0), ss);
      EXPECT_LE(p.report.z3sq, 1e-3 * (p.report.z1sq + p.report.z2sq));
    }
  }
}

TEST(Synthesize, RestartsKeepBest) {
  const auto ss = build_state_space(3);
  SynthesisConfig cfg;
  cfg.restarts = 3;
  const auto w = OutputWeights::normalized(1, 3, 1);
  const auto multi = synthesize(w, ss, cfg);
  const auto single = synthesize(w, ss);
  EXPECT_LE(multi.objective, single.objective + 1e-9);
  const auto again = synthesize(w, ss, cfg);
  EXPECT_TRUE(again.gain.F == multi.gain.F);
}

TEST(Synthesize, LmiAuditAtTwoTypes) {
  const auto ss = build_state_space(2);
  const auto w = OutputWeights::normalized(1, 1, 1);
  const auto p = synthesize(w, ss);
  const auto a = lmi_audit(p.gain.F, w, ss);
  EXPECT_TRUE(a.feasible);
  EXPECT_GE(a.min_eig_stability, -1e-9);
  EXPECT_GE(a.min_eig_performance, -1e-9);
  EXPECT_LE(a.recovery_error, 1e-8);
  EXPECT_GT(a.reversed_recovery_error, 1e-3);
  EXPECT_NEAR(a.trace_M, p.objective, 1e-5);
}

TEST(Front, SingletonGrid) {
  const auto ss = build_state_space(3);
  const auto w = OutputWeights::normalized(2, 1, 1);
  const auto front = trace_front({w}, ss);
  ASSERT_EQ(front.points.size(), 1u);
  EXPECT_TRUE(front.warnings.empty());
  EXPECT_TRUE(front.points[0].gain.F == synthesize(w, ss).gain.F);
}

TEST(Front, TwoTypeSweepNondominated) {
  const auto ss = build_state_space(2);
  std::vector<OutputWeights> grid;
  for (int k = 0; k <= 8; ++k) {
    const double th = M_PI / 2 * k / 8.0;
    grid.push_back(OutputWeights::normalized(std::cos(th), std::sin(th), 0.5));
  }
  const auto front = trace_front(grid, ss);
  EXPECT_GE(front.points.size(), 8u);
  for (const auto& a : front.points)
    for (const auto& b : front.points) EXPECT_FALSE(dominates(a.report, b.report));
}

TEST(Front, SortedAndThreadIndependent) {
  const auto ss = build_state_space(3);
  std::vector<OutputWeights> grid;
  for (double s : {0.5, 5.0})
    for (double th : {0.3, 0.8, 1.3}) grid.push_back(OutputWeights::normalized(std::cos(th), std::sin(th), s));
  SynthesisConfig cfg;
  const auto a = trace_front(grid, ss, cfg);
  cfg.threads = 3;
  const auto b = trace_front(grid, ss, cfg);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) EXPECT_TRUE(a.points[i].gain.F == b.points[i].gain.F);
  for (std::size_t i = 1; i < a.points.size(); ++i) EXPECT_LE(a.points[i - 1].report.z3sq, a.points[i].report.z3sq);
}

TEST(Front, HeuristicClassesDoNotDominate) {
  const auto ss = build_state_space(3);
  std::vector<OutputWeights> grid;
  for (double s : {0.3, 1.0, 10.0})
    for (double th : {0.2, 0.7, 1.2}) grid.push_back(OutputWeights::normalized(std::cos(th), std::sin(th), s));
  const auto front = trace_front(grid, ss);
  std::vector<H2Report> heuristics;
  for (int k = 0; k <= 10; ++k) heuristics.push_back(h2_norms(make_f_br(0.05 * k, ss), ss));
  for (int k = 0; k <= 10; ++k) {
    const Eigen::MatrixXd F = make_f_alpha(0.1 * k, ss);
    if (FeedbackGain{F}.stable(ss)) heuristics.push_back(h2_norms(F, ss));
  }
  for (const auto& h : heuristics)
    for (const auto& p : front.points) EXPECT_FALSE(strictly_dominates(h, p.report));
}

// Raising the deadline weight shrinks the mismatch and pushes the demand/backlog
// curve outward.
TEST(Front, TighterDeadlineSliceShiftsOutward) {
  const auto ss = build_state_space(3);
  std::vector<std::vector<ParetoPoint>> slices;
  for (double s : {3.0, 30.0}) {
    std::vector<ParetoPoint> curve;
    for (int k = 0; k <= 6; ++k) {
      const double th = 0.1 + 1.37 * k / 6.0;
      curve.push_back(synthesize(OutputWeights::normalized(std::cos(th), std::sin(th), s), ss));
    }
    std::sort(curve.begin(), curve.end(), [](auto& a, auto& b) { return a.report.z2sq < b.report.z2sq; });
    for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_LT(curve[i].report.z1sq, curve[i - 1].report.z1sq);
    slices.push_back(curve);
  }
  int matched = 0;
  for (const auto& t : slices[1]) {
    int used = 0;
    const double bound = loose_slice_bound(slices[0], t.report, used);
    if (used == 0) continue;
    ++matched;
    EXPECT_GE(t.report.z1sq, bound - 1e-9 * (1 + std::abs(bound))) << "z2=" << t.report.z2sq;
  }
  EXPECT_GE(matched, 3);
  double tight = 0, loose = 0;
  for (std::size_t i = 0; i < slices[0].size(); ++i) tight += slices[1][i].report.z3sq, loose += slices[0][i].report.z3sq;
  EXPECT_LT(tight, loose);
}

// The supporting-line bound is tight at the loose points themselves and rejects a
// report pushed inside the slice.
TEST(Front, SliceBoundDetectsInwardPoint) {
  const auto ss = build_state_space(2);
  std::vector<ParetoPoint> loose;
  for (double th : {0.4, 0.8, 1.2}) loose.push_back(synthesize(OutputWeights::normalized(std::cos(th), std::sin(th), 1), ss));
  for (const auto& l : loose) {
    int used = 0;
    EXPECT_NEAR(loose_slice_bound(loose, l.report, used), l.report.z1sq, 1e-8);
    H2Report inward = l.report;
    inward.z1sq -= 1e-3;
    EXPECT_LT(inward.z1sq, loose_slice_bound(loose, inward, used));
  }
}

TEST(Front, Validation) {
  const auto ss = build_state_space(2);
  EXPECT_THROW(trace_front({}, ss), Error);
  EXPECT_THROW(synthesize({1, 1, 1}, ss), Error);
  SynthesisConfig cfg;
  cfg.tol_grad = 0;
  EXPECT_THROW(synthesize(OutputWeights::normalized(1, 1, 1), ss, cfg), Error);
}
