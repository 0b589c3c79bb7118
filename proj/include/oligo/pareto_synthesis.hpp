#pragma once

// Three-way Pareto front of (demand, backlog, deadline mismatch) variances via
// scalarized H2 synthesis of a static state feedback.
//
// Plant: x+ = R1 x - R1 u + R2 d,  z = C1 x + D12 u with
//   C1 = [0; a2 e'; a3 eL'],  D12 = [a1 e'; 0; -a3 eL'].

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oligo/errors.hpp"
#include "oligo/lti_core.hpp"
#include "oligo/random.hpp"

namespace oligo {

struct SynthesisConfig {
  double tol_grad = 1e-6;
  int max_iter = 50000;
  double shrink = 0.5;           ///< backtracking factor
  double armijo = 1e-4;          ///< sufficient-decrease constant
  double stability_margin = 1e-6;  ///< steps with spectral radius above 1 - margin are rejected
  int restarts = 0;              ///< extra randomized starts besides the even-split gain
  std::uint64_t seed = 7;
  LyapunovMethod method = LyapunovMethod::Doubling;
  int threads = 1;               ///< used by trace_front only

  void validate() const {
    require(tol_grad > 0.0, ErrorKind::InvalidParams, "tol_grad must be > 0");
    require(max_iter >= 0, ErrorKind::InvalidParams, "max_iter must be >= 0");
    require(shrink > 0.0 && shrink < 1.0, ErrorKind::InvalidParams, "shrink must lie in (0,1)");
    require(armijo > 0.0 && armijo < 1.0, ErrorKind::InvalidParams, "armijo must lie in (0,1)");
    require(stability_margin > 0.0 && stability_margin < 1.0, ErrorKind::InvalidParams,
            "stability_margin must lie in (0,1)");
    require(restarts >= 0 && threads >= 1, ErrorKind::InvalidParams, "restarts >= 0 and threads >= 1 required");
  }
};

struct SynthesisDiagnostics {
  int iterations = 0;
  double grad_norm = 0.0;  ///< sup norm at the returned gain
  bool converged = false;
  int start_index = 0;     ///< which initialization produced the returned gain
  std::vector<double> objective_history;  ///< accepted iterates of the winning start
};

struct ParetoPoint {
  OutputWeights weights;
  FeedbackGain gain;
  H2Report report;
  double objective = 0.0;
  SynthesisDiagnostics diagnostics;
};

struct PlantOutputs {
  Eigen::MatrixXd C1;
  Eigen::MatrixXd D12;
};

inline PlantOutputs plant_outputs(const OutputWeights& w, const StateSpace& ss) {
  PlantOutputs p;
  p.C1 = Eigen::MatrixXd::Zero(3, ss.Dc);
  p.D12 = Eigen::MatrixXd::Zero(3, ss.Dc);
  p.C1.row(1) = w.alpha2 * ss.e.transpose();
  p.C1.row(2) = w.alpha3 * ss.eL.transpose();
  p.D12.row(0) = w.alpha1 * ss.e.transpose();
  p.D12.row(2) = -w.alpha3 * ss.eL.transpose();
  return p;
}

struct ObjectiveEval {
  double J = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd grad;     ///< dJ/dF
  Eigen::MatrixXd natural;  ///< dJ/dF * Q^{-1}
  Eigen::MatrixXd Q;        ///< controllability Gramian
  Eigen::MatrixXd P;        ///< observability Gramian
};

/// J = trace((C1 + D12 F) Q (C1 + D12 F)') and its gradient in F.
inline ObjectiveEval objective_and_gradient(const Eigen::MatrixXd& F, const OutputWeights& w, const StateSpace& ss,
                                            LyapunovMethod method = LyapunovMethod::Auto) {
  const Eigen::MatrixXd A = closed_loop(F, ss);
  const PlantOutputs po = plant_outputs(w, ss);
  ObjectiveEval ev;
  ev.Q = solve_discrete_lyapunov(A, ss.R2 * ss.R2.transpose(), method);
  const Eigen::MatrixXd C = po.C1 + po.D12 * F;
  ev.J = (C * ev.Q * C.transpose()).trace();
  ev.P = solve_discrete_lyapunov(A.transpose(), C.transpose() * C, method);
  ev.natural = 2.0 * (po.D12.transpose() * C - ss.R1.transpose() * ev.P * A);
  ev.grad = ev.natural * ev.Q;
  return ev;
}

namespace detail {

struct DescentRun {
  Eigen::MatrixXd F;
  double J = std::numeric_limits<double>::infinity();
  SynthesisDiagnostics diag;
};

// Armijo line search along the preconditioned direction dJ/dF * Q^{-1}, which is
// a descent direction because Q is positive definite.
inline DescentRun descend(Eigen::MatrixXd F, const OutputWeights& w, const StateSpace& ss,
                          const SynthesisConfig& cfg) {
  auto eval = [&](const Eigen::MatrixXd& G, ObjectiveEval& out) {
    if (!G.allFinite() || spectral_radius(closed_loop(G, ss)) > 1.0 - cfg.stability_margin) return false;
    try {
      out = objective_and_gradient(G, w, ss, cfg.method);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Unstable) return false;
      throw;
    }
    return std::isfinite(out.J);
  };
  ObjectiveEval cur;
  require(eval(F, cur), ErrorKind::NoStableInit, "initial gain is not stabilizing with the required margin");
  DescentRun run;
  run.diag.objective_history.push_back(cur.J);
  double step = 1.0;
  for (int it = 0; it < cfg.max_iter; ++it) {
    const double gnorm = cur.grad.cwiseAbs().maxCoeff();
    if (gnorm <= cfg.tol_grad) {
      run.diag.converged = true;
      break;
    }
    const double slope = (cur.grad.array() * cur.natural.array()).sum();
    step = std::min(step * 2.0, 1e3);
    ObjectiveEval next;
    bool accepted = false;
    while (step > 1e-16) {
      const Eigen::MatrixXd Fn = F - step * cur.natural;
      if (eval(Fn, next) && next.J <= cur.J - cfg.armijo * step * slope) {
        F = Fn;
        accepted = true;
        break;
      }
      step *= cfg.shrink;
    }
    if (!accepted) break;
    cur = std::move(next);
    run.diag.objective_history.push_back(cur.J);
    ++run.diag.iterations;
  }
  run.diag.grad_norm = cur.grad.cwiseAbs().maxCoeff();
  run.diag.converged = run.diag.grad_norm <= cfg.tol_grad;
  run.F = std::move(F);
  run.J = cur.J;
  return run;
}

inline std::vector<Eigen::MatrixXd> initial_gains(const StateSpace& ss, const SynthesisConfig& cfg) {
  std::vector<Eigen::MatrixXd> starts{make_even_split(ss)};
  Rng rng(cfg.seed, 0);
  const Eigen::MatrixXd base = make_even_split(ss);
  for (int r = 0; r < cfg.restarts; ++r) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      Eigen::MatrixXd F = base;
      for (Eigen::Index i = 0; i < F.size(); ++i) F.data()[i] += 0.1 * rng.normal();
      if (spectral_radius(closed_loop(F, ss)) <= 1.0 - 10.0 * cfg.stability_margin) {
        starts.push_back(std::move(F));
        break;
      }
    }
  }
  return starts;
}

}  // namespace detail

/// Minimizes the weighted H2 objective over stabilizing static gains, starting from
/// the even-split gain plus cfg.restarts randomized starts, and keeps the best.
inline ParetoPoint synthesize(const OutputWeights& w, const StateSpace& ss, const SynthesisConfig& cfg = {}) {
  w.validate();
  cfg.validate();
  const auto starts = detail::initial_gains(ss, cfg);
  detail::DescentRun best;
  int best_index = -1;
  auto attempt = [&](const Eigen::MatrixXd& F0, int index) {
    try {
      detail::DescentRun run = detail::descend(F0, w, ss, cfg);
      if (best_index < 0 || run.J < best.J) {
        best = std::move(run);
        best_index = index;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoStableInit) throw;
    }
  };
  for (std::size_t i = 0; i < starts.size(); ++i) attempt(starts[i], static_cast<int>(i));
  if (best_index < 0) attempt(make_f_br(0.1, ss), static_cast<int>(starts.size()));
  require(best_index >= 0, ErrorKind::NoStableInit, "no stabilizing initialization");
  ParetoPoint pt;
  pt.weights = w;
  pt.gain.F = best.F;
  pt.report = h2_norms(best.F, ss);
  pt.objective = pt.report.weighted(w);
  pt.diagnostics = std::move(best.diag);
  pt.diagnostics.start_index = best_index;
  return pt;
}

/// True when a is no worse than b in every coordinate and better in at least one,
/// with differences below rel_tol (relative to the coordinate scale) treated as ties.
inline bool dominates(const H2Report& a, const H2Report& b, double rel_tol = 1e-9) {
  const double av[3] = {a.z1sq, a.z2sq, a.z3sq};
  const double bv[3] = {b.z1sq, b.z2sq, b.z3sq};
  bool better = false;
  for (int i = 0; i < 3; ++i) {
    const double tol = rel_tol * std::max({1.0, std::abs(av[i]), std::abs(bv[i])});
    if (av[i] > bv[i] + tol) return false;
    if (av[i] < bv[i] - tol) better = true;
  }
  return better;
}

inline std::vector<ParetoPoint> nondominated(std::vector<ParetoPoint> pts) {
  std::vector<ParetoPoint> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < pts.size() && !dominated; ++j)
      dominated = j != i && dominates(pts[j].report, pts[i].report);
    if (!dominated) out.push_back(std::move(pts[i]));
  }
  std::stable_sort(out.begin(), out.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.report.z3sq != b.report.z3sq) return a.report.z3sq < b.report.z3sq;
    return a.report.z2sq < b.report.z2sq;
  });
  return out;
}

struct FrontResult {
  std::vector<ParetoPoint> points;    ///< non-dominated, sorted by z3sq then z2sq
  std::vector<std::string> warnings;  ///< one per failed weight
};

/// Synthesizes every weight (in parallel up to cfg.threads) and filters the front.
inline FrontResult trace_front(const std::vector<OutputWeights>& grid, const StateSpace& ss,
                               const SynthesisConfig& cfg = {}) {
  require(!grid.empty(), ErrorKind::InvalidParams, "weight grid is empty");
  cfg.validate();
  const int n = static_cast<int>(grid.size());
  std::vector<std::optional<ParetoPoint>> pts(static_cast<std::size_t>(n));
  std::vector<std::string> errs(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        pts[static_cast<std::size_t>(i)] = synthesize(grid[static_cast<std::size_t>(i)], ss, cfg);
      } catch (const std::exception& e) {
        errs[static_cast<std::size_t>(i)] = e.what();
      }
    }
  };
  const int nt = std::min(cfg.threads, n);
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < nt; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  FrontResult res;
  std::vector<ParetoPoint> ok;
  for (int i = 0; i < n; ++i) {
    if (pts[static_cast<std::size_t>(i)]) {
      const auto& d = pts[static_cast<std::size_t>(i)]->diagnostics;
      if (!d.converged) {
        const auto& w = grid[static_cast<std::size_t>(i)];
        std::ostringstream os;
        os << "weight (" << w.alpha1 << ", " << w.alpha2 << ", " << w.alpha3 << ") stopped after " << d.iterations
           << " iterations with gradient norm " << d.grad_norm;
        res.warnings.push_back(os.str());
      }
      ok.push_back(std::move(*pts[static_cast<std::size_t>(i)]));
    } else {
      const auto& w = grid[static_cast<std::size_t>(i)];
      res.warnings.push_back("weight (" + std::to_string(w.alpha1) + ", " + std::to_string(w.alpha2) + ", " +
                             std::to_string(w.alpha3) + ") failed: " + errs[static_cast<std::size_t>(i)]);
    }
  }
  res.points = nondominated(std::move(ok));
  return res;
}

/// Feasibility audit of the two LMIs characterizing the H2 optimum, evaluated at a
/// given gain. Q solves the closed-loop Lyapunov equation with an extra eps*I so
/// the first inequality holds strictly; P = F Q is the gain-product variable and
/// M adds eps*I to the output covariance.
struct LmiAudit {
  double eps = 0.0;
  double min_eig_stability = 0.0;    ///< smallest eigenvalue of the first block matrix
  double min_eig_performance = 0.0;  ///< smallest eigenvalue of the second block matrix
  double trace_M = 0.0;              ///< perturbed objective bound
  double recovery_error = 0.0;       ///< max |P Q^{-1} - F|
  double reversed_recovery_error = 0.0;  ///< max |Q P^{-1} - F|, infinite when P is singular
  bool feasible = false;
};

inline LmiAudit lmi_audit(const Eigen::MatrixXd& F, const OutputWeights& w, const StateSpace& ss, double eps = 1e-8) {
  const int n = ss.Dc;
  const Eigen::MatrixXd A0 = ss.R1;
  const Eigen::MatrixXd B1 = ss.R2;
  const Eigen::MatrixXd B2 = -ss.R1;
  const PlantOutputs po = plant_outputs(w, ss);
  const Eigen::MatrixXd Acl = closed_loop(F, ss);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd Q = solve_discrete_lyapunov(Acl, B1 * B1.transpose() + eps * I, LyapunovMethod::Kronecker);
  const Eigen::MatrixXd P = F * Q;

  LmiAudit a;
  a.eps = eps;
  const Eigen::MatrixXd X = A0 * Q + B2 * P;
  Eigen::MatrixXd L1(2 * n, 2 * n);
  L1 << Q, X.transpose(), X, Q - B1 * B1.transpose();
  L1 = 0.5 * (L1 + L1.transpose()).eval();
  a.min_eig_stability = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(L1).eigenvalues().minCoeff();

  const Eigen::MatrixXd Y = po.C1 * Q + po.D12 * P;
  const Eigen::LDLT<Eigen::MatrixXd> Qf(Q);
  const Eigen::MatrixXd M = Y * Qf.solve(Y.transpose()) + eps * Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd L2(n + 3, n + 3);
  L2 << Q, Y.transpose(), Y, M;
  L2 = 0.5 * (L2 + L2.transpose()).eval();
  a.min_eig_performance = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(L2).eigenvalues().minCoeff();
  a.trace_M = M.trace();

  const Eigen::MatrixXd Frec = Qf.solve(P.transpose()).transpose();  // P Q^{-1}
  a.recovery_error = (Frec - F).cwiseAbs().maxCoeff();
  Eigen::FullPivLU<Eigen::MatrixXd> Plu(P);
  a.reversed_recovery_error = Plu.isInvertible() ? (Q * Plu.inverse() - F).cwiseAbs().maxCoeff()
                                                 : std::numeric_limits<double>::infinity();
  const double scale = std::max(1.0, Q.norm());
  a.feasible = a.min_eig_stability >= -1e-9 * scale && a.min_eig_performance >= -1e-9 * scale &&
               a.recovery_error <= 1e-6 * std::max(1.0, F.cwiseAbs().maxCoeff());
  return a;
}

}  // namespace oligo
