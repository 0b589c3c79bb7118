#pragma once

// General-L linear time-invariant surrogate of the market:
//
//     x(t+1) = R1 (x(t) - u(t)) + R2 d(t+1),   u(t) = F x(t)
//
// Positions are 0-based; position index(l, tau) holds the backlog of the type-l
// agent with tau periods left. The first L positions form the deadline block.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "oligo/errors.hpp"

namespace oligo {

struct StateSpace {
  int L = 0;
  int Dc = 0;
  Eigen::MatrixXd R1;
  Eigen::MatrixXd R2;
  Eigen::VectorXd e;
  Eigen::VectorXd eL;

  /// 0-based position of (l, tau), 1 <= tau <= l <= L.
  int index(int l, int tau) const {
    require(tau >= 1 && tau <= l && l <= L, ErrorKind::OutOfRange,
            "no position for (l=" + std::to_string(l) + ", tau=" + std::to_string(tau) + ")");
    int pos = 0;
    for (int j = 1; j < tau; ++j) pos += L - j + 1;
    return pos + (l - tau);
  }

  /// Inverse of index(): (l, tau) of a 0-based position.
  std::pair<int, int> agent(int pos) const {
    require(pos >= 0 && pos < Dc, ErrorKind::OutOfRange, "position out of range");
    int tau = 1;
    int block = L;
    while (pos >= block) {
      pos -= block;
      ++tau;
      block = L - tau + 1;
    }
    return {pos + tau, tau};
  }

  bool deadline(int pos) const { return pos < L; }
};

inline StateSpace build_state_space(int L) {
  require(L >= 1, ErrorKind::InvalidParams, "L must be >= 1");
  StateSpace ss;
  ss.L = L;
  ss.Dc = L * (L + 1) / 2;
  ss.R1 = Eigen::MatrixXd::Zero(ss.Dc, ss.Dc);
  ss.R2 = Eigen::MatrixXd::Zero(ss.Dc, L);
  for (int l = 1; l <= L; ++l) {
    ss.R2(ss.index(l, l), l - 1) = 1.0;
    for (int tau = 2; tau <= l; ++tau) ss.R1(ss.index(l, tau - 1), ss.index(l, tau)) = 1.0;
  }
  ss.e = Eigen::VectorXd::Ones(ss.Dc);
  ss.eL = Eigen::VectorXd::Zero(ss.Dc);
  ss.eL.head(L).setOnes();
  return ss;
}

inline void require_gain_shape(const Eigen::MatrixXd& F, const StateSpace& ss) {
  require(F.rows() == ss.Dc && F.cols() == ss.Dc, ErrorKind::InvalidParams,
          "gain must be " + std::to_string(ss.Dc) + "x" + std::to_string(ss.Dc) + ", got " +
              std::to_string(F.rows()) + "x" + std::to_string(F.cols()));
  require(F.allFinite(), ErrorKind::InvalidParams, "gain has non-finite entries");
}

inline Eigen::MatrixXd closed_loop(const Eigen::MatrixXd& F, const StateSpace& ss) {
  require_gain_shape(F, ss);
  return ss.R1 * (Eigen::MatrixXd::Identity(ss.Dc, ss.Dc) - F);
}

inline double spectral_radius(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  if (!A.allFinite()) return std::numeric_limits<double>::infinity();
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  if (es.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Static state feedback u = F x. Stability is evaluated on demand, never stored.
struct FeedbackGain {
  Eigen::MatrixXd F;

  double spectral_radius(const StateSpace& ss) const { return oligo::spectral_radius(closed_loop(F, ss)); }
  bool stable(const StateSpace& ss) const { return spectral_radius(ss) < 1.0; }
};

struct OutputWeights {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double alpha3 = 0.0;

  /// Scales nonnegative raw weights onto the unit sphere.
  static OutputWeights normalized(double a1, double a2, double a3) {
    require(a1 >= 0.0 && a2 >= 0.0 && a3 >= 0.0, ErrorKind::InvalidParams, "output weights must be >= 0");
    const double n = std::sqrt(a1 * a1 + a2 * a2 + a3 * a3);
    require(n > 0.0 && std::isfinite(n), ErrorKind::InvalidParams, "output weights must not all vanish");
    return {a1 / n, a2 / n, a3 / n};
  }

  void validate() const {
    require(alpha1 >= 0.0 && alpha2 >= 0.0 && alpha3 >= 0.0, ErrorKind::InvalidParams, "output weights must be >= 0");
    require(std::abs(alpha1 * alpha1 + alpha2 * alpha2 + alpha3 * alpha3 - 1.0) <= 1e-12, ErrorKind::InvalidParams,
            "output weights must have unit norm");
  }
};

struct H2Report {
  double z1sq = 0.0;  ///< aggregate demand
  double z2sq = 0.0;  ///< aggregate backlog
  double z3sq = 0.0;  ///< deadline mismatch

  double weighted(const OutputWeights& w) const {
    return w.alpha1 * w.alpha1 * z1sq + w.alpha2 * w.alpha2 * z2sq + w.alpha3 * w.alpha3 * z3sq;
  }
};

enum class LyapunovMethod { Auto, Kronecker, Doubling };

/// Largest D_c solved by the dense Kronecker system under LyapunovMethod::Auto.
inline constexpr int kKroneckerMaxDim = 21;

/// Above this size the stability precondition is certified by repeated squaring
/// instead of a full eigendecomposition.
inline constexpr int kEigenStabilityMaxDim = 200;

namespace detail {

// Upper bound on the spectral radius from ||A^(2^k)||_1^(1/2^k) (Gelfand). Squares
// until the bound drops below `target` or stops improving.
inline double certified_radius_bound(Eigen::MatrixXd A, double target) {
  double best = std::numeric_limits<double>::infinity();
  double scale_log = 0.0;  // log of the factor divided out of A so far
  double power = 1.0;
  for (int k = 0; k < 40; ++k) {
    const double n1 = A.cwiseAbs().colwise().sum().maxCoeff();
    if (n1 == 0.0) return 0.0;
    if (!std::isfinite(n1)) break;
    best = std::min(best, std::exp((std::log(n1) + scale_log) / power));
    if (best < target) return best;
    A /= n1;
    scale_log += std::log(n1);
    A = (A * A).eval();
    scale_log *= 2.0;
    power *= 2.0;
  }
  return best;
}

inline Eigen::MatrixXd lyap_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& W) {
  return A * Q * A.transpose() - Q + W;
}

inline Eigen::MatrixXd lyap_kronecker(const Eigen::MatrixXd& A, const Eigen::MatrixXd& W) {
  const Eigen::Index n = A.rows();
  const Eigen::Index n2 = n * n;
  // vec(A Q A') = (A kron A) vec(Q), column-major vec.
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n2, n2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double aij = A(i, j);
      if (aij == 0.0) continue;
      M.block(i * n, j * n, n, n).noalias() -= aij * A;
    }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(W.data(), n2);
  Eigen::VectorXd q = lu.solve(w);
  Eigen::MatrixXd Q = Eigen::Map<Eigen::MatrixXd>(q.data(), n, n);
  Q = 0.5 * (Q + Q.transpose()).eval();
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::MatrixXd R = lyap_residual(A, Q, W);
    Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(R.data(), n2);
    Eigen::VectorXd dq = lu.solve(r);
    Q += Eigen::Map<Eigen::MatrixXd>(dq.data(), n, n);
    Q = 0.5 * (Q + Q.transpose()).eval();
  }
  return Q;
}

// Squared Smith iteration: after k steps Q = sum_{j < 2^k} A^j W A'^j.
inline Eigen::MatrixXd lyap_doubling_sum(Eigen::MatrixXd A, const Eigen::MatrixXd& W) {
  Eigen::MatrixXd Q = W;
  for (int k = 0; k < 64; ++k) {
    Eigen::MatrixXd term = A * Q * A.transpose();
    Q += term;
    const double qn = Q.cwiseAbs().maxCoeff();
    if (!Q.allFinite()) break;
    if (term.cwiseAbs().maxCoeff() <= 1e-17 * (1.0 + qn)) return Q;
    A = (A * A).eval();
    if (A.cwiseAbs().maxCoeff() == 0.0) return Q;
  }
  fail(ErrorKind::Unstable, "Lyapunov doubling iteration did not converge");
}

inline Eigen::MatrixXd lyap_doubling(const Eigen::MatrixXd& A, const Eigen::MatrixXd& W) {
  Eigen::MatrixXd Q = lyap_doubling_sum(A, W);
  Q = 0.5 * (Q + Q.transpose()).eval();
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::MatrixXd R = lyap_residual(A, Q, W);
    if (R.norm() <= 1e-13 * (1.0 + Q.norm())) break;
    Q += lyap_doubling_sum(A, 0.5 * (R + R.transpose()));
  }
  return Q;
}

}  // namespace detail

/// Solves A Q A' - Q + W = 0 for a Schur-stable A.
inline Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& W,
                                               LyapunovMethod method = LyapunovMethod::Auto,
                                               double stability_tol = 1e-9) {
  require(A.rows() == A.cols() && W.rows() == A.rows() && W.cols() == A.cols(), ErrorKind::InvalidParams,
          "Lyapunov operands must be square and conformant");
  if (A.rows() <= kEigenStabilityMaxDim) {
    const double rho = spectral_radius(A);
    require(rho < 1.0 - stability_tol, ErrorKind::Unstable,
            "closed loop spectral radius " + std::to_string(rho) + " is not below 1");
  } else {
    const double bound = detail::certified_radius_bound(A, 1.0 - stability_tol);
    require(bound < 1.0 - stability_tol, ErrorKind::Unstable,
            "closed loop spectral radius bound " + std::to_string(bound) + " is not below 1");
  }
  if (method == LyapunovMethod::Auto)
    method = A.rows() <= kKroneckerMaxDim ? LyapunovMethod::Kronecker : LyapunovMethod::Doubling;
  return method == LyapunovMethod::Kronecker ? detail::lyap_kronecker(A, W) : detail::lyap_doubling(A, W);
}

/// Driving covariance R2 diag(v) R2'; an empty vector means unit-variance loads.
inline Eigen::MatrixXd driving_covariance(const StateSpace& ss, const Eigen::VectorXd& load_variances = {}) {
  if (load_variances.size() == 0) return ss.R2 * ss.R2.transpose();
  require(load_variances.size() == ss.L && (load_variances.array() >= 0.0).all(), ErrorKind::InvalidParams,
          "load variances must be L nonnegative numbers");
  return ss.R2 * load_variances.asDiagonal() * ss.R2.transpose();
}

/// Controllability Gramian of the closed loop: R1(I-F) Q (I-F)'R1' - Q + R2 R2' = 0.
inline Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& F, const StateSpace& ss,
                                      LyapunovMethod method = LyapunovMethod::Auto,
                                      const Eigen::VectorXd& load_variances = {}) {
  return solve_discrete_lyapunov(closed_loop(F, ss), driving_covariance(ss, load_variances), method);
}

/// Which row vector weights the state in the mismatch output.
///   Definition: e_L'(I - F)        (mismatch of deadline agents only)
///   Printed:    e' - e_L' F        (alternative display, for audits)
enum class MismatchForm { Definition, Printed };

inline Eigen::RowVectorXd mismatch_row(const Eigen::MatrixXd& F, const StateSpace& ss,
                                       MismatchForm form = MismatchForm::Definition) {
  const Eigen::RowVectorXd state = form == MismatchForm::Definition ? ss.eL.transpose() : ss.e.transpose();
  return state - ss.eL.transpose() * F;
}

inline H2Report h2_from_gramian(const Eigen::MatrixXd& F, const Eigen::MatrixXd& Q, const StateSpace& ss,
                                MismatchForm form = MismatchForm::Definition) {
  const Eigen::RowVectorXd c1 = ss.e.transpose() * F;
  const Eigen::RowVectorXd c3 = mismatch_row(F, ss, form);
  H2Report r;
  r.z1sq = std::max(0.0, (c1 * Q * c1.transpose())(0, 0));
  r.z2sq = std::max(0.0, ss.e.dot(Q * ss.e));
  r.z3sq = std::max(0.0, (c3 * Q * c3.transpose())(0, 0));
  return r;
}

inline H2Report h2_norms(const Eigen::MatrixXd& F, const StateSpace& ss, MismatchForm form = MismatchForm::Definition,
                         LyapunovMethod method = LyapunovMethod::Auto) {
  return h2_from_gramian(F, solve_lyapunov(F, ss, method), ss, form);
}

/// Replaces every deadline row by the matching unit row.
inline Eigen::MatrixXd make_f_dl_projection(const Eigen::MatrixXd& F, const StateSpace& ss) {
  require_gain_shape(F, ss);
  Eigen::MatrixXd out = F;
  for (int pos = 0; pos < ss.L; ++pos) {
    out.row(pos).setZero();
    out(pos, pos) = 1.0;
  }
  return out;
}

inline bool in_f_dl(const Eigen::MatrixXd& F, const StateSpace& ss) {
  for (int pos = 0; pos < ss.L; ++pos)
    for (int j = 0; j < ss.Dc; ++j)
      if (F(pos, j) != (pos == j ? 1.0 : 0.0)) return false;
  return true;
}

/// Unit diagonal with off-diagonal entries -alpha * w(i,j); each row of the
/// nonnegative pattern w is normalized over its off-diagonal support, so the
/// off-diagonal magnitudes of every row add up to alpha. An empty pattern means
/// uniform weights.
inline Eigen::MatrixXd make_f_alpha(double alpha, const StateSpace& ss, const Eigen::MatrixXd& pattern = {}) {
  require(std::isfinite(alpha) && alpha >= 0.0 && alpha <= 1.0, ErrorKind::OutOfRange, "alpha must lie in [0,1]");
  const int n = ss.Dc;
  Eigen::MatrixXd W = pattern.size() == 0 ? Eigen::MatrixXd::Ones(n, n) : pattern;
  require(W.rows() == n && W.cols() == n && W.allFinite() && (W.array() >= 0.0).all(), ErrorKind::InvalidParams,
          "pattern must be a nonnegative D_c x D_c matrix");
  Eigen::MatrixXd F = Eigen::MatrixXd::Identity(n, n);
  if (n == 1) return F;
  for (int i = 0; i < n; ++i) {
    double s = W.row(i).sum() - W(i, i);
    require(s > 0.0, ErrorKind::InvalidParams, "pattern row " + std::to_string(i) + " has no off-diagonal weight");
    for (int j = 0; j < n; ++j)
      if (j != i) F(i, j) = -alpha * W(i, j) / s;
  }
  return F;
}

/// Boundedly rational class: unit deadline rows; elsewhere 1-delta on the own
/// backlog and -delta/(D_c-1) on every other position.
inline Eigen::MatrixXd make_f_br(double delta, const StateSpace& ss) {
  require(std::isfinite(delta) && delta >= 0.0 && delta <= 0.5, ErrorKind::OutOfRange, "delta must lie in [0,0.5]");
  const int n = ss.Dc;
  Eigen::MatrixXd F = Eigen::MatrixXd::Identity(n, n);
  if (n == 1) return F;
  const double off = -delta / (n - 1);
  for (int i = ss.L; i < n; ++i)
    for (int j = 0; j < n; ++j) F(i, j) = i == j ? 1.0 - delta : off;
  return F;
}

/// Even split: deadline rows unit, every other agent consumes 1/tau of its own backlog.
inline Eigen::MatrixXd make_even_split(const StateSpace& ss) {
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(ss.Dc, ss.Dc);
  for (int pos = 0; pos < ss.Dc; ++pos) F(pos, pos) = 1.0 / ss.agent(pos).second;
  return F;
}

/// Large-L approximation of the demand volatility of the boundedly rational class.
inline double br_demand_volatility_approx(double delta, int L) {
  require(delta > 0.0 && delta <= 0.5, ErrorKind::OutOfRange, "delta must lie in (0,0.5]");
  require(L >= 1, ErrorKind::InvalidParams, "L must be >= 1");
  const double a = delta - 0.5, b = delta - 2.0 / 3.0;
  return 4.0 * L * (a * a + b * b * delta * delta);
}

}  // namespace oligo
