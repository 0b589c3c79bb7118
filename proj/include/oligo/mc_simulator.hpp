#pragma once

// Monte Carlo simulation of the arrival-driven market.
//
// Standard errors come from non-overlapping batch means: every replication's
// post-burn-in window is cut into SimConfig::batches contiguous batches and the
// spread of the per-batch statistics across all batches of all replications gives
// the standard error. Replications are independent streams (see random.hpp) and
// are reduced in replication order, so results do not depend on the thread count.

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "oligo/errors.hpp"
#include "oligo/l2_closed_form.hpp"
#include "oligo/lti_core.hpp"
#include "oligo/random.hpp"

namespace oligo {

/// Spike threshold: an absolute level M, or mean(U) + k * sd(U).
struct ThresholdPolicy {
  enum class Kind { Absolute, SdMultiple };
  Kind kind = Kind::SdMultiple;
  double value = 4.0;

  static ThresholdPolicy absolute(double M) { return {Kind::Absolute, M}; }
  static ThresholdPolicy sd_multiple(double k) { return {Kind::SdMultiple, k}; }
};

struct SimConfig {
  long long horizon = 100000;
  long long burn_in = 1000;
  int replications = 4;
  std::uint64_t seed = 1;
  bool nonneg_demand = false;
  std::vector<double> tail_thresholds;
  std::vector<double> quantile_levels;
  bool keep_series = false;
  int batches = 32;
  int threads = 1;  ///< caps parallelism only; results are identical for any value
  std::optional<ThresholdPolicy> spike_policy;

  void validate() const {
    require(horizon >= 1 && burn_in >= 0 && burn_in < horizon, ErrorKind::InvalidParams,
            "need 0 <= burn_in < horizon");
    require(replications >= 1, ErrorKind::InvalidParams, "replications must be >= 1");
    require(batches >= 2 && batches <= horizon - burn_in, ErrorKind::InvalidParams,
            "batches must lie in [2, horizon - burn_in]");
    require(threads >= 1, ErrorKind::InvalidParams, "threads must be >= 1");
    for (double lv : quantile_levels)
      require(lv > 0.0 && lv < 1.0, ErrorKind::InvalidParams, "quantile levels must lie strictly inside (0,1)");
    for (double M : tail_thresholds) require(std::isfinite(M), ErrorKind::InvalidParams, "thresholds must be finite");
  }
};

struct Estimate {
  double value = 0.0;
  double se = 0.0;  ///< Monte Carlo standard error
};

/// Post-burn-in path of one replication. Bit l-1 of flags is set when a type-l
/// agent arrived in that period.
struct Series {
  std::vector<double> U;
  std::vector<double> x;
  std::vector<std::uint32_t> flags;
};

struct ConditionalCell {
  long long count = 0;
  long long spikes = 0;
  double prob = 0.0;
  double se = 0.0;  ///< binomial standard error
};

struct ConditionalReport {
  double threshold = 0.0;
  double x_median = 0.0;
  ConditionalCell absent;   ///< no flexible arrival this period
  ConditionalCell present;  ///< at least one flexible arrival
  ConditionalCell x_high;   ///< backlog above its median
  ConditionalCell x_low;
};

struct PathStats {
  long long samples = 0;
  Estimate mean_u, second_u, var_u;
  Estimate mean_x, second_x, var_x;  ///< x is the aggregate backlog (sum over positions)
  Estimate mean_mismatch, second_mismatch;  ///< unforced deadline mismatch, general-L only
  std::map<double, Estimate> quantiles;
  std::map<double, Estimate> tail_probs;
  double max_conservation_error = 0.0;
  std::optional<ConditionalReport> conditional;
  std::vector<Series> series;  ///< one per replication when keep_series is set
};

struct ArrivalModel {
  Eigen::VectorXd q;
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;

  static ArrivalModel unit(int L, double q = 1.0) {
    return {Eigen::VectorXd::Constant(L, q), Eigen::VectorXd::Zero(L), Eigen::VectorXd::Ones(L)};
  }

  void validate(int L) const {
    require(q.size() == L && mu.size() == L && sigma.size() == L, ErrorKind::InvalidParams,
            "arrival vectors must have length L");
    require((q.array() >= 0.0).all() && (q.array() <= 1.0).all(), ErrorKind::InvalidParams,
            "arrival probabilities must lie in [0,1]");
    require(mu.allFinite() && sigma.allFinite() && (sigma.array() >= 0.0).all(), ErrorKind::InvalidParams,
            "load moments must be finite with sigma >= 0");
  }
};

namespace detail {

inline double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()); }

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
inline double sorted_quantile(const std::vector<double>& sorted, double level) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * level;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double sample_sd(const std::vector<double>& v) {
  const std::size_t n = v.size();
  if (n < 2) return 0.0;
  const double m = pairwise_sum(v) / static_cast<double>(n);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = (v[i] - m) * (v[i] - m);
  return std::sqrt(pairwise_sum(d) / static_cast<double>(n - 1));
}

struct Sample {
  double U;
  double x;
  double mismatch;
  std::uint32_t flags;
};

struct BatchAcc {
  long long n = 0;
  double su = 0, su2 = 0, sx = 0, sx2 = 0, sz = 0, sz2 = 0;
  std::vector<long long> tails;
  std::vector<double> quant;  ///< per-batch quantiles
};

struct RepResult {
  std::vector<BatchAcc> batches;
  std::vector<double> U;
  Series series;
  double max_conservation_error = 0.0;
};

inline void check_finite_state(double x, long long t) {
  if (!(std::abs(x) <= 1e9))
    fail(ErrorKind::NonStationary, "backlog diverged (|x| = " + std::to_string(std::abs(x)) + ") at period " +
                                       std::to_string(t));
}

// Runs one replication; `step(rng, t, conservation_error)` advances the system one period.
template <class Stepper>
RepResult run_replication(const SimConfig& c, Stepper step, std::uint64_t rep) {
  Rng rng(c.seed, rep);
  const long long n = c.horizon - c.burn_in;
  const bool want_series = c.keep_series || c.spike_policy.has_value();
  const bool want_u = want_series || !c.quantile_levels.empty();
  RepResult r;
  r.batches.resize(static_cast<std::size_t>(c.batches));
  for (auto& b : r.batches) b.tails.assign(c.tail_thresholds.size(), 0);
  if (want_u) r.U.reserve(static_cast<std::size_t>(n));
  if (want_series) {
    r.series.x.reserve(static_cast<std::size_t>(n));
    r.series.flags.reserve(static_cast<std::size_t>(n));
  }
  double cons = 0.0;
  for (long long t = 0; t < c.horizon; ++t) {
    const Sample s = step(rng, t, cons);
    if (t < c.burn_in) continue;
    const long long k = t - c.burn_in;
    auto& b = r.batches[static_cast<std::size_t>(k * c.batches / n)];
    ++b.n;
    b.su += s.U;
    b.su2 += s.U * s.U;
    b.sx += s.x;
    b.sx2 += s.x * s.x;
    b.sz += s.mismatch;
    b.sz2 += s.mismatch * s.mismatch;
    for (std::size_t j = 0; j < c.tail_thresholds.size(); ++j)
      if (s.U > c.tail_thresholds[j]) ++b.tails[j];
    if (want_u) r.U.push_back(s.U);
    if (want_series) {
      r.series.x.push_back(s.x);
      r.series.flags.push_back(s.flags);
    }
  }
  r.max_conservation_error = cons;
  if (!c.quantile_levels.empty()) {
    long long start = 0;
    for (std::size_t bi = 0; bi < r.batches.size(); ++bi) {
      auto& b = r.batches[bi];
      std::vector<double> part(r.U.begin() + start, r.U.begin() + start + b.n);
      std::sort(part.begin(), part.end());
      for (double lv : c.quantile_levels) b.quant.push_back(sorted_quantile(part, lv));
      start += b.n;
    }
  }
  if (want_series) r.series.U = r.U;
  return r;
}

template <class MakeStepper>
std::vector<RepResult> run_replications(const SimConfig& c, MakeStepper make) {
  const int R = c.replications;
  std::vector<RepResult> out(static_cast<std::size_t>(R));
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(R));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < R; i = next++) {
      try {
        out[static_cast<std::size_t>(i)] = run_replication(c, make(), static_cast<std::uint64_t>(i));
      } catch (...) {
        errs[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const int nt = std::min(c.threads, R);
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < nt; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  return out;
}

inline Estimate mean_estimate(const std::vector<double>& sums, const std::vector<long long>& counts) {
  std::vector<double> means(sums.size());
  double total_n = 0.0;
  for (std::size_t i = 0; i < sums.size(); ++i) {
    means[i] = sums[i] / static_cast<double>(counts[i]);
    total_n += static_cast<double>(counts[i]);
  }
  return {pairwise_sum(sums) / total_n, sample_sd(means) / std::sqrt(static_cast<double>(means.size()))};
}

inline Estimate variance_estimate(const std::vector<double>& s1, const std::vector<double>& s2,
                                  const std::vector<long long>& counts) {
  const Estimate m = mean_estimate(s1, counts);
  const Estimate m2 = mean_estimate(s2, counts);
  std::vector<double> vars(s1.size());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    const double n = static_cast<double>(counts[i]);
    vars[i] = s2[i] / n - (s1[i] / n) * (s1[i] / n);
  }
  return {m2.value - m.value * m.value, sample_sd(vars) / std::sqrt(static_cast<double>(vars.size()))};
}

}  // namespace detail

/// Tail frequencies of U conditioned on flexible arrivals and on the backlog level.
/// `flexible_mask` selects the flag bits that count as flexible arrivals.
inline ConditionalReport conditional_tail_report(const std::vector<Series>& series, const ThresholdPolicy& policy,
                                                 std::uint32_t flexible_mask = ~std::uint32_t{1}) {
  std::vector<double> U, x;
  std::vector<std::uint32_t> flags;
  for (const auto& s : series) {
    require(s.U.size() == s.x.size() && s.U.size() == s.flags.size(), ErrorKind::InvalidParams,
            "series columns differ in length");
    U.insert(U.end(), s.U.begin(), s.U.end());
    x.insert(x.end(), s.x.begin(), s.x.end());
    flags.insert(flags.end(), s.flags.begin(), s.flags.end());
  }
  require(!U.empty(), ErrorKind::InsufficientSamples, "no retained samples");
  ConditionalReport r;
  if (policy.kind == ThresholdPolicy::Kind::Absolute) {
    r.threshold = policy.value;
  } else {
    const double m = detail::pairwise_sum(U) / static_cast<double>(U.size());
    r.threshold = m + policy.value * detail::sample_sd(U);
  }
  std::vector<double> xs = x;
  std::sort(xs.begin(), xs.end());
  r.x_median = detail::sorted_quantile(xs, 0.5);
  for (std::size_t i = 0; i < U.size(); ++i) {
    const bool spike = U[i] > r.threshold;
    ConditionalCell& a = (flags[i] & flexible_mask) ? r.present : r.absent;
    ConditionalCell& b = x[i] > r.x_median ? r.x_high : r.x_low;
    ++a.count;
    ++b.count;
    a.spikes += spike;
    b.spikes += spike;
  }
  for (ConditionalCell* cell : {&r.absent, &r.present, &r.x_high, &r.x_low}) {
    require(cell->count >= 100, ErrorKind::InsufficientSamples,
            "conditioning cell has only " + std::to_string(cell->count) + " samples (< 100)");
    cell->prob = static_cast<double>(cell->spikes) / static_cast<double>(cell->count);
    cell->se = std::sqrt(cell->prob * (1.0 - cell->prob) / static_cast<double>(cell->count));
  }
  return r;
}

namespace detail {

inline PathStats reduce(const SimConfig& c, std::vector<RepResult>&& reps, std::uint32_t flexible_mask) {
  std::vector<double> su, su2, sx, sx2, sz, sz2;
  std::vector<long long> counts;
  for (const auto& r : reps)
    for (const auto& b : r.batches) {
      su.push_back(b.su);
      su2.push_back(b.su2);
      sx.push_back(b.sx);
      sx2.push_back(b.sx2);
      sz.push_back(b.sz);
      sz2.push_back(b.sz2);
      counts.push_back(b.n);
    }
  PathStats st;
  for (long long n : counts) st.samples += n;
  st.mean_u = mean_estimate(su, counts);
  st.second_u = mean_estimate(su2, counts);
  st.var_u = variance_estimate(su, su2, counts);
  st.mean_x = mean_estimate(sx, counts);
  st.second_x = mean_estimate(sx2, counts);
  st.var_x = variance_estimate(sx, sx2, counts);
  st.mean_mismatch = mean_estimate(sz, counts);
  st.second_mismatch = mean_estimate(sz2, counts);

  for (std::size_t j = 0; j < c.tail_thresholds.size(); ++j) {
    std::vector<double> freq, hits;
    for (const auto& r : reps)
      for (const auto& b : r.batches) {
        freq.push_back(static_cast<double>(b.tails[j]) / static_cast<double>(b.n));
        hits.push_back(static_cast<double>(b.tails[j]));
      }
    st.tail_probs[c.tail_thresholds[j]] = {pairwise_sum(hits) / static_cast<double>(st.samples),
                                           sample_sd(freq) / std::sqrt(static_cast<double>(freq.size()))};
  }

  if (!c.quantile_levels.empty()) {
    std::vector<double> pooled;
    pooled.reserve(static_cast<std::size_t>(st.samples));
    for (const auto& r : reps) pooled.insert(pooled.end(), r.U.begin(), r.U.end());
    std::sort(pooled.begin(), pooled.end());
    for (std::size_t j = 0; j < c.quantile_levels.size(); ++j) {
      std::vector<double> bq;
      for (const auto& r : reps)
        for (const auto& b : r.batches) bq.push_back(b.quant[j]);
      st.quantiles[c.quantile_levels[j]] = {sorted_quantile(pooled, c.quantile_levels[j]),
                                            sample_sd(bq) / std::sqrt(static_cast<double>(bq.size()))};
    }
  }

  for (const auto& r : reps) st.max_conservation_error = std::max(st.max_conservation_error, r.max_conservation_error);

  if (c.spike_policy || c.keep_series) {
    std::vector<Series> series;
    series.reserve(reps.size());
    for (auto& r : reps) series.push_back(std::move(r.series));
    if (c.spike_policy) st.conditional = conditional_tail_report(series, *c.spike_policy, flexible_mask);
    if (c.keep_series) st.series = std::move(series);
  }
  return st;
}

}  // namespace detail

/// Two-type market: type-1 loads must be served on arrival, type-2 loads are split
/// between arrival and the next period by the linear strategy s.
inline PathStats simulate_l2(const LinearStrategyL2& s, const MarketParamsL2& p, const SimConfig& c) {
  p.validate();
  c.validate();
  require(std::isfinite(s.a) && std::isfinite(s.b) && std::isfinite(s.g), ErrorKind::InvalidParams,
          "strategy coefficients must be finite");
  auto make = [&] {
    struct State {
      bool started = false;
      double x = 0.0;
      bool h1 = false;
    };
    return [&, st = State{}](Rng& rng, long long t, double& cons) mutable {
      if (!st.started) {
        st.h1 = rng.bernoulli(p.q1);
        const double d1 = rng.normal(p.mu1, p.sigma1);
        st.x = st.h1 ? d1 : 0.0;
        st.started = true;
      }
      const bool h2 = rng.bernoulli(p.q2);
      const double d2 = rng.normal(p.mu2, p.sigma2);
      double u = 0.0, carry = 0.0;
      if (h2) {
        u = s(st.x, d2);
        if (c.nonneg_demand) u = std::max(u, 0.0);
        carry = d2 - u;
        cons = std::max(cons, std::abs(u + carry - d2));
      }
      detail::Sample out{st.x + u, st.x, 0.0, (st.h1 ? 1u : 0u) | (h2 ? 2u : 0u)};
      st.h1 = rng.bernoulli(p.q1);
      const double d1 = rng.normal(p.mu1, p.sigma1);
      st.x = (st.h1 ? d1 : 0.0) + carry;
      detail::check_finite_state(st.x, t);
      return out;
    };
  };
  return detail::reduce(c, detail::run_replications(c, make), 2u);
}

/// General-L market under u = F x. Absent agents neither hold backlog nor act;
/// every present deadline agent consumes its whole remaining backlog. The
/// mismatch statistic records the deadline shortfall e_L'(x - F x) that the raw
/// gain would have left, before the deadline rule is applied.
inline PathStats simulate_general(const Eigen::MatrixXd& F, const StateSpace& ss, const ArrivalModel& arrival,
                                  const SimConfig& c) {
  c.validate();
  arrival.validate(ss.L);
  require(ss.L <= 32, ErrorKind::InvalidParams, "arrival flags support at most 32 types");
  const double rho = spectral_radius(closed_loop(F, ss));
  require(rho < 1.0, ErrorKind::Unstable, "gain is not stabilizing (spectral radius " + std::to_string(rho) + ")");

  const int n = ss.Dc;
  std::vector<int> source(static_cast<std::size_t>(n), -1);  // position feeding each slot after one shift
  for (int pos = 0; pos < n; ++pos) {
    const auto [l, tau] = ss.agent(pos);
    if (tau < l) source[static_cast<std::size_t>(pos)] = ss.index(l, tau + 1);
  }
  std::vector<int> entry(static_cast<std::size_t>(ss.L));
  for (int l = 1; l <= ss.L; ++l) entry[static_cast<std::size_t>(l - 1)] = ss.index(l, l);

  auto make = [&] {
    struct State {
      Eigen::VectorXd x, drawn, consumed, u, Fx;
      std::vector<char> present;
    };
    State init;
    init.x = Eigen::VectorXd::Zero(n);
    init.drawn = Eigen::VectorXd::Zero(n);
    init.consumed = Eigen::VectorXd::Zero(n);
    init.u = Eigen::VectorXd::Zero(n);
    init.Fx = Eigen::VectorXd::Zero(n);
    init.present.assign(static_cast<std::size_t>(n), 0);
    return [&, st = std::move(init)](Rng& rng, long long t, double& cons) mutable {
      std::uint32_t flags = 0;
      for (int l = 0; l < ss.L; ++l) {
        const bool h = rng.bernoulli(arrival.q(l));
        const double d = rng.normal(arrival.mu(l), arrival.sigma(l));
        if (!h) continue;
        const int pos = entry[static_cast<std::size_t>(l)];
        st.x(pos) = d;
        st.drawn(pos) = d;
        st.consumed(pos) = 0.0;
        st.present[static_cast<std::size_t>(pos)] = 1;
        flags |= 1u << l;
      }
      st.Fx.noalias() = F * st.x;
      double U = 0.0, z2 = 0.0, mismatch = 0.0;
      for (int pos = 0; pos < n; ++pos) {
        z2 += st.x(pos);
        if (!st.present[static_cast<std::size_t>(pos)]) {
          st.u(pos) = 0.0;
          continue;
        }
        double u;
        if (ss.deadline(pos)) {
          mismatch += st.x(pos) - st.Fx(pos);
          u = st.x(pos);
        } else {
          u = st.Fx(pos);
          if (c.nonneg_demand) u = std::max(u, 0.0);
        }
        st.u(pos) = u;
        st.consumed(pos) += u;
        U += u;
        if (ss.deadline(pos)) cons = std::max(cons, std::abs(st.consumed(pos) - st.drawn(pos)));
      }
      const detail::Sample out{U, z2, mismatch, flags};
      // Shift every agent one period closer to its deadline.
      for (int pos = 0; pos < n; ++pos) {
        const int src = source[static_cast<std::size_t>(pos)];
        if (src < 0) {
          st.x(pos) = 0.0;
          st.present[static_cast<std::size_t>(pos)] = 0;
          continue;
        }
        st.x(pos) = st.x(src) - st.u(src);
        st.drawn(pos) = st.drawn(src);
        st.consumed(pos) = st.consumed(src);
        st.present[static_cast<std::size_t>(pos)] = st.present[static_cast<std::size_t>(src)];
        detail::check_finite_state(st.x(pos), t);
      }
      return out;
    };
  };
  return detail::reduce(c, detail::run_replications(c, make), ~std::uint32_t{1});
}

/// Raw series as CSV: t,U,x_sum,o_flags. Replications are concatenated in order
/// and t counts retained periods across them.
inline void write_series_csv(std::ostream& os, const std::vector<Series>& series) {
  os << "t,U,x_sum,o_flags\n";
  os << std::setprecision(17);
  long long t = 0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.U.size(); ++i) os << t++ << ',' << s.U[i] << ',' << s.x[i] << ',' << s.flags[i] << '\n';
}

}  // namespace oligo
