#pragma once

// Box-constrained Nelder-Mead simplex search with an evaluation budget.
// Trial points are clamped into the box before evaluation.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "oligo/errors.hpp"

namespace oligo {

struct NelderMeadOptions {
  int max_evals = 200;
  double initial_step = 0.1;
  double ftol = 1e-12;  ///< stop when the spread of simplex values falls below ftol * (1 + |f_best|)
  double xtol = 1e-10;  ///< and the simplex diameter falls below xtol
  Eigen::VectorXd lower;  ///< empty means unbounded
  Eigen::VectorXd upper;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  int evals = 0;
};

inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                                    const NelderMeadOptions& opt) {
  const Eigen::Index n = x0.size();
  require(n >= 1, ErrorKind::InvalidParams, "Nelder-Mead needs at least one coordinate");
  require(opt.max_evals >= 1, ErrorKind::InvalidParams, "Nelder-Mead needs a positive budget");
  const bool boxed = opt.lower.size() == n && opt.upper.size() == n;

  NelderMeadResult res;
  auto clamp = [&](Eigen::VectorXd x) {
    if (boxed) x = x.cwiseMax(opt.lower).cwiseMin(opt.upper);
    return x;
  };
  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evals;
    double v = f(x);
    if (std::isnan(v)) v = std::numeric_limits<double>::infinity();
    if (v < res.f) {
      res.f = v;
      res.x = x;
    }
    return v;
  };
  auto budget_left = [&] { return res.evals < opt.max_evals; };

  std::vector<Eigen::VectorXd> simplex;
  std::vector<double> fv;
  simplex.push_back(clamp(x0));
  fv.push_back(eval(simplex[0]));
  for (Eigen::Index i = 0; i < n && budget_left(); ++i) {
    Eigen::VectorXd x = simplex[0];
    x(i) += opt.initial_step;
    x = clamp(x);
    if (x(i) == simplex[0](i)) x(i) -= opt.initial_step;  // at the upper bound, step inward
    x = clamp(x);
    simplex.push_back(x);
    fv.push_back(eval(x));
  }
  if (static_cast<Eigen::Index>(simplex.size()) < n + 1) return res;

  std::vector<std::size_t> order(simplex.size());
  while (budget_left()) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];

    double diam = 0.0;
    for (const auto& s : simplex) diam = std::max(diam, (s - simplex[best]).cwiseAbs().maxCoeff());
    if (std::isfinite(fv[worst]) && fv[worst] - fv[best] <= opt.ftol * (1.0 + std::abs(fv[best])) && diam <= opt.xtol)
      break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < simplex.size(); ++i)
      if (i != worst) centroid += simplex[i];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd xr = clamp(centroid + (centroid - simplex[worst]));
    const double fr = eval(xr);
    if (fr < fv[best]) {
      if (!budget_left()) {
        simplex[worst] = xr;
        fv[worst] = fr;
        break;
      }
      const Eigen::VectorXd xe = clamp(centroid + 2.0 * (centroid - simplex[worst]));
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    if (!budget_left()) break;
    const bool outside = fr < fv[worst];
    const Eigen::VectorXd xc =
        clamp(outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                      : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid)));
    const double fc = eval(xc);
    if (fc < std::min(fr, fv[worst])) {
      simplex[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < simplex.size() && budget_left(); ++i) {
      if (i == best) continue;
      simplex[i] = clamp(simplex[best] + 0.5 * (simplex[i] - simplex[best]));
      fv[i] = eval(simplex[i]);
    }
  }
  return res;
}

}  // namespace oligo
