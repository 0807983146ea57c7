#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <numeric>
#include <vector>

namespace fgam {

struct NelderMeadOptions {
  int max_iterations = 500;
  /// Converged once max - min of the simplex values drops below this.
  double tolerance = 1e-9;
  double initial_step = 1.0;
  /// Box constraint applied coordinate-wise by projection.
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Minimises `f` with the standard Nelder-Mead simplex (reflection 1,
/// expansion 2, contraction 1/2, shrink 1/2).
template <class F>
NelderMeadResult nelder_mead(F&& f, const Eigen::VectorXd& x0, const NelderMeadOptions& opt = {}) {
  const Eigen::Index n = x0.size();
  NelderMeadResult res;
  auto project = [&](Eigen::VectorXd v) {
    for (Eigen::Index i = 0; i < n; ++i) v[i] = std::clamp(v[i], opt.lower, opt.upper);
    return v;
  };
  auto eval = [&](const Eigen::VectorXd& v) {
    ++res.evaluations;
    return f(v);
  };
  if (n == 0) {
    res.x = x0;
    res.value = eval(x0);
    res.converged = true;
    return res;
  }

  std::vector<Eigen::VectorXd> pts(n + 1);
  std::vector<double> vals(n + 1);
  pts[0] = project(x0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd v = pts[0];
    v[i] += opt.initial_step;
    if (v[i] > opt.upper) v[i] = pts[0][i] - opt.initial_step;
    pts[i + 1] = project(v);
  }
  for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = eval(pts[i]);

  std::vector<std::size_t> order(n + 1);
  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
    if (vals[worst] - vals[best] < opt.tolerance) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < order.size() - 1; ++k) centroid += pts[order[k]];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd xr = project(centroid + (centroid - pts[worst]));
    const double fr = eval(xr);
    if (fr < vals[best]) {
      const Eigen::VectorXd xe = project(centroid + 2.0 * (xr - centroid));
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    bool accepted = false;
    if (fr < vals[worst]) {
      const Eigen::VectorXd xc = project(centroid + 0.5 * (xr - centroid));
      const double fc = eval(xc);
      if (fc <= fr) {
        pts[worst] = xc;
        vals[worst] = fc;
        accepted = true;
      }
    } else {
      const Eigen::VectorXd xc = project(centroid + 0.5 * (pts[worst] - centroid));
      const double fc = eval(xc);
      if (fc < vals[worst]) {
        pts[worst] = xc;
        vals[worst] = fc;
        accepted = true;
      }
    }
    if (!accepted) {
      for (std::size_t k = 0; k < pts.size(); ++k) {
        if (k == best) continue;
        pts[k] = project(pts[best] + 0.5 * (pts[k] - pts[best]));
        vals[k] = eval(pts[k]);
      }
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  res.x = pts[static_cast<std::size_t>(it - vals.begin())];
  res.value = *it;
  return res;
}

}  // namespace fgam
