#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace spheremix {

struct NelderMeadOptions {
  double initial_step = 0.1;  // per coordinate
  std::size_t max_evals = 1000;
  double reltol = 1e-8;  // stop when f_worst - f_best <= reltol * (|f_best| + reltol)
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  std::size_t evals = 0;
  bool converged = false;
};

/// Minimizes f from x0. Non-finite objective values are treated as +inf.
/// The returned value is never worse than f(x0).
template <class F>
NelderMeadResult nelder_mead(F&& f, const Eigen::VectorXd& x0, const NelderMeadOptions& opt = {}) {
  const Eigen::Index dim = x0.size();
  const std::size_t m = static_cast<std::size_t>(dim) + 1;
  NelderMeadResult res;

  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<Eigen::VectorXd> pts(m, x0);
  std::vector<double> vals(m);
  vals[0] = eval(x0);
  for (Eigen::Index k = 0; k < dim; ++k) {
    pts[static_cast<std::size_t>(k) + 1][k] += opt.initial_step;
    vals[static_cast<std::size_t>(k) + 1] = eval(pts[static_cast<std::size_t>(k) + 1]);
  }

  std::vector<std::size_t> order(m);
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    std::vector<Eigen::VectorXd> p2(m);
    std::vector<double> v2(m);
    for (std::size_t i = 0; i < m; ++i) {
      p2[i] = std::move(pts[order[i]]);
      v2[i] = vals[order[i]];
    }
    pts = std::move(p2);
    vals = std::move(v2);
  };

  Eigen::VectorXd centroid(dim);
  while (true) {
    sort_simplex();
    const double best = vals.front();
    const double worst = vals.back();
    if (std::isfinite(best) && worst - best <= opt.reltol * (std::abs(best) + opt.reltol)) {
      res.converged = true;
      break;
    }
    if (res.evals >= opt.max_evals) break;

    centroid.setZero();
    for (std::size_t i = 0; i + 1 < m; ++i) centroid += pts[i];
    centroid /= static_cast<double>(m - 1);

    const Eigen::VectorXd xr = centroid + opt.reflection * (centroid - pts.back());
    const double fr = eval(xr);
    if (fr < vals.front()) {
      const Eigen::VectorXd xe = centroid + opt.expansion * (xr - centroid);
      const double fe = eval(xe);
      if (fe < fr) {
        pts.back() = xe;
        vals.back() = fe;
      } else {
        pts.back() = xr;
        vals.back() = fr;
      }
      continue;
    }
    if (fr < vals[m - 2]) {
      pts.back() = xr;
      vals.back() = fr;
      continue;
    }
    // Contraction: outside if the reflected point beats the worst, else inside.
    const bool outside = fr < vals.back();
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + opt.contraction * (xr - centroid))
                                       : Eigen::VectorXd(centroid + opt.contraction * (pts.back() - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : vals.back())) {
      pts.back() = xc;
      vals.back() = fc;
      continue;
    }
    for (std::size_t i = 1; i < m; ++i) {
      pts[i] = pts.front() + opt.shrink * (pts[i] - pts.front());
      vals[i] = eval(pts[i]);
    }
  }

  res.x = pts.front();
  res.value = vals.front();
  return res;
}

}  // namespace spheremix
