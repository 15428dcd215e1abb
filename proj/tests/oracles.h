// tests/oracles.h

// Copyright 2026  spkv authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SPKV_TESTS_ORACLES_H_
#define SPKV_TESTS_ORACLES_H_

// Independent reference computations used only by tests: central finite
// differences, brute-force threshold sweeps and numeric integration.  None of
// these call into the code paths they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace spkv::oracle {

// Central differences of f at x with step h.
inline Eigen::VectorXd NumericGradient(
    const std::function<double(const Eigen::VectorXd &)> &f,
    const Eigen::VectorXd &x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp(i);
    xp(i) = orig + h;
    const double fp = f(xp);
    xp(i) = orig - h;
    const double fm = f(xp);
    xp(i) = orig;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

// ||a - n|| / max(||a||, ||n||), the relative error used for every gradient
// check.
inline double RelativeError(const Eigen::VectorXd &analytic,
                            const Eigen::VectorXd &numeric) {
  const double scale =
      std::max({analytic.norm(), numeric.norm(), 1e-12});
  return (analytic - numeric).norm() / scale;
}

// Exhaustive sweep: for every candidate threshold (each score and +inf),
// counts misses (target < thr) and false alarms (nontarget >= thr) directly.
struct OperatingPoint {
  double threshold;
  double p_miss;
  double p_fa;
};

inline std::vector<OperatingPoint> BruteOperatingPoints(
    const std::vector<double> &tar, const std::vector<double> &non) {
  std::vector<double> cands(tar);
  cands.insert(cands.end(), non.begin(), non.end());
  cands.push_back(std::numeric_limits<double>::infinity());
  std::vector<OperatingPoint> pts;
  for (double thr : cands) {
    bool dup = false;
    for (const auto &p : pts) dup |= p.threshold == thr;
    if (dup) continue;
    double miss = 0, fa = 0;
    for (double s : tar) miss += s < thr;
    for (double s : non) fa += s >= thr;
    pts.push_back({thr, miss / tar.size(), fa / non.size()});
  }
  std::sort(pts.begin(), pts.end(),
            [](const auto &a, const auto &b) { return a.threshold < b.threshold; });
  return pts;
}

inline double BruteEer(const std::vector<double> &tar,
                       const std::vector<double> &non) {
  const auto pts = BruteOperatingPoints(tar, non);
  for (size_t i = 0; i < pts.size(); ++i) {
    const double d = pts[i].p_miss - pts[i].p_fa;
    if (d == 0.0) return pts[i].p_miss;
    if (d > 0.0) {
      const auto &a = pts[i - 1], &b = pts[i];
      // Solve miss(l) = fa(l) along the segment a -> b.
      const double l = (a.p_fa - a.p_miss) /
                       ((b.p_miss - a.p_miss) - (b.p_fa - a.p_fa));
      return a.p_miss + l * (b.p_miss - a.p_miss);
    }
  }
  return 1.0;
}

inline double BruteMinDcf(const std::vector<double> &tar,
                          const std::vector<double> &non, double p_target,
                          double c_miss, double c_fa) {
  const double norm = std::min(c_miss * p_target, c_fa * (1 - p_target));
  double best = (c_fa * (1 - p_target)) / norm;  // threshold -inf
  for (const auto &p : BruteOperatingPoints(tar, non))
    best = std::min(best, (c_miss * p_target * p.p_miss +
                           c_fa * (1 - p_target) * p.p_fa) / norm);
  return best;
}

inline double LogGauss2(const Eigen::Vector2d &x, const Eigen::Vector2d &mu,
                        const Eigen::Matrix2d &cov) {
  const Eigen::Vector2d d = x - mu;
  return -0.5 * (2 * std::log(2 * M_PI) + std::log(cov.determinant()) +
                 d.dot(cov.inverse() * d));
}

// PLDA LLR in 2-D by integrating over the latent speaker variable on a
// trapezoid grid spanning +-10 prior standard deviations.
inline double QuadraturePldaLlr(const Eigen::Vector2d &mean,
                                const Eigen::Matrix2d &between,
                                const Eigen::Matrix2d &within,
                                const Eigen::Vector2d &e,
                                const Eigen::Vector2d &t, int n = 801) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(between);
  const Eigen::Matrix2d basis = es.eigenvectors();
  const Eigen::Vector2d sd = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const double span = 10.0;
  const double h0 = 2 * span * sd(0) / (n - 1), h1 = 2 * span * sd(1) / (n - 1);
  // Log-sum-exp of integrand values times cell area.
  std::vector<double> logs;
  logs.reserve(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    const double a = -span * sd(0) + i * h0;
    const double wa = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    for (int j = 0; j < n; ++j) {
      const double b = -span * sd(1) + j * h1;
      const double wb = (j == 0 || j == n - 1) ? 0.5 : 1.0;
      const Eigen::Vector2d y = mean + basis * Eigen::Vector2d(a, b);
      const double lp = LogGauss2(y, mean, between) +
                        LogGauss2(e, y, within) + LogGauss2(t, y, within);
      logs.push_back(lp + std::log(wa * wb * h0 * h1));
    }
  }
  const double mx = *std::max_element(logs.begin(), logs.end());
  double s = 0;
  for (double l : logs) s += std::exp(l - mx);
  const double log_same = mx + std::log(s);
  const Eigen::Matrix2d total = between + within;
  return log_same - LogGauss2(e, mean, total) - LogGauss2(t, mean, total);
}

}  // namespace spkv::oracle

#endif  // SPKV_TESTS_ORACLES_H_
