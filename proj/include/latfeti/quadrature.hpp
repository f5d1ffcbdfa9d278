#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace latfeti {

//! Gauss-Legendre rule on [0,1].
struct Rule1D {
  std::vector<double> points;
  std::vector<double> weights;
};

inline Rule1D gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need at least one point");
  Rule1D r;
  r.points.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    // Newton on P_n starting from the Chebyshev-like guess.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // map [-1,1] -> [0,1]
    r.points[i] = 0.5 * (1.0 - x);
    r.points[n - 1 - i] = 0.5 * (1.0 + x);
    r.weights[i] = r.weights[n - 1 - i] = 0.5 * w;
  }
  return r;
}

//! Chebyshev-Gauss-Lobatto nodes on [0,1]; a single midpoint node for degree 0.
inline std::vector<double> cgl_nodes(int degree) {
  if (degree == 0) return {0.5};
  std::vector<double> t(degree + 1);
  for (int k = 0; k <= degree; ++k) t[k] = 0.5 * (1.0 - std::cos(std::numbers::pi * k / degree));
  t.front() = 0.0;
  t.back() = 1.0;
  return t;
}

inline std::vector<double> equispaced_nodes(int degree) {
  if (degree == 0) return {0.5};
  std::vector<double> t(degree + 1);
  for (int k = 0; k <= degree; ++k) t[k] = double(k) / degree;
  return t;
}

//! Values and first derivatives of the 1D Lagrange basis on `nodes` at t.
inline void lagrange_1d(const std::vector<double>& nodes, double t, double* val, double* der) {
  const int n = int(nodes.size());
  for (int i = 0; i < n; ++i) {
    double v = 1.0, d = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double inv = 1.0 / (nodes[i] - nodes[j]);
      d = d * (t - nodes[j]) * inv + v * inv;
      v *= (t - nodes[j]) * inv;
    }
    val[i] = v;
    if (der) der[i] = d;
  }
}

}  // namespace latfeti
