#include "qproc/quadrature.hpp"

#include <cmath>
#include <map>

namespace qproc::quad {

namespace {

// Legendre P_n(x) and its derivative via the three-term recurrence.
// Valid for |x| < 1, which holds at every interior root.
void legendre_pair(int n, double x, double& pn, double& dpn) {
  double p0 = 1.0;
  double p1 = x;
  for (int j = 2; j <= n; ++j) {
    const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
    p0 = p1;
    p1 = p2;
  }
  pn = p1;
  dpn = n * (x * p1 - p0) / (x * x - 1.0);
}

Rule build_gauss_legendre(int n) {
  Rule rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  const int half = (n + 1) / 2;
  for (int k = 0; k < half; ++k) {
    // Chebyshev-like initial guess for the k-th root, counted from +1.
    double x = std::cos(kPi * (k + 0.75) / (n + 0.5));
    double pn = 0.0, dpn = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      legendre_pair(n, x, pn, dpn);
      const double dx = pn / dpn;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    legendre_pair(n, x, pn, dpn);
    const double w = 2.0 / ((1.0 - x * x) * dpn * dpn);
    rule.nodes[n - 1 - k] = x;
    rule.weights[n - 1 - k] = w;
    rule.nodes[k] = -x;
    rule.weights[k] = w;
  }
  if (n % 2 == 1) {
    // odd orders have the middle node exactly at the origin
    rule.nodes[n / 2] = 0.0;
  }
  return rule;
}

}  // namespace

const Rule& gauss_legendre(int n) {
  if (n < 1) {
    throw ValidationError("gauss_legendre order must be >= 1");
  }
  if (n == 1) {
    static const Rule midpoint{{0.0}, {2.0}};
    return midpoint;
  }
  static std::map<int, Rule> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    it = cache.emplace(n, build_gauss_legendre(n)).first;
  }
  return it->second;
}

Rule on_interval(const Rule& rule, double a, double b) {
  if (!(b > a)) {
    throw ValidationError("on_interval requires b > a");
  }
  Rule out;
  const double mid = 0.5 * (a + b);
  const double scale = 0.5 * (b - a);
  out.nodes.reserve(rule.nodes.size());
  out.weights.reserve(rule.weights.size());
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    out.nodes.push_back(mid + scale * rule.nodes[k]);
    out.weights.push_back(scale * rule.weights[k]);
  }
  return out;
}

Rule trapezoid(int n, double a, double b) {
  if (n < 2) {
    throw ValidationError("trapezoid rule needs n >= 2 points");
  }
  if (!(b > a)) {
    throw ValidationError("trapezoid requires b > a");
  }
  Rule out;
  const double h = (b - a) / (n - 1);
  out.nodes.reserve(n);
  out.weights.reserve(n);
  for (int k = 0; k < n; ++k) {
    out.nodes.push_back(a + h * k);
    out.weights.push_back((k == 0 || k == n - 1) ? 0.5 * h : h);
  }
  return out;
}

}  // namespace qproc::quad
