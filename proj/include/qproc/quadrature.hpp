#pragma once

// One-dimensional quadrature rules shared by the phase-space integrators.
// Gauss-Legendre nodes come from Newton iteration on the Legendre
// recurrence, which is accurate to rounding for the orders used here
// (well below 10^3).

#include <vector>

#include "qproc/common.hpp"

namespace qproc::quad {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// n-point Gauss-Legendre rule on [-1, 1]. Results are cached per order.
// Exact for polynomials of degree <= 2n-1.
const Rule& gauss_legendre(int n);

// Affine image of a [-1, 1] rule on [a, b] with b > a.
Rule on_interval(const Rule& rule, double a, double b);

// Composite trapezoid rule on n >= 2 equidistant points spanning [a, b].
// Endpoint weights are h/2, interior weights h.
Rule trapezoid(int n, double a, double b);

}  // namespace qproc::quad
