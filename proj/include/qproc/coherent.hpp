#pragma once

// Gaussian coherent-state family on the phase plane: overlap kernel,
// truncated Fock realization, rectangular cells with tensor quadrature,
// cell and symbol operators, and Bargmann loop products.
//
// Conventions fixed here and inherited downstream: complex label
// alpha(z) = (x + i*xi)/sqrt(2), measure dz = dx dxi / (2pi). With these
// the resolution of identity holds with constant one.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "qproc/common.hpp"
#include "qproc/fock.hpp"
#include "qproc/quadrature.hpp"

namespace qproc::coh {

struct PhasePoint {
  double x = 0.0;
  double xi = 0.0;

  Cx alpha() const { return Cx(x, xi) / std::sqrt(2.0); }
  double alpha_sq() const { return 0.5 * (x * x + xi * xi); }
};

// <z|w> from the analytic Gaussian formula; modulus <= 1 always.
Cx overlap(const PhasePoint& z, const PhasePoint& w);

// Axis-aligned rectangle with a per-axis Gauss-Legendre order.
struct Cell {
  double x_lo = 0.0;
  double x_hi = 0.0;
  double xi_lo = 0.0;
  double xi_hi = 0.0;
  int quad_order = 12;

  double area() const { return (x_hi - x_lo) * (xi_hi - xi_lo); }
  bool degenerate() const { return x_hi <= x_lo || xi_hi <= xi_lo; }
  bool contains(const PhasePoint& z) const {
    return z.x >= x_lo && z.x <= x_hi && z.xi >= xi_lo && z.xi <= xi_hi;
  }
};

// Disjoint union of cells. Disjointness is the caller's responsibility;
// operators and integrals over a Region simply add cell contributions.
using Region = std::vector<Cell>;

struct WeightedNode {
  PhasePoint z;
  double weight;  // includes the 1/(2pi) measure density
};

// Tensor Gauss-Legendre nodes of the cell. Degenerate cells yield no
// nodes. Throws for quad_order < 2 as the cell invariant requires.
std::vector<WeightedNode> cell_nodes(const Cell& cell);
std::vector<WeightedNode> region_nodes(const Region& region);

// Inscribed strip decomposition of the disc x^2 + xi^2 <= radius^2.
// Strips run along x with height <= strip_height; each strip is split
// into chunks of width <= max_cell_width. The union is contained in the
// disc; the uncovered boundary crescents shrink with strip_height.
Region disc_region(double radius, double strip_height, double max_cell_width,
                   int quad_order);

// Fock coefficients c_n = e^{-|a|^2/2} a^n / sqrt(n!). The leakage guard
// requires |alpha(z)|^2 <= cutoff/4; beyond it the neglected tail is no
// longer negligible and TruncationOverflowError reports its Poisson mass.
Eigen::VectorXcd coherent_vector(const PhasePoint& z, int cutoff);

// Immutable handle fixing the Fock truncation for operator realizations.
struct CoherentFamily {
  int cutoff;

  explicit CoherentFamily(int cutoff_) : cutoff(cutoff_) {
    if (cutoff_ < 2) {
      throw DimensionError("CoherentFamily cutoff must be >= 2");
    }
  }

  Eigen::VectorXcd vector(const PhasePoint& z) const {
    return coherent_vector(z, cutoff);
  }
  fock::FockOperator projector(const PhasePoint& z) const;
  fock::FockOperator vacuum_density() const;
};

// Quadrature of int_C dz |z><z|; positive semidefinite by construction.
fock::FockOperator cell_operator(const Cell& cell, const CoherentFamily& family);
fock::FockOperator region_operator(const Region& region,
                                   const CoherentFamily& family);

// Quadrature of int_R dz f(z) |z><z| for a complex amplitude f. No tail
// check; used for conditioning where f has compact support on the region.
fock::FockOperator weighted_region_operator(
    const std::function<Cx(const PhasePoint&)>& f, const Region& region,
    const CoherentFamily& family);

// Quadrature of the anti-normal quantization A = int dz f(z) |z><z| over a
// finite region standing in for the plane. The coverage defect of the
// region, as seen by the lowest trust_levels Fock levels, is measured from
// the same nodes; RegionTooSmallError fires when defect * max|f| exceeds
// tail_tol.
fock::FockOperator p_symbol_operator(
    const std::function<double(const PhasePoint&)>& f, const Region& region,
    const CoherentFamily& family, int trust_levels = 8, double tail_tol = 1e-4);

// Cyclic product of overlaps along the closed loop
//   z0 -> z1 -> ... -> zn -> z'_m -> ... -> z'_1 -> z0
// with forward = (z0, ..., zn) and backward = (z'_1, ..., z'_m).
Cx bargmann_invariant(const std::vector<PhasePoint>& forward,
                      const std::vector<PhasePoint>& backward);

// Sum of per-edge overlap phases around a closed vertex loop, including
// the wrap-around edge. Each edge contributes arg<v_{i+1}|v_i> in
// (-pi, pi]; the sum is not reduced modulo 2pi, so fine discretizations
// of a large loop keep their full winding.
double loop_phase(const std::vector<PhasePoint>& loop);

}  // namespace qproc::coh
