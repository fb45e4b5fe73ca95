#pragma once

// Weyl phase-space realization of single-time decoherence functionals:
// displaced-parity point operators, Wigner tables on rectangular grids,
// and the two-cell functional computed both from the Wigner function and
// from point-operator cell integrals, plus spectral and coherent-family
// single-time variants.
//
// All normalization constants are fixed here, once, and everything below
// is phrased against them. With alpha(z) = (x + i xi)/sqrt(2) and the
// phase-space measure dz = dq dp / (2 pi):
//
//   Delta(q, p)   = 2 D(2 alpha) P      (D = displacement, P = parity)
//   W(q, p)       = Tr(rho Delta(q, p)),   int W dz = Tr rho,
//   int Delta dz  = identity,
//   Tr(Delta(z) Delta(z')) = delta family under the same measure,
//   upsilon(z, z') = Tr(Delta(z) rho Delta(z'))
//                  = 4 e^{2i(q'p - p'q)} S(q'-q, p'-p),
//
// where S is the symplectic Fourier transform of W,
//   S(u, v) = int dz W(q, p) e^{2i(v q - u p)}.
// The sign of the oscillatory factor is not a convention choice here: it
// is pinned by requiring the two routes to the cell functional to agree.

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "qproc/coherent.hpp"
#include "qproc/common.hpp"
#include "qproc/fock.hpp"

namespace qproc::wig {

// <m|D(beta)|n> for m, n < dim, exact matrix elements of the untruncated
// displacement operator. Evaluated diagonal by diagonal from the closed
// Laguerre form with log-scale prefactors, so the result is accurate for
// arguments far beyond where a truncated matrix exponential degrades.
Eigen::MatrixXcd displacement_matrix(Cx beta, int dim);

// Displaced parity 2 D(2 alpha(z)) P, the phase-space point operator.
// Hermitian by construction. The leakage guard mirrors the coherent
// family: |alpha(z)|^2 <= cutoff / 4, since products of point operators
// route through Fock levels up to the displaced mean 4 |alpha|^2.
fock::FockOperator delta_operator(const coh::PhasePoint& z, int cutoff);

// Quadrature of int_cell dz Delta(z). Degenerate cells give zero.
fock::FockOperator cell_delta_operator(const coh::Cell& cell, int cutoff);

// Uniform rectangular grid q_i = q_lo + i h, p_j = p_lo + j h.
struct WignerGrid {
  double q_lo = 0.0;
  double p_lo = 0.0;
  double spacing = 0.0;
  int nq = 0;
  int np = 0;

  // Symmetric square grid containing the origin and covering the disc
  // |z| <= radius along the axes.
  static WignerGrid centered(double radius, double spacing);

  double q(int i) const { return q_lo + spacing * i; }
  double p(int j) const { return p_lo + spacing * j; }
  int points() const { return nq * np; }
  void validate() const;
};

struct WignerTable {
  WignerGrid grid;
  Eigen::MatrixXd values;  // values(i, j) = W(q_i, p_j)

  // Midpoint mass under dq dp / (2 pi); equals Tr rho when the grid
  // covers the state's phase-space weight.
  double mass() const;
};

// W(q, p) = Tr(rho Delta(q, p)) sampled over the grid. The trace only
// touches displacement elements inside the state's own dimension, which
// the closed form provides exactly, so no leakage guard applies and the
// grid may extend arbitrarily far. Requires a Hermitian state.
WignerTable wigner_function(const fock::FockOperator& rho,
                            const WignerGrid& grid);

// Header "q,p,w", one row per grid point, full double precision.
void write_wigner_csv(std::ostream& out, const WignerTable& table);

// Two-cell functional through the Wigner function:
//   Phi(A, B) = int_A dz int_B dz' 4 e^{2i(q'p - p'q)} S(q'-q, p'-p)
// with S evaluated by quadrature of the table over the grid. Throws
// QuadratureError when the grid carries less than all but 1e-3 of the
// state's weight, since S is then missing the same mass. Degenerate
// cells integrate to zero. The state must be a density matrix.
Cx wigner_decfun_cells(const fock::FockOperator& rho, const coh::Cell& a,
                       const coh::Cell& b, const WignerGrid& grid);

// Same with a grid sized from the state's dimension (spacing 0.2, radius
// sqrt(2 dim) + 3, enough for any state on that truncation).
Cx wigner_decfun_cells(const fock::FockOperator& rho, const coh::Cell& a,
                       const coh::Cell& b);

// Independent route to the same functional: Tr(Delta_A rho Delta_B)
// assembled from point-operator cell integrals at cutoff = rho.dim().
Cx delta_cell_decfun(const fock::FockOperator& rho, const coh::Cell& a,
                     const coh::Cell& b);

// Finite unions of closed intervals standing in for Borel value sets.
struct RealInterval {
  double lo = 0.0;
  double hi = 0.0;
};
using RealSet = std::vector<RealInterval>;

// Phi(A, B) = Tr(rho P_{A cap B}) for the spectral projector of the
// observable onto eigenvalues lying in both sets. Real and within
// [0, 1] for density matrices. Eigenvalue membership is decided with an
// absolute tolerance, so singleton windows {e} are written as [e, e].
double spectral_decfun(const fock::FockOperator& rho,
                       const fock::FockOperator& observable, const RealSet& a,
                       const RealSet& b, double membership_eps = 1e-9);

// Coherent-family single-time functional <z|rho|z'> <z'|z> at the
// truncation of the state. Its diagonal is the Husimi density of rho.
Cx coherent_single_time_decfun(const fock::FockOperator& rho,
                               const coh::PhasePoint& z,
                               const coh::PhasePoint& zp);

}  // namespace qproc::wig
