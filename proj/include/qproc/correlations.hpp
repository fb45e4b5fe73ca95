#pragma once

// Two-branch correlation functions of the position/momentum process and
// their closed-time-path generating functional. The exact route multiplies
// time-ordered exponential factors in the oracle; a total-order series
// route re-sums the same factors degree by degree and flags when the last
// order still moves the value. The Gaussian closed form evaluates kernel
// tables against grid currents; kernel builders cover the stationary
// particle process and its velocity differences. The backward branch of
// every pairing enters bilinearly: its class operator is assembled from
// the conjugated single-time factors, so the closing dagger restores the
// functional itself rather than its conjugate.

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "qproc/common.hpp"
#include "qproc/decfun.hpp"
#include "qproc/polysymbol.hpp"

namespace qproc::corr {

// Half-maximum step convention: theta(0) = 1/2, so eta(0) = 0 and
// coincident kernel entries stay neutral under branch-order splits.
double theta(double tau);
double eta(double tau);

// Strictly increasing times, at least two of them. Bilinear forms over the
// grid use the trapezoid weights throughout the module.
struct TimeGrid {
  std::vector<double> points;

  explicit TimeGrid(std::vector<double> pts);
  static TimeGrid uniform(double t_lo, double t_hi, int n);

  int size() const { return static_cast<int>(points.size()); }
  double spacing() const;  // smallest adjacent gap
  std::vector<double> trapezoid_weights() const;

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

enum class ObservableId { position, momentum };

inline constexpr int kObservableCount = 2;

// "x" and "p"; anything else is UnsupportedObservableError.
ObservableId parse_observable(const std::string& name);
const char* observable_name(ObservableId id);
psym::PhaseSpacePoly observable_symbol(ObservableId id);

struct ObsAtTime {
  ObservableId id = ObservableId::position;
  double time = 0.0;
};

struct SymbolAtTime {
  psym::PhaseSpacePoly symbol;
  double time = 0.0;
};

// Mixed correlation function over the two branches: the forward string is
// applied to the initial state latest-first, the backward string earliest-
// first, and the oracle traces the product. Times must be weakly ascending
// within each branch; empty branches contribute the identity.
Cx g_nm(const dec::ProcessEngine& engine, const std::vector<ObsAtTime>& forward,
        const std::vector<ObsAtTime>& backward);

// Same pairing with arbitrary polynomial symbols inserted at the branch
// times. Symbols are quantized anti-normally at the engine cutoff; complex
// symbols enter the backward branch without conjugation.
Cx symbol_correlation(const dec::ProcessEngine& engine,
                      const std::vector<SymbolAtTime>& forward,
                      const std::vector<SymbolAtTime>& backward);

// Real source pair on a common grid, one row per observable (x first).
struct CurrentPair {
  TimeGrid grid;
  Eigen::MatrixXd j_plus;
  Eigen::MatrixXd j_minus;

  CurrentPair(TimeGrid grid_, Eigen::MatrixXd plus, Eigen::MatrixXd minus);
  static CurrentPair zero(const TimeGrid& grid);

  // Branches exchanged; the generating functional conjugates under this.
  CurrentPair swapped() const;
};

struct CtpValue {
  Cx value = Cx(0.0, 0.0);   // time-ordered exponential product
  Cx series = Cx(0.0, 0.0);  // total-order expansion of the same product
  double series_step = 0.0;  // combined modulus of the top two orders
  bool series_converged = false;
};

// Generating functional of the engine's process for the given currents.
// Each grid point contributes the anti-normal quantization of the branch
// exponential, a Weyl factor damped by exp(-|w J|^2/4); the series route
// truncates the product at total order truncation_order and compares the
// last order against series_tol.
CtpValue ctp_exact(const dec::ProcessEngine& engine, const CurrentPair& currents,
                   int truncation_order, double series_tol = 1e-6);

// Two-point kernels on the grid, flattened observable-major: index
// a * size + i. delta pairs same-branch insertions, k_kernel the mixed
// ones, mean the one-point values. Entries at coincident times follow the
// eta(0) = 0 convention; order-split identities hold only off that
// diagonal.
struct KernelTable {
  TimeGrid grid;
  Eigen::MatrixXcd delta;
  Eigen::MatrixXcd k_kernel;
  Eigen::VectorXcd mean;

  KernelTable(TimeGrid grid_, Eigen::MatrixXcd delta_, Eigen::MatrixXcd k_,
              Eigen::VectorXcd mean_);

  int flat(ObservableId a, int i) const;
};

// exp(-(i/2) J+.Delta.J+ + (i/2) J-.conj(Delta).J- + i J+.K.J- +
// i (J+ - J-).mean) with trapezoid-weighted bilinear forms. The table and
// the currents must share the grid.
Cx gaussian_ctp(const KernelTable& kernels, const CurrentPair& currents);

// Stationary one-dimensional particle kernels: constant diagonal blocks
// sigma_x2 and sigma_p2, cross blocks (c_corr +- i eta(t - t'))/2 in delta
// and the time-independent (c_corr -+ i)/2 in k_kernel, vanishing mean.
KernelTable kinematic_particle_kernels(double sigma_x2, double sigma_p2,
                                       double c_corr, const TimeGrid& grid);

// Same-branch two-point value of the velocity pair (xdot at t, pdot at
// t + tau difference) for forward differences of width epsilon: the double
// finite difference of the eta kernel, supported on |tau| < epsilon with
// half-weight edges. The (pdot, xdot) entry is its negative.
Cx velocity_cross_two_point(double tau, double epsilon);

// Kernel table of the velocity process on the grid. Diagonal velocity
// blocks cancel exactly, the mixed kernel and the means vanish, and the
// cross entries alias to zero whenever epsilon stays below the grid
// spacing; epsilon at or above the spacing is a resolution failure.
KernelTable velocity_process_kernels(const TimeGrid& grid, double epsilon);

// Symbol of exp(iHs) A_f exp(-iHs) for the anti-normal quantization A_f
// of f, recovered by the polynomial fit at degree 4; the fit residual
// reports how far the conjugated operator left the polynomial class
// (zero within rounding for quadratic Hamiltonians). Symbols above
// degree 4 are not supported.
psym::SymbolFit heisenberg_flow(const fock::FockOperator& hamiltonian,
                                const psym::PhaseSpacePoly& f, double s);

// One row per kernel entry: a,b,t_index,tp_index,re,im with observable
// names in the first two columns and %.17g reals.
void write_kernel_csv(std::ostream& out, const TimeGrid& grid,
                      const Eigen::MatrixXcd& kernel);

}  // namespace qproc::corr
