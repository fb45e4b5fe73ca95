#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <utility>
#include <vector>

#include "qproc/coherent.hpp"
#include "qproc/common.hpp"
#include "qproc/conditioning.hpp"
#include "qproc/correlations.hpp"
#include "qproc/decfun.hpp"

namespace qproc::markov {

// Time direction is reversed by complex conjugation together with a
// momentum flip of the phase-space label; this is the antiunitary image
// of a point under the standard time-reversal operator.
coh::PhasePoint momentum_reflection(const coh::PhasePoint& z);

// chi(z, t | z0, s) = <z| e^{-iH(t-s)} |z0>. Kinematic engines return the
// bare overlap kernel at every duration. Requires t >= s; reversed
// durations are reached only through the density-level checks below.
Cx propagator(const dec::ProcessEngine& engine, const coh::PhasePoint& z,
              double t, const coh::PhasePoint& z0, double s);

// Kernel samples chi(grid[i], t | grid[j], s) for one ordered time pair.
struct PropagatorBlock {
  double t = 0.0;
  double s = 0.0;
  Eigen::MatrixXcd chi;
};

// Propagator samples over a fixed phase-space grid and a set of time
// pairs. The grid is a uniform lattice (usually masked to a disc), so
// quadrature weights are not stored; they follow from the spacing.
struct PropagatorTable {
  std::vector<coh::PhasePoint> grid;
  std::vector<PropagatorBlock> blocks;

  bool has_block(double t, double s) const;
  const PropagatorBlock& block(double t, double s) const;
};

// Square lattice with the given spacing masked to |z| <= radius. The
// origin is always a lattice point.
std::vector<coh::PhasePoint> disc_lattice(double radius, double spacing);

// Cell weight h^2 / (2 pi) per lattice point, with h recovered as the
// smallest positive coordinate gap. The weights reproduce the phase-space
// measure on any uniform lattice, which is why tables can drop them.
std::vector<double> lattice_weights(const std::vector<coh::PhasePoint>& grid);

// Fills chi blocks for every ordered pair t_a >= t_b of grid times.
PropagatorTable build_propagator_table(const dec::ProcessEngine& engine,
                                       const std::vector<coh::PhasePoint>& grid,
                                       const corr::TimeGrid& times);

// Two-sided propagator upsilon(z, z'; t | z0, z0'; s). The factorized
// form chi * conj(chi') describes closed dynamics; open-system tables are
// supplied as arbitrary kernels and run through the same checks.
class DensityPropagator {
 public:
  using Kernel = std::function<Cx(
      const coh::PhasePoint& z, const coh::PhasePoint& zp, double t,
      const coh::PhasePoint& z0, const coh::PhasePoint& z0p, double s)>;

  explicit DensityPropagator(Kernel kernel);

  static DensityPropagator factorized(const dec::ProcessEngine& engine);

  // Overlap kernel damped by coherence decay between the two branches.
  // Hermitian, trace preserving and positive, but not time reversible:
  // the decay factor is even in the branch separation while reversal
  // would need it inverted.
  static DensityPropagator damped_overlap(double rate);

  // Convex mixture of the identity flow and a phase-space rotation at
  // angular velocity omega. A bistochastic open-system table: it passes
  // every symmetry check yet is not factorizable through a single chi.
  static DensityPropagator mixed_rotation(double weight, double omega);

  Cx value(const coh::PhasePoint& z, const coh::PhasePoint& zp, double t,
           const coh::PhasePoint& z0, const coh::PhasePoint& z0p,
           double s) const;

 private:
  Kernel kernel_;
};

// One sampled argument tuple for the density-level checks.
struct PairSample {
  coh::PhasePoint z;
  coh::PhasePoint zp;
  coh::PhasePoint z0;
  coh::PhasePoint z0p;
};

// |upsilon(z1,z1'; t | z0,z0'; s) - ∫dz dz' upsilon(z1,z1'; t | z,z'; mid)
//  upsilon(z,z'; mid | z0,z0'; s)| for the factorized kernel of the
// engine, with the intermediate pair integrated over the region. Throws
// RegionTooSmallError when the outermost ring of cells still carries a
// non-negligible share of the integrand.
double chapman_kolmogorov_check(const dec::ProcessEngine& engine,
                                const coh::PhasePoint& z1,
                                const coh::PhasePoint& z1p, double t,
                                const coh::PhasePoint& z0,
                                const coh::PhasePoint& z0p, double s,
                                double s_mid, const coh::Region& region,
                                int quad_order);

struct SymmetryReport {
  double hermiticity_defect = 0.0;  // vs conj under branch exchange
  double trace_defect = 0.0;        // diagonal integral vs initial overlap
  double positivity_min = 0.0;      // smallest sampled quadratic form
};

// Hermiticity is checked on the sampled tuples, trace preservation by
// integrating the diagonal over trace_region against each sample's
// initial pair, positivity by propagating rank-one kernels built from
// random test functions on form_points and contracting again.
SymmetryReport propagator_symmetry_check(
    const DensityPropagator& prop, double t, double s,
    const std::vector<PairSample>& samples, const coh::Region& trace_region,
    const std::vector<coh::PhasePoint>& form_points, int test_functions,
    Rng& rng);

// Max defect of upsilon(.; (tf-t0)-t | .; (tf-t0)-s) against the complex
// conjugate at momentum-reflected arguments, over the samples and the
// (t, s) pairs. Zero for flows generated by a Hamiltonian that is real
// symmetric in the number basis; order one for damped tables.
double time_reversibility_check(
    const DensityPropagator& prop, double t0, double tf,
    const std::vector<PairSample>& samples,
    const std::vector<std::pair<double, double>>& time_pairs);

double time_reversibility_check(
    const dec::ProcessEngine& engine, double t0, double tf,
    const std::vector<PairSample>& samples,
    const std::vector<std::pair<double, double>>& time_pairs);

// sigma_2 / sigma_1 of the matricization upsilon[(z,z0),(zp,z0p)] on the
// sampled points: forward-branch arguments index rows, backward-branch
// arguments index columns. Kernels that factorize into a forward amplitude
// times a conjugated backward amplitude are exactly rank one across this
// split; any coupling between the branches raises the rank.
double factorization_rank_defect(const DensityPropagator& prop, double t,
                                 double s,
                                 const std::vector<coh::PhasePoint>& points);

struct MarkovReport {
  double max_defect = 0.0;  // refined vs instant conditional tables
  int compared = 0;         // pairs populated in both tables
  int dropped = 0;          // refined pairs below the measure floor
};

// Conditions the cell pair (forward_cell at t, backward_cell at t_prime)
// on the pointer reading at s alone and then on the joint readings at
// s_prev and s. For pointer fields whose elements either contain the
// state's support or miss it entirely, the refined table reproduces the
// instant one wherever both are populated.
MarkovReport markov_property_check(const dec::ProcessEngine& engine,
                                   const coh::Cell& forward_cell, double t,
                                   const coh::Cell& backward_cell,
                                   double t_prime,
                                   const cond::PointerField& instant, double s,
                                   const cond::PointerField& past,
                                   double s_prev);

// Span of the equal-time kernel on the table's grid: eigenvectors of the
// weighted Gram matrix with eigenvalues above threshold, expressed in
// sqrt-weight coordinates so the retained basis is orthonormal.
struct PhysicalSubspace {
  Eigen::MatrixXcd basis;          // columns, descending eigenvalue order
  Eigen::VectorXd eigenvalues;     // retained, descending
  double threshold = 0.0;          // absolute cutoff that was applied
  double projector_defect = 0.0;   // max |V†V - 1|, roundoff scale

  int retained() const { return static_cast<int>(eigenvalues.size()); }
};

// Diagonalizes the weighted equal-time Gram matrix of the table and keeps
// the modes above relative_threshold * lambda_max. Throws
// DegenerateKernelError when fewer than two modes survive.
PhysicalSubspace reconstruct_subspace(const PropagatorTable& table,
                                      double relative_threshold);

// Compresses the one-step block of duration dt onto the subspace and
// reads energies off the eigenphases of the compressed step. Throws
// SubspaceLeakageError when the compressed step deviates from unitarity
// by more than unitarity_tol (the flow does not preserve the span), and
// TimeStepError when an eigenphase approaches the branch cut, since the
// principal logarithm is then ambiguous. Energies are sorted ascending.
std::vector<double> extract_hamiltonian(const PropagatorTable& table,
                                        const PhysicalSubspace& subspace,
                                        double dt,
                                        double unitarity_tol = 1e-6);

// Columns: zi_x, zi_xi, zj_x, zj_xi, t, s, re, im. Values are printed
// with enough digits that a reload reproduces the table bit for bit.
void write_table_csv(std::ostream& out, const PropagatorTable& table);
PropagatorTable read_table_csv(std::istream& in);

}  // namespace qproc::markov
