#pragma once

// Decoherence functional on discrete-time histories of phase-space cells.
// Two independent evaluation routes are kept deliberately separate: a
// nested quadrature of the closed-time-path overlap chain (analytic
// kernels for kinematic engines, oracle propagator elements otherwise),
// and a Heisenberg-picture operator-string trace in the oracle. Their
// agreement is the module's central cross-check.

#include <optional>
#include <string>
#include <vector>

#include "qproc/coherent.hpp"
#include "qproc/common.hpp"
#include "qproc/fock.hpp"

namespace qproc::dec {

struct Vertex {
  coh::PhasePoint z;
  double time = 0.0;
};

// One observation: the system is found in the given region at the given
// time. A region is a disjoint union of cells; a singleton list is the
// common case. An empty region is the impossible event.
struct HistoryStep {
  coh::Region region;
  double time = 0.0;
};

struct History {
  std::vector<HistoryStep> steps;
  std::string label;
};

History single_cell_history(const coh::Cell& cell, double time,
                            std::string label = "");

enum class Route { bargmann_quadrature, oracle_trace };

struct DecoherenceValue {
  Cx value = Cx(0.0, 0.0);
  double quad_error = 0.0;
  Route route = Route::bargmann_quadrature;
};

// Fixes the coherent family, the initial condition (phase-space point or
// density operator in the oracle realization) and the dynamics (none for
// kinematic engines, otherwise a Hamiltonian whose evolution is
// diagonalized once here). The history origin time is 0.
class ProcessEngine {
 public:
  static ProcessEngine kinematic_point(const coh::CoherentFamily& family,
                                       const coh::PhasePoint& z0);
  static ProcessEngine kinematic_density(const coh::CoherentFamily& family,
                                         fock::FockOperator rho);
  static ProcessEngine dynamical_point(const coh::CoherentFamily& family,
                                       const coh::PhasePoint& z0,
                                       const fock::FockOperator& hamiltonian);
  static ProcessEngine dynamical_density(const coh::CoherentFamily& family,
                                         fock::FockOperator rho,
                                         const fock::FockOperator& hamiltonian);

  bool kinematic() const { return !evolution_.has_value(); }
  bool point_initial() const { return point_.has_value(); }

  const coh::CoherentFamily& family() const { return family_; }
  const coh::PhasePoint& initial_point() const;
  const fock::HermitianEvolution& evolution() const;

  // The initial state as an oracle operator; point engines materialize
  // the coherent projector, which requires the point to pass the guard.
  fock::FockOperator oracle_density() const;

  // <z| e^{-iH dt} |w>, analytic overlap for kinematic engines.
  Cx propagate(const coh::PhasePoint& z, const coh::PhasePoint& w,
               double dt) const;

 private:
  ProcessEngine(coh::CoherentFamily family,
                std::optional<coh::PhasePoint> point,
                std::optional<fock::FockOperator> rho,
                std::optional<fock::HermitianEvolution> evolution);

  coh::CoherentFamily family_;
  std::optional<coh::PhasePoint> point_;
  std::optional<fock::FockOperator> rho_;
  std::optional<fock::HermitianEvolution> evolution_;
};

// Hierarchy distribution on pinned phase-space vertices, forward branch
// times weakly ascending, backward likewise. The kinematic variant
// requires a kinematic engine and never touches the truncated oracle for
// point-initial engines; the dynamical variant requires an engine with a
// Hamiltonian (an explicit zero operator is legitimate).
Cx upsilon_kinematic(const ProcessEngine& engine,
                     const std::vector<Vertex>& forward,
                     const std::vector<Vertex>& backward);
Cx upsilon_dynamical(const ProcessEngine& engine,
                     const std::vector<Vertex>& forward,
                     const std::vector<Vertex>& backward);
// Dispatch on the engine kind.
Cx upsilon(const ProcessEngine& engine, const std::vector<Vertex>& forward,
           const std::vector<Vertex>& backward);

// Decoherence functional of a history pair. The quadrature route nests
// Gauss-Legendre over every step region and carries a step-order
// refinement estimate (orders p vs p+4, escalating once to p+8 before
// QuadratureError); it is capped at 4 combined steps and falls back to
// the oracle trace beyond that, reporting the route actually used.
DecoherenceValue phi_cells(const ProcessEngine& engine, const History& alpha,
                           const History& beta, Route route,
                           double quad_tol = 1e-6);

struct AxiomReport {
  double null_defect = 0.0;          // |phi(impossible, A)|
  double hermiticity_defect = 0.0;   // max |phi(B,A) - conj(phi(A,B))|
  double positivity_floor = 0.0;     // min Re phi(A,A)
  double normalization_defect = 0.0; // |phi(Omega, Omega) - 1|
  double additivity_defect = 0.0;    // max |phi(AuB,C) - phi(A,C) - phi(B,C)|
  double boundedness_excess = 0.0;   // max(0, max |phi(A,B)| - 1)
};

// Worst-case axiom defects over history pairs generated from the given
// disjoint cells and times (all single-step histories plus the two-step
// combinations over the first two times). The normalization row uses the
// oracle route against the covering region standing in for the full
// plane; everything else uses the requested route.
AxiomReport check_axioms(const ProcessEngine& engine,
                         const std::vector<coh::Cell>& cells,
                         const std::vector<double>& times,
                         const coh::Region& covering,
                         Route route = Route::oracle_trace);

// |integral over the region of the marginal vertex minus the reduced
// hierarchy value|. The marginal vertex is forward[marginal_index]; its
// neighbors' propagators must collapse once the region exhausts the
// resolution of identity. The coverage the region offers to the two
// neighboring states is estimated first; RegionTooSmallError fires when
// 1 - coverage exceeds tail_tol (default never).
double kolmogorov_additivity_check(const ProcessEngine& engine,
                                   const std::vector<Vertex>& forward,
                                   const std::vector<Vertex>& backward,
                                   std::size_t marginal_index,
                                   const coh::Region& region,
                                   double tail_tol = 1.0);

// Theta-symmetrized hierarchy value on unordered branch entries: every
// branch permutation is weighted by its product of adjacent step
// functions with theta(0) = 1/2, so distinct times pick out the sorted
// evaluation and exact ties average over their orderings.
Cx time_symmetric_w(const ProcessEngine& engine, std::vector<Vertex> forward,
                    std::vector<Vertex> backward);

// Rebuilds upsilon^{n,m} from the diagonal upsilon^{N,N}, N = n + m, by
// integrating out the complementary branch entries over the region: the
// first n forward slots keep the forward targets (their backward partners
// integrated), the last m backward slots keep the backward targets. The
// marginal slot times are internal choices; each resolution-of-identity
// collapse is independent of them, so any target times are admissible.
Cx diagonal_reconstruction(const ProcessEngine& engine,
                           const std::vector<Vertex>& forward,
                           const std::vector<Vertex>& backward,
                           const coh::Region& region);

// Product rule for independent subsystems; the two-mode oracle check
// lives with the tests.
Cx tensor_combine(const ProcessEngine& engine_a, const History& alpha_a,
                  const History& beta_a, const ProcessEngine& engine_b,
                  const History& alpha_b, const History& beta_b);

// Standard covering region: inscribed strip decomposition of the disc of
// the given radius, sized for identity resolution at the low levels.
coh::Region covering_region(double radius);

}  // namespace qproc::dec
