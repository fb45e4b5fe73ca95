#pragma once

// Operational readout of off-diagonal decoherence-functional elements:
// two beams derived from the same initial vector, one phase-shifted by
// chi, are superposed and the fringe intensity I(chi) is recorded. A
// least-squares fit of a + 2 rho cos(chi - beta) then returns the
// modulus and phase of the beams' inner product, which is exactly the
// functional element when the beams are history-filtered copies of the
// initial state. The protocol is defined for state vectors only; mixed
// initial densities are refused rather than given an invented
// ensemble-interference rule.

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "qproc/common.hpp"
#include "qproc/decfun.hpp"
#include "qproc/fock.hpp"

namespace qproc::pan {

// n phase settings 2 pi k / n, k = 0..n-1.
std::vector<double> uniform_chi_grid(int n);

// Recorded fringe. Invariants: equal lengths, chi values in [0, 2pi),
// intensities nonnegative.
struct IntensityScan {
  std::vector<double> chi_values;
  std::vector<double> intensities;

  void validate() const;
};

// I(chi) = ||e^{i chi} psi + filtered||^2 on the given settings. The
// offset interpretation of extract_phase (r^2 = a - 1) assumes psi is
// normalized; the fitted modulus and phase do not.
IntensityScan interfere(const Eigen::VectorXcd& psi,
                        const Eigen::VectorXcd& filtered,
                        const std::vector<double>& chi_grid);

// Header "chi,intensity", one row per setting, full double precision.
void write_intensity_csv(std::ostream& out, const IntensityScan& scan);

struct PhaseFit {
  double rho = 0.0;        // half the fitted fringe amplitude, >= 0
  double beta = 0.0;       // fringe maximum location, in [0, 2pi)
  double r_squared = 0.0;  // fitted offset minus the unit reference beam
};

// Least-squares fit of a + b cos(chi) + c sin(chi). Requires at least 8
// settings spanning most of a period (span >= 85% of 2pi stands in for
// the full-period requirement with the endpoint excluded). A fitted
// modulus at or below noise_floor leaves the phase meaningless and
// raises PhaseUndeterminedError carrying the modulus estimate.
PhaseFit extract_phase(const IntensityScan& scan, double noise_floor = 1e-6);

// Wraparound distance on the circle: min_k |a - b + 2 pi k|.
double phase_distance(double a, double b);

// Heisenberg-picture history operator in the engine's oracle
// realization: per-step region operators conjugated to their times and
// composed latest-leftmost. The empty history is the identity.
fock::FockOperator history_operator(const dec::ProcessEngine& engine,
                                    const dec::History& history);

// Full protocol: filter two beams through the histories, interfere on a
// uniform chi grid, fit. The returned (rho, beta) is the polar form of
// the functional element with alpha on the forward branch. Requires a
// pure initial state; density engines are accepted only when their
// state is rank one.
PhaseFit history_phase_protocol(const dec::ProcessEngine& engine,
                                const dec::History& alpha,
                                const dec::History& reference,
                                int chi_points = 64);

}  // namespace qproc::pan
