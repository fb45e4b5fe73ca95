#include "qproc/pancharatnam.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "qproc/coherent.hpp"

namespace qproc::pan {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

constexpr double kSpanFloor = 0.85 * kTwoPi;

}  // namespace

std::vector<double> uniform_chi_grid(int n) {
  if (n < 1) {
    throw ValidationError("uniform_chi_grid needs at least one setting");
  }
  std::vector<double> grid(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    grid[static_cast<std::size_t>(k)] = kTwoPi * k / n;
  }
  return grid;
}

void IntensityScan::validate() const {
  if (chi_values.size() != intensities.size()) {
    throw DimensionError("intensity scan has mismatched settings and readings");
  }
  for (double chi : chi_values) {
    if (!(chi >= 0.0 && chi < kTwoPi)) {
      throw ValidationError("scan phase settings must lie in [0, 2pi)");
    }
  }
  for (double i : intensities) {
    if (!(i >= 0.0)) {
      throw ValidationError("scan intensities must be nonnegative");
    }
  }
}

IntensityScan interfere(const Eigen::VectorXcd& psi,
                        const Eigen::VectorXcd& filtered,
                        const std::vector<double>& chi_grid) {
  if (psi.size() != filtered.size()) {
    throw DimensionError("interfering beams live in different truncations");
  }
  IntensityScan scan;
  scan.chi_values = chi_grid;
  scan.intensities.reserve(chi_grid.size());
  for (double chi : chi_grid) {
    const Cx shift(std::cos(chi), std::sin(chi));
    scan.intensities.push_back((shift * psi + filtered).squaredNorm());
  }
  scan.validate();
  return scan;
}

void write_intensity_csv(std::ostream& out, const IntensityScan& scan) {
  scan.validate();
  out << "chi,intensity\n";
  for (std::size_t k = 0; k < scan.chi_values.size(); ++k) {
    out << format_double(scan.chi_values[k]) << ','
        << format_double(scan.intensities[k]) << '\n';
  }
}

PhaseFit extract_phase(const IntensityScan& scan, double noise_floor) {
  scan.validate();
  const auto n = static_cast<Eigen::Index>(scan.chi_values.size());
  if (n < 8) {
    throw ValidationError("phase extraction needs at least 8 settings");
  }
  double lo = scan.chi_values.front();
  double hi = lo;
  for (double chi : scan.chi_values) {
    lo = std::min(lo, chi);
    hi = std::max(hi, chi);
  }
  if (hi - lo < kSpanFloor) {
    throw ValidationError(
        "phase extraction needs settings covering a full period");
  }
  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd reading(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double chi = scan.chi_values[static_cast<std::size_t>(k)];
    design(k, 0) = 1.0;
    design(k, 1) = std::cos(chi);
    design(k, 2) = std::sin(chi);
    reading(k) = scan.intensities[static_cast<std::size_t>(k)];
  }
  const Eigen::Vector3d sol =
      design.colPivHouseholderQr().solve(reading);
  PhaseFit fit;
  fit.rho = 0.5 * std::hypot(sol(1), sol(2));
  fit.r_squared = sol(0) - 1.0;
  if (fit.rho <= noise_floor) {
    throw PhaseUndeterminedError(
        "fringe contrast at the noise floor leaves the phase undetermined",
        fit.rho);
  }
  fit.beta = std::atan2(sol(2), sol(1));
  if (fit.beta < 0.0) {
    fit.beta += kTwoPi;
  }
  return fit;
}

double phase_distance(double a, double b) {
  const double d = std::fmod(std::abs(a - b), kTwoPi);
  return std::min(d, kTwoPi - d);
}

fock::FockOperator history_operator(const dec::ProcessEngine& engine,
                                    const dec::History& history) {
  const int dim = engine.family().cutoff;
  for (std::size_t k = 1; k < history.steps.size(); ++k) {
    if (history.steps[k].time < history.steps[k - 1].time) {
      throw ValidationError("history step times must be ascending");
    }
  }
  if (history.steps.empty()) {
    return fock::FockOperator::identity(dim);
  }
  if (engine.kinematic()) {
    fock::FockOperator c = fock::FockOperator::identity(dim);
    for (const dec::HistoryStep& step : history.steps) {
      c = coh::region_operator(step.region, engine.family()) * c;
    }
    return c;
  }
  fock::TimedOperatorSequence seq;
  for (const dec::HistoryStep& step : history.steps) {
    seq.push_back(
        {coh::region_operator(step.region, engine.family()), step.time});
  }
  return fock::class_operator(seq, engine.evolution());
}

namespace {

Eigen::VectorXcd pure_initial_vector(const dec::ProcessEngine& engine) {
  if (engine.point_initial()) {
    return engine.family().vector(engine.initial_point());
  }
  const fock::FockOperator rho = engine.oracle_density();
  const double purity =
      (rho.matrix() * rho.matrix()).trace().real();
  if (std::abs(purity - 1.0) > 1e-8) {
    throw ValidationError(
        "interference protocol needs a pure initial state; mixed densities "
        "have no single beam to split");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(rho.matrix());
  if (solver.info() != Eigen::Success) {
    throw NumericalError("initial state eigendecomposition failed");
  }
  return solver.eigenvectors().col(rho.dim() - 1);
}

}  // namespace

PhaseFit history_phase_protocol(const dec::ProcessEngine& engine,
                                const dec::History& alpha,
                                const dec::History& reference,
                                int chi_points) {
  const Eigen::VectorXcd psi = pure_initial_vector(engine);
  const Eigen::VectorXcd beam_ref =
      history_operator(engine, reference).matrix() * psi;
  const Eigen::VectorXcd beam_alpha =
      history_operator(engine, alpha).matrix() * psi;
  return extract_phase(
      interfere(beam_ref, beam_alpha, uniform_chi_grid(chi_points)));
}

}  // namespace qproc::pan
