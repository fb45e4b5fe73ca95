#include "qproc/wigner.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

namespace qproc::wig {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

// Grid coverage below which the symplectic transform of the table can no
// longer be trusted: the missing mass reappears as an error of the same
// size in every S evaluation.
constexpr double kMassDefectLimit = 1e-3;

constexpr double kDensityTraceTol = 1e-8;

Cx unit_phase(double angle) { return Cx(std::cos(angle), std::sin(angle)); }

}  // namespace

Eigen::MatrixXcd displacement_matrix(Cx beta, int dim) {
  if (dim < 1) {
    throw DimensionError("displacement_matrix needs dim >= 1");
  }
  Eigen::MatrixXcd d(dim, dim);
  const double x = std::norm(beta);
  if (x == 0.0) {
    d.setIdentity();
    return d;
  }
  const double log_abs_beta = 0.5 * std::log(x);
  const Cx phase_up = beta / std::abs(beta);
  const Cx phase_dn = -std::conj(beta) / std::abs(beta);
  Eigen::VectorXd log_fact(dim);
  log_fact(0) = 0.0;
  for (int n = 1; n < dim; ++n) {
    log_fact(n) = log_fact(n - 1) + std::log(static_cast<double>(n));
  }
  // Diagonal offset k: entries (n + k, n) carry
  //   sqrt(n! / (n+k)!) beta^k e^{-x/2} L_n^k(x),
  // and (n, n + k) the same magnitude with (-conj(beta))^k. The Laguerre
  // recurrence runs upward in n, which tracks the dominant solution; the
  // prefactor is kept in log scale because L_n^k can exceed e^{x/2}
  // while every matrix element stays below one.
  for (int k = 0; k < dim; ++k) {
    double lag_prev = 1.0;             // L_{n-1}^k(x)
    double lag_cur = 1.0 + k - x;      // L_n^k(x) at n = 1
    double log_scale = 0.0;
    const Cx up = std::pow(phase_up, k);
    const Cx dn = std::pow(phase_dn, k);
    for (int n = 0; n + k < dim; ++n) {
      double lag = lag_prev;  // L_n^k under the running scale
      if (n >= 1) {
        lag = lag_cur;
        const double lag_next =
            ((2.0 * n + 1.0 + k - x) * lag_cur - (n + k) * lag_prev) /
            (n + 1.0);
        lag_prev = lag_cur;
        lag_cur = lag_next;
        if (std::abs(lag_cur) > 1e250) {
          lag_prev *= 1e-250;
          lag_cur *= 1e-250;
          log_scale += 250.0 * std::log(10.0);
        }
      }
      const double log_mag = 0.5 * (log_fact(n) - log_fact(n + k)) +
                             k * log_abs_beta - 0.5 * x + log_scale;
      const double value = std::exp(log_mag) * lag;
      d(n + k, n) = up * value;
      d(n, n + k) = dn * value;
    }
  }
  return d;
}

fock::FockOperator delta_operator(const coh::PhasePoint& z, int cutoff) {
  if (cutoff < 2) {
    throw DimensionError("delta_operator cutoff must be >= 2");
  }
  const double mean_level = 4.0 * z.alpha_sq();
  if (z.alpha_sq() > 0.25 * cutoff) {
    throw TruncationOverflowError(
        "delta_operator: point operator at |z| beyond the truncation arena",
        fock::poisson_upper_tail(mean_level, cutoff));
  }
  Eigen::MatrixXcd m = 2.0 * displacement_matrix(2.0 * z.alpha(), cutoff);
  for (int n = 1; n < cutoff; n += 2) {
    m.col(n) *= -1.0;
  }
  return fock::FockOperator(std::move(m));
}

fock::FockOperator cell_delta_operator(const coh::Cell& cell, int cutoff) {
  fock::FockOperator acc = fock::FockOperator::zero(cutoff);
  for (const auto& node : coh::cell_nodes(cell)) {
    acc.matrix() += node.weight * delta_operator(node.z, cutoff).matrix();
  }
  return acc;
}

WignerGrid WignerGrid::centered(double radius, double spacing) {
  if (!(radius > 0.0) || !(spacing > 0.0)) {
    throw ValidationError("WignerGrid::centered needs positive radius and spacing");
  }
  const int half = static_cast<int>(std::ceil(radius / spacing));
  WignerGrid grid;
  grid.spacing = spacing;
  grid.nq = 2 * half + 1;
  grid.np = grid.nq;
  grid.q_lo = -spacing * half;
  grid.p_lo = grid.q_lo;
  return grid;
}

void WignerGrid::validate() const {
  if (nq < 1 || np < 1 || !(spacing > 0.0)) {
    throw ValidationError("WignerGrid needs nq, np >= 1 and positive spacing");
  }
}

double WignerTable::mass() const {
  return values.sum() * grid.spacing * grid.spacing / kTwoPi;
}

WignerTable wigner_function(const fock::FockOperator& rho,
                            const WignerGrid& grid) {
  grid.validate();
  if (!rho.is_hermitian(1e-10)) {
    throw ValidationError("wigner_function requires a Hermitian state");
  }
  const int r = rho.dim();
  Eigen::VectorXd parity(r);
  for (int n = 0; n < r; ++n) {
    parity(n) = (n % 2 == 0) ? 1.0 : -1.0;
  }
  WignerTable table;
  table.grid = grid;
  table.values.resize(grid.nq, grid.np);
  for (int i = 0; i < grid.nq; ++i) {
    for (int j = 0; j < grid.np; ++j) {
      const coh::PhasePoint z{grid.q(i), grid.p(j)};
      const Eigen::MatrixXcd d = displacement_matrix(2.0 * z.alpha(), r);
      // Tr(rho D Pi) = sum_n (-1)^n (rho d)(n, n); real because rho and
      // the displaced parity are both Hermitian.
      Cx trace = 0.0;
      for (int n = 0; n < r; ++n) {
        trace += parity(n) * (rho.matrix().row(n) * d.col(n))(0);
      }
      table.values(i, j) = 2.0 * trace.real();
    }
  }
  return table;
}

void write_wigner_csv(std::ostream& out, const WignerTable& table) {
  if (table.values.rows() != table.grid.nq ||
      table.values.cols() != table.grid.np) {
    throw DimensionError("write_wigner_csv: table does not match its grid");
  }
  out << "q,p,w\n";
  for (int i = 0; i < table.grid.nq; ++i) {
    for (int j = 0; j < table.grid.np; ++j) {
      out << format_double(table.grid.q(i)) << ','
          << format_double(table.grid.p(j)) << ','
          << format_double(table.values(i, j)) << '\n';
    }
  }
}

Cx wigner_decfun_cells(const fock::FockOperator& rho, const coh::Cell& a,
                       const coh::Cell& b, const WignerGrid& grid) {
  const double trace_defect = std::abs(rho.matrix().trace() - Cx(1.0));
  if (trace_defect > kDensityTraceTol) {
    throw ValidationError("wigner_decfun_cells requires a unit-trace state");
  }
  if (a.degenerate() || b.degenerate()) {
    return 0.0;
  }
  const WignerTable table = wigner_function(rho, grid);
  const double mass_defect = std::abs(table.mass() - 1.0);
  if (mass_defect > kMassDefectLimit) {
    throw QuadratureError(
        "wigner_decfun_cells: grid misses " + format_double(mass_defect) +
        " of the state's phase-space weight; enlarge the grid");
  }
  const auto nodes_a = coh::cell_nodes(a);
  const auto nodes_b = coh::cell_nodes(b);
  const auto na = static_cast<Eigen::Index>(nodes_a.size());
  const auto nb = static_cast<Eigen::Index>(nodes_b.size());
  const auto ng = static_cast<Eigen::Index>(grid.points());

  // Flattened grid with the table's midpoint weights folded in.
  Eigen::VectorXd qg(ng), pg(ng), wg(ng);
  {
    Eigen::Index g = 0;
    const double cell_weight = grid.spacing * grid.spacing / kTwoPi;
    for (int i = 0; i < grid.nq; ++i) {
      for (int j = 0; j < grid.np; ++j, ++g) {
        qg(g) = grid.q(i);
        pg(g) = grid.p(j);
        wg(g) = table.values(i, j) * cell_weight;
      }
    }
  }

  // S factorizes over the grid sum: with
  //   Ea(k, g) = e^{2i(q_k P_g - p_k Q_g)},  Eb(l, g) = e^{2i(p_l Q_g - q_l P_g)},
  // the inner transform is T = Ea diag(w W) Eb^T, and the functional is
  // the doubly weighted phase sum over T. Direct assembly of Ea and Eb
  // costs O((na + nb) ng) exponentials and the product O(na nb ng).
  Eigen::MatrixXcd ea(na, ng), eb(nb, ng);
  for (Eigen::Index k = 0; k < na; ++k) {
    const auto& n = nodes_a[static_cast<std::size_t>(k)];
    for (Eigen::Index g = 0; g < ng; ++g) {
      ea(k, g) = unit_phase(2.0 * (n.z.x * pg(g) - n.z.xi * qg(g)));
    }
  }
  for (Eigen::Index l = 0; l < nb; ++l) {
    const auto& n = nodes_b[static_cast<std::size_t>(l)];
    for (Eigen::Index g = 0; g < ng; ++g) {
      eb(l, g) = unit_phase(2.0 * (n.z.xi * qg(g) - n.z.x * pg(g)));
    }
  }
  const Eigen::MatrixXcd t = ea * wg.asDiagonal() * eb.transpose();

  Cx phi = 0.0;
  for (Eigen::Index k = 0; k < na; ++k) {
    const auto& zk = nodes_a[static_cast<std::size_t>(k)];
    for (Eigen::Index l = 0; l < nb; ++l) {
      const auto& zl = nodes_b[static_cast<std::size_t>(l)];
      const Cx phase = unit_phase(2.0 * (zl.z.x * zk.z.xi - zl.z.xi * zk.z.x));
      phi += zk.weight * zl.weight * 4.0 * phase * t(k, l);
    }
  }
  return phi;
}

Cx wigner_decfun_cells(const fock::FockOperator& rho, const coh::Cell& a,
                       const coh::Cell& b) {
  const double radius = std::sqrt(2.0 * rho.dim()) + 3.0;
  return wigner_decfun_cells(rho, a, b, WignerGrid::centered(radius, 0.2));
}

Cx delta_cell_decfun(const fock::FockOperator& rho, const coh::Cell& a,
                     const coh::Cell& b) {
  const int cutoff = rho.dim();
  const fock::FockOperator da = cell_delta_operator(a, cutoff);
  const fock::FockOperator db = cell_delta_operator(b, cutoff);
  return fock::decoherence_trace(da, rho, db);
}

namespace {

bool set_contains(const RealSet& s, double value, double eps) {
  for (const auto& window : s) {
    if (value >= window.lo - eps && value <= window.hi + eps) {
      return true;
    }
  }
  return false;
}

void validate_real_set(const RealSet& s, const char* name) {
  for (const auto& window : s) {
    if (!(window.hi >= window.lo)) {
      throw ValidationError(std::string("spectral_decfun: interval in ") +
                            name + " has hi < lo");
    }
  }
}

}  // namespace

double spectral_decfun(const fock::FockOperator& rho,
                       const fock::FockOperator& observable, const RealSet& a,
                       const RealSet& b, double membership_eps) {
  if (rho.dim() != observable.dim()) {
    throw DimensionError("spectral_decfun: state and observable dimensions differ");
  }
  if (!observable.is_hermitian(1e-10)) {
    throw ValidationError("spectral_decfun requires a Hermitian observable");
  }
  validate_real_set(a, "A");
  validate_real_set(b, "B");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(observable.matrix());
  if (solver.info() != Eigen::Success) {
    throw NumericalError("spectral_decfun: eigendecomposition failed");
  }
  double value = 0.0;
  for (int k = 0; k < rho.dim(); ++k) {
    const double lambda = solver.eigenvalues()(k);
    if (!set_contains(a, lambda, membership_eps) ||
        !set_contains(b, lambda, membership_eps)) {
      continue;
    }
    const Eigen::VectorXcd v = solver.eigenvectors().col(k);
    value += (v.adjoint() * rho.matrix() * v)(0).real();
  }
  return value;
}

Cx coherent_single_time_decfun(const fock::FockOperator& rho,
                               const coh::PhasePoint& z,
                               const coh::PhasePoint& zp) {
  const Eigen::VectorXcd v = coh::coherent_vector(z, rho.dim());
  const Eigen::VectorXcd vp = coh::coherent_vector(zp, rho.dim());
  const Cx matrix_element = (v.adjoint() * rho.matrix() * vp)(0);
  return matrix_element * coh::overlap(zp, z);
}

}  // namespace qproc::wig
