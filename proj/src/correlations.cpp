#include "qproc/correlations.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <utility>

namespace qproc::corr {

namespace {

void require_branch_times(const std::vector<double>& times, const char* branch) {
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] < times[i - 1]) {
      throw ValidationError(std::string("correlation times must be weakly "
                                        "ascending on the ") +
                            branch + " branch");
    }
  }
}

// U(t)† M U(t) with U(t) = exp(-iHt); kinematic engines leave M alone.
Eigen::MatrixXcd rotate_to_time(const dec::ProcessEngine& engine,
                                const Eigen::MatrixXcd& m, double t) {
  if (engine.kinematic()) {
    return m;
  }
  Eigen::MatrixXcd u = engine.evolution().unitary(t);
  return u.adjoint() * m * u;
}

// Later times act leftward; ties keep the given order.
Eigen::MatrixXcd leftward_product(const std::vector<Eigen::MatrixXcd>& factors,
                                  int dim) {
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Identity(dim, dim);
  for (const auto& f : factors) {
    acc = f * acc;
  }
  return acc;
}

// Anti-normal quantization of exp(i(jx x + jp xi)): the corresponding
// Weyl exponential damped by exp(-(jx^2 + jp^2)/4).
Eigen::MatrixXcd exponential_factor(double jx, double jp, int dim) {
  if (jx == 0.0 && jp == 0.0) {
    return Eigen::MatrixXcd::Identity(dim, dim);
  }
  fock::FockOperator w(jx * fock::position_operator(dim).matrix() +
                       jp * fock::momentum_operator(dim).matrix());
  fock::HermitianEvolution ev(w);
  return std::exp(-0.25 * (jx * jx + jp * jp)) * ev.unitary(-1.0);
}

// Degree coefficients of the same factor: powers of the Weyl generator
// convolved with the scalar damping series, signed per branch.
std::vector<Eigen::MatrixXcd> factor_series(double jx, double jp, int dim,
                                            int order, bool forward) {
  const Cx unit = forward ? Cx(0.0, 1.0) : Cx(0.0, -1.0);
  Eigen::MatrixXcd w = jx * fock::position_operator(dim).matrix() +
                       jp * fock::momentum_operator(dim).matrix();
  std::vector<Eigen::MatrixXcd> powers(order + 1);
  powers[0] = Eigen::MatrixXcd::Identity(dim, dim);
  Cx scale(1.0, 0.0);
  for (int a = 1; a <= order; ++a) {
    powers[a] = w * powers[a - 1];
  }
  std::vector<Eigen::MatrixXcd> out(order + 1,
                                    Eigen::MatrixXcd::Zero(dim, dim));
  const double damp = -0.25 * (jx * jx + jp * jp);
  for (int a = 0; a <= order; ++a) {
    scale = (a == 0) ? Cx(1.0, 0.0) : scale * unit / static_cast<double>(a);
    double gauss = 1.0;
    for (int b = 0; a + 2 * b <= order; ++b) {
      if (b > 0) {
        gauss *= damp / static_cast<double>(b);
      }
      out[a + 2 * b] += scale * gauss * powers[a];
    }
  }
  return out;
}

// Truncated product of degree arrays: next factor multiplies from the
// requested side.
std::vector<Eigen::MatrixXcd> convolve(const std::vector<Eigen::MatrixXcd>& a,
                                       const std::vector<Eigen::MatrixXcd>& b,
                                       bool b_on_left) {
  const int order = static_cast<int>(a.size()) - 1;
  const int dim = static_cast<int>(a[0].rows());
  std::vector<Eigen::MatrixXcd> out(order + 1,
                                    Eigen::MatrixXcd::Zero(dim, dim));
  for (int d = 0; d <= order; ++d) {
    for (int e = 0; e <= d; ++e) {
      if (b_on_left) {
        out[d] += b[e] * a[d - e];
      } else {
        out[d] += a[d - e] * b[e];
      }
    }
  }
  return out;
}

}  // namespace

double theta(double tau) {
  if (tau > 0.0) {
    return 1.0;
  }
  return tau < 0.0 ? 0.0 : 0.5;
}

double eta(double tau) { return theta(tau) - theta(-tau); }

TimeGrid::TimeGrid(std::vector<double> pts) : points(std::move(pts)) {
  if (points.size() < 2) {
    throw ValidationError("a time grid needs at least two points");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(points[i])) {
      throw ValidationError("time grid points must be finite");
    }
    if (i > 0 && points[i] <= points[i - 1]) {
      throw ValidationError("time grid points must be strictly increasing");
    }
  }
}

TimeGrid TimeGrid::uniform(double t_lo, double t_hi, int n) {
  if (n < 2 || t_hi <= t_lo) {
    throw ValidationError("uniform grid needs n >= 2 and t_hi > t_lo");
  }
  std::vector<double> pts(n);
  for (int i = 0; i < n; ++i) {
    pts[i] = t_lo + (t_hi - t_lo) * (static_cast<double>(i) / (n - 1));
  }
  return TimeGrid(std::move(pts));
}

double TimeGrid::spacing() const {
  double gap = points[1] - points[0];
  for (std::size_t i = 2; i < points.size(); ++i) {
    gap = std::min(gap, points[i] - points[i - 1]);
  }
  return gap;
}

std::vector<double> TimeGrid::trapezoid_weights() const {
  const std::size_t n = points.size();
  std::vector<double> w(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double half = 0.5 * (points[i + 1] - points[i]);
    w[i] += half;
    w[i + 1] += half;
  }
  return w;
}

ObservableId parse_observable(const std::string& name) {
  if (name == "x") {
    return ObservableId::position;
  }
  if (name == "p") {
    return ObservableId::momentum;
  }
  throw UnsupportedObservableError("unknown observable '" + name +
                                   "': the correlation layer knows x and p");
}

const char* observable_name(ObservableId id) {
  return id == ObservableId::position ? "x" : "p";
}

psym::PhaseSpacePoly observable_symbol(ObservableId id) {
  return id == ObservableId::position ? psym::PhaseSpacePoly::position()
                                      : psym::PhaseSpacePoly::momentum();
}

Cx g_nm(const dec::ProcessEngine& engine, const std::vector<ObsAtTime>& forward,
        const std::vector<ObsAtTime>& backward) {
  std::vector<SymbolAtTime> fwd;
  std::vector<SymbolAtTime> bwd;
  fwd.reserve(forward.size());
  bwd.reserve(backward.size());
  for (const auto& o : forward) {
    fwd.push_back({observable_symbol(o.id), o.time});
  }
  for (const auto& o : backward) {
    bwd.push_back({observable_symbol(o.id), o.time});
  }
  return symbol_correlation(engine, fwd, bwd);
}

Cx symbol_correlation(const dec::ProcessEngine& engine,
                      const std::vector<SymbolAtTime>& forward,
                      const std::vector<SymbolAtTime>& backward) {
  const int dim = engine.family().cutoff;
  std::vector<double> t_fwd;
  std::vector<double> t_bwd;
  for (const auto& s : forward) {
    t_fwd.push_back(s.time);
  }
  for (const auto& s : backward) {
    t_bwd.push_back(s.time);
  }
  require_branch_times(t_fwd, "forward");
  require_branch_times(t_bwd, "backward");

  std::vector<Eigen::MatrixXcd> fwd_factors;
  std::vector<Eigen::MatrixXcd> bwd_factors;
  for (const auto& s : forward) {
    fwd_factors.push_back(
        rotate_to_time(engine, psym::quantize(s.symbol, dim).matrix(), s.time));
  }
  // The conjugate functional's factors; the trace below daggers them back.
  for (const auto& s : backward) {
    bwd_factors.push_back(rotate_to_time(
        engine, psym::quantize(s.symbol, dim).matrix().adjoint(), s.time));
  }
  fock::FockOperator c_fwd(leftward_product(fwd_factors, dim));
  fock::FockOperator c_bwd(leftward_product(bwd_factors, dim));
  return fock::decoherence_trace(c_fwd, engine.oracle_density(), c_bwd);
}

CurrentPair::CurrentPair(TimeGrid grid_, Eigen::MatrixXd plus,
                         Eigen::MatrixXd minus)
    : grid(std::move(grid_)), j_plus(std::move(plus)), j_minus(std::move(minus)) {
  const int n = grid.size();
  if (j_plus.rows() != kObservableCount || j_plus.cols() != n ||
      j_minus.rows() != kObservableCount || j_minus.cols() != n) {
    throw DimensionError("currents need one row per observable and one "
                         "column per grid point");
  }
  if (!j_plus.allFinite() || !j_minus.allFinite()) {
    throw ValidationError("current entries must be finite");
  }
}

CurrentPair CurrentPair::zero(const TimeGrid& grid) {
  return CurrentPair(grid, Eigen::MatrixXd::Zero(kObservableCount, grid.size()),
                     Eigen::MatrixXd::Zero(kObservableCount, grid.size()));
}

CurrentPair CurrentPair::swapped() const {
  return CurrentPair(grid, j_minus, j_plus);
}

CtpValue ctp_exact(const dec::ProcessEngine& engine, const CurrentPair& currents,
                   int truncation_order, double series_tol) {
  if (truncation_order < 0) {
    throw ValidationError("series truncation order must be non-negative");
  }
  const int dim = engine.family().cutoff;
  const int n = currents.grid.size();
  const int order = truncation_order;
  const std::vector<double> w = currents.grid.trapezoid_weights();
  const fock::FockOperator rho = engine.oracle_density();

  std::vector<Eigen::MatrixXcd> fwd_factors(n);
  std::vector<Eigen::MatrixXcd> bwd_factors(n);
  std::vector<Eigen::MatrixXcd> fwd_series(order + 1,
                                           Eigen::MatrixXcd::Identity(dim, dim));
  std::vector<Eigen::MatrixXcd> bwd_series(order + 1,
                                           Eigen::MatrixXcd::Identity(dim, dim));
  for (int d = 1; d <= order; ++d) {
    fwd_series[d].setZero();
    bwd_series[d].setZero();
  }

  for (int k = 0; k < n; ++k) {
    const double t = currents.grid.points[k];
    const double ux = w[k] * currents.j_plus(0, k);
    const double up = w[k] * currents.j_plus(1, k);
    const double vx = w[k] * currents.j_minus(0, k);
    const double vp = w[k] * currents.j_minus(1, k);

    fwd_factors[k] = rotate_to_time(engine, exponential_factor(ux, up, dim), t);
    // Conjugate of the backward exponential; decoherence_trace restores it.
    bwd_factors[k] = rotate_to_time(engine, exponential_factor(vx, vp, dim), t);

    auto f_arr = factor_series(ux, up, dim, order, true);
    auto b_arr = factor_series(vx, vp, dim, order, false);
    for (int d = 0; d <= order; ++d) {
      f_arr[d] = rotate_to_time(engine, f_arr[d], t);
      b_arr[d] = rotate_to_time(engine, b_arr[d], t);
    }
    fwd_series = convolve(fwd_series, f_arr, true);
    bwd_series = convolve(bwd_series, b_arr, false);
  }

  fock::FockOperator c_fwd(leftward_product(fwd_factors, dim));
  fock::FockOperator c_bwd(leftward_product(bwd_factors, dim));

  CtpValue out;
  out.value = fock::decoherence_trace(c_fwd, rho, c_bwd);

  // Tr(F_e rho B_{d-e}) with the backward coefficients applied linearly.
  std::vector<Eigen::MatrixXcd> rho_bwd(order + 1);
  for (int d = 0; d <= order; ++d) {
    rho_bwd[d] = rho.matrix() * bwd_series[d];
  }
  Cx total(0.0, 0.0);
  Cx last(0.0, 0.0);
  Cx prev(0.0, 0.0);
  for (int d = 0; d <= order; ++d) {
    prev = last;
    last = Cx(0.0, 0.0);
    for (int e = 0; e <= d; ++e) {
      last += (fwd_series[e] * rho_bwd[d - e]).trace();
    }
    total += last;
  }
  out.series = total;
  // Odd orders vanish identically for parity-even states, so a single
  // order is blind there; the top two orders together are not.
  out.series_step = std::abs(last) + (order >= 1 ? std::abs(prev) : 0.0);
  out.series_converged = out.series_step <= series_tol;
  return out;
}

KernelTable::KernelTable(TimeGrid grid_, Eigen::MatrixXcd delta_,
                         Eigen::MatrixXcd k_, Eigen::VectorXcd mean_)
    : grid(std::move(grid_)),
      delta(std::move(delta_)),
      k_kernel(std::move(k_)),
      mean(std::move(mean_)) {
  const int m = kObservableCount * grid.size();
  if (delta.rows() != m || delta.cols() != m || k_kernel.rows() != m ||
      k_kernel.cols() != m || mean.size() != m) {
    throw DimensionError("kernel table blocks must be square over "
                         "observables times grid points");
  }
}

int KernelTable::flat(ObservableId a, int i) const {
  return static_cast<int>(a) * grid.size() + i;
}

Cx gaussian_ctp(const KernelTable& kernels, const CurrentPair& currents) {
  if (!(kernels.grid == currents.grid)) {
    throw DimensionError("kernel table and currents live on different grids");
  }
  const int n = currents.grid.size();
  const int m = kObservableCount * n;
  const std::vector<double> w = currents.grid.trapezoid_weights();
  Eigen::VectorXcd jp(m);
  Eigen::VectorXcd jm(m);
  for (int a = 0; a < kObservableCount; ++a) {
    for (int i = 0; i < n; ++i) {
      jp[a * n + i] = Cx(w[i] * currents.j_plus(a, i), 0.0);
      jm[a * n + i] = Cx(w[i] * currents.j_minus(a, i), 0.0);
    }
  }
  auto bilinear = [](const Eigen::VectorXcd& u, const Eigen::MatrixXcd& kern,
                     const Eigen::VectorXcd& v) {
    return u.cwiseProduct(kern * v).sum();
  };
  const Cx half_i(0.0, 0.5);
  const Cx unit_i(0.0, 1.0);
  Cx exponent = -half_i * bilinear(jp, kernels.delta, jp) +
                half_i * bilinear(jm, kernels.delta.conjugate(), jm) +
                unit_i * bilinear(jp, kernels.k_kernel, jm) +
                unit_i * (jp - jm).cwiseProduct(kernels.mean).sum();
  return std::exp(exponent);
}

KernelTable kinematic_particle_kernels(double sigma_x2, double sigma_p2,
                                       double c_corr, const TimeGrid& grid) {
  if (sigma_x2 <= 0.0 || sigma_p2 <= 0.0) {
    throw ValidationError("spread parameters must be positive");
  }
  const int n = grid.size();
  const int m = kObservableCount * n;
  Eigen::MatrixXcd i_delta(m, m);
  Eigen::MatrixXcd i_k(m, m);
  const Cx unit_i(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double e = eta(grid.points[i] - grid.points[j]);
      i_delta(i, j) = Cx(sigma_x2, 0.0);
      i_delta(n + i, n + j) = Cx(sigma_p2, 0.0);
      i_delta(i, n + j) = 0.5 * (c_corr + unit_i * e);
      i_delta(n + i, j) = 0.5 * (c_corr - unit_i * e);
      i_k(i, j) = Cx(sigma_x2, 0.0);
      i_k(n + i, n + j) = Cx(sigma_p2, 0.0);
      i_k(i, n + j) = 0.5 * (c_corr - unit_i);
      i_k(n + i, j) = 0.5 * (c_corr + unit_i);
    }
  }
  return KernelTable(grid, -unit_i * i_delta, -unit_i * i_k,
                     Eigen::VectorXcd::Zero(m));
}

Cx velocity_cross_two_point(double tau, double epsilon) {
  if (epsilon <= 0.0) {
    throw ValidationError("velocity difference width must be positive");
  }
  const double dd =
      (2.0 * eta(tau) - eta(tau + epsilon) - eta(tau - epsilon)) /
      (epsilon * epsilon);
  return Cx(0.0, 0.5 * dd);
}

KernelTable velocity_process_kernels(const TimeGrid& grid, double epsilon) {
  if (epsilon <= 0.0) {
    throw ValidationError("velocity difference width must be positive");
  }
  if (epsilon >= grid.spacing()) {
    throw TimeStepError("velocity kernels need the difference width below "
                        "the grid spacing; wider widths alias the "
                        "coincident support onto the grid");
  }
  const int n = grid.size();
  const int m = kObservableCount * n;
  Eigen::MatrixXcd i_delta = Eigen::MatrixXcd::Zero(m, m);
  const Cx unit_i(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Cx cross =
          velocity_cross_two_point(grid.points[i] - grid.points[j], epsilon);
      i_delta(i, n + j) = cross;
      i_delta(n + i, j) = -cross;
    }
  }
  return KernelTable(grid, -unit_i * i_delta, Eigen::MatrixXcd::Zero(m, m),
                     Eigen::VectorXcd::Zero(m));
}

psym::SymbolFit heisenberg_flow(const fock::FockOperator& hamiltonian,
                                const psym::PhaseSpacePoly& f, double s) {
  if (f.degree() > 4) {
    throw UnsupportedObservableError(
        "flow symbols above degree 4 leave the supported polynomial class");
  }
  const int dim = hamiltonian.dim();
  const fock::FockOperator a_f = psym::quantize(f, dim);
  fock::HermitianEvolution ev(hamiltonian);
  const Eigen::MatrixXcd u = ev.unitary(s);
  fock::FockOperator flowed(u.adjoint() * a_f.matrix() * u);
  const int window = std::min(12, dim - 4);
  return psym::extract_symbol(flowed, 4, window);
}

void write_kernel_csv(std::ostream& out, const TimeGrid& grid,
                      const Eigen::MatrixXcd& kernel) {
  const int n = grid.size();
  const int m = kObservableCount * n;
  if (kernel.rows() != m || kernel.cols() != m) {
    throw DimensionError("kernel rows must match observables times grid "
                         "points");
  }
  out << "a,b,t_index,tp_index,re,im\n";
  char buf[128];
  const ObservableId ids[2] = {ObservableId::position, ObservableId::momentum};
  for (int a = 0; a < kObservableCount; ++a) {
    for (int b = 0; b < kObservableCount; ++b) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const Cx v = kernel(a * n + i, b * n + j);
          std::snprintf(buf, sizeof buf, "%s,%s,%d,%d,%.17g,%.17g",
                        observable_name(ids[a]), observable_name(ids[b]), i, j,
                        v.real(), v.imag());
          out << buf << '\n';
        }
      }
    }
  }
}

}  // namespace qproc::corr
