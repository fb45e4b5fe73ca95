#include "qproc/markov.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace qproc::markov {

namespace {

// Matches the zero-measure floor used when conditioning on pointer cells:
// denominators below it mean the reading never occurs.
constexpr double kMeasureFloor = 1e-12;

// Share of the composition integrand that may sit in the outermost ring
// of cells before the region is declared too small for the closure test.
// A percent-level ring still yields a meaningful defect; beyond that the
// composition integral is dominated by what the region cuts off.
constexpr double kEdgeShareLimit = 1e-2;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

bool same_time(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

// U†(t) A U(t) for dynamical engines, A itself for kinematic ones whose
// Heisenberg operators do not move.
fock::FockOperator heisenberg_at(const dec::ProcessEngine& engine,
                                 fock::FockOperator op, double time) {
  if (engine.kinematic()) return op;
  fock::TimedOperatorSequence seq;
  seq.push_back({std::move(op), time});
  return fock::class_operator(seq, engine.evolution());
}

Eigen::VectorXd sqrt_weights(const std::vector<coh::PhasePoint>& grid) {
  const std::vector<double> w = lattice_weights(grid);
  Eigen::VectorXd rw(static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) rw(static_cast<Eigen::Index>(i)) = std::sqrt(w[i]);
  return rw;
}

}  // namespace

coh::PhasePoint momentum_reflection(const coh::PhasePoint& z) {
  return coh::PhasePoint{z.x, -z.xi};
}

Cx propagator(const dec::ProcessEngine& engine, const coh::PhasePoint& z,
              double t, const coh::PhasePoint& z0, double s) {
  if (t < s) {
    throw ValidationError("propagator: target time precedes source time");
  }
  return engine.propagate(z, z0, t - s);
}

bool PropagatorTable::has_block(double t, double s) const {
  for (const auto& b : blocks) {
    if (same_time(b.t, t) && same_time(b.s, s)) return true;
  }
  return false;
}

const PropagatorBlock& PropagatorTable::block(double t, double s) const {
  for (const auto& b : blocks) {
    if (same_time(b.t, t) && same_time(b.s, s)) return b;
  }
  throw ValidationError("propagator table holds no block for times (" +
                        format_double(t) + ", " + format_double(s) + ")");
}

std::vector<coh::PhasePoint> disc_lattice(double radius, double spacing) {
  if (!(radius > 0.0) || !(spacing > 0.0)) {
    throw ValidationError("disc_lattice needs positive radius and spacing");
  }
  const int m = static_cast<int>(std::floor(radius / spacing + 1e-9));
  const double r_sq = radius * radius + 1e-9;
  std::vector<coh::PhasePoint> out;
  out.reserve(static_cast<std::size_t>((2 * m + 1) * (2 * m + 1)));
  for (int i = -m; i <= m; ++i) {
    for (int j = -m; j <= m; ++j) {
      const double x = i * spacing;
      const double xi = j * spacing;
      if (x * x + xi * xi <= r_sq) out.push_back(coh::PhasePoint{x, xi});
    }
  }
  return out;
}

std::vector<double> lattice_weights(const std::vector<coh::PhasePoint>& grid) {
  if (grid.size() < 2) {
    throw ValidationError("lattice_weights needs at least two grid points");
  }
  double h = std::numeric_limits<double>::infinity();
  auto scan = [&h](std::vector<double> coords) {
    std::sort(coords.begin(), coords.end());
    for (std::size_t i = 1; i < coords.size(); ++i) {
      const double gap = coords[i] - coords[i - 1];
      if (gap > 1e-12 && gap < h) h = gap;
    }
  };
  std::vector<double> xs, xis;
  xs.reserve(grid.size());
  xis.reserve(grid.size());
  for (const auto& z : grid) {
    xs.push_back(z.x);
    xis.push_back(z.xi);
  }
  scan(std::move(xs));
  scan(std::move(xis));
  if (!std::isfinite(h)) {
    throw ValidationError("lattice_weights: grid has no positive coordinate gap");
  }
  return std::vector<double>(grid.size(), h * h / kTwoPi);
}

PropagatorTable build_propagator_table(const dec::ProcessEngine& engine,
                                       const std::vector<coh::PhasePoint>& grid,
                                       const corr::TimeGrid& times) {
  if (grid.empty()) {
    throw ValidationError("build_propagator_table needs a non-empty grid");
  }
  const auto n = static_cast<Eigen::Index>(grid.size());
  PropagatorTable table;
  table.grid = grid;
  if (engine.kinematic()) {
    Eigen::MatrixXcd psi(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        psi(i, j) = coh::overlap(grid[static_cast<std::size_t>(i)],
                                 grid[static_cast<std::size_t>(j)]);
      }
    }
    for (int a = 0; a < times.size(); ++a) {
      for (int b = 0; b <= a; ++b) {
        table.blocks.push_back(
            {times.points[static_cast<std::size_t>(a)],
             times.points[static_cast<std::size_t>(b)], psi});
      }
    }
    return table;
  }
  const auto& family = engine.family();
  Eigen::MatrixXcd c(family.cutoff, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    c.col(j) = family.vector(grid[static_cast<std::size_t>(j)]);
  }
  const auto& evo = engine.evolution();
  for (int a = 0; a < times.size(); ++a) {
    for (int b = 0; b <= a; ++b) {
      const double ta = times.points[static_cast<std::size_t>(a)];
      const double tb = times.points[static_cast<std::size_t>(b)];
      const Eigen::MatrixXcd uc = evo.apply(ta - tb, c);
      table.blocks.push_back({ta, tb, c.adjoint() * uc});
    }
  }
  return table;
}

DensityPropagator::DensityPropagator(Kernel kernel) : kernel_(std::move(kernel)) {
  if (!kernel_) throw ValidationError("DensityPropagator needs a kernel");
}

DensityPropagator DensityPropagator::factorized(const dec::ProcessEngine& engine) {
  return DensityPropagator(
      [engine](const coh::PhasePoint& z, const coh::PhasePoint& zp, double t,
               const coh::PhasePoint& z0, const coh::PhasePoint& z0p,
               double s) {
        return engine.propagate(z, z0, t - s) *
               std::conj(engine.propagate(zp, z0p, t - s));
      });
}

DensityPropagator DensityPropagator::damped_overlap(double rate) {
  if (!(rate >= 0.0)) {
    throw ValidationError("damped_overlap needs a nonnegative rate");
  }
  return DensityPropagator(
      [rate](const coh::PhasePoint& z, const coh::PhasePoint& zp, double t,
             const coh::PhasePoint& z0, const coh::PhasePoint& z0p, double s) {
        const Cx base = coh::overlap(z, z0) * std::conj(coh::overlap(zp, z0p));
        const double sep = std::abs(z.alpha() - zp.alpha());
        return base * std::exp(-rate * (t - s) * sep * sep);
      });
}

DensityPropagator DensityPropagator::mixed_rotation(double weight, double omega) {
  if (!(weight >= 0.0) || !(weight <= 1.0)) {
    throw ValidationError("mixed_rotation weight must lie in [0, 1]");
  }
  // <z| e^{-i theta a†a} |z0> rotates the source label clockwise and is
  // otherwise the bare overlap.
  auto rotated = [](const coh::PhasePoint& z, const coh::PhasePoint& z0,
                    double theta) {
    const Cx a = z.alpha();
    const Cx b = z0.alpha() * std::exp(Cx(0.0, -theta));
    return std::exp(-0.5 * std::norm(z.alpha()) - 0.5 * std::norm(z0.alpha()) +
                    std::conj(a) * b);
  };
  return DensityPropagator(
      [weight, omega, rotated](const coh::PhasePoint& z,
                               const coh::PhasePoint& zp, double t,
                               const coh::PhasePoint& z0,
                               const coh::PhasePoint& z0p, double s) {
        const double theta = omega * (t - s);
        const Cx still = coh::overlap(z, z0) * std::conj(coh::overlap(zp, z0p));
        const Cx spun = rotated(z, z0, theta) * std::conj(rotated(zp, z0p, theta));
        return (1.0 - weight) * still + weight * spun;
      });
}

Cx DensityPropagator::value(const coh::PhasePoint& z, const coh::PhasePoint& zp,
                            double t, const coh::PhasePoint& z0,
                            const coh::PhasePoint& z0p, double s) const {
  return kernel_(z, zp, t, z0, z0p, s);
}

double chapman_kolmogorov_check(const dec::ProcessEngine& engine,
                                const coh::PhasePoint& z1,
                                const coh::PhasePoint& z1p, double t,
                                const coh::PhasePoint& z0,
                                const coh::PhasePoint& z0p, double s,
                                double s_mid, const coh::Region& region,
                                int quad_order) {
  if (!(s < s_mid && s_mid < t)) {
    throw ValidationError(
        "chapman_kolmogorov_check needs s < s_mid < t");
  }
  if (region.empty()) {
    throw ValidationError("chapman_kolmogorov_check needs a region");
  }
  coh::Region adjusted = region;
  for (auto& cell : adjusted) cell.quad_order = quad_order;

  // chi(z1, t | z_n, mid) and chi(z_n, mid | z0, s), evaluated per node.
  // For dynamical engines the fixed endpoints are folded into two evolved
  // vectors so each node costs one coherent vector and two dot products.
  std::function<Cx(const coh::PhasePoint&)> chi_late, chi_early;
  std::function<Cx(const coh::PhasePoint&)> chi_late_p, chi_early_p;
  if (engine.kinematic()) {
    chi_late = [&z1](const coh::PhasePoint& zn) { return coh::overlap(z1, zn); };
    chi_early = [&z0](const coh::PhasePoint& zn) { return coh::overlap(zn, z0); };
    chi_late_p = [&z1p](const coh::PhasePoint& zn) { return coh::overlap(z1p, zn); };
    chi_early_p = [&z0p](const coh::PhasePoint& zn) { return coh::overlap(zn, z0p); };
  } else {
    const auto& family = engine.family();
    const auto& evo = engine.evolution();
    const int cutoff = family.cutoff;
    auto as_bra = [cutoff](Eigen::VectorXcd fixed) {
      return [fixed = std::move(fixed), cutoff](const coh::PhasePoint& zn) {
        return fixed.dot(coh::coherent_vector(zn, cutoff));
      };
    };
    auto as_ket = [cutoff](Eigen::VectorXcd fixed) {
      return [fixed = std::move(fixed), cutoff](const coh::PhasePoint& zn) {
        return coh::coherent_vector(zn, cutoff).dot(fixed);
      };
    };
    chi_late = as_bra(evo.apply(-(t - s_mid), family.vector(z1)));
    chi_late_p = as_bra(evo.apply(-(t - s_mid), family.vector(z1p)));
    chi_early = as_ket(evo.apply(s_mid - s, family.vector(z0)));
    chi_early_p = as_ket(evo.apply(s_mid - s, family.vector(z0p)));
  }

  Cx comp(0.0, 0.0), comp_p(0.0, 0.0);
  std::vector<double> cell_share(adjusted.size(), 0.0);
  double total_share = 0.0;
  for (std::size_t ci = 0; ci < adjusted.size(); ++ci) {
    for (const auto& node : coh::cell_nodes(adjusted[ci])) {
      const Cx term = node.weight * chi_late(node.z) * chi_early(node.z);
      const Cx term_p = node.weight * chi_late_p(node.z) * chi_early_p(node.z);
      comp += term;
      comp_p += term_p;
      const double share = std::abs(term) + std::abs(term_p);
      cell_share[ci] += share;
      total_share += share;
    }
  }

  if (total_share > 0.0) {
    double r_edge = 0.0;
    std::vector<double> corner(adjusted.size(), 0.0);
    for (std::size_t ci = 0; ci < adjusted.size(); ++ci) {
      const auto& cell = adjusted[ci];
      corner[ci] = std::hypot(std::max(std::abs(cell.x_lo), std::abs(cell.x_hi)),
                              std::max(std::abs(cell.xi_lo), std::abs(cell.xi_hi)));
      r_edge = std::max(r_edge, corner[ci]);
    }
    // The ring is one coherent-state width deep; anything substantial
    // there would keep flowing outward in a larger region.
    double edge_share = 0.0;
    for (std::size_t ci = 0; ci < adjusted.size(); ++ci) {
      if (corner[ci] >= r_edge - 1.0) edge_share += cell_share[ci];
    }
    const double fraction = edge_share / total_share;
    if (fraction > kEdgeShareLimit) {
      throw RegionTooSmallError(
          "chapman_kolmogorov_check: outer ring carries " +
          format_double(fraction) +
          " of the composition integrand; enlarge the region");
    }
  }

  const Cx direct = engine.propagate(z1, z0, t - s) *
                    std::conj(engine.propagate(z1p, z0p, t - s));
  return std::abs(direct - comp * std::conj(comp_p));
}

SymmetryReport propagator_symmetry_check(
    const DensityPropagator& prop, double t, double s,
    const std::vector<PairSample>& samples, const coh::Region& trace_region,
    const std::vector<coh::PhasePoint>& form_points, int test_functions,
    Rng& rng) {
  if (samples.empty()) {
    throw ValidationError("propagator_symmetry_check needs samples");
  }
  if (test_functions < 1) {
    throw ValidationError("propagator_symmetry_check needs test functions");
  }
  SymmetryReport report;

  for (const auto& sm : samples) {
    const Cx fwd = prop.value(sm.z, sm.zp, t, sm.z0, sm.z0p, s);
    const Cx swp = prop.value(sm.zp, sm.z, t, sm.z0p, sm.z0, s);
    report.hermiticity_defect =
        std::max(report.hermiticity_defect, std::abs(fwd - std::conj(swp)));
  }

  const auto nodes = coh::region_nodes(trace_region);
  for (const auto& sm : samples) {
    Cx acc(0.0, 0.0);
    for (const auto& node : nodes) {
      acc += node.weight * prop.value(node.z, node.z, t, sm.z0, sm.z0p, s);
    }
    report.trace_defect = std::max(report.trace_defect,
                                   std::abs(acc - coh::overlap(sm.z0p, sm.z0)));
  }

  const auto p = static_cast<Eigen::Index>(form_points.size());
  const std::vector<double> w = lattice_weights(form_points);
  Eigen::MatrixXcd m(p * p, p * p);
  for (Eigen::Index k = 0; k < p; ++k) {
    for (Eigen::Index l = 0; l < p; ++l) {
      for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = 0; j < p; ++j) {
          m(k * p + l, i * p + j) = prop.value(
              form_points[static_cast<std::size_t>(k)],
              form_points[static_cast<std::size_t>(l)], t,
              form_points[static_cast<std::size_t>(i)],
              form_points[static_cast<std::size_t>(j)], s);
        }
      }
    }
  }
  report.positivity_min = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < test_functions; ++rep) {
    Eigen::VectorXcd fvec(p), gvec(p);
    for (Eigen::Index i = 0; i < p; ++i) {
      fvec(i) = Cx(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
      gvec(i) = Cx(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    }
    Eigen::VectorXcd rho_vec(p * p);
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) {
        rho_vec(i * p + j) = w[static_cast<std::size_t>(i)] * gvec(i) *
                             std::conj(w[static_cast<std::size_t>(j)] * gvec(j));
      }
    }
    const Eigen::VectorXcd sig = m * rho_vec;
    Cx form(0.0, 0.0);
    for (Eigen::Index k = 0; k < p; ++k) {
      for (Eigen::Index l = 0; l < p; ++l) {
        form += w[static_cast<std::size_t>(k)] * fvec(k) *
                std::conj(w[static_cast<std::size_t>(l)] * fvec(l)) *
                sig(k * p + l);
      }
    }
    report.positivity_min = std::min(report.positivity_min, form.real());
  }
  return report;
}

double time_reversibility_check(
    const DensityPropagator& prop, double t0, double tf,
    const std::vector<PairSample>& samples,
    const std::vector<std::pair<double, double>>& time_pairs) {
  if (!(tf > t0)) {
    throw ValidationError("time_reversibility_check needs tf > t0");
  }
  if (samples.empty() || time_pairs.empty()) {
    throw ValidationError("time_reversibility_check needs samples and times");
  }
  double defect = 0.0;
  for (const auto& [t, s] : time_pairs) {
    if (!(t0 <= s && s < t && t <= tf)) {
      throw ValidationError(
          "time_reversibility_check: time pair outside t0 <= s < t <= tf");
    }
    const double t_rev = t0 + (tf - t);
    const double s_rev = t0 + (tf - s);
    for (const auto& sm : samples) {
      const Cx lhs = prop.value(sm.z, sm.zp, t_rev, sm.z0, sm.z0p, s_rev);
      const Cx rhs = std::conj(prop.value(
          momentum_reflection(sm.z), momentum_reflection(sm.zp), t,
          momentum_reflection(sm.z0), momentum_reflection(sm.z0p), s));
      defect = std::max(defect, std::abs(lhs - rhs));
    }
  }
  return defect;
}

double time_reversibility_check(
    const dec::ProcessEngine& engine, double t0, double tf,
    const std::vector<PairSample>& samples,
    const std::vector<std::pair<double, double>>& time_pairs) {
  return time_reversibility_check(DensityPropagator::factorized(engine), t0,
                                  tf, samples, time_pairs);
}

double factorization_rank_defect(const DensityPropagator& prop, double t,
                                 double s,
                                 const std::vector<coh::PhasePoint>& points) {
  const auto p = static_cast<Eigen::Index>(points.size());
  if (p < 2) {
    throw ValidationError("factorization_rank_defect needs at least 2 points");
  }
  // Rows pair the forward-branch arguments (z, z0), columns the
  // backward-branch arguments (zp, z0p).  A kernel of the form
  // chi(z, z0) * conj(chi(zp, z0p)) is exactly rank one in this pairing;
  // grouping finals against initials instead gives a Kronecker product
  // whose rank squares, so it would never detect factorization.
  Eigen::MatrixXcd m(p * p, p * p);
  for (Eigen::Index k = 0; k < p; ++k) {
    for (Eigen::Index l = 0; l < p; ++l) {
      for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = 0; j < p; ++j) {
          m(k * p + i, l * p + j) =
              prop.value(points[static_cast<std::size_t>(k)],
                         points[static_cast<std::size_t>(l)], t,
                         points[static_cast<std::size_t>(i)],
                         points[static_cast<std::size_t>(j)], s);
        }
      }
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || !std::isfinite(sv(0))) {
    throw DegenerateKernelError(
        "factorization_rank_defect: sampled propagator vanishes");
  }
  return sv(1) / sv(0);
}

MarkovReport markov_property_check(const dec::ProcessEngine& engine,
                                   const coh::Cell& forward_cell, double t,
                                   const coh::Cell& backward_cell,
                                   double t_prime,
                                   const cond::PointerField& instant, double s,
                                   const cond::PointerField& past,
                                   double s_prev) {
  if (!(s_prev < s && s < t && s < t_prime)) {
    throw ValidationError(
        "markov_property_check needs s_prev < s < t and s < t_prime");
  }
  if (instant.elements.empty() || past.elements.empty()) {
    throw ValidationError("markov_property_check needs non-empty fields");
  }
  const auto& family = engine.family();
  const fock::FockOperator rho = engine.oracle_density();

  const fock::FockOperator fwd =
      heisenberg_at(engine, coh::cell_operator(forward_cell, family), t);
  const fock::FockOperator bwd =
      heisenberg_at(engine, coh::cell_operator(backward_cell, family), t_prime);
  std::vector<fock::FockOperator> inst_ops, past_ops;
  inst_ops.reserve(instant.elements.size());
  for (const auto& element : instant.elements) {
    inst_ops.push_back(
        heisenberg_at(engine, coh::region_operator(element, family), s));
  }
  past_ops.reserve(past.elements.size());
  for (const auto& element : past.elements) {
    past_ops.push_back(
        heisenberg_at(engine, coh::region_operator(element, family), s_prev));
  }

  const std::size_t ni = inst_ops.size();
  const std::size_t np = past_ops.size();
  Eigen::MatrixXcd inst_table(ni, ni);
  std::vector<char> inst_live(ni * ni, 0);
  for (std::size_t i = 0; i < ni; ++i) {
    for (std::size_t ip = 0; ip < ni; ++ip) {
      const Cx den = fock::decoherence_trace(inst_ops[i], rho, inst_ops[ip]);
      if (std::abs(den) <= kMeasureFloor) continue;
      const Cx num = fock::decoherence_trace(fwd * inst_ops[i], rho,
                                             bwd * inst_ops[ip]);
      inst_table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(ip)) =
          num / den;
      inst_live[i * ni + ip] = 1;
    }
  }

  std::vector<fock::FockOperator> joint_ops, joint_fwd;
  joint_ops.reserve(ni * np);
  joint_fwd.reserve(ni * np);
  for (std::size_t i = 0; i < ni; ++i) {
    for (std::size_t j = 0; j < np; ++j) {
      joint_ops.push_back(inst_ops[i] * past_ops[j]);
      joint_fwd.push_back(fwd * joint_ops.back());
    }
  }
  std::vector<fock::FockOperator> joint_bwd;
  joint_bwd.reserve(ni * np);
  for (std::size_t i = 0; i < ni; ++i) {
    for (std::size_t j = 0; j < np; ++j) {
      joint_bwd.push_back(bwd * joint_ops[i * np + j]);
    }
  }

  MarkovReport report;
  for (std::size_t i = 0; i < ni; ++i) {
    for (std::size_t j = 0; j < np; ++j) {
      for (std::size_t ip = 0; ip < ni; ++ip) {
        for (std::size_t jp = 0; jp < np; ++jp) {
          const fock::FockOperator& left = joint_ops[i * np + j];
          const fock::FockOperator& right = joint_ops[ip * np + jp];
          const Cx den = fock::decoherence_trace(left, rho, right);
          if (std::abs(den) <= kMeasureFloor) {
            ++report.dropped;
            continue;
          }
          if (!inst_live[i * ni + ip]) continue;
          const Cx refined = fock::decoherence_trace(joint_fwd[i * np + j], rho,
                                                     joint_bwd[ip * np + jp]) /
                             den;
          const Cx instant_value = inst_table(static_cast<Eigen::Index>(i),
                                              static_cast<Eigen::Index>(ip));
          report.max_defect =
              std::max(report.max_defect, std::abs(refined - instant_value));
          ++report.compared;
        }
      }
    }
  }
  return report;
}

PhysicalSubspace reconstruct_subspace(const PropagatorTable& table,
                                      double relative_threshold) {
  if (!(relative_threshold > 0.0)) {
    throw ValidationError("reconstruct_subspace needs a positive threshold");
  }
  const PropagatorBlock* equal_time = nullptr;
  for (const auto& b : table.blocks) {
    if (same_time(b.t, b.s)) {
      equal_time = &b;
      break;
    }
  }
  if (equal_time == nullptr) {
    throw ValidationError("reconstruct_subspace: table has no equal-time block");
  }
  const auto n = static_cast<Eigen::Index>(table.grid.size());
  if (equal_time->chi.rows() != n || equal_time->chi.cols() != n) {
    throw DimensionError("reconstruct_subspace: block does not match grid");
  }
  const Eigen::VectorXd rw = sqrt_weights(table.grid);
  Eigen::MatrixXcd gram = rw.asDiagonal() * equal_time->chi * rw.asDiagonal();
  gram = 0.5 * (gram + gram.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(gram);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("reconstruct_subspace: eigensolver failed");
  }
  const Eigen::VectorXd& lambda = solver.eigenvalues();
  const double lambda_max = lambda(n - 1);
  if (!(lambda_max > 0.0)) {
    throw DegenerateKernelError("reconstruct_subspace: kernel has no mass");
  }
  const double cut = relative_threshold * lambda_max;
  Eigen::Index retained = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (lambda(i) > cut) ++retained;
  }
  if (retained < 2) {
    throw DegenerateKernelError(
        "reconstruct_subspace: fewer than two modes above threshold " +
        format_double(cut));
  }
  PhysicalSubspace out;
  out.threshold = cut;
  out.basis.resize(n, retained);
  out.eigenvalues.resize(retained);
  for (Eigen::Index k = 0; k < retained; ++k) {
    out.basis.col(k) = solver.eigenvectors().col(n - 1 - k);
    out.eigenvalues(k) = lambda(n - 1 - k);
  }
  const Eigen::MatrixXcd overlap_matrix = out.basis.adjoint() * out.basis;
  out.projector_defect =
      (overlap_matrix - Eigen::MatrixXcd::Identity(retained, retained))
          .cwiseAbs()
          .maxCoeff();
  return out;
}

std::vector<double> extract_hamiltonian(const PropagatorTable& table,
                                        const PhysicalSubspace& subspace,
                                        double dt, double unitarity_tol) {
  if (!(dt > 0.0)) {
    throw ValidationError("extract_hamiltonian needs a positive step");
  }
  if (!(unitarity_tol > 0.0)) {
    throw ValidationError("extract_hamiltonian needs a positive tolerance");
  }
  const PropagatorBlock* step = nullptr;
  for (const auto& b : table.blocks) {
    if (same_time(b.t - b.s, dt)) {
      step = &b;
      break;
    }
  }
  if (step == nullptr) {
    throw ValidationError("extract_hamiltonian: no block with step " +
                          format_double(dt));
  }
  const auto n = static_cast<Eigen::Index>(table.grid.size());
  if (subspace.basis.rows() != n || step->chi.rows() != n) {
    throw DimensionError("extract_hamiltonian: subspace does not match table");
  }
  const Eigen::VectorXd rw = sqrt_weights(table.grid);
  const Eigen::MatrixXcd weighted = rw.asDiagonal() * step->chi * rw.asDiagonal();
  const Eigen::MatrixXcd compressed =
      subspace.basis.adjoint() * weighted * subspace.basis;
  const Eigen::VectorXd scale = subspace.eigenvalues.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXcd ustep =
      scale.asDiagonal() * compressed * scale.asDiagonal();
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(ustep);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("extract_hamiltonian: eigensolver failed");
  }
  const auto& mu = solver.eigenvalues();
  double defect = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    defect = std::max(defect, std::abs(std::abs(mu(i)) - 1.0));
  }
  if (defect > unitarity_tol) {
    throw SubspaceLeakageError(
        "extract_hamiltonian: compressed step deviates from unitarity by " +
            format_double(defect),
        defect);
  }
  std::vector<double> energies;
  energies.reserve(static_cast<std::size_t>(mu.size()));
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double phase = std::arg(mu(i));
    if (std::abs(phase) > 0.95 * kPi) {
      throw TimeStepError(
          "extract_hamiltonian: eigenphase " + format_double(phase) +
          " sits near the branch cut; shrink the step");
    }
    energies.push_back(-phase / dt);
  }
  std::sort(energies.begin(), energies.end());
  return energies;
}

void write_table_csv(std::ostream& out, const PropagatorTable& table) {
  const auto n = static_cast<Eigen::Index>(table.grid.size());
  out << "zi_x,zi_xi,zj_x,zj_xi,t,s,re,im\n";
  for (const auto& b : table.blocks) {
    if (b.chi.rows() != n || b.chi.cols() != n) {
      throw DimensionError("write_table_csv: block does not match grid");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const auto& zi = table.grid[static_cast<std::size_t>(i)];
        const auto& zj = table.grid[static_cast<std::size_t>(j)];
        out << format_double(zi.x) << ',' << format_double(zi.xi) << ','
            << format_double(zj.x) << ',' << format_double(zj.xi) << ','
            << format_double(b.t) << ',' << format_double(b.s) << ','
            << format_double(b.chi(i, j).real()) << ','
            << format_double(b.chi(i, j).imag()) << '\n';
      }
    }
  }
}

PropagatorTable read_table_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError("read_table_csv: empty stream");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "zi_x,zi_xi,zj_x,zj_xi,t,s,re,im") {
    throw ValidationError("read_table_csv: unexpected header '" + line + "'");
  }
  struct Row {
    std::array<double, 8> v;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Row row{};
    std::size_t start = 0;
    for (int field = 0; field < 8; ++field) {
      const std::size_t end =
          field == 7 ? line.size() : line.find(',', start);
      if (end == std::string::npos) {
        throw ValidationError("read_table_csv: row with missing fields");
      }
      try {
        row.v[static_cast<std::size_t>(field)] =
            std::stod(line.substr(start, end - start));
      } catch (const std::exception&) {
        throw ValidationError("read_table_csv: malformed number in row");
      }
      start = end + 1;
    }
    if (line.find(',', start) != std::string::npos) {
      throw ValidationError("read_table_csv: row with extra fields");
    }
    rows.push_back(row);
  }
  if (rows.empty()) {
    throw ValidationError("read_table_csv: no data rows");
  }

  // The column index runs fastest, so the first run of constant source
  // point spells out the grid in storage order.
  std::size_t n = rows.size();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].v[0] != rows[0].v[0] || rows[r].v[1] != rows[0].v[1]) {
      n = r;
      break;
    }
  }
  PropagatorTable table;
  table.grid.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    table.grid.push_back(coh::PhasePoint{rows[j].v[2], rows[j].v[3]});
  }
  if (rows.size() % (n * n) != 0) {
    throw ValidationError("read_table_csv: row count is not a whole number of blocks");
  }
  const std::size_t block_count = rows.size() / (n * n);
  for (std::size_t b = 0; b < block_count; ++b) {
    const std::size_t base = b * n * n;
    PropagatorBlock block;
    block.t = rows[base].v[4];
    block.s = rows[base].v[5];
    block.chi.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const Row& row = rows[base + i * n + j];
        const auto& zi = table.grid[i];
        const auto& zj = table.grid[j];
        if (row.v[0] != zi.x || row.v[1] != zi.xi || row.v[2] != zj.x ||
            row.v[3] != zj.xi || row.v[4] != block.t || row.v[5] != block.s) {
          throw ValidationError("read_table_csv: rows out of order");
        }
        block.chi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            Cx(row.v[6], row.v[7]);
      }
    }
    table.blocks.push_back(std::move(block));
  }
  return table;
}

}  // namespace qproc::markov
