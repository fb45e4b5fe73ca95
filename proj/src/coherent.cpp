#include "qproc/coherent.hpp"

#include <algorithm>
#include <cmath>

namespace qproc::coh {

Cx overlap(const PhasePoint& z, const PhasePoint& w) {
  const Cx a = z.alpha();
  const Cx b = w.alpha();
  return std::exp(-0.5 * std::norm(a) - 0.5 * std::norm(b) + std::conj(a) * b);
}

std::vector<WeightedNode> cell_nodes(const Cell& cell) {
  if (cell.quad_order < 2) {
    throw ValidationError("cell quad_order must be >= 2");
  }
  if (cell.degenerate()) {
    return {};
  }
  const quad::Rule rx =
      quad::on_interval(quad::gauss_legendre(cell.quad_order), cell.x_lo,
                        cell.x_hi);
  const quad::Rule rxi =
      quad::on_interval(quad::gauss_legendre(cell.quad_order), cell.xi_lo,
                        cell.xi_hi);
  std::vector<WeightedNode> nodes;
  nodes.reserve(rx.nodes.size() * rxi.nodes.size());
  for (std::size_t i = 0; i < rx.nodes.size(); ++i) {
    for (std::size_t j = 0; j < rxi.nodes.size(); ++j) {
      nodes.push_back({PhasePoint{rx.nodes[i], rxi.nodes[j]},
                       rx.weights[i] * rxi.weights[j] / kTwoPi});
    }
  }
  return nodes;
}

std::vector<WeightedNode> region_nodes(const Region& region) {
  std::vector<WeightedNode> nodes;
  for (const Cell& cell : region) {
    auto part = cell_nodes(cell);
    nodes.insert(nodes.end(), part.begin(), part.end());
  }
  return nodes;
}

Region disc_region(double radius, double strip_height, double max_cell_width,
                   int quad_order) {
  if (radius <= 0.0 || strip_height <= 0.0 || max_cell_width <= 0.0) {
    throw ValidationError("disc_region parameters must be positive");
  }
  Region region;
  const int n_strips = static_cast<int>(std::ceil(2.0 * radius / strip_height));
  const double h = 2.0 * radius / n_strips;
  for (int i = 0; i < n_strips; ++i) {
    const double y0 = -radius + i * h;
    const double y1 = y0 + h;
    const double y_far = std::max(std::abs(y0), std::abs(y1));
    const double half_sq = radius * radius - y_far * y_far;
    if (half_sq <= 0.0) continue;
    const double w = std::sqrt(half_sq);
    const int n_chunks = static_cast<int>(std::ceil(2.0 * w / max_cell_width));
    const double cw = 2.0 * w / n_chunks;
    for (int j = 0; j < n_chunks; ++j) {
      Cell cell;
      cell.x_lo = -w + j * cw;
      cell.x_hi = cell.x_lo + cw;
      cell.xi_lo = y0;
      cell.xi_hi = y1;
      cell.quad_order = quad_order;
      region.push_back(cell);
    }
  }
  return region;
}

Eigen::VectorXcd coherent_vector(const PhasePoint& z, int cutoff) {
  if (cutoff < 2) {
    throw DimensionError("coherent_vector cutoff must be >= 2");
  }
  const double asq = z.alpha_sq();
  if (asq > 0.25 * cutoff) {
    throw TruncationOverflowError(
        "coherent state outside the leakage guard |alpha|^2 <= cutoff/4",
        fock::poisson_upper_tail(asq, cutoff));
  }
  const Cx a = z.alpha();
  Eigen::VectorXcd v(cutoff);
  v[0] = std::exp(-0.5 * asq);
  for (int n = 1; n < cutoff; ++n) {
    v[n] = v[n - 1] * a / std::sqrt(static_cast<double>(n));
  }
  return v;
}

fock::FockOperator CoherentFamily::projector(const PhasePoint& z) const {
  const Eigen::VectorXcd v = vector(z);
  return fock::FockOperator(Eigen::MatrixXcd(v * v.adjoint()));
}

fock::FockOperator CoherentFamily::vacuum_density() const {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(cutoff, cutoff);
  m(0, 0) = 1.0;
  return fock::FockOperator(std::move(m));
}

namespace {

fock::FockOperator accumulate_nodes(
    const std::vector<WeightedNode>& nodes, const CoherentFamily& family,
    const std::function<Cx(const PhasePoint&)>* amplitude) {
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(family.cutoff, family.cutoff);
  for (const WeightedNode& node : nodes) {
    const Eigen::VectorXcd v = family.vector(node.z);
    Cx w = node.weight;
    if (amplitude != nullptr) {
      w *= (*amplitude)(node.z);
    }
    acc.noalias() += w * (v * v.adjoint());
  }
  return fock::FockOperator(std::move(acc));
}

}  // namespace

fock::FockOperator cell_operator(const Cell& cell,
                                 const CoherentFamily& family) {
  return accumulate_nodes(cell_nodes(cell), family, nullptr);
}

fock::FockOperator region_operator(const Region& region,
                                   const CoherentFamily& family) {
  return accumulate_nodes(region_nodes(region), family, nullptr);
}

fock::FockOperator weighted_region_operator(
    const std::function<Cx(const PhasePoint&)>& f, const Region& region,
    const CoherentFamily& family) {
  return accumulate_nodes(region_nodes(region), family, &f);
}

fock::FockOperator p_symbol_operator(
    const std::function<double(const PhasePoint&)>& f, const Region& region,
    const CoherentFamily& family, int trust_levels, double tail_tol) {
  if (trust_levels < 1 || trust_levels > family.cutoff) {
    throw ValidationError("p_symbol_operator trust_levels out of range");
  }
  const std::vector<WeightedNode> nodes = region_nodes(region);
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(family.cutoff, family.cutoff);
  Eigen::VectorXd coverage = Eigen::VectorXd::Zero(trust_levels);
  double f_max = 0.0;
  for (const WeightedNode& node : nodes) {
    const Eigen::VectorXcd v = family.vector(node.z);
    const double fz = f(node.z);
    f_max = std::max(f_max, std::abs(fz));
    acc.noalias() += (node.weight * fz) * (v * v.adjoint());
    for (int n = 0; n < trust_levels; ++n) {
      coverage[n] += node.weight * std::norm(v[n]);
    }
  }
  // Coverage of the resolution of identity as seen by the trusted levels
  // bounds both the missing Gaussian tail and the quadrature error.
  const double defect = (coverage.array() - 1.0).abs().maxCoeff();
  if (defect * std::max(1.0, f_max) > tail_tol) {
    throw RegionTooSmallError(
        "symbol quadrature region leaves a Gaussian tail above tolerance");
  }
  return fock::FockOperator(std::move(acc));
}

Cx bargmann_invariant(const std::vector<PhasePoint>& forward,
                      const std::vector<PhasePoint>& backward) {
  if (forward.empty()) {
    throw ValidationError("bargmann_invariant needs a nonempty forward list");
  }
  std::vector<PhasePoint> loop = forward;
  loop.insert(loop.end(), backward.rbegin(), backward.rend());
  Cx product = Cx(1.0, 0.0);
  const std::size_t n = loop.size();
  for (std::size_t i = 0; i < n; ++i) {
    product *= overlap(loop[(i + 1) % n], loop[i]);
  }
  return product;
}

double loop_phase(const std::vector<PhasePoint>& loop) {
  double phase = 0.0;
  const std::size_t n = loop.size();
  for (std::size_t i = 0; i < n; ++i) {
    phase += std::arg(overlap(loop[(i + 1) % n], loop[i]));
  }
  return phase;
}

}  // namespace qproc::coh
