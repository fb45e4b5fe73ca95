#include "qproc/decfun.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace qproc::dec {

namespace {

void require_branch_order(const std::vector<Vertex>& branch,
                          const char* name) {
  for (std::size_t k = 1; k < branch.size(); ++k) {
    if (branch[k].time < branch[k - 1].time) {
      throw ValidationError(std::string(name) +
                            " branch times must be ascending");
    }
  }
}

void require_history(const History& h) {
  for (std::size_t k = 0; k < h.steps.size(); ++k) {
    if (k > 0 && h.steps[k].time <= h.steps[k - 1].time) {
      throw ValidationError("history times must be strictly increasing");
    }
  }
}

}  // namespace

History single_cell_history(const coh::Cell& cell, double time,
                            std::string label) {
  History h;
  h.steps.push_back({{cell}, time});
  h.label = std::move(label);
  return h;
}

ProcessEngine::ProcessEngine(coh::CoherentFamily family,
                             std::optional<coh::PhasePoint> point,
                             std::optional<fock::FockOperator> rho,
                             std::optional<fock::HermitianEvolution> evolution)
    : family_(family),
      point_(point),
      rho_(std::move(rho)),
      evolution_(std::move(evolution)) {
  if (rho_.has_value()) {
    if (rho_->dim() != family_.cutoff) {
      throw DimensionError("initial density must match the family cutoff");
    }
    if (!rho_->is_hermitian(1e-10)) {
      throw ValidationError("initial density must be Hermitian");
    }
    const double tr = rho_->matrix().trace().real();
    if (std::abs(tr - 1.0) > 1e-8) {
      throw ValidationError("initial density must have unit trace");
    }
  }
  if (evolution_.has_value() && evolution_->dim() != family_.cutoff) {
    throw DimensionError("Hamiltonian must match the family cutoff");
  }
}

ProcessEngine ProcessEngine::kinematic_point(const coh::CoherentFamily& family,
                                             const coh::PhasePoint& z0) {
  return ProcessEngine(family, z0, std::nullopt, std::nullopt);
}

ProcessEngine ProcessEngine::kinematic_density(
    const coh::CoherentFamily& family, fock::FockOperator rho) {
  return ProcessEngine(family, std::nullopt, std::move(rho), std::nullopt);
}

ProcessEngine ProcessEngine::dynamical_point(
    const coh::CoherentFamily& family, const coh::PhasePoint& z0,
    const fock::FockOperator& hamiltonian) {
  return ProcessEngine(family, z0, std::nullopt,
                       fock::HermitianEvolution(hamiltonian));
}

ProcessEngine ProcessEngine::dynamical_density(
    const coh::CoherentFamily& family, fock::FockOperator rho,
    const fock::FockOperator& hamiltonian) {
  return ProcessEngine(family, std::nullopt, std::move(rho),
                       fock::HermitianEvolution(hamiltonian));
}

const coh::PhasePoint& ProcessEngine::initial_point() const {
  if (!point_.has_value()) {
    throw WrongEngineError("engine has a density initial state, not a point");
  }
  return *point_;
}

const fock::HermitianEvolution& ProcessEngine::evolution() const {
  if (!evolution_.has_value()) {
    throw WrongEngineError("kinematic engine has no evolution");
  }
  return *evolution_;
}

fock::FockOperator ProcessEngine::oracle_density() const {
  if (rho_.has_value()) {
    return *rho_;
  }
  return family_.projector(*point_);
}

Cx ProcessEngine::propagate(const coh::PhasePoint& z, const coh::PhasePoint& w,
                            double dt) const {
  if (kinematic()) {
    return coh::overlap(z, w);
  }
  const Eigen::VectorXcd vz = family_.vector(z);
  const Eigen::VectorXcd vw = evolution_->apply(dt, family_.vector(w));
  return vz.dot(vw);
}

namespace {

// One node set of the closed overlap cycle: a pinned vertex is a single
// node of weight one, an integrated step carries its tensor quadrature.
struct Slot {
  std::vector<coh::WeightedNode> nodes;
  double time = 0.0;
};

Slot pinned_slot(const Vertex& v) {
  Slot s;
  s.nodes = {{v.z, 1.0}};
  s.time = v.time;
  return s;
}

Slot region_slot(const coh::Region& region, double time, int order_boost) {
  Slot s;
  s.time = time;
  for (coh::Cell cell : region) {
    cell.quad_order += order_boost;
    auto part = coh::cell_nodes(cell);
    s.nodes.insert(s.nodes.end(), part.begin(), part.end());
  }
  return s;
}

// Edge kernels between consecutive slots. A link is <dst|U(dt)|src>; the
// single initial edge of a cycle is <dst|U(t_ket) rho U(t_bra)^dag|src>.
// Kinematic engines read both with U = 1.
struct Edge {
  bool initial = false;
  double dt = 0.0;
  double t_ket = 0.0;
  double t_bra = 0.0;
};

// slots in traversal order; edges[l] maps slots[l] to slots[(l+1) % L].
struct Cycle {
  std::vector<Slot> slots;
  std::vector<Edge> edges;
};

Edge link_edge(double dt) {
  Edge e;
  e.dt = dt;
  return e;
}

Edge initial_edge(double t_ket, double t_bra) {
  Edge e;
  e.initial = true;
  e.t_ket = t_ket;
  e.t_bra = t_bra;
  return e;
}

// Hierarchy cycle: bwd1 --initial--> fwd1 -> ... -> fwdn --closure-->
// bwdm -> ... -> bwd2 -> bwd1. Branches without entries merge the closure
// into the initial kernel.
Cycle build_cycle(std::vector<Slot> fwd, std::vector<Slot> bwd) {
  const std::size_t n = fwd.size();
  const std::size_t m = bwd.size();
  Cycle c;
  if (n >= 1 && m >= 1) {
    c.slots.push_back(bwd[0]);
    c.edges.push_back(initial_edge(fwd[0].time, bwd[0].time));
    for (std::size_t k = 0; k < n; ++k) {
      c.slots.push_back(fwd[k]);
      if (k + 1 < n) {
        c.edges.push_back(link_edge(fwd[k + 1].time - fwd[k].time));
      }
    }
    c.edges.push_back(link_edge(bwd[m - 1].time - fwd[n - 1].time));
    for (std::size_t j = m; j >= 2; --j) {
      c.slots.push_back(bwd[j - 1]);
      c.edges.push_back(link_edge(bwd[j - 2].time - bwd[j - 1].time));
    }
    return c;
  }
  if (n == 0) {
    c.slots.push_back(bwd[0]);
    c.edges.push_back(initial_edge(bwd[m - 1].time, bwd[0].time));
    for (std::size_t j = m; j >= 2; --j) {
      c.slots.push_back(bwd[j - 1]);
      c.edges.push_back(link_edge(bwd[j - 2].time - bwd[j - 1].time));
    }
    return c;
  }
  // m == 0: the initial kernel runs from fwdn back around to fwd1.
  c.slots.push_back(fwd[n - 1]);
  c.edges.push_back(initial_edge(fwd[0].time, fwd[n - 1].time));
  for (std::size_t k = 0; k + 1 < n; ++k) {
    c.slots.push_back(fwd[k]);
    c.edges.push_back(link_edge(fwd[k + 1].time - fwd[k].time));
  }
  return c;
}

// Entry budget for materialized edge matrices and chain intermediates.
constexpr std::size_t kMatrixCap = 4u * 1000u * 1000u;
// Kernel-evaluation budget for the seeded sweep fallback.
constexpr double kSweepCap = 4e9;

class CycleEvaluator {
 public:
  CycleEvaluator(const ProcessEngine& engine, Cycle cycle)
      : e_(engine), c_(std::move(cycle)) {
    vecs_.resize(c_.slots.size());
  }

  Cx evaluate() {
    const std::size_t count = c_.slots.size();
    if (count == 1) {
      return diagonal_value();
    }
    std::size_t anchor = 0;
    for (std::size_t s = 1; s < count; ++s) {
      if (c_.slots[s].nodes.size() < c_.slots[anchor].nodes.size()) {
        anchor = s;
      }
    }
    rotate_to(anchor);
    if (c_.slots[0].nodes.size() == 1) {
      return sweep();
    }
    if (matrix_feasible()) {
      return matrix_chain();
    }
    if (sweep_cost() <= kSweepCap) {
      return sweep();
    }
    throw QuadratureError(
        "integration regions too large for the nested quadrature route");
  }

 private:
  const ProcessEngine& e_;
  Cycle c_;
  std::vector<std::optional<Eigen::MatrixXcd>> vecs_;
  // rank-one factors of a point initial kernel, dst and src sides
  std::optional<Eigen::VectorXcd> init_u_;
  std::optional<Eigen::VectorXcd> init_q_;
  // evolved density U(t_ket) rho U(t_bra)^dag of a density initial kernel
  std::optional<Eigen::MatrixXcd> init_w_;

  void rotate_to(std::size_t r) {
    std::rotate(c_.slots.begin(),
                c_.slots.begin() + static_cast<std::ptrdiff_t>(r),
                c_.slots.end());
    std::rotate(c_.edges.begin(),
                c_.edges.begin() + static_cast<std::ptrdiff_t>(r),
                c_.edges.end());
    std::rotate(vecs_.begin(), vecs_.begin() + static_cast<std::ptrdiff_t>(r),
                vecs_.end());
  }

  const Eigen::MatrixXcd& slot_vectors(std::size_t l) {
    if (!vecs_[l].has_value()) {
      const Slot& s = c_.slots[l];
      Eigen::MatrixXcd v(e_.family().cutoff,
                         static_cast<Eigen::Index>(s.nodes.size()));
      for (std::size_t j = 0; j < s.nodes.size(); ++j) {
        v.col(static_cast<Eigen::Index>(j)) = e_.family().vector(s.nodes[j].z);
      }
      vecs_[l] = std::move(v);
    }
    return *vecs_[l];
  }

  static Eigen::VectorXcd fold_weights(const Slot& s,
                                       const Eigen::VectorXcd& x) {
    Eigen::VectorXcd out = x;
    for (std::size_t j = 0; j < s.nodes.size(); ++j) {
      out[static_cast<Eigen::Index>(j)] *= s.nodes[j].weight;
    }
    return out;
  }

  void prepare_initial(const Edge& edge, std::size_t src_idx,
                       std::size_t dst_idx) {
    if (e_.point_initial()) {
      if (init_u_.has_value()) return;
      const Slot& src = c_.slots[src_idx];
      const Slot& dst = c_.slots[dst_idx];
      const coh::PhasePoint& z0 = e_.initial_point();
      Eigen::VectorXcd u(static_cast<Eigen::Index>(dst.nodes.size()));
      Eigen::VectorXcd q(static_cast<Eigen::Index>(src.nodes.size()));
      if (e_.kinematic()) {
        for (std::size_t i = 0; i < dst.nodes.size(); ++i) {
          u[static_cast<Eigen::Index>(i)] = coh::overlap(dst.nodes[i].z, z0);
        }
        for (std::size_t j = 0; j < src.nodes.size(); ++j) {
          q[static_cast<Eigen::Index>(j)] = coh::overlap(z0, src.nodes[j].z);
        }
      } else {
        const Eigen::VectorXcd v0 = e_.family().vector(z0);
        const Eigen::VectorXcd ket = e_.evolution().apply(edge.t_ket, v0);
        const Eigen::VectorXcd bra = e_.evolution().apply(edge.t_bra, v0);
        u = slot_vectors(dst_idx).adjoint() * ket;
        q = (slot_vectors(src_idx).adjoint() * bra).conjugate();
      }
      init_u_ = std::move(u);
      init_q_ = std::move(q);
      return;
    }
    if (init_w_.has_value()) return;
    Eigen::MatrixXcd w = e_.oracle_density().matrix();
    if (!e_.kinematic()) {
      w = e_.evolution().apply(edge.t_ket, w);
      w = Eigen::MatrixXcd(
              e_.evolution().apply(edge.t_bra, Eigen::MatrixXcd(w.adjoint())))
              .adjoint();
    }
    init_w_ = std::move(w);
  }

  // x lives on slot l; returns the transfer to slot l+1 with slot l's
  // weights folded in.
  Eigen::VectorXcd apply_full(std::size_t l, const Eigen::VectorXcd& x) {
    const Slot& src = c_.slots[l];
    const std::size_t dst_idx = (l + 1) % c_.slots.size();
    const Slot& dst = c_.slots[dst_idx];
    const Edge& edge = c_.edges[l];
    const Eigen::VectorXcd xw = fold_weights(src, x);
    if (edge.initial) {
      prepare_initial(edge, l, dst_idx);
      if (e_.point_initial()) {
        return *init_u_ * (init_q_->cwiseProduct(xw)).sum();
      }
      Eigen::VectorXcd carried = slot_vectors(l) * xw;
      carried = *init_w_ * carried;
      return slot_vectors(dst_idx).adjoint() * carried;
    }
    if (e_.kinematic()) {
      Eigen::VectorXcd out =
          Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(dst.nodes.size()));
      for (std::size_t i = 0; i < dst.nodes.size(); ++i) {
        Cx acc(0.0, 0.0);
        for (std::size_t j = 0; j < src.nodes.size(); ++j) {
          acc += coh::overlap(dst.nodes[i].z, src.nodes[j].z) *
                 xw[static_cast<Eigen::Index>(j)];
        }
        out[static_cast<Eigen::Index>(i)] = acc;
      }
      return out;
    }
    const Eigen::VectorXcd carried =
        e_.evolution().apply(edge.dt, Eigen::VectorXcd(slot_vectors(l) * xw));
    return slot_vectors(dst_idx).adjoint() * carried;
  }

  // Single component of apply_full at destination index a.
  Cx apply_at(std::size_t l, const Eigen::VectorXcd& x, std::size_t a) {
    const Slot& src = c_.slots[l];
    const std::size_t dst_idx = (l + 1) % c_.slots.size();
    const Slot& dst = c_.slots[dst_idx];
    const Edge& edge = c_.edges[l];
    const Eigen::VectorXcd xw = fold_weights(src, x);
    if (edge.initial) {
      prepare_initial(edge, l, dst_idx);
      if (e_.point_initial()) {
        return (*init_u_)[static_cast<Eigen::Index>(a)] *
               (init_q_->cwiseProduct(xw)).sum();
      }
      Eigen::VectorXcd carried = slot_vectors(l) * xw;
      carried = *init_w_ * carried;
      return slot_vectors(dst_idx)
          .col(static_cast<Eigen::Index>(a))
          .dot(carried);
    }
    if (e_.kinematic()) {
      Cx acc(0.0, 0.0);
      for (std::size_t j = 0; j < src.nodes.size(); ++j) {
        acc += coh::overlap(dst.nodes[a].z, src.nodes[j].z) *
               xw[static_cast<Eigen::Index>(j)];
      }
      return acc;
    }
    const Eigen::VectorXcd carried =
        e_.evolution().apply(edge.dt, Eigen::VectorXcd(slot_vectors(l) * xw));
    return slot_vectors(dst_idx).col(static_cast<Eigen::Index>(a)).dot(carried);
  }

  // Single slot closed on itself through the initial kernel: the value is
  // the weighted diagonal of that kernel.
  Cx diagonal_value() {
    const Slot& s = c_.slots[0];
    const Edge& edge = c_.edges[0];
    prepare_initial(edge, 0, 0);
    Cx total(0.0, 0.0);
    if (e_.point_initial()) {
      for (std::size_t a = 0; a < s.nodes.size(); ++a) {
        const auto idx = static_cast<Eigen::Index>(a);
        total += s.nodes[a].weight * (*init_u_)[idx] * (*init_q_)[idx];
      }
      return total;
    }
    const Eigen::MatrixXcd& v = slot_vectors(0);
    const Eigen::MatrixXcd carried = *init_w_ * v;
    for (std::size_t a = 0; a < s.nodes.size(); ++a) {
      const auto idx = static_cast<Eigen::Index>(a);
      total += s.nodes[a].weight * v.col(idx).dot(carried.col(idx));
    }
    return total;
  }

  bool matrix_feasible() const {
    const std::size_t count = c_.slots.size();
    const std::size_t n0 = c_.slots[0].nodes.size();
    for (std::size_t l = 0; l < count; ++l) {
      const std::size_t ns = c_.slots[l].nodes.size();
      const std::size_t nd = c_.slots[(l + 1) % count].nodes.size();
      if (ns * nd > kMatrixCap || nd * n0 > kMatrixCap) {
        return false;
      }
    }
    return true;
  }

  double sweep_cost() const {
    const std::size_t count = c_.slots.size();
    const double dim = e_.family().cutoff;
    double per_seed = 0.0;
    for (std::size_t l = 0; l < count; ++l) {
      const double ns = static_cast<double>(c_.slots[l].nodes.size());
      const double nd = l + 1 < count
                            ? static_cast<double>(c_.slots[l + 1].nodes.size())
                            : 1.0;  // the closing edge is applied restricted
      if (c_.edges[l].initial) {
        per_seed += e_.point_initial() ? ns + nd
                                       : (ns + nd) * dim + dim * dim;
      } else if (e_.kinematic()) {
        per_seed += ns * nd;
      } else {
        per_seed += (ns + nd) * dim + dim * dim;
      }
    }
    return per_seed * static_cast<double>(c_.slots[0].nodes.size());
  }

  Eigen::MatrixXcd edge_matrix(std::size_t l) {
    const Slot& src = c_.slots[l];
    const std::size_t dst_idx = (l + 1) % c_.slots.size();
    const Slot& dst = c_.slots[dst_idx];
    const Edge& edge = c_.edges[l];
    const auto ns = static_cast<Eigen::Index>(src.nodes.size());
    const auto nd = static_cast<Eigen::Index>(dst.nodes.size());
    Eigen::MatrixXcd m(nd, ns);
    if (edge.initial) {
      prepare_initial(edge, l, dst_idx);
      if (e_.point_initial()) {
        m = *init_u_ * init_q_->transpose();
      } else {
        m = slot_vectors(dst_idx).adjoint() * (*init_w_) * slot_vectors(l);
      }
    } else if (e_.kinematic()) {
      for (Eigen::Index i = 0; i < nd; ++i) {
        for (Eigen::Index j = 0; j < ns; ++j) {
          m(i, j) = coh::overlap(dst.nodes[static_cast<std::size_t>(i)].z,
                                 src.nodes[static_cast<std::size_t>(j)].z);
        }
      }
    } else {
      m = slot_vectors(dst_idx).adjoint() *
          e_.evolution().apply(edge.dt, slot_vectors(l));
    }
    for (Eigen::Index j = 0; j < ns; ++j) {
      m.col(j) *= src.nodes[static_cast<std::size_t>(j)].weight;
    }
    return m;
  }

  Cx matrix_chain() {
    const std::size_t count = c_.slots.size();
    Eigen::MatrixXcd m = edge_matrix(0);
    for (std::size_t l = 1; l < count; ++l) {
      m = (edge_matrix(l) * m).eval();
    }
    return m.trace();
  }

  Cx sweep() {
    const std::size_t count = c_.slots.size();
    const std::size_t n0 = c_.slots[0].nodes.size();
    Cx total(0.0, 0.0);
    for (std::size_t a = 0; a < n0; ++a) {
      Eigen::VectorXcd x =
          Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n0));
      x[static_cast<Eigen::Index>(a)] = Cx(1.0, 0.0);
      for (std::size_t l = 0; l + 1 < count; ++l) {
        x = apply_full(l, x);
      }
      total += apply_at(count - 1, x, a);
    }
    return total;
  }
};

Cx contract(const ProcessEngine& engine, std::vector<Slot> fwd,
            std::vector<Slot> bwd) {
  for (const Slot& s : fwd) {
    if (s.nodes.empty()) return Cx(0.0, 0.0);
  }
  for (const Slot& s : bwd) {
    if (s.nodes.empty()) return Cx(0.0, 0.0);
  }
  if (fwd.empty() && bwd.empty()) {
    if (engine.point_initial()) {
      return Cx(1.0, 0.0);
    }
    return engine.oracle_density().matrix().trace();
  }
  CycleEvaluator eval(engine, build_cycle(std::move(fwd), std::move(bwd)));
  return eval.evaluate();
}

std::vector<Slot> pinned_slots(const std::vector<Vertex>& branch) {
  std::vector<Slot> out;
  out.reserve(branch.size());
  for (const Vertex& v : branch) {
    out.push_back(pinned_slot(v));
  }
  return out;
}

}  // namespace

Cx upsilon_kinematic(const ProcessEngine& engine,
                     const std::vector<Vertex>& forward,
                     const std::vector<Vertex>& backward) {
  if (!engine.kinematic()) {
    throw WrongEngineError(
        "kinematic hierarchy requested on an engine with dynamics");
  }
  require_branch_order(forward, "forward");
  require_branch_order(backward, "backward");
  return contract(engine, pinned_slots(forward), pinned_slots(backward));
}

Cx upsilon_dynamical(const ProcessEngine& engine,
                     const std::vector<Vertex>& forward,
                     const std::vector<Vertex>& backward) {
  if (engine.kinematic()) {
    throw WrongEngineError(
        "dynamical hierarchy needs a Hamiltonian; pass an explicit zero "
        "operator for trivial dynamics");
  }
  require_branch_order(forward, "forward");
  require_branch_order(backward, "backward");
  return contract(engine, pinned_slots(forward), pinned_slots(backward));
}

Cx upsilon(const ProcessEngine& engine, const std::vector<Vertex>& forward,
           const std::vector<Vertex>& backward) {
  return engine.kinematic() ? upsilon_kinematic(engine, forward, backward)
                            : upsilon_dynamical(engine, forward, backward);
}

namespace {

coh::Region boosted_region(const coh::Region& region, int order_boost) {
  coh::Region out = region;
  for (coh::Cell& cell : out) {
    cell.quad_order += order_boost;
  }
  return out;
}

Cx oracle_phi(const ProcessEngine& engine, const History& alpha,
              const History& beta, int order_boost) {
  const int dim = engine.family().cutoff;
  const fock::HermitianEvolution evolution =
      engine.kinematic()
          ? fock::HermitianEvolution(fock::FockOperator::zero(dim))
          : engine.evolution();
  auto build = [&](const History& h) {
    if (h.steps.empty()) {
      return fock::FockOperator::identity(dim);
    }
    fock::TimedOperatorSequence seq;
    for (const HistoryStep& step : h.steps) {
      seq.push_back(
          {coh::region_operator(boosted_region(step.region, order_boost),
                                engine.family()),
           step.time});
    }
    return fock::class_operator(seq, evolution);
  };
  return fock::decoherence_trace(build(alpha), engine.oracle_density(),
                                 build(beta));
}

Cx quadrature_phi(const ProcessEngine& engine, const History& alpha,
                  const History& beta, int order_boost) {
  std::vector<Slot> fwd;
  for (const HistoryStep& step : alpha.steps) {
    fwd.push_back(region_slot(step.region, step.time, order_boost));
  }
  std::vector<Slot> bwd;
  for (const HistoryStep& step : beta.steps) {
    bwd.push_back(region_slot(step.region, step.time, order_boost));
  }
  return contract(engine, std::move(fwd), std::move(bwd));
}

}  // namespace

DecoherenceValue phi_cells(const ProcessEngine& engine, const History& alpha,
                           const History& beta, Route route, double quad_tol) {
  require_history(alpha);
  require_history(beta);
  Route used = route;
  const std::size_t total_steps = alpha.steps.size() + beta.steps.size();
  if (route == Route::bargmann_quadrature && total_steps > 4) {
    used = Route::oracle_trace;
  }
  auto evaluate = [&](int order_boost) {
    return used == Route::oracle_trace
               ? oracle_phi(engine, alpha, beta, order_boost)
               : quadrature_phi(engine, alpha, beta, order_boost);
  };
  const Cx base = evaluate(0);
  const Cx refined = evaluate(4);
  double err = std::abs(base - refined);
  if (err <= quad_tol) {
    return {refined, err, used};
  }
  const Cx escalated = evaluate(8);
  err = std::abs(refined - escalated);
  if (err > quad_tol) {
    std::ostringstream msg;
    msg << "step quadrature did not converge: error estimate " << err
        << " above tolerance " << quad_tol << " after escalation";
    throw QuadratureError(msg.str());
  }
  return {escalated, err, used};
}

namespace {

bool cells_overlap(const coh::Cell& a, const coh::Cell& b) {
  return a.x_lo < b.x_hi && b.x_lo < a.x_hi && a.xi_lo < b.xi_hi &&
         b.xi_lo < a.xi_hi;
}

}  // namespace

AxiomReport check_axioms(const ProcessEngine& engine,
                         const std::vector<coh::Cell>& cells,
                         const std::vector<double>& times,
                         const coh::Region& covering, Route route) {
  if (cells.size() < 2) {
    throw ValidationError("axiom check needs at least two disjoint cells");
  }
  if (times.empty()) {
    throw ValidationError("axiom check needs at least one time");
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = i + 1; j < cells.size(); ++j) {
      if (cells_overlap(cells[i], cells[j])) {
        throw ValidationError("axiom check cells must be pairwise disjoint");
      }
    }
  }

  std::vector<History> hist;
  for (double t : times) {
    for (const coh::Cell& c : cells) {
      hist.push_back(single_cell_history(c, t));
    }
  }
  if (times.size() >= 2) {
    for (const coh::Cell& ci : cells) {
      for (const coh::Cell& cj : cells) {
        History h;
        h.steps.push_back({{ci}, times[0]});
        h.steps.push_back({{cj}, times[1]});
        hist.push_back(h);
      }
    }
  }

  const auto nh = static_cast<Eigen::Index>(hist.size());
  Eigen::MatrixXcd phi(nh, nh);
  if (route == Route::oracle_trace) {
    // One class operator per history, reused across all pairings.
    const int dim = engine.family().cutoff;
    const fock::HermitianEvolution evolution =
        engine.kinematic()
            ? fock::HermitianEvolution(fock::FockOperator::zero(dim))
            : engine.evolution();
    std::vector<fock::FockOperator> class_ops;
    class_ops.reserve(hist.size());
    for (const History& h : hist) {
      fock::TimedOperatorSequence seq;
      for (const HistoryStep& step : h.steps) {
        seq.push_back(
            {coh::region_operator(step.region, engine.family()), step.time});
      }
      class_ops.push_back(fock::class_operator(seq, evolution));
    }
    const fock::FockOperator rho = engine.oracle_density();
    for (Eigen::Index i = 0; i < nh; ++i) {
      for (Eigen::Index j = 0; j < nh; ++j) {
        phi(i, j) = fock::decoherence_trace(
            class_ops[static_cast<std::size_t>(i)], rho,
            class_ops[static_cast<std::size_t>(j)]);
      }
    }
  } else {
    for (Eigen::Index i = 0; i < nh; ++i) {
      for (Eigen::Index j = 0; j < nh; ++j) {
        phi(i, j) = phi_cells(engine, hist[static_cast<std::size_t>(i)],
                              hist[static_cast<std::size_t>(j)], route)
                        .value;
      }
    }
  }

  AxiomReport report;

  History impossible;
  impossible.steps.push_back({coh::Region{}, times[0]});
  report.null_defect =
      std::abs(phi_cells(engine, impossible, hist[0], route).value);

  for (Eigen::Index i = 0; i < nh; ++i) {
    for (Eigen::Index j = 0; j < nh; ++j) {
      report.hermiticity_defect =
          std::max(report.hermiticity_defect,
                   std::abs(phi(j, i) - std::conj(phi(i, j))));
      report.boundedness_excess =
          std::max(report.boundedness_excess, std::abs(phi(i, j)) - 1.0);
    }
  }
  report.boundedness_excess = std::max(report.boundedness_excess, 0.0);

  report.positivity_floor = phi(0, 0).real();
  for (Eigen::Index i = 1; i < nh; ++i) {
    report.positivity_floor =
        std::min(report.positivity_floor, phi(i, i).real());
  }

  for (std::size_t a = 0; a < cells.size(); ++a) {
    for (std::size_t b = a + 1; b < cells.size(); ++b) {
      History joint;
      joint.steps.push_back({{cells[a], cells[b]}, times[0]});
      for (std::size_t r = 0; r < cells.size(); ++r) {
        const History ref = single_cell_history(cells[r], times[0]);
        const Cx whole = phi_cells(engine, joint, ref, route).value;
        const Cx left =
            phi_cells(engine, single_cell_history(cells[a], times[0]), ref,
                      route)
                .value;
        const Cx right =
            phi_cells(engine, single_cell_history(cells[b], times[0]), ref,
                      route)
                .value;
        report.additivity_defect = std::max(report.additivity_defect,
                                            std::abs(whole - left - right));
      }
    }
  }

  History omega;
  omega.steps.push_back({covering, times[0]});
  report.normalization_defect = std::abs(
      phi_cells(engine, omega, omega, Route::oracle_trace).value - 1.0);

  return report;
}

namespace {

// Mass the region's quadrature assigns to the given state; one minus this
// is the resolution-of-identity defect that state sees.
double region_coverage(const ProcessEngine& engine, const Slot& slot,
                       const Eigen::VectorXcd& state) {
  double mass = 0.0;
  for (const coh::WeightedNode& node : slot.nodes) {
    const Cx amp = engine.family().vector(node.z).dot(state);
    mass += node.weight * std::norm(amp);
  }
  return mass;
}

double region_coverage(const Slot& slot, const coh::PhasePoint& w) {
  double mass = 0.0;
  for (const coh::WeightedNode& node : slot.nodes) {
    mass += node.weight * std::norm(coh::overlap(node.z, w));
  }
  return mass;
}

}  // namespace

double kolmogorov_additivity_check(const ProcessEngine& engine,
                                   const std::vector<Vertex>& forward,
                                   const std::vector<Vertex>& backward,
                                   std::size_t marginal_index,
                                   const coh::Region& region,
                                   double tail_tol) {
  if (marginal_index >= forward.size()) {
    throw ValidationError("marginal index outside the forward branch");
  }
  if (region.empty()) {
    throw ValidationError("marginalization region is empty");
  }
  require_branch_order(forward, "forward");
  require_branch_order(backward, "backward");

  const std::size_t k = marginal_index;
  const Slot marginal = region_slot(region, forward[k].time, 0);
  if (marginal.nodes.empty()) {
    throw ValidationError("marginalization region has no quadrature nodes");
  }

  // The collapse replaces the two propagators adjacent to the marginal
  // vertex, so the region must resolve the identity as those neighbor
  // states see it. Both sides are estimated when available.
  double worst = 0.0;
  auto consider_point = [&](const coh::PhasePoint& w, double evolve_by) {
    double mass;
    if (engine.kinematic()) {
      mass = region_coverage(marginal, w);
    } else {
      const Eigen::VectorXcd state =
          engine.evolution().apply(evolve_by, engine.family().vector(w));
      mass = region_coverage(engine, marginal, state);
    }
    worst = std::max(worst, std::abs(1.0 - mass));
  };
  const double tk = forward[k].time;
  if (k >= 1) {
    consider_point(forward[k - 1].z, tk - forward[k - 1].time);
  } else if (engine.point_initial()) {
    consider_point(engine.initial_point(), tk);
  }
  if (k + 1 < forward.size()) {
    consider_point(forward[k + 1].z, -(forward[k + 1].time - tk));
  } else if (!backward.empty()) {
    consider_point(backward.back().z, -(backward.back().time - tk));
  } else if (engine.point_initial()) {
    consider_point(engine.initial_point(), tk);
  }
  if (worst > tail_tol) {
    std::ostringstream msg;
    msg << "marginalization region resolves its neighbors only to defect "
        << worst << ", above tolerance " << tail_tol;
    throw RegionTooSmallError(msg.str());
  }

  std::vector<Slot> fwd_slots = pinned_slots(forward);
  fwd_slots[k] = marginal;
  const Cx integrated =
      contract(engine, std::move(fwd_slots), pinned_slots(backward));

  std::vector<Vertex> reduced = forward;
  reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(k));
  const Cx direct =
      contract(engine, pinned_slots(reduced), pinned_slots(backward));
  return std::abs(integrated - direct);
}

namespace {

double theta(double x) {
  if (x > 0.0) return 1.0;
  if (x < 0.0) return 0.0;
  return 0.5;
}

// Branch orderings with their adjacent theta-factor products; zero-weight
// orderings are dropped, so only weakly ascending ones survive.
std::vector<std::pair<double, std::vector<Vertex>>> theta_orderings(
    const std::vector<Vertex>& branch) {
  if (branch.size() > 6) {
    throw ValidationError(
        "theta symmetrization enumerates branch permutations; branches "
        "beyond 6 entries are not supported");
  }
  std::vector<std::pair<double, std::vector<Vertex>>> out;
  std::vector<std::size_t> idx(branch.size());
  std::iota(idx.begin(), idx.end(), 0u);
  do {
    double weight = 1.0;
    for (std::size_t k = 1; k < idx.size() && weight > 0.0; ++k) {
      weight *= theta(branch[idx[k]].time - branch[idx[k - 1]].time);
    }
    if (weight > 0.0) {
      std::vector<Vertex> perm;
      perm.reserve(idx.size());
      for (std::size_t i : idx) {
        perm.push_back(branch[i]);
      }
      out.emplace_back(weight, std::move(perm));
    }
  } while (std::next_permutation(idx.begin(), idx.end()));
  if (out.empty()) {
    out.emplace_back(1.0, std::vector<Vertex>{});
  }
  return out;
}

}  // namespace

Cx time_symmetric_w(const ProcessEngine& engine, std::vector<Vertex> forward,
                    std::vector<Vertex> backward) {
  const auto fwd_orderings = theta_orderings(forward);
  const auto bwd_orderings = theta_orderings(backward);
  Cx total(0.0, 0.0);
  for (const auto& [wf, pf] : fwd_orderings) {
    for (const auto& [wb, pb] : bwd_orderings) {
      total += wf * wb * contract(engine, pinned_slots(pf), pinned_slots(pb));
    }
  }
  return total;
}

Cx diagonal_reconstruction(const ProcessEngine& engine,
                           const std::vector<Vertex>& forward,
                           const std::vector<Vertex>& backward,
                           const coh::Region& region) {
  require_branch_order(forward, "forward");
  require_branch_order(backward, "backward");
  const std::size_t n = forward.size();
  const std::size_t m = backward.size();
  if (n + m == 0) {
    return contract(engine, {}, {});
  }
  if (region.empty()) {
    throw ValidationError("marginalization region is empty");
  }

  // Diagonal forward branch: the n targets, then m integrated slots at
  // internal times above them. Backward branch: n integrated slots below
  // the backward targets, then the m targets. Each collapse is exact
  // independently of the internal times chosen here.
  std::vector<Slot> fwd_slots = pinned_slots(forward);
  const double fwd_base = n > 0 ? forward.back().time : 0.0;
  for (std::size_t j = 1; j <= m; ++j) {
    fwd_slots.push_back(
        region_slot(region, fwd_base + static_cast<double>(j), 0));
  }
  std::vector<Slot> bwd_slots;
  const double bwd_base =
      m > 0 ? backward.front().time - static_cast<double>(n) : 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    bwd_slots.push_back(
        region_slot(region, bwd_base + static_cast<double>(j), 0));
  }
  for (const Vertex& v : backward) {
    bwd_slots.push_back(pinned_slot(v));
  }
  return contract(engine, std::move(fwd_slots), std::move(bwd_slots));
}

Cx tensor_combine(const ProcessEngine& engine_a, const History& alpha_a,
                  const History& beta_a, const ProcessEngine& engine_b,
                  const History& alpha_b, const History& beta_b) {
  const Cx factor_a =
      phi_cells(engine_a, alpha_a, beta_a, Route::oracle_trace).value;
  const Cx factor_b =
      phi_cells(engine_b, alpha_b, beta_b, Route::oracle_trace).value;
  return factor_a * factor_b;
}

coh::Region covering_region(double radius) {
  return coh::disc_region(radius, 0.5, 1.5, 8);
}

}  // namespace qproc::dec
