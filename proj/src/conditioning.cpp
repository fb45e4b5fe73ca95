#include "qproc/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace qproc::cond {

namespace {

// Pairs with |phi(i,j)| below this are zero-measure readings; they are
// dropped from the tables and reported, matching the convention that
// conditional values on null outcomes carry no information.
constexpr double kZeroMeasure = 1e-12;

// Cell operators entering the ratios are built with this much extra
// Gauss-Legendre order, mirroring the refined value the two-route
// functional reports.
constexpr int kOrderBoost = 4;

double interval_overlap(double a_lo, double a_hi, double b_lo, double b_hi) {
  return std::max(0.0, std::min(a_hi, b_hi) - std::max(a_lo, b_lo));
}

double cell_pair_overlap(const coh::Cell& a, const coh::Cell& b) {
  return interval_overlap(a.x_lo, a.x_hi, b.x_lo, b.x_hi) *
         interval_overlap(a.xi_lo, a.xi_hi, b.xi_lo, b.xi_hi);
}

double region_area(const coh::Region& region) {
  double area = 0.0;
  for (const auto& c : region) area += c.area();
  return area;
}

double overlap_area(const coh::Cell& cell, const coh::Region& region) {
  double area = 0.0;
  for (const auto& c : region) area += cell_pair_overlap(cell, c);
  return area;
}

void require_disjoint(const std::vector<coh::Cell>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].degenerate()) {
      throw ValidationError("pointer cells must have positive area");
    }
    for (std::size_t j = i + 1; j < cells.size(); ++j) {
      if (cell_pair_overlap(cells[i], cells[j]) > 1e-12) {
        throw ValidationError("pointer cells must not overlap");
      }
    }
  }
}

// Removes the closed rectangle `hole` from `piece`, appending what is
// left as up to four rectangles inheriting the piece's quadrature order.
void subtract_cell(const coh::Cell& piece, const coh::Cell& hole,
                   std::vector<coh::Cell>& out) {
  const double x_lo = std::max(piece.x_lo, hole.x_lo);
  const double x_hi = std::min(piece.x_hi, hole.x_hi);
  const double xi_lo = std::max(piece.xi_lo, hole.xi_lo);
  const double xi_hi = std::min(piece.xi_hi, hole.xi_hi);
  if (x_hi - x_lo <= 1e-12 || xi_hi - xi_lo <= 1e-12) {
    out.push_back(piece);
    return;
  }
  auto keep = [&out, &piece](double a, double b, double c, double d) {
    if (b - a > 1e-12 && d - c > 1e-12) {
      out.push_back(coh::Cell{a, b, c, d, piece.quad_order});
    }
  };
  keep(piece.x_lo, x_lo, piece.xi_lo, piece.xi_hi);
  keep(x_hi, piece.x_hi, piece.xi_lo, piece.xi_hi);
  keep(x_lo, x_hi, piece.xi_lo, xi_lo);
  keep(x_lo, x_hi, xi_hi, piece.xi_hi);
}

coh::Region boost_region(const coh::Region& region) {
  coh::Region out = region;
  for (auto& c : out) c.quad_order += kOrderBoost;
  return out;
}

// U†(t) A U(t) for dynamical engines, A itself otherwise.
fock::FockOperator at_time(const dec::ProcessEngine& engine,
                           fock::FockOperator op, double time) {
  if (engine.kinematic()) return op;
  fock::TimedOperatorSequence seq;
  seq.push_back({std::move(op), time});
  return fock::class_operator(seq, engine.evolution());
}

fock::FockOperator weighted_step(const dec::ProcessEngine& engine,
                                 const Observable& f,
                                 const coh::Region& element, double time) {
  const coh::Region boosted = boost_region(element);
  fock::FockOperator op =
      f ? coh::weighted_region_operator(f, boosted, engine.family())
        : coh::region_operator(boosted, engine.family());
  return at_time(engine, std::move(op), time);
}

struct FieldTraces {
  Eigen::MatrixXcd bare;      // phi(i, j)
  Eigen::MatrixXcd weighted;  // phi(F on i, G on j)
};

FieldTraces field_traces(const dec::ProcessEngine& engine,
                         const Observable& f, const Observable& g,
                         const PointerField& field, double time) {
  if (field.elements.empty()) {
    throw ValidationError("pointer field has no elements");
  }
  const fock::FockOperator rho = engine.oracle_density();
  const auto n = static_cast<Eigen::Index>(field.size());
  std::vector<fock::FockOperator> bare_ops, f_ops, g_ops;
  bare_ops.reserve(field.size());
  f_ops.reserve(field.size());
  g_ops.reserve(field.size());
  for (const auto& element : field.elements) {
    bare_ops.push_back(weighted_step(engine, nullptr, element, time));
    f_ops.push_back(weighted_step(engine, f, element, time));
    g_ops.push_back(weighted_step(engine, g, element, time));
  }
  FieldTraces out;
  out.bare.resize(n, n);
  out.weighted.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      out.bare(i, j) = fock::decoherence_trace(
          bare_ops[static_cast<std::size_t>(i)], rho,
          bare_ops[static_cast<std::size_t>(j)]);
      out.weighted(i, j) = fock::decoherence_trace(
          f_ops[static_cast<std::size_t>(i)], rho,
          g_ops[static_cast<std::size_t>(j)]);
    }
  }
  return out;
}

}  // namespace

PointerField PointerField::from_cells(const std::vector<coh::Cell>& cells) {
  if (cells.empty()) {
    throw ValidationError("pointer field needs at least one cell");
  }
  require_disjoint(cells);
  PointerField field;
  field.elements.reserve(cells.size());
  for (const auto& c : cells) field.elements.push_back(coh::Region{c});
  return field;
}

PointerField PointerField::with_rest(const std::vector<coh::Cell>& cells,
                                     const coh::Region& covering) {
  PointerField field = from_cells(cells);
  for (const auto& c : cells) {
    if (overlap_area(c, covering) < c.area() * (1.0 - 1e-9)) {
      throw ValidationError("pointer cells must lie inside the covering");
    }
  }
  std::vector<coh::Cell> pieces = covering;
  for (const auto& hole : cells) {
    std::vector<coh::Cell> next;
    next.reserve(pieces.size() + 3);
    for (const auto& piece : pieces) subtract_cell(piece, hole, next);
    pieces.swap(next);
  }
  if (!pieces.empty()) {
    field.elements.push_back(std::move(pieces));
  }
  return field;
}

ConditionalPairTable conditional_pair(const dec::ProcessEngine& engine,
                                      const Observable& f,
                                      const Observable& g,
                                      const PointerField& field,
                                      double time) {
  const FieldTraces traces = field_traces(engine, f, g, field, time);
  const Eigen::Index n = traces.bare.rows();
  ConditionalPairTable table;
  table.entries = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (std::abs(traces.bare(i, j)) < kZeroMeasure) {
        table.dropped.push_back({static_cast<std::size_t>(i),
                                 static_cast<std::size_t>(j)});
        continue;
      }
      table.entries(i, j) = traces.weighted(i, j) / traces.bare(i, j);
    }
  }
  if (table.dropped.size() == static_cast<std::size_t>(n) * n) {
    throw ZeroMeasureError(
        "conditioning dropped every pointer pair: the state carries no "
        "weight on the field");
  }
  return table;
}

ConditionalCorrelationTable conditional_correlation(
    const dec::ProcessEngine& engine, const Observable& f,
    const Observable& g, const PointerField& field, double time) {
  const FieldTraces traces = field_traces(engine, f, g, field, time);
  const Eigen::Index n = traces.bare.rows();
  ConditionalCorrelationTable table;
  table.entries = Eigen::VectorXcd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(traces.bare(i, i)) < kZeroMeasure) {
      table.dropped.push_back(static_cast<std::size_t>(i));
      continue;
    }
    table.entries(i) = traces.weighted(i, i) / traces.bare(i, i);
  }
  if (table.dropped.size() == static_cast<std::size_t>(n)) {
    throw ZeroMeasureError(
        "conditioning dropped every pointer cell: the state carries no "
        "weight on the field");
  }
  return table;
}

double tower_check(const dec::ProcessEngine& engine, const Observable& f,
                   const Observable& g, const PointerField& coarse,
                   const PointerField& fine) {
  // Locate each fine element inside its unique coarse parent.
  std::vector<std::size_t> parent(fine.size());
  for (std::size_t i = 0; i < fine.size(); ++i) {
    const double area = region_area(fine.elements[i]);
    std::optional<std::size_t> found;
    for (std::size_t big = 0; big < coarse.size(); ++big) {
      double covered = 0.0;
      for (const auto& piece : fine.elements[i]) {
        covered += overlap_area(piece, coarse.elements[big]);
      }
      if (covered >= area * (1.0 - 1e-9)) {
        found = big;
        break;
      }
    }
    if (!found.has_value()) {
      throw ValidationError(
          "tower check needs nested fields: a fine element crosses coarse "
          "boundaries");
    }
    parent[i] = *found;
  }

  const FieldTraces fine_traces = field_traces(engine, f, g, fine, 0.0);
  const FieldTraces coarse_traces = field_traces(engine, f, g, coarse, 0.0);
  const auto nf = static_cast<std::size_t>(fine_traces.bare.rows());
  const auto nc = static_cast<std::size_t>(coarse_traces.bare.rows());

  auto fine_dropped = [&](std::size_t i, std::size_t j) {
    return std::abs(fine_traces.bare(static_cast<Eigen::Index>(i),
                                     static_cast<Eigen::Index>(j))) <
           kZeroMeasure;
  };

  double defect = 0.0;
  for (std::size_t bi = 0; bi < nc; ++bi) {
    for (std::size_t bj = 0; bj < nc; ++bj) {
      const Cx coarse_bare = coarse_traces.bare(
          static_cast<Eigen::Index>(bi), static_cast<Eigen::Index>(bj));
      if (std::abs(coarse_bare) < kZeroMeasure) continue;
      const Cx direct = coarse_traces.weighted(static_cast<Eigen::Index>(bi),
                                               static_cast<Eigen::Index>(bj)) /
                        coarse_bare;

      // Conditioning on fine first: the inner table is constant on fine
      // pairs, so the outer conditioning contracts it against the fine
      // pair weights inside the coarse pair.
      Cx contracted(0.0, 0.0);
      for (std::size_t i = 0; i < nf; ++i) {
        if (parent[i] != bi) continue;
        for (std::size_t j = 0; j < nf; ++j) {
          if (parent[j] != bj || fine_dropped(i, j)) continue;
          const auto ii = static_cast<Eigen::Index>(i);
          const auto jj = static_cast<Eigen::Index>(j);
          const Cx h = fine_traces.weighted(ii, jj) / fine_traces.bare(ii, jj);
          contracted += h * fine_traces.bare(ii, jj);
        }
      }
      defect = std::max(defect, std::abs(contracted / coarse_bare - direct));

      // Conditioning on coarse first: the inner table is constant across
      // each fine pair, so the outer conditioning returns it unchanged.
      for (std::size_t i = 0; i < nf; ++i) {
        if (parent[i] != bi) continue;
        for (std::size_t j = 0; j < nf; ++j) {
          if (parent[j] != bj || fine_dropped(i, j)) continue;
          const auto ii = static_cast<Eigen::Index>(i);
          const auto jj = static_cast<Eigen::Index>(j);
          const Cx refined =
              direct * fine_traces.bare(ii, jj) / fine_traces.bare(ii, jj);
          defect = std::max(defect, std::abs(refined - direct));
        }
      }
    }
  }
  return defect;
}

}  // namespace qproc::cond
