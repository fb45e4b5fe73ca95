#pragma once

// Conditioning of the decoherence functional on pointer fields: disjoint
// families of phase-space cells standing for the readings of a pointer
// device. The conditional pair divides each weighted cell-pair value by
// the bare cell-pair weight; its diagonal restriction is the conditional
// correlation, which carries the state-reduction rule.

#include <complex>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qproc/coherent.hpp"
#include "qproc/common.hpp"
#include "qproc/decfun.hpp"

namespace qproc::cond {

// Bounded measurable function on the phase plane. Complex values are
// allowed; the conjugation convention is fixed by the functional's
// second slot, not by the observable itself.
using Observable = std::function<Cx(const coh::PhasePoint&)>;

// Pointer readings as disjoint unions of cells. Elements may share edges
// (zero measure) but never interiors.
struct PointerField {
  std::vector<coh::Region> elements;

  // One element per cell, pairwise interior-disjoint.
  static PointerField from_cells(const std::vector<coh::Cell>& cells);

  // As from_cells, then appends whatever part of the covering the cells
  // leave uncovered, decomposed into rectangles, so the family becomes
  // exhaustive over the covering. Cells must lie inside the covering.
  static PointerField with_rest(const std::vector<coh::Cell>& cells,
                                const coh::Region& covering);

  std::size_t size() const { return elements.size(); }
};

// Entries h_ij = phi(F on element i, G on element j) / phi(i, j). Pairs
// whose bare weight falls below the zero-measure threshold are dropped
// from the table and listed; their entry slots hold zero.
struct ConditionalPairTable {
  Eigen::MatrixXcd entries;
  std::vector<std::pair<std::size_t, std::size_t>> dropped;
};

struct ConditionalCorrelationTable {
  Eigen::VectorXcd entries;
  std::vector<std::size_t> dropped;
};

ConditionalPairTable conditional_pair(const dec::ProcessEngine& engine,
                                      const Observable& f,
                                      const Observable& g,
                                      const PointerField& field, double time);

ConditionalCorrelationTable conditional_correlation(
    const dec::ProcessEngine& engine, const Observable& f,
    const Observable& g, const PointerField& field, double time);

// Worst entry difference between the nested conditionings (either order)
// and the direct coarse conditioning. Every fine element must sit inside
// exactly one coarse element; dropped pairs are skipped on both sides.
double tower_check(const dec::ProcessEngine& engine, const Observable& f,
                   const Observable& g, const PointerField& coarse,
                   const PointerField& fine);

}  // namespace qproc::cond
