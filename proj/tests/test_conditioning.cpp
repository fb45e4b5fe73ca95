#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <vector>

#include "qproc/coherent.hpp"
#include "qproc/conditioning.hpp"
#include "qproc/decfun.hpp"
#include "qproc/fock.hpp"
#include "support.hpp"

using namespace qproc;
using namespace qproc::cond;
using coh::Cell;
using coh::CoherentFamily;
using coh::PhasePoint;
using coh::Region;
using dec::ProcessEngine;

namespace {

Cell box(double x_lo, double x_hi, double xi_lo, double xi_hi,
         int order = 12) {
  return Cell{x_lo, x_hi, xi_lo, xi_hi, order};
}

const Observable kUnit = [](const PhasePoint&) { return Cx(1.0, 0.0); };
const Observable kX = [](const PhasePoint& z) { return Cx(z.x, 0.0); };
const Observable kXi = [](const PhasePoint& z) { return Cx(z.xi, 0.0); };

// Test-side assembly of a weighted region operator from raw nodes; kept
// independent of the conditioning code paths on purpose.
fock::FockOperator assemble(const CoherentFamily& family, const Region& region,
                            const Observable& f) {
  Eigen::MatrixXcd m =
      Eigen::MatrixXcd::Zero(family.cutoff, family.cutoff);
  for (const auto& node : coh::region_nodes(region)) {
    const Eigen::VectorXcd v = family.vector(node.z);
    const Cx w = node.weight * (f ? f(node.z) : Cx(1.0, 0.0));
    m.noalias() += w * (v * v.adjoint());
  }
  return fock::FockOperator(std::move(m));
}

double total_area(const Region& region) {
  double area = 0.0;
  for (const auto& c : region) area += c.area();
  return area;
}

double pair_overlap(const Cell& a, const Cell& b) {
  const double dx = std::min(a.x_hi, b.x_hi) - std::max(a.x_lo, b.x_lo);
  const double dxi = std::min(a.xi_hi, b.xi_hi) - std::max(a.xi_lo, b.xi_lo);
  return std::max(0.0, dx) * std::max(0.0, dxi);
}

}  // namespace

TEST_CASE("pointer fields decompose and validate") {
  SUBCASE("construction rejects bad cell lists") {
    CHECK_THROWS_AS(PointerField::from_cells({}), ValidationError);
    CHECK_THROWS_AS(PointerField::from_cells(
                        {box(-1, 0.2, -1, 1), box(-0.2, 1, -1, 1)}),
                    ValidationError);
    CHECK_THROWS_AS(PointerField::from_cells({box(0, 0, -1, 1)}),
                    ValidationError);
    CHECK_NOTHROW(PointerField::from_cells(
        {box(-1, 0, -1, 1), box(0, 1, -1, 1)}));
  }

  SUBCASE("the rest element tiles the uncovered part exactly") {
    const Region covering = {box(-2, 2, -2, 2, 10)};
    const std::vector<Cell> cells = {box(-1.5, -0.5, -0.5, 0.5),
                                     box(0.3, 1.2, -1.0, 0.8)};
    const PointerField field = PointerField::with_rest(cells, covering);
    REQUIRE(field.size() == 3);
    const Region& rest = field.elements[2];
    CHECK(std::abs(total_area(rest) -
                   (total_area(covering) - cells[0].area() -
                    cells[1].area())) < 1e-12);
    for (const auto& piece : rest) {
      CHECK(piece.quad_order == 10);
      for (const auto& cell : cells) {
        CHECK(pair_overlap(piece, cell) == 0.0);
      }
      for (const auto& other : rest) {
        if (&other == &piece) continue;
        CHECK(pair_overlap(piece, other) == 0.0);
      }
    }
  }

  SUBCASE("cells outside the covering are rejected") {
    const Region covering = {box(-2, 2, -2, 2)};
    CHECK_THROWS_AS(
        PointerField::with_rest({box(1.5, 2.5, -0.5, 0.5)}, covering),
        ValidationError);
  }

  SUBCASE("an exactly tiled covering has no rest element") {
    const Region covering = {box(-1, 1, -1, 1)};
    const PointerField field = PointerField::with_rest(
        {box(-1, 0, -1, 1), box(0, 1, -1, 1)}, covering);
    CHECK(field.size() == 2);
  }
}

TEST_CASE("conditioning preserves normalization") {
  SUBCASE("kinematic point engine with a rest element") {
    CoherentFamily family(48);
    ProcessEngine engine = ProcessEngine::kinematic_point(family, {0.4, -0.2});
    const Region covering = {box(-3.2, 3.2, -3.2, 3.2, 24)};
    const PointerField field = PointerField::with_rest(
        {box(-1.5, 0.0, -1.0, 1.0, 14), box(0.0, 1.5, -1.0, 1.0, 14)},
        covering);

    const ConditionalPairTable pair =
        conditional_pair(engine, kUnit, kUnit, field, 0.5);
    CHECK(pair.dropped.empty());
    for (Eigen::Index i = 0; i < pair.entries.rows(); ++i) {
      for (Eigen::Index j = 0; j < pair.entries.cols(); ++j) {
        CHECK(std::abs(pair.entries(i, j) - Cx(1.0, 0.0)) < 1e-12);
      }
    }

    const ConditionalCorrelationTable corr =
        conditional_correlation(engine, kUnit, kUnit, field, 0.5);
    CHECK(corr.dropped.empty());
    for (Eigen::Index i = 0; i < corr.entries.size(); ++i) {
      CHECK(std::abs(corr.entries(i) - Cx(1.0, 0.0)) < 1e-12);
    }
  }

  SUBCASE("harmonic engine at a later reading time") {
    CoherentFamily family(32);
    ProcessEngine engine = ProcessEngine::dynamical_point(
        family, {0.5, 0.1}, fock::number_operator(family.cutoff));
    const PointerField field = PointerField::from_cells(
        {box(-1.4, 0.0, -0.9, 0.9), box(0.0, 1.4, -0.9, 0.9)});
    const ConditionalPairTable pair =
        conditional_pair(engine, kUnit, kUnit, field, 0.4);
    for (Eigen::Index i = 0; i < pair.entries.rows(); ++i) {
      for (Eigen::Index j = 0; j < pair.entries.cols(); ++j) {
        if (std::abs(pair.entries(i, j)) == 0.0) continue;
        CHECK(std::abs(pair.entries(i, j) - Cx(1.0, 0.0)) < 1e-12);
      }
    }
  }
}

TEST_CASE("indicator observables select their own reading") {
  CoherentFamily family(32);
  ProcessEngine engine = ProcessEngine::kinematic_point(family, {0.3, 0.0});
  const std::vector<Cell> cells = {box(-1.6, -0.4, -0.8, 0.8),
                                   box(-0.4, 0.8, -0.8, 0.8),
                                   box(0.8, 2.0, -0.8, 0.8)};
  const PointerField field = PointerField::from_cells(cells);
  const Cell marked = cells[1];
  const Observable indicator = [marked](const PhasePoint& z) {
    return marked.contains(z) ? Cx(1.0, 0.0) : Cx(0.0, 0.0);
  };

  const ConditionalPairTable table =
      conditional_pair(engine, indicator, kUnit, field, 0.6);
  for (Eigen::Index i = 0; i < table.entries.rows(); ++i) {
    for (Eigen::Index j = 0; j < table.entries.cols(); ++j) {
      if (i == 1) {
        CHECK(std::abs(table.entries(i, j) - Cx(1.0, 0.0)) < 1e-12);
      } else {
        CHECK(std::abs(table.entries(i, j)) == 0.0);
      }
    }
  }
}

TEST_CASE("conditional pair matches a direct oracle assembly") {
  CoherentFamily family(48);
  const PhasePoint z0{0.7, 0.3};
  ProcessEngine engine = ProcessEngine::kinematic_point(family, z0);
  const std::vector<Cell> cells = {box(-3.2, 0.0, -2.6, 2.6, 20),
                                   box(0.0, 3.2, -2.6, 2.6, 20)};
  const PointerField field = PointerField::from_cells(cells);

  const ConditionalPairTable table =
      conditional_pair(engine, kX, kXi, field, 0.5);
  REQUIRE(table.dropped.empty());

  const fock::FockOperator rho = family.projector(z0);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      const Region ri = {cells[i]};
      const Region rj = {cells[j]};
      const Cx weighted = fock::decoherence_trace(
          assemble(family, ri, kX), rho, assemble(family, rj, kXi));
      const Cx bare = fock::decoherence_trace(
          assemble(family, ri, nullptr), rho, assemble(family, rj, nullptr));
      const Cx expected = weighted / bare;
      CHECK(std::abs(table.entries(static_cast<Eigen::Index>(i),
                                   static_cast<Eigen::Index>(j)) -
                     expected) < 1e-6);
    }
  }
}

TEST_CASE("a fixed off-diagonal reading is not a decoherence functional") {
  CoherentFamily family(48);
  ProcessEngine engine = ProcessEngine::kinematic_point(family, {0.6, 0.2});
  const PointerField field = PointerField::from_cells(
      {box(-3.0, 0.0, -2.4, 2.4, 18), box(0.0, 3.0, -2.4, 2.4, 18)});
  const ConditionalPairTable table =
      conditional_pair(engine, kX, kX, field, 0.5);
  double worst_imag = 0.0;
  for (Eigen::Index i = 0; i < table.entries.rows(); ++i) {
    for (Eigen::Index j = 0; j < table.entries.cols(); ++j) {
      if (i == j) continue;
      worst_imag = std::max(worst_imag, std::abs(table.entries(i, j).imag()));
    }
  }
  CHECK(worst_imag > 1e-3);
}

TEST_CASE("a single covering reading reproduces the plain functional") {
  CoherentFamily family(96);
  const PhasePoint z0{0.5, -0.3};
  ProcessEngine engine = ProcessEngine::kinematic_point(family, z0);
  PointerField whole;
  whole.elements = {dec::covering_region(6.5)};

  const ConditionalCorrelationTable corr =
      conditional_correlation(engine, kX, kXi, whole, 0.4);
  REQUIRE(corr.dropped.empty());
  const Cx entry = corr.entries(0);

  const fock::FockOperator rho = family.projector(z0);
  const fock::FockOperator omega = assemble(family, whole.elements[0], nullptr);
  const fock::FockOperator reduced = fock::reduce_state(rho, omega);
  const fock::FockOperator f_op = assemble(family, whole.elements[0], kX);
  const fock::FockOperator g_op = assemble(family, whole.elements[0], kXi);

  // Reduced-kernel route: expectation against omega rho omega / tr(rho
  // omega), rescaled to the conditioned denominator.
  const double norm = (omega.matrix() * rho.matrix() * omega.matrix())
                          .trace()
                          .real();
  const Cx via_reduction = fock::decoherence_trace(f_op, reduced, g_op) *
                           (rho.matrix() * omega.matrix()).trace() / norm;
  CHECK(std::abs(entry - via_reduction) < 1e-5);

  // The covering acts as the unit: the entry is the unconditioned value.
  const Cx plain = fock::decoherence_trace(f_op, rho, g_op);
  CHECK(std::abs(entry - plain) < 1e-5);
}

TEST_CASE("a half-plane reading matches the reduction weight ratio") {
  CoherentFamily family(96);
  ProcessEngine engine = ProcessEngine::kinematic_point(family, {0.0, 0.0});
  const Cell right = box(0.0, 4.2, -4.2, 4.2, 28);
  const Cell left = box(-4.2, 0.0, -4.2, 4.2, 28);
  const PointerField field = PointerField::from_cells({right, left});

  const ConditionalCorrelationTable corr =
      conditional_correlation(engine, kX, kX, field, 0.3);
  REQUIRE(corr.dropped.empty());
  const Cx entry = corr.entries(0);
  CHECK(std::abs(entry.imag()) < 1e-10);
  CHECK(entry.real() > 0.0);

  const fock::FockOperator rho = family.projector({0.0, 0.0});
  const fock::FockOperator gate = assemble(family, {right}, nullptr);
  const fock::FockOperator weighted = assemble(family, {right}, kX);
  const double numerator =
      fock::decoherence_trace(weighted, rho, weighted).real();
  const fock::FockOperator reduced = fock::reduce_state(rho, gate);
  const double denominator = reduced.matrix().trace().real() *
                             (rho.matrix() * gate.matrix()).trace().real();
  CHECK(std::abs(entry.real() - numerator / denominator) < 1e-5);
}

TEST_CASE("zero-measure readings are dropped and reported") {
  CoherentFamily family(128);
  ProcessEngine engine = ProcessEngine::kinematic_point(family, {0.0, 0.0});
  const Cell near = box(-0.8, 0.8, -0.8, 0.8, 10);
  const Cell far = box(7.6, 7.8, -0.1, 0.1, 8);

  SUBCASE("pairs touching an unpopulated reading are listed") {
    const PointerField field = PointerField::from_cells({near, far});
    const ConditionalPairTable table =
        conditional_pair(engine, kUnit, kUnit, field, 0.2);
    CHECK(table.dropped.size() == 3);
    for (const auto& [i, j] : table.dropped) {
      CHECK((i == 1 || j == 1));
    }
    CHECK(std::abs(table.entries(0, 0) - Cx(1.0, 0.0)) < 1e-12);
  }

  SUBCASE("a field with no weight at all refuses to condition") {
    const PointerField field = PointerField::from_cells({far});
    CHECK_THROWS_AS(conditional_pair(engine, kUnit, kUnit, field, 0.2),
                    ZeroMeasureError);
    CHECK_THROWS_AS(
        conditional_correlation(engine, kUnit, kUnit, field, 0.2),
        ZeroMeasureError);
  }
}

TEST_CASE("tower property holds for nested pointer fields") {
  CoherentFamily family(48);
  ProcessEngine engine = ProcessEngine::kinematic_point(family, {0.4, 0.2});

  SUBCASE("identical fields nest trivially") {
    const PointerField field = PointerField::from_cells(
        {box(-2, 0, -1, 1, 16), box(0, 2, -1, 1, 16)});
    CHECK(tower_check(engine, kX, kXi, field, field) < 1e-14);
  }

  SUBCASE("splitting cells leaves the coarse conditioning unchanged") {
    const PointerField coarse = PointerField::from_cells(
        {box(-2, 0, -1, 1, 16), box(0, 2, -1, 1, 16)});
    const PointerField fine = PointerField::from_cells(
        {box(-2, -1, -1, 1, 16), box(-1, 0, -1, 1, 16),
         box(0, 2, -1, 0, 16), box(0, 2, 0, 1, 16)});
    CHECK(tower_check(engine, kX, kXi, coarse, fine) < 1e-7);
  }

  SUBCASE("a single covering element recovers the plain functional") {
    const Cell whole = box(-3.4, 3.4, -3.4, 3.4, 24);
    const PointerField coarse = PointerField::from_cells({whole});
    const PointerField fine = PointerField::from_cells(
        {box(-3.4, 0.0, -3.4, 3.4, 24), box(0.0, 3.4, -3.4, 3.4, 24)});
    CHECK(tower_check(engine, kX, kXi, coarse, fine) < 1e-6);
  }

  SUBCASE("random dyadic refinements") {
    Rng rng(7741);
    for (int seed = 0; seed < 6; ++seed) {
      std::vector<Cell> base = {box(-1.8, 0.0, -1.2, 1.2, 14),
                                box(0.0, 1.8, -1.2, 1.2, 14)};
      std::vector<Cell> refined;
      for (const auto& c : base) {
        if (rng.uniform() < 0.5) {
          refined.push_back(c);
          continue;
        }
        if (rng.uniform() < 0.5) {
          const double mid = 0.5 * (c.x_lo + c.x_hi);
          refined.push_back(box(c.x_lo, mid, c.xi_lo, c.xi_hi, c.quad_order));
          refined.push_back(box(mid, c.x_hi, c.xi_lo, c.xi_hi, c.quad_order));
        } else {
          const double mid = 0.5 * (c.xi_lo + c.xi_hi);
          refined.push_back(box(c.x_lo, c.x_hi, c.xi_lo, mid, c.quad_order));
          refined.push_back(box(c.x_lo, c.x_hi, mid, c.xi_hi, c.quad_order));
        }
      }
      const PointerField coarse = PointerField::from_cells(base);
      const PointerField fine = PointerField::from_cells(refined);
      CHECK(tower_check(engine, kX, kXi, coarse, fine) < 1e-7);
    }
  }

  SUBCASE("fields that are not nested are rejected") {
    const PointerField coarse = PointerField::from_cells(
        {box(-2, 0, -1, 1), box(0, 2, -1, 1)});
    const PointerField skewed = PointerField::from_cells(
        {box(-2, 0.3, -1, 1), box(0.3, 2, -1, 1)});
    CHECK_THROWS_AS(tower_check(engine, kX, kXi, coarse, skewed),
                    ValidationError);
  }
}
