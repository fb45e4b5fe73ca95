#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "qproc/fock.hpp"
#include "support.hpp"

using namespace qproc;
using namespace qproc::fock;

namespace {
Eigen::VectorXcd basis_vector(int dim, int n) {
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(dim);
  v[n] = 1.0;
  return v;
}
}  // namespace

TEST_CASE("ladder operators on the smallest space") {
  auto [a, adag] = ladder_operators(2);
  CHECK(a.matrix()(0, 1) == Cx(1.0, 0.0));
  CHECK(std::abs(a.matrix()(0, 0)) == 0.0);
  CHECK(std::abs(a.matrix()(1, 0)) == 0.0);
  CHECK(std::abs(a.matrix()(1, 1)) == 0.0);
  CHECK(adag.matrix() == a.matrix().adjoint());
}

TEST_CASE("number operator is diagonal 0..dim-1") {
  FockOperator n = number_operator(4);
  for (int k = 0; k < 4; ++k) {
    CHECK(n.matrix()(k, k).real() == doctest::Approx(k).epsilon(1e-14));
  }
  CHECK((n.matrix() - n.matrix().diagonal().asDiagonal().toDenseMatrix())
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("canonical commutator holds away from the truncation edge") {
  const int dim = 16;
  FockOperator x = position_operator(dim);
  FockOperator p = momentum_operator(dim);
  Eigen::MatrixXcd comm = x.matrix() * p.matrix() - p.matrix() * x.matrix();
  Eigen::MatrixXcd defect =
      comm - Cx(0.0, 1.0) * Eigen::MatrixXcd::Identity(dim, dim);
  // exact i*1 on the first dim-2 levels, deviation confined to the top
  CHECK(defect.topLeftCorner(dim - 2, dim - 2).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(defect.cwiseAbs().maxCoeff() > 1.0);
}

TEST_CASE("evolution is unitary and diagonalizes the number operator") {
  const int dim = 24;
  FockOperator h = number_operator(dim);
  HermitianEvolution ev(h);
  Eigen::MatrixXcd u = ev.unitary(0.7);
  Eigen::MatrixXcd defect =
      u.adjoint() * u - Eigen::MatrixXcd::Identity(dim, dim);
  CHECK(defect.cwiseAbs().maxCoeff() <= 1e-13);
  // eigenstate picks up a pure phase
  Eigen::VectorXcd v3 = ev.apply(0.7, basis_vector(dim, 3));
  CHECK(std::abs(v3[3] - std::exp(Cx(0.0, -3 * 0.7))) <= 1e-14);
}

TEST_CASE("class operator with zero Hamiltonian is the ordered product") {
  const int dim = 4;
  FockOperator p0 = testsupport::rank_one(basis_vector(dim, 0));
  FockOperator p1 = testsupport::rank_one(basis_vector(dim, 1));
  FockOperator h = FockOperator::zero(dim);
  FockOperator c = class_operator({{p0, 0.5}, {p1, 1.0}}, h);
  Eigen::MatrixXcd expected = p1.matrix() * p0.matrix();
  CHECK((c.matrix() - expected).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("class operator on an energy eigenstate projector is static") {
  const int dim = 12;
  FockOperator h = number_operator(dim) + FockOperator::identity(dim) * Cx(0.5, 0.0);
  FockOperator p0 = testsupport::rank_one(basis_vector(dim, 0));
  FockOperator c = class_operator({{p0, kPi}}, h);
  CHECK((c.matrix() - p0.matrix()).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("class operator rejects bad input") {
  const int dim = 4;
  FockOperator p0 = testsupport::rank_one(basis_vector(dim, 0));
  FockOperator h = FockOperator::zero(dim);
  CHECK_THROWS_AS(class_operator({{p0, 1.0}, {p0, 0.5}}, h), ValidationError);
  FockOperator small = FockOperator::identity(3);
  CHECK_THROWS_AS(class_operator({{small, 0.0}}, h), DimensionError);
}

TEST_CASE("two-slit off-diagonal element") {
  // |+> prepared, slit projectors at t1, common screen projector at t2.
  const int dim = 2;
  Eigen::VectorXcd plus(2);
  plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  FockOperator rho = testsupport::rank_one(plus);
  FockOperator pplus = testsupport::rank_one(plus);
  FockOperator p0 = testsupport::rank_one(basis_vector(dim, 0));
  FockOperator p1 = testsupport::rank_one(basis_vector(dim, 1));
  FockOperator h = FockOperator::zero(dim);
  FockOperator c_alpha = class_operator({{p0, 1.0}, {pplus, 2.0}}, h);
  FockOperator c_beta = class_operator({{p1, 1.0}, {pplus, 2.0}}, h);
  Cx phi = decoherence_trace(c_alpha, rho, c_beta);
  CHECK(phi.real() == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(std::abs(phi.imag()) <= 1e-14);
}

TEST_CASE("decoherence trace axioms at the operator level") {
  const int dim = 8;
  Rng rng(20240811);
  FockOperator id = FockOperator::identity(dim);
  for (int trial = 0; trial < 25; ++trial) {
    FockOperator rho = testsupport::random_density(dim, rng);
    FockOperator c1 = testsupport::random_contraction(dim, rng);
    FockOperator c2 = testsupport::random_contraction(dim, rng);

    // null triviality
    Cx z = decoherence_trace(FockOperator::zero(dim), rho, c2);
    CHECK(std::abs(z) == 0.0);
    // hermiticity
    Cx ab = decoherence_trace(c1, rho, c2);
    Cx ba = decoherence_trace(c2, rho, c1);
    CHECK(std::abs(ba - std::conj(ab)) <= 1e-13);
    // positivity on the diagonal
    Cx aa = decoherence_trace(c1, rho, c1);
    CHECK(aa.real() >= -1e-13);
    CHECK(std::abs(aa.imag()) <= 1e-13);
    // normalization with trivial class operators
    Cx norm = decoherence_trace(id, rho, id);
    CHECK(std::abs(norm - Cx(1.0, 0.0)) <= 1e-12);
    // additivity in the first slot
    Cx sum = decoherence_trace(c1 + c2, rho, c2);
    CHECK(std::abs(sum - decoherence_trace(c1, rho, c2) -
                   decoherence_trace(c2, rho, c2)) <= 1e-12);
    // boundedness for contractions
    CHECK(std::abs(ab) <= 1.0 + 1e-12);
  }
}

TEST_CASE("reduce_state on a projector") {
  const int dim = 2;
  FockOperator rho = FockOperator::identity(dim) * Cx(0.5, 0.0);
  FockOperator p0 = testsupport::rank_one(basis_vector(dim, 0));
  FockOperator reduced = reduce_state(rho, p0);
  CHECK((reduced.matrix() - p0.matrix()).cwiseAbs().maxCoeff() <= 1e-14);

  FockOperator p1 = testsupport::rank_one(basis_vector(dim, 1));
  FockOperator pure0 = p0;
  CHECK_THROWS_AS(reduce_state(pure0, p1), ZeroMeasureError);
}

TEST_CASE("poisson tail estimates") {
  CHECK(poisson_upper_tail(4.0, 0) == doctest::Approx(1.0));
  // P(X >= 1) = 1 - e^{-lambda}
  CHECK(poisson_upper_tail(2.0, 1) ==
        doctest::Approx(1.0 - std::exp(-2.0)).epsilon(1e-12));
  CHECK(poisson_upper_tail(4.0, 48) <= 1e-30);
  CHECK(poisson_upper_tail(18.0, 48) <= 1e-8);
  CHECK(poisson_upper_tail(18.0, 48) >= 1e-12);
}

TEST_CASE("top level weight flags states near the cutoff") {
  const int dim = 10;
  Eigen::VectorXcd low = basis_vector(dim, 0);
  Eigen::VectorXcd high = basis_vector(dim, dim - 1);
  CHECK(top_level_weight(low) == 0.0);
  CHECK(top_level_weight(high) == doctest::Approx(1.0));
}

TEST_CASE("tensor product matches manual kron on a small case") {
  FockOperator a = number_operator(2);
  FockOperator b = FockOperator::identity(3);
  FockOperator t = tensor_product(a, b);
  CHECK(t.dim() == 6);
  for (int i = 0; i < 3; ++i) {
    CHECK(t.matrix()(3 + i, 3 + i) == Cx(1.0, 0.0));
    CHECK(std::abs(t.matrix()(i, i)) == 0.0);
  }
}
