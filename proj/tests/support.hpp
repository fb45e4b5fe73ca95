#pragma once

// Shared helpers for the unit tests. Random objects are always drawn from
// the deterministic qproc::Rng so failures reproduce from the seed alone.

#include <Eigen/Dense>

#include "qproc/common.hpp"
#include "qproc/fock.hpp"

namespace qproc::testsupport {

inline Eigen::MatrixXcd random_matrix(int dim, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXcd m(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      m(i, j) = Cx(rng.uniform(-scale, scale), rng.uniform(-scale, scale));
    }
  }
  return m;
}

// Random density matrix: G G† normalized to unit trace.
inline fock::FockOperator random_density(int dim, Rng& rng) {
  Eigen::MatrixXcd g = random_matrix(dim, rng);
  Eigen::MatrixXcd rho = g * g.adjoint();
  rho /= rho.trace().real();
  return fock::FockOperator(std::move(rho));
}

// Random positive contraction: positive semidefinite with operator norm <= 1.
inline fock::FockOperator random_contraction(int dim, Rng& rng) {
  Eigen::MatrixXcd g = random_matrix(dim, rng);
  Eigen::MatrixXcd pos = g * g.adjoint();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(pos);
  pos /= std::max(1e-12, es.eigenvalues().maxCoeff());
  return fock::FockOperator(std::move(pos));
}

inline fock::FockOperator rank_one(const Eigen::VectorXcd& v) {
  return fock::FockOperator(Eigen::MatrixXcd(v * v.adjoint()));
}

}  // namespace qproc::testsupport
