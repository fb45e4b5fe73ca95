#pragma once

// Truncated number-basis realization of one bosonic mode. Everything in
// here is dense Eigen linear algebra; the rest of the library treats this
// module as the reference oracle it cross-validates against.

#include <Eigen/Dense>
#include <vector>

#include "qproc/common.hpp"

namespace qproc::fock {

// Dense operator on the truncated basis {|0>, ..., |dim-1>}.
// Invariant: matrix is square with dim >= 2.
class FockOperator {
 public:
  FockOperator() = default;
  explicit FockOperator(Eigen::MatrixXcd m);

  static FockOperator zero(int dim);
  static FockOperator identity(int dim);

  int dim() const { return static_cast<int>(mat_.rows()); }
  const Eigen::MatrixXcd& matrix() const { return mat_; }
  Eigen::MatrixXcd& matrix() { return mat_; }

  FockOperator dagger() const { return FockOperator(mat_.adjoint()); }
  bool is_hermitian(double tol = 1e-12) const;

  FockOperator operator+(const FockOperator& o) const;
  FockOperator operator-(const FockOperator& o) const;
  FockOperator operator*(const FockOperator& o) const;
  FockOperator operator*(Cx s) const;

 private:
  Eigen::MatrixXcd mat_;
};

struct LadderPair {
  FockOperator lowering;  // a
  FockOperator raising;   // a†
};

// a|n> = sqrt(n)|n-1>, truncated at dim levels.
LadderPair ladder_operators(int dim);

FockOperator number_operator(int dim);    // a†a
FockOperator position_operator(int dim);  // (a + a†)/sqrt(2)
FockOperator momentum_operator(int dim);  // i(a† - a)/sqrt(2)

// Parity (-1)^n, diagonal.
FockOperator parity_operator(int dim);

// exp(-iHt) for Hermitian H, evaluated through the spectral decomposition
// so the result is unitary to rounding for every t. The decomposition is
// done once at construction; apply() is then a couple of dense products.
class HermitianEvolution {
 public:
  explicit HermitianEvolution(const FockOperator& hamiltonian);

  int dim() const { return static_cast<int>(evals_.size()); }
  const Eigen::VectorXd& eigenvalues() const { return evals_; }

  Eigen::MatrixXcd unitary(double t) const;
  Eigen::VectorXcd apply(double t, const Eigen::VectorXcd& v) const;
  // Convenience for batched propagator elements: returns U(t) * M.
  Eigen::MatrixXcd apply(double t, const Eigen::MatrixXcd& m) const;

 private:
  Eigen::VectorXd evals_;
  Eigen::MatrixXcd evecs_;
};

// Matrix exponential of a general (not necessarily anti-Hermitian) matrix.
// Used sparingly; scaling-and-squaring via Eigen's Pade expansion.
Eigen::MatrixXcd expm(const Eigen::MatrixXcd& m);

struct TimedOperator {
  FockOperator op;
  double time = 0.0;
};

using TimedOperatorSequence = std::vector<TimedOperator>;

// Heisenberg class operator for a history of single-time operators:
//   C = U†(t_n - t0) A_n U(t_n - t0) ... U†(t_1 - t0) A_1 U(t_1 - t0)
// with U(s) = exp(-iHs). Times must be ascending (ties allowed).
FockOperator class_operator(const TimedOperatorSequence& ops,
                            const FockOperator& hamiltonian, double t0 = 0.0);

// Same thing but with a prebuilt evolution, for callers that reuse H.
FockOperator class_operator(const TimedOperatorSequence& ops,
                            const HermitianEvolution& evolution,
                            double t0 = 0.0);

// Tr(C_alpha rho C_beta†).
Cx decoherence_trace(const FockOperator& c_alpha, const FockOperator& rho,
                     const FockOperator& c_beta);

// E rho E / Tr(rho E) for a positive effect E (projector or cell operator).
// Throws ZeroMeasureError when the conditioning weight is not positive.
FockOperator reduce_state(const FockOperator& rho, const FockOperator& effect,
                          double weight_floor = 1e-14);

// Diagonal weight an operator places on the top two truncation levels,
// relative to its trace norm proxy. Used as the leakage estimate attached
// to oracle results: anything above ~1e-6 means the cutoff was too tight.
double top_level_weight(const FockOperator& rho);
double top_level_weight(const Eigen::VectorXcd& state);

// Upper Poisson tail P(X >= n) for X ~ Poisson(lambda). This is the exact
// Fock weight a coherent state with |alpha|^2 = lambda carries at or above
// level n, and is what TruncationOverflowError reports.
double poisson_upper_tail(double lambda, int n);

// Kronecker product, row-major convention matching kron(A, B).
FockOperator tensor_product(const FockOperator& a, const FockOperator& b);

}  // namespace qproc::fock
