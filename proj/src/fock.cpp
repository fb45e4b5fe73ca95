#include "qproc/fock.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

namespace qproc::fock {

FockOperator::FockOperator(Eigen::MatrixXcd m) : mat_(std::move(m)) {
  if (mat_.rows() != mat_.cols()) {
    throw DimensionError("FockOperator requires a square matrix");
  }
  if (mat_.rows() < 2) {
    throw DimensionError("FockOperator requires dim >= 2");
  }
}

FockOperator FockOperator::zero(int dim) {
  return FockOperator(Eigen::MatrixXcd::Zero(dim, dim));
}

FockOperator FockOperator::identity(int dim) {
  return FockOperator(Eigen::MatrixXcd::Identity(dim, dim));
}

bool FockOperator::is_hermitian(double tol) const {
  return (mat_ - mat_.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

namespace {
void require_same_dim(const FockOperator& a, const FockOperator& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("operator dimensions differ: " +
                         std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()));
  }
}
}  // namespace

FockOperator FockOperator::operator+(const FockOperator& o) const {
  require_same_dim(*this, o);
  return FockOperator(mat_ + o.mat_);
}

FockOperator FockOperator::operator-(const FockOperator& o) const {
  require_same_dim(*this, o);
  return FockOperator(mat_ - o.mat_);
}

FockOperator FockOperator::operator*(const FockOperator& o) const {
  require_same_dim(*this, o);
  return FockOperator(mat_ * o.mat_);
}

FockOperator FockOperator::operator*(Cx s) const {
  return FockOperator(mat_ * s);
}

LadderPair ladder_operators(int dim) {
  if (dim < 2) {
    throw DimensionError("ladder operators need dim >= 2");
  }
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) {
    a(n - 1, n) = std::sqrt(static_cast<double>(n));
  }
  return {FockOperator(a), FockOperator(a.adjoint())};
}

FockOperator number_operator(int dim) {
  auto [a, adag] = ladder_operators(dim);
  return adag * a;
}

FockOperator position_operator(int dim) {
  auto [a, adag] = ladder_operators(dim);
  return (a + adag) * Cx(1.0 / std::sqrt(2.0), 0.0);
}

FockOperator momentum_operator(int dim) {
  auto [a, adag] = ladder_operators(dim);
  return (adag - a) * Cx(0.0, 1.0 / std::sqrt(2.0));
}

FockOperator parity_operator(int dim) {
  Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(dim, dim);
  for (int n = 0; n < dim; ++n) {
    p(n, n) = (n % 2 == 0) ? 1.0 : -1.0;
  }
  return FockOperator(p);
}

HermitianEvolution::HermitianEvolution(const FockOperator& hamiltonian) {
  if (!hamiltonian.is_hermitian(1e-10)) {
    throw ValidationError("evolution requires a Hermitian Hamiltonian");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(hamiltonian.matrix());
  if (solver.info() != Eigen::Success) {
    throw NumericalError("Hermitian eigendecomposition failed");
  }
  evals_ = solver.eigenvalues();
  evecs_ = solver.eigenvectors();
}

Eigen::MatrixXcd HermitianEvolution::unitary(double t) const {
  Eigen::VectorXcd phases(evals_.size());
  for (Eigen::Index k = 0; k < evals_.size(); ++k) {
    phases[k] = std::exp(Cx(0.0, -evals_[k] * t));
  }
  return evecs_ * phases.asDiagonal() * evecs_.adjoint();
}

Eigen::VectorXcd HermitianEvolution::apply(double t,
                                           const Eigen::VectorXcd& v) const {
  Eigen::VectorXcd w = evecs_.adjoint() * v;
  for (Eigen::Index k = 0; k < evals_.size(); ++k) {
    w[k] *= std::exp(Cx(0.0, -evals_[k] * t));
  }
  return evecs_ * w;
}

Eigen::MatrixXcd HermitianEvolution::apply(double t,
                                           const Eigen::MatrixXcd& m) const {
  Eigen::MatrixXcd w = evecs_.adjoint() * m;
  for (Eigen::Index k = 0; k < evals_.size(); ++k) {
    w.row(k) *= std::exp(Cx(0.0, -evals_[k] * t));
  }
  return evecs_ * w;
}

Eigen::MatrixXcd expm(const Eigen::MatrixXcd& m) { return m.exp(); }

FockOperator class_operator(const TimedOperatorSequence& ops,
                            const FockOperator& hamiltonian, double t0) {
  return class_operator(ops, HermitianEvolution(hamiltonian), t0);
}

FockOperator class_operator(const TimedOperatorSequence& ops,
                            const HermitianEvolution& evolution, double t0) {
  if (ops.empty()) {
    throw ValidationError("class_operator needs at least one entry");
  }
  const int dim = evolution.dim();
  for (std::size_t k = 0; k < ops.size(); ++k) {
    if (ops[k].op.dim() != dim) {
      throw DimensionError("class_operator: operator dim mismatch");
    }
    if (k > 0 && ops[k].time < ops[k - 1].time) {
      throw ValidationError("class_operator: times must be ascending");
    }
  }
  // Accumulate U†(s_k) A_k U(s_k) ... acting on the identity. Each step is
  // applied as U(s)*c, then A*, then U(-s)*, which keeps everything in the
  // eigenbasis of H and avoids forming the unitaries.
  Eigen::MatrixXcd c = Eigen::MatrixXcd::Identity(dim, dim);
  for (const auto& entry : ops) {
    const double s = entry.time - t0;
    const Eigen::MatrixXcd hit = entry.op.matrix() * evolution.apply(s, c);
    c = evolution.apply(-s, hit);
  }
  return FockOperator(c);
}

Cx decoherence_trace(const FockOperator& c_alpha, const FockOperator& rho,
                     const FockOperator& c_beta) {
  require_same_dim(c_alpha, rho);
  require_same_dim(rho, c_beta);
  return (c_alpha.matrix() * rho.matrix() * c_beta.matrix().adjoint()).trace();
}

FockOperator reduce_state(const FockOperator& rho, const FockOperator& effect,
                          double weight_floor) {
  require_same_dim(rho, effect);
  const Cx weight = (rho.matrix() * effect.matrix()).trace();
  if (std::abs(weight) <= weight_floor || weight.real() <= 0.0) {
    throw ZeroMeasureError("reduce_state: conditioning weight is not positive");
  }
  Eigen::MatrixXcd reduced =
      effect.matrix() * rho.matrix() * effect.matrix() / weight.real();
  return FockOperator(std::move(reduced));
}

double top_level_weight(const FockOperator& rho) {
  const int d = rho.dim();
  const double scale = std::max(1.0, std::abs(rho.matrix().trace()));
  const double top =
      std::abs(rho.matrix()(d - 1, d - 1)) + std::abs(rho.matrix()(d - 2, d - 2));
  return top / scale;
}

double top_level_weight(const Eigen::VectorXcd& state) {
  const Eigen::Index d = state.size();
  const double norm2 = std::max(1e-300, state.squaredNorm());
  return (std::norm(state[d - 1]) + std::norm(state[d - 2])) / norm2;
}

double poisson_upper_tail(double lambda, int n) {
  if (lambda <= 0.0) return n <= 0 ? 1.0 : 0.0;
  if (n <= 0) return 1.0;
  // Sum the upper tail directly so deep tails keep their relative accuracy
  // instead of cancelling against 1. Assumes lambda <= a few hundred so the
  // leading term does not underflow while the true tail is still relevant.
  double term =
      std::exp(-lambda + n * std::log(lambda) - std::lgamma(n + 1.0));
  double tail = 0.0;
  for (int k = n; k < n + 100000; ++k) {
    tail += term;
    term *= lambda / (k + 1.0);
    if (k > lambda && term < tail * 1e-18 + 1e-320) break;
  }
  return std::min(1.0, tail);
}

FockOperator tensor_product(const FockOperator& a, const FockOperator& b) {
  const int da = a.dim(), db = b.dim();
  Eigen::MatrixXcd out(da * db, da * db);
  for (int i = 0; i < da; ++i) {
    for (int j = 0; j < da; ++j) {
      out.block(i * db, j * db, db, db) = a.matrix()(i, j) * b.matrix();
    }
  }
  return FockOperator(std::move(out));
}

}  // namespace qproc::fock
