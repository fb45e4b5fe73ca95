#include "qproc/polysymbol.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace qproc::psym {

namespace {

// <n + k - j | a^j (a†)^k | n> in the untruncated space. Entries with
// row or column outside the truncation are simply not materialized.
double anti_normal_element(int j, int k, int n) {
  return std::exp(0.5 * (std::lgamma(n + k + 1.0) - std::lgamma(n + 1.0)) +
                  0.5 * (std::lgamma(n + k + 1.0) -
                         std::lgamma(n + k - j + 1.0)));
}

}  // namespace

PhaseSpacePoly::PhaseSpacePoly(std::vector<Monomial> terms)
    : terms_(std::move(terms)) {
  for (const Monomial& t : terms_) {
    if (t.j < 0 || t.k < 0) {
      throw ValidationError("symbol monomials need nonnegative exponents");
    }
  }
  normalize();
}

void PhaseSpacePoly::normalize() {
  std::map<std::pair<int, int>, Cx> merged;
  double peak = 0.0;
  for (const Monomial& t : terms_) {
    merged[{t.j + t.k, t.k}] += t.coeff;
  }
  for (const auto& [key, coeff] : merged) {
    peak = std::max(peak, std::abs(coeff));
  }
  terms_.clear();
  const double floor = peak * 1e-15;
  for (const auto& [key, coeff] : merged) {
    if (std::abs(coeff) > floor) {
      terms_.push_back({key.first - key.second, key.second, coeff});
    }
  }
}

PhaseSpacePoly PhaseSpacePoly::constant(Cx c) {
  return PhaseSpacePoly({{0, 0, c}});
}

PhaseSpacePoly PhaseSpacePoly::monomial(int j, int k, Cx coeff) {
  return PhaseSpacePoly({{j, k, coeff}});
}

PhaseSpacePoly PhaseSpacePoly::position() {
  const double r = 1.0 / std::sqrt(2.0);
  return PhaseSpacePoly({{1, 0, Cx(r, 0.0)}, {0, 1, Cx(r, 0.0)}});
}

PhaseSpacePoly PhaseSpacePoly::momentum() {
  const double r = 1.0 / std::sqrt(2.0);
  return PhaseSpacePoly({{1, 0, Cx(0.0, -r)}, {0, 1, Cx(0.0, r)}});
}

PhaseSpacePoly PhaseSpacePoly::operator+(const PhaseSpacePoly& o) const {
  std::vector<Monomial> all = terms_;
  all.insert(all.end(), o.terms_.begin(), o.terms_.end());
  return PhaseSpacePoly(std::move(all));
}

PhaseSpacePoly PhaseSpacePoly::operator-(const PhaseSpacePoly& o) const {
  std::vector<Monomial> all = terms_;
  for (const Monomial& t : o.terms_) {
    all.push_back({t.j, t.k, -t.coeff});
  }
  return PhaseSpacePoly(std::move(all));
}

PhaseSpacePoly PhaseSpacePoly::operator*(const PhaseSpacePoly& o) const {
  std::vector<Monomial> prod;
  prod.reserve(terms_.size() * o.terms_.size());
  for (const Monomial& s : terms_) {
    for (const Monomial& t : o.terms_) {
      prod.push_back({s.j + t.j, s.k + t.k, s.coeff * t.coeff});
    }
  }
  return PhaseSpacePoly(std::move(prod));
}

PhaseSpacePoly PhaseSpacePoly::operator*(Cx s) const {
  std::vector<Monomial> scaled = terms_;
  for (Monomial& t : scaled) {
    t.coeff *= s;
  }
  return PhaseSpacePoly(std::move(scaled));
}

Cx PhaseSpacePoly::evaluate(const coh::PhasePoint& z) const {
  const Cx a = z.alpha();
  const Cx ac = std::conj(a);
  Cx acc = Cx(0.0, 0.0);
  for (const Monomial& t : terms_) {
    Cx term = t.coeff;
    for (int p = 0; p < t.j; ++p) term *= a;
    for (int p = 0; p < t.k; ++p) term *= ac;
    acc += term;
  }
  return acc;
}

int PhaseSpacePoly::degree() const {
  int deg = -1;
  for (const Monomial& t : terms_) {
    deg = std::max(deg, t.j + t.k);
  }
  return deg;
}

double PhaseSpacePoly::distance(const PhaseSpacePoly& o) const {
  std::map<std::pair<int, int>, Cx> diff;
  for (const Monomial& t : terms_) diff[{t.j, t.k}] += t.coeff;
  for (const Monomial& t : o.terms_) diff[{t.j, t.k}] -= t.coeff;
  double d = 0.0;
  for (const auto& [key, coeff] : diff) {
    d = std::max(d, std::abs(coeff));
  }
  return d;
}

fock::FockOperator quantize(const PhaseSpacePoly& f, int dim) {
  if (dim < 2) {
    throw DimensionError("quantize needs dim >= 2");
  }
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (const Monomial& t : f.terms()) {
    const int d = t.k - t.j;
    for (int n = std::max(0, -d); n < dim; ++n) {
      const int row = n + d;
      if (row < 0 || row >= dim) continue;
      m(row, n) += t.coeff * anti_normal_element(t.j, t.k, n);
    }
  }
  return fock::FockOperator(std::move(m));
}

SymbolFit extract_symbol(const fock::FockOperator& op, int max_degree,
                         int window) {
  if (max_degree < 0) {
    throw ValidationError("extract_symbol needs max_degree >= 0");
  }
  if (window <= max_degree || window + max_degree > op.dim()) {
    throw ValidationError(
        "extract_symbol window must exceed max_degree and fit the operator");
  }
  const Eigen::MatrixXcd& m = op.matrix();
  std::vector<Monomial> terms;
  for (int d = -max_degree; d <= max_degree; ++d) {
    // unknowns: coefficients of a^j (a†)^{j+d} with j+k = 2j+d <= max_degree
    const int j_lo = std::max(0, -d);
    const int j_hi = (max_degree - d) / 2;
    if (j_hi < j_lo) continue;
    const int n_lo = std::max(0, -d);
    const int rows = window - n_lo;
    const int cols = j_hi - j_lo + 1;
    Eigen::MatrixXd a(rows, cols);
    Eigen::VectorXcd b(rows);
    for (int r = 0; r < rows; ++r) {
      const int n = n_lo + r;
      b[r] = m(n + d, n);
      for (int c = 0; c < cols; ++c) {
        const int j = j_lo + c;
        a(r, c) = anti_normal_element(j, j + d, n);
      }
    }
    // real and imaginary parts decouple in the least-squares problem
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::VectorXd cr = qr.solve(b.real().eval());
    Eigen::VectorXd ci = qr.solve(b.imag().eval());
    for (int c = 0; c < cols; ++c) {
      terms.push_back({j_lo + c, j_lo + c + d, Cx(cr[c], ci[c])});
    }
  }
  SymbolFit fit;
  fit.symbol = PhaseSpacePoly(std::move(terms));
  const Eigen::MatrixXcd back = quantize(fit.symbol, op.dim()).matrix();
  fit.residual =
      (m.topLeftCorner(window, window) - back.topLeftCorner(window, window))
          .cwiseAbs()
          .maxCoeff();
  return fit;
}

}  // namespace qproc::psym
