#pragma once

// Polynomial symbols on phase space and their anti-normal quantization.
// A symbol is a finite sum of monomials alpha^j conj(alpha)^k; on this
// class the map f -> int dz f(z)|z><z| is invertible and equals the
// operator sum of a^j (a†)^k with the same coefficients, which is what
// quantize() builds and extract_symbol() inverts.

#include <vector>

#include "qproc/coherent.hpp"
#include "qproc/common.hpp"
#include "qproc/fock.hpp"

namespace qproc::psym {

struct Monomial {
  int j = 0;  // power of alpha
  int k = 0;  // power of conj(alpha)
  Cx coeff = Cx(0.0, 0.0);
};

class PhaseSpacePoly {
 public:
  PhaseSpacePoly() = default;
  explicit PhaseSpacePoly(std::vector<Monomial> terms);

  static PhaseSpacePoly constant(Cx c);
  static PhaseSpacePoly monomial(int j, int k, Cx coeff);
  // x = (alpha + conj(alpha))/sqrt(2)
  static PhaseSpacePoly position();
  // xi = (alpha - conj(alpha))/(i sqrt(2))
  static PhaseSpacePoly momentum();

  PhaseSpacePoly operator+(const PhaseSpacePoly& o) const;
  PhaseSpacePoly operator-(const PhaseSpacePoly& o) const;
  PhaseSpacePoly operator*(const PhaseSpacePoly& o) const;
  PhaseSpacePoly operator*(Cx s) const;

  Cx evaluate(const coh::PhasePoint& z) const;
  int degree() const;  // max over terms of j + k; -1 for the zero symbol
  bool empty() const { return terms_.empty(); }

  // Canonical form: unique (j, k) pairs, sorted by (j + k, k), zero
  // coefficients dropped at tolerance 1e-15 relative to the largest.
  const std::vector<Monomial>& terms() const { return terms_; }

  // Max coefficient difference against another symbol, term by term.
  double distance(const PhaseSpacePoly& o) const;

 private:
  void normalize();
  std::vector<Monomial> terms_;
};

// Anti-normal quantization sum_jk c_jk a^j (a†)^k at the given truncation.
fock::FockOperator quantize(const PhaseSpacePoly& f, int dim);

struct SymbolFit {
  PhaseSpacePoly symbol;
  // Max element mismatch between the operator and quantize(symbol) on the
  // level window used for the fit. Zero within rounding when the operator
  // is exactly a quantized polynomial of the allowed degree.
  double residual = 0.0;
};

// Inverts quantize() on the window of low Fock levels, degree by diagonal
// offset. window rows per offset must exceed the coefficient count, which
// needs dim >= window + max_degree and window > max_degree/2.
SymbolFit extract_symbol(const fock::FockOperator& op, int max_degree,
                         int window);

}  // namespace qproc::psym
