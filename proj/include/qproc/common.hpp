#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace qproc {

using Cx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Exceptions are split into two families so callers can map failures onto
// process exit codes without parsing messages: ValidationError covers bad
// arguments and malformed configuration, NumericalError covers failures
// detected while computing (truncation overflow, non-convergent quadrature,
// degenerate inputs discovered at run time).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class WrongEngineError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnsupportedObservableError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Estimated Fock-space weight beyond the cutoff was too large to trust.
class TruncationOverflowError : public NumericalError {
 public:
  TruncationOverflowError(const std::string& what, double tail)
      : NumericalError(what), tail_mass(tail) {}
  double tail_mass;
};

class ZeroMeasureError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class RegionTooSmallError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class QuadratureError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class PhaseUndeterminedError : public NumericalError {
 public:
  PhaseUndeterminedError(const std::string& what, double rho)
      : NumericalError(what), modulus_estimate(rho) {}
  double modulus_estimate;
};

class SubspaceLeakageError : public NumericalError {
 public:
  SubspaceLeakageError(const std::string& what, double defect_)
      : NumericalError(what), defect(defect_) {}
  double defect;
};

class DegenerateKernelError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class TimeStepError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Deterministic RNG used by randomized checks. Doubles are built from the
// raw 64-bit stream (not std::uniform_real_distribution) so that a seed
// reproduces the same sequence on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  std::uint64_t integer(std::uint64_t n) {
    // modulo bias is irrelevant for the small n used in tests
    return gen_() % n;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace qproc
