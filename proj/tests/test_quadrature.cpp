#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qproc/quadrature.hpp"

using namespace qproc;
using namespace qproc::quad;

namespace {
double integrate(const Rule& r, double (*f)(double)) {
  double acc = 0.0;
  for (std::size_t k = 0; k < r.nodes.size(); ++k) {
    acc += r.weights[k] * f(r.nodes[k]);
  }
  return acc;
}
}  // namespace

TEST_CASE("gauss legendre weights sum to the interval length") {
  for (int n : {1, 2, 5, 20, 64}) {
    const Rule& r = gauss_legendre(n);
    double sum = 0.0;
    for (double w : r.weights) sum += w;
    CHECK(sum == doctest::Approx(2.0).epsilon(1e-14));
    REQUIRE(r.nodes.size() == static_cast<std::size_t>(n));
  }
}

TEST_CASE("nodes are ascending and symmetric about the origin") {
  const Rule& r = gauss_legendre(13);
  for (std::size_t k = 1; k < r.nodes.size(); ++k) {
    CHECK(r.nodes[k] > r.nodes[k - 1]);
  }
  for (std::size_t k = 0; k < r.nodes.size(); ++k) {
    CHECK(r.nodes[k] == doctest::Approx(-r.nodes[12 - k]).epsilon(1e-15));
    CHECK(r.weights[k] == doctest::Approx(r.weights[12 - k]).epsilon(1e-15));
  }
  CHECK(r.nodes[6] == 0.0);
}

TEST_CASE("degree 2n-1 polynomials integrate exactly") {
  const Rule& r = gauss_legendre(4);
  CHECK(integrate(r, [](double x) { return x * x * x * x * x * x; }) ==
        doctest::Approx(2.0 / 7.0).epsilon(1e-14));
  CHECK(std::abs(integrate(r, [](double x) {
          return x * x * x * x * x * x * x;
        })) <= 1e-15);
  // degree 2n misses
  const double got = integrate(r, [](double x) { return std::pow(x, 8); });
  CHECK(std::abs(got - 2.0 / 9.0) > 1e-6);
}

TEST_CASE("gaussian integral over a wide interval") {
  Rule r = on_interval(gauss_legendre(40), -6.0, 6.0);
  const double got = integrate(r, [](double x) { return std::exp(-x * x); });
  CHECK(got == doctest::Approx(std::sqrt(kPi)).epsilon(1e-12));
}

TEST_CASE("interval mapping keeps polynomial exactness") {
  Rule r = on_interval(gauss_legendre(3), 1.0, 3.0);
  CHECK(integrate(r, [](double x) { return x * x; }) ==
        doctest::Approx(26.0 / 3.0).epsilon(1e-14));
  double len = 0.0;
  for (double w : r.weights) len += w;
  CHECK(len == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("single point rule is the midpoint") {
  const Rule& r = gauss_legendre(1);
  CHECK(r.nodes[0] == 0.0);
  CHECK(r.weights[0] == 2.0);
}

TEST_CASE("invalid orders are rejected") {
  CHECK_THROWS_AS(gauss_legendre(0), ValidationError);
  CHECK_THROWS_AS(on_interval(gauss_legendre(2), 1.0, 1.0), ValidationError);
  CHECK_THROWS_AS(trapezoid(1, 0.0, 1.0), ValidationError);
}

TEST_CASE("trapezoid rule integrates linear functions exactly") {
  Rule r = trapezoid(7, 0.0, 3.0);
  double len = 0.0;
  for (double w : r.weights) len += w;
  CHECK(len == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(integrate(r, [](double x) { return 2.0 * x + 1.0; }) ==
        doctest::Approx(12.0).epsilon(1e-14));
  CHECK(r.nodes.front() == 0.0);
  CHECK(r.nodes.back() == doctest::Approx(3.0));
}

TEST_CASE("trapezoid error falls off quadratically") {
  auto err = [](int n) {
    Rule r = trapezoid(n, 0.0, kPi);
    double acc = 0.0;
    for (std::size_t k = 0; k < r.nodes.size(); ++k) {
      acc += r.weights[k] * std::sin(r.nodes[k]);
    }
    return std::abs(acc - 2.0);
  };
  const double e1 = err(11);
  const double e2 = err(21);
  CHECK(e2 < e1);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.1));
}
