// Independent oracles for the golden scalar case. Nothing here calls the
// library's risk, gradient or solver code; the frozen constants in
// test_support.hpp must agree with these computations.

#include <doctest.h>

#include <cmath>

#include "test_support.hpp"

namespace {

// K = 1, v1 = 2, v2 = 1, c = 0.5, no bias, Omega = 1, written out by hand
// from the variance of (1 - w) e1 + w e2.
double scalar_risk(double w) {
  const double v1 = 2.0, v2 = 1.0, c = 0.5;
  return (1 - w) * (1 - w) * v1 + w * w * v2 + 2 * (1 - w) * w * c;
}

struct GridMin {
  double arg;
  double value;
};

template <typename F>
GridMin grid_minimum(F&& f, double lo, double hi, double step) {
  GridMin best{lo, f(lo)};
  const long n = std::lround((hi - lo) / step);
  for (long i = 1; i <= n; ++i) {
    const double w = lo + static_cast<double>(i) * step;
    const double v = f(w);
    if (v < best.value) best = {w, v};
  }
  return best;
}

}  // namespace

TEST_CASE("grid-search oracle freezes the canonical optimum") {
  const GridMin m = grid_minimum(scalar_risk, -1.0, 2.0, 1e-6);
  CHECK(std::abs(m.arg - metaeq::testing::kCanonicalWOpt) <= 2e-6);
  CHECK(std::abs(m.value - metaeq::testing::kCanonicalRisk) <= 1e-11);
}

TEST_CASE("grid-search oracle on the Form-B pullback") {
  const GridMin m =
      grid_minimum([](double w) { return scalar_risk(1 - w); }, -1.0, 2.0, 1e-6);
  CHECK(std::abs(m.arg - (1 - metaeq::testing::kCanonicalWOpt)) <= 2e-6);
  CHECK(std::abs(m.value - metaeq::testing::kCanonicalRisk) <= 1e-11);
}

TEST_CASE("finite-difference derivatives of the scalar risk") {
  const double h = 1e-6;
  // R'(0) = -3
  CHECK(std::abs((scalar_risk(h) - scalar_risk(-h)) / (2 * h) + 3.0) <= 1e-6);
  // R'' = 4
  const double h2 = 1e-3;
  const double second =
      (scalar_risk(h2) - 2 * scalar_risk(0) + scalar_risk(-h2)) / (h2 * h2);
  CHECK(std::abs(second - 4.0) <= 1e-6);
  // AMSE at w = 0.5 is 1.0
  CHECK(std::abs(scalar_risk(0.5) - 1.0) <= 1e-15);
}

TEST_CASE("2x2 eigenvalues by the quadratic formula") {
  auto eig = [](double a, double b, double d) {
    const double tr = a + d, det = a * d - b * b;
    const double disc = std::sqrt(tr * tr / 4 - det);
    return std::pair{tr / 2 - disc, tr / 2 + disc};
  };
  const auto [lo, hi] = eig(2, 0.5, 1);
  CHECK(std::abs(lo - (3 - std::sqrt(2.0)) / 2) <= 1e-15);
  CHECK(lo > 0);
  CHECK(hi > lo);
  const auto [lo2, hi2] = eig(1, 2, 1);
  CHECK(lo2 == doctest::Approx(-1.0));
  CHECK(hi2 == doctest::Approx(3.0));
}
