#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "metaeq/risk.hpp"
#include "metaeq/solver.hpp"
#include "test_support.hpp"

using namespace metaeq;
using metaeq::testing::scalar;

namespace {

RiskSpec<double> symmetric_instance(Eigen::Index k) {
  const Matrix eye = Matrix::Identity(k, k);
  return build_risk_spec(build_model<double>(eye, eye, Matrix::Zero(k, k)));
}

}  // namespace

TEST_CASE("AMSE at the chart endpoints") {
  const Matrix v1 = random_spd<double>(2, 1, 0.5);
  const Matrix v2 = random_spd<double>(2, 2, 0.5);
  const Matrix c = 0.1 * Matrix::Ones(2, 2);
  const Vector delta{{0.3, -0.7}};
  const auto spec = build_risk_spec(
      build_model<double>(v1, v2, c, Vector::Zero(2), delta));
  CHECK((amse(spec, Matrix::Zero(2, 2)) - v1).norm() <= 1e-14);
  CHECK((amse(spec, Matrix::Identity(2, 2)) - (v2 + spec.lambda())).norm() <=
        1e-14);
}

TEST_CASE("scalar AMSE and risk values") {
  const auto spec = canonical_instance();
  CHECK(amse(spec, scalar(0.5))(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(risk(spec, scalar(testing::kCanonicalWOpt)) ==
        doctest::Approx(testing::kCanonicalRisk).epsilon(1e-15));

  const auto sym = symmetric_instance(2);
  CHECK(risk(sym, Matrix::Zero(2, 2)) == doctest::Approx(2.0));
  CHECK(risk(sym, Matrix(0.5 * Matrix::Identity(2, 2))) == doctest::Approx(1.0));
  CHECK_THROWS_AS(risk(sym, Matrix::Zero(3, 3)), Error);
}

TEST_CASE("gradient hand values") {
  const auto spec = canonical_instance();
  CHECK(gradient(spec, scalar(0))(0, 0) == doctest::Approx(-3.0));
  CHECK(std::abs(gradient(spec, scalar(testing::kCanonicalWOpt))(0, 0)) <= 1e-15);
  CHECK(fd_gradient(spec, scalar(0.0), 1e-6)(0, 0) == doctest::Approx(-3.0));

  const auto sym = symmetric_instance(2);
  CHECK(gradient(sym, Matrix(0.5 * Matrix::Identity(2, 2))).norm() <= 1e-15);
  CHECK_THROWS_AS(gradient(sym, Matrix::Zero(1, 2)), Error);
}

TEST_CASE("analytic gradient agrees with central differences") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const int k = testing::kDims[seed % 4];
    const auto spec = testing::random_biased_instance(k, seed);
    std::mt19937_64 rng(seed + 5);
    const Matrix w = standard_normal(k, k, rng);
    const Matrix g = gradient(spec, w);
    const Matrix fd = fd_gradient(spec, w);
    CHECK((g - fd).norm() <= 1e-5 * (1 + g.norm()));
  }
}

TEST_CASE("central differences vanish at the optimum") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto spec = testing::random_biased_instance(3, seed);
    const Matrix w_opt = base_optimal_weights(spec);
    CHECK(fd_gradient(spec, w_opt).norm() <= 1e-6);
  }
}

TEST_CASE("central differences on the quadratic risk carry no truncation error") {
  // Halving h cannot quarter a residual that is already at the rounding
  // floor; the second-order check is done on log R in test_harness.
  const auto spec = testing::random_biased_instance(3, 8);
  std::mt19937_64 rng(1);
  const Matrix w = standard_normal(3, 3, rng);
  const Matrix g = gradient(spec, w);
  for (double h : {1e-1, 1e-2, 1e-3}) {
    CHECK((fd_gradient(spec, w, h) - g).norm() <= 1e-9 * (1 + g.norm()));
  }
}

TEST_CASE("generic central differences are second order") {
  Matrix w(2, 2);
  w << 0.3, -0.2, 0.1, 0.4;
  const auto f = [](const Matrix& x) { return std::exp(x.sum()) + x.squaredNorm(); };
  const Matrix exact = Matrix::Constant(2, 2, std::exp(w.sum())) + 2 * w;
  const double e1 = (fd_gradient_of<double>(f, w, 1e-2) - exact).norm();
  const double e2 = (fd_gradient_of<double>(f, w, 5e-3) - exact).norm();
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.01));
}

TEST_CASE("risk is exactly its second-order expansion") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const int k = testing::kDims[seed % 4];
    const auto spec = testing::random_biased_instance(k, seed);
    const Matrix h = hessian(spec).hessian;
    std::mt19937_64 rng(seed + 77);
    const Matrix w0 = standard_normal(k, k, rng);
    const Matrix w = standard_normal(k, k, rng);
    const Vector d = vec(Matrix(w - w0));
    const double predicted = risk(spec, w0) +
                             (gradient(spec, w0).array() * (w - w0).array()).sum() +
                             0.5 * d.dot(h * d);
    const double actual = risk(spec, w);
    CHECK(std::abs(actual - predicted) <= 1e-9 * (1 + std::abs(actual)));
  }
}

TEST_CASE("AMSE is symmetric positive semidefinite") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const int k = testing::kDims[seed % 4];
    const auto spec = testing::random_biased_instance(k, seed);
    std::mt19937_64 rng(seed);
    const Matrix w = 2.0 * standard_normal(k, k, rng);
    const Matrix a = amse(spec, w);
    CHECK(is_symmetric(a));
    CHECK(min_eigenvalue(a) >= -1e-10 * (1 + max_abs_entry(a)));
    CHECK(risk(spec, w) >= 0);
  }
}

TEST_CASE("general-bias AMSE reduces to the b1 = 0 form") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const int k = testing::kDims[seed % 4];
    const auto base = testing::random_biased_instance(k, seed);
    const auto& m = base.model();
    const auto spec = build_risk_spec(
        build_model<double>(m.v1(), m.v2(), m.c(), Vector::Zero(k), m.b2()),
        base.omega());
    std::mt19937_64 rng(seed);
    const Matrix w = standard_normal(k, k, rng);
    const Matrix iw = Matrix::Identity(k, k) - w;
    const Matrix reduced = iw * m.v1() * iw.transpose() + w * m.v2() * w.transpose() +
                           iw * m.c() * w.transpose() +
                           w * m.c().transpose() * iw.transpose() +
                           w * spec.lambda() * w.transpose();
    const Matrix general = amse(spec, w);
    CHECK((general - reduced).cwiseAbs().maxCoeff() <=
          1e-12 * (1 + reduced.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("Hessian examples and the Kronecker spectrum law") {
  const auto scalar_h = hessian(canonical_instance());
  CHECK(scalar_h.hessian.rows() == 1);
  CHECK(scalar_h.hessian(0, 0) == doctest::Approx(4.0));

  CHECK(hessian(symmetric_instance(2)).hessian == 4.0 * Matrix::Identity(4, 4));

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const int k = testing::kDims[seed % 4];
    const auto spec = testing::random_biased_instance(k, seed);
    const auto h = hessian(spec);
    const auto& cert = h.certificate;
    CHECK(cert.hessian_min_eigenvalue > 0);
    const double predicted =
        2 * cert.m_min_eigenvalue * cert.omega_inv_min_eigenvalue;
    CHECK(std::abs(cert.hessian_min_eigenvalue - predicted) <= 1e-8 * predicted);
  }
}

TEST_CASE("finite-difference Hessian matches 2(M kron Omega^-1)") {
  const auto spec = testing::random_biased_instance(2, 4);
  const Matrix h = hessian(spec).hessian;
  const Matrix w0 = Matrix::Zero(2, 2);
  const double step = 1e-4;
  Matrix fd(4, 4);
  for (int j = 0; j < 4; ++j) {
    Vector e = Vector::Zero(4);
    e(j) = step;
    const Matrix up = gradient(spec, Matrix(w0 + unvec(e, 2, 2)));
    const Matrix down = gradient(spec, Matrix(w0 - unvec(e, 2, 2)));
    fd.col(j) = vec(Matrix((up - down) / (2 * step)));
  }
  CHECK((fd - h).norm() <= 1e-8 * h.norm());
}
