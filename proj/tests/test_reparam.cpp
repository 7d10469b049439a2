#include <doctest.h>

#include <random>

#include "metaeq/reparam.hpp"
#include "test_support.hpp"

using namespace metaeq;
using metaeq::testing::scalar;

TEST_CASE("apply examples") {
  std::mt19937_64 rng(3);
  const Matrix w = standard_normal(3, 3, rng);
  CHECK(apply(AffineMap<double>::identity(3), w) == w);

  const Matrix eye = Matrix::Identity(3, 3);
  CHECK(apply(AffineMap<double>::reflection(3), w) == eye - w);

  const Matrix eye2 = Matrix::Identity(2, 2);
  const AffineMap<double> t(2 * eye2, eye2, eye2);
  CHECK(apply(t, eye2) == 3 * eye2);

  CHECK_THROWS_AS(apply(t, Matrix::Zero(3, 3)), Error);
}

TEST_CASE("invert examples") {
  const auto refl = AffineMap<double>::reflection(4);
  CHECK(invert(refl) == refl);
  CHECK(invert(AffineMap<double>::identity(2)) == AffineMap<double>::identity(2));

  const Matrix eye = Matrix::Identity(2, 2);
  const auto inv = invert(AffineMap<double>(2 * eye, eye, eye));
  CHECK((inv.a() - 0.5 * eye).norm() <= 1e-15);
  CHECK((inv.b() - eye).norm() <= 1e-15);
  CHECK((inv.offset() + 0.5 * eye).norm() <= 1e-15);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + trial % 4;
    const auto t = random_affine_map<double>(k, rng);
    const Matrix w = standard_normal(k, k, rng);
    const Matrix round = apply(t, apply(invert(t), w));
    CHECK((round - w).norm() <= 1e-9 * (1 + w.norm()));
    const auto id = compose(t, invert(t));
    CHECK((id.a() - Matrix::Identity(k, k)).norm() <= 1e-9);
    CHECK(id.offset().norm() <= 1e-9 * (1 + t.offset().norm()));
  }
}

TEST_CASE("ill-conditioned maps are refused") {
  Matrix a(2, 2);
  a << 1, 1, 1, 1 + 1e-14;
  const Matrix eye = Matrix::Identity(2, 2);
  try {
    AffineMap<double>(a, eye, eye);
    FAIL("expected IllConditioned");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IllConditioned);
  }
  CHECK_THROWS_AS(AffineMap<double>(eye, Matrix::Zero(2, 2), eye), Error);
  CHECK_THROWS_AS(AffineMap<double>(eye, eye, Matrix::Zero(3, 3)), Error);
}

TEST_CASE("charts") {
  const auto b = Chart<double>::form_b(3);
  CHECK(b.kind() == ChartKind::FormB);
  CHECK(b.to_chart() == b.from_chart());
  CHECK(Chart<double>::form_a(2).to_chart() == AffineMap<double>::identity(2));
  CHECK(to_string(ChartKind::General) == "general");
}

TEST_CASE("pullback agrees with the base risk pointwise") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const int k = testing::kDims[seed % 4];
    const auto spec = testing::random_biased_instance(k, seed);
    std::mt19937_64 rng(seed + 31);
    const auto t = random_affine_map<double>(k, rng);
    const Matrix w = standard_normal(k, k, rng);
    const double base = risk(spec, w);
    const double pulled = pullback_risk(spec, t).value(apply(t, w));
    CHECK(std::abs(base - pulled) <= 1e-10 * (1 + std::abs(base)));
  }

  const auto spec = testing::random_biased_instance(2, 5);
  const auto same = pullback_risk(spec, AffineMap<double>::identity(2));
  std::mt19937_64 rng(5);
  const Matrix w = standard_normal(2, 2, rng);
  CHECK(same.value(w) == risk(spec, w));
}

TEST_CASE("Form-B pullback on the canonical instance") {
  const auto spec = canonical_instance();
  const auto b = pullback_risk(spec, Chart<double>::form_b(1));
  CHECK(b.value(scalar(0.25)) == doctest::Approx(0.875).epsilon(1e-15));
  for (int i = 0; i <= 100; ++i) {
    const double w = -0.5 + 0.02 * i;
    const double f = risk(spec, scalar(1 - w));
    CHECK(std::abs(b.value(scalar(w)) - f) <= 1e-12 * (1 + f));
  }
}

TEST_CASE("Form-B gradient relation") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int k = testing::kDims[seed % 4];
    const auto spec = testing::random_biased_instance(k, seed);
    const auto b = pullback_risk(spec, Chart<double>::form_b(k));
    std::mt19937_64 rng(seed);
    const Matrix w = standard_normal(k, k, rng);
    const Matrix eye = Matrix::Identity(k, k);
    const Matrix lhs = gradient(spec, w);
    const Matrix rhs = -b.gradient(eye - w);
    CHECK((lhs - rhs).norm() <= 1e-12 * (1 + lhs.norm()));
  }
}

TEST_CASE("zero gradient stays zero") {
  std::mt19937_64 rng(2);
  const auto t = random_affine_map<double>(3, rng);
  CHECK(transform_gradient(t, Matrix::Zero(3, 3)).norm() == 0.0);
  CHECK_THROWS_AS(transform_gradient(t, Matrix::Zero(2, 2)), Error);
}

TEST_CASE("gradient transformation law against central differences") {
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const int k = 1 + static_cast<int>(trial % 3);
    const auto spec = testing::random_biased_instance(k, trial + 200);
    std::mt19937_64 rng(trial + 400);
    const auto t = random_affine_map<double>(k, rng);
    const Matrix w = standard_normal(k, k, rng);

    // R1 = R2 o T with R2 the base risk, so grad R1(W) = A^T grad R2(T W) B^T.
    const Matrix image = apply(t, w);
    const Matrix via_law = transform_gradient(t, fd_gradient(spec, image));
    const auto composed = [&](const Matrix& x) { return risk(spec, apply(t, x)); };
    const Matrix direct = fd_gradient_of<double>(composed, w, 0.0);
    CHECK(relative_frobenius_error(direct, via_law) <= 1e-8 * (1 + image.norm()));

    // The pullback's analytic gradient against its own central differences.
    const auto pulled = pullback_risk(spec, t);
    const Matrix g = pulled.gradient(w);
    CHECK(relative_frobenius_error(g, pulled.fd_gradient(w)) <= 1e-8 * (1 + w.norm()));
    // Mapping the pulled-back gradient forward recovers the base one.
    const Matrix base = gradient(spec, pulled.to_base(w));
    CHECK(relative_frobenius_error(base, transform_gradient(t, g)) <= 1e-8);
  }
}

TEST_CASE("reflection is an exact involution") {
  std::mt19937_64 rng(1);
  const auto t = AffineMap<double>::reflection(5);
  for (int i = 0; i < 20; ++i) {
    const Matrix w = standard_normal(5, 5, rng);
    const Matrix twice = apply(t, apply(t, w));
    CHECK((twice - w).cwiseAbs().maxCoeff() <= 1e-15 * (1 + w.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("pulled-back Hessian is the conjugated base Hessian") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int k = 1 + static_cast<int>(seed % 3);
    const auto spec = testing::random_biased_instance(k, seed);
    std::mt19937_64 rng(seed + 71);
    const auto pulled = pullback_risk(spec, random_affine_map<double>(k, rng));
    const Matrix h = pulled.hessian();
    CHECK(min_eigenvalue(h) > 0);

    const int n = k * k;
    const Matrix w0 = standard_normal(k, k, rng);
    const double step = 1e-4;
    Matrix fd(n, n);
    for (int j = 0; j < n; ++j) {
      Vector e = Vector::Zero(n);
      e(j) = step;
      const Matrix up = pulled.gradient(Matrix(w0 + unvec(e, k, k)));
      const Matrix down = pulled.gradient(Matrix(w0 - unvec(e, k, k)));
      fd.col(j) = vec(Matrix((up - down) / (2 * step)));
    }
    CHECK((fd - h).norm() <= 1e-7 * (1 + h.norm()));
  }
}
