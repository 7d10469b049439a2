#pragma once

#include <cstdint>
#include <random>

#include "metaeq/harness.hpp"
#include "metaeq/matrix_core.hpp"
#include "metaeq/model.hpp"

namespace metaeq::testing {

// Frozen by the grid-search oracle in test_oracles.cpp.
inline constexpr double kCanonicalWOpt = 0.75;
inline constexpr double kCanonicalRisk = 0.875;

inline const int kDims[] = {1, 2, 3, 5};

/// Random instance with nonzero biases and a non-identity Omega, so every
/// term of the general-bias risk is exercised.
inline RiskSpec<double> random_biased_instance(Eigen::Index k,
                                               std::uint64_t seed) {
  const RiskSpec<double> base = generate_instance(k, seed);
  std::mt19937_64 rng(seed * 7919 + 17);
  const Vector b1 = standard_normal(k, 1, rng);
  const Vector b2 = standard_normal(k, 1, rng);
  const Matrix omega = random_spd<double>(k, seed + 1000003, 0.5);
  const auto& m = base.model();
  return build_risk_spec(build_model<double>(m.v1(), m.v2(), m.c(), b1, b2),
                         omega);
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols,
                            std::mt19937_64& rng) {
  return standard_normal(rows, cols, rng);
}

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace metaeq::testing
