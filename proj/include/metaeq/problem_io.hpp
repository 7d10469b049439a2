#pragma once

// JSON problem files:
//   {"dim": K, "v1": [[..]], "v2": [[..]], "c": [[..]],
//    "omega": [[..]], "b1": [..], "b2": [..], "seed": S}
// Matrices are row-major nested arrays. omega defaults to I, biases to 0;
// seed is informational.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "metaeq/model.hpp"

namespace metaeq {

struct ProblemFile {
  Eigen::Index dim = 0;
  Matrix v1, v2, c, omega;
  Vector b1, b2;
  std::optional<std::uint64_t> seed;
};

/// Throws Error(ParseError) with a JSON path ("$.v1[2]") on schema faults.
ProblemFile parse_problem(const nlohmann::json& doc);
nlohmann::json to_json(const ProblemFile& problem);

ProblemFile read_problem_file(const std::filesystem::path& path);
void write_problem_file(const std::filesystem::path& path,
                        const ProblemFile& problem);

/// Builds the validated risk spec. Model errors are re-raised with the
/// JSON path of the offending field prefixed to the message.
RiskSpec<double> to_risk_spec(const ProblemFile& problem);

ProblemFile from_risk_spec(const RiskSpec<double>& spec,
                           std::optional<std::uint64_t> seed = std::nullopt);

/// The problem generate_instance(dim, seed) builds.
ProblemFile generate_problem(Eigen::Index dim, std::uint64_t seed);

}  // namespace metaeq
