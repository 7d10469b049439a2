#include "metaeq/problem_io.hpp"

#include <fstream>
#include <sstream>

#include "metaeq/harness.hpp"

namespace metaeq {

namespace {

using nlohmann::json;

[[noreturn]] void parse_fail(const std::string& path, const std::string& msg) {
  throw Error(ErrorCode::ParseError, path + ": " + msg);
}

double number_at(const json& j, const std::string& path) {
  if (!j.is_number()) parse_fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) parse_fail(path, "non-finite number");
  return v;
}

Matrix matrix_at(const json& doc, const std::string& key, Eigen::Index dim) {
  const std::string path = "$." + key;
  const json& j = doc.at(key);
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != dim) {
    parse_fail(path, "expected an array of " + std::to_string(dim) + " rows");
  }
  Matrix m(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const std::string row_path = path + "[" + std::to_string(i) + "]";
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != dim) {
      parse_fail(row_path, "expected " + std::to_string(dim) + " entries");
    }
    for (Eigen::Index k = 0; k < dim; ++k) {
      m(i, k) = number_at(row[static_cast<std::size_t>(k)],
                          row_path + "[" + std::to_string(k) + "]");
    }
  }
  return m;
}

Vector vector_at(const json& doc, const std::string& key, Eigen::Index dim) {
  const std::string path = "$." + key;
  const json& j = doc.at(key);
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != dim) {
    parse_fail(path, "expected " + std::to_string(dim) + " entries");
  }
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    v(i) = number_at(j[static_cast<std::size_t>(i)],
                     path + "[" + std::to_string(i) + "]");
  }
  return v;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace

ProblemFile parse_problem(const json& doc) {
  if (!doc.is_object()) parse_fail("$", "expected an object");
  for (const char* key : {"dim", "v1", "v2", "c"}) {
    if (!doc.contains(key)) parse_fail("$", std::string("missing \"") + key + "\"");
  }
  const json& dim = doc.at("dim");
  if (!dim.is_number_integer() || dim.get<long long>() < 1) {
    parse_fail("$.dim", "expected an integer >= 1");
  }
  ProblemFile p;
  p.dim = dim.get<Eigen::Index>();
  p.v1 = matrix_at(doc, "v1", p.dim);
  p.v2 = matrix_at(doc, "v2", p.dim);
  p.c = matrix_at(doc, "c", p.dim);
  p.omega = doc.contains("omega") ? matrix_at(doc, "omega", p.dim)
                                  : Matrix::Identity(p.dim, p.dim);
  p.b1 = doc.contains("b1") ? vector_at(doc, "b1", p.dim) : Vector::Zero(p.dim);
  p.b2 = doc.contains("b2") ? vector_at(doc, "b2", p.dim) : Vector::Zero(p.dim);
  if (doc.contains("seed")) {
    const json& s = doc.at("seed");
    if (!s.is_number_unsigned()) {
      parse_fail("$.seed", "expected a nonnegative integer");
    }
    p.seed = s.get<std::uint64_t>();
  }
  return p;
}

json to_json(const ProblemFile& p) {
  json doc = json::object();
  doc["dim"] = p.dim;
  doc["v1"] = matrix_json(p.v1);
  doc["v2"] = matrix_json(p.v2);
  doc["c"] = matrix_json(p.c);
  doc["omega"] = matrix_json(p.omega);
  doc["b1"] = vector_json(p.b1);
  doc["b2"] = vector_json(p.b2);
  if (p.seed) doc["seed"] = *p.seed;
  return doc;
}

ProblemFile read_problem_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return parse_problem(doc);
}

void write_problem_file(const std::filesystem::path& path,
                        const ProblemFile& problem) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << to_json(problem).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::InvalidArgument, "write failed: " + path.string());
}

RiskSpec<double> to_risk_spec(const ProblemFile& p) {
  JointModel<double> model;
  try {
    model = build_model<double>(p.v1, p.v2, p.c, p.b1, p.b2);
  } catch (const AssumptionError& e) {
    const std::string path =
        e.block() == "sigma" ? "$.{v1,c,v2}" : "$." + e.block();
    throw AssumptionError(e.code(), e.block(), path + ": " + e.detail());
  }
  try {
    return build_risk_spec(model, p.omega);
  } catch (const Error& e) {
    const char* path = e.code() == ErrorCode::OmegaNotSpd ? "$.omega: " : "$: ";
    throw Error(e.code(), path + e.detail());
  }
}

ProblemFile from_risk_spec(const RiskSpec<double>& spec,
                           std::optional<std::uint64_t> seed) {
  ProblemFile p;
  p.dim = spec.dim();
  p.v1 = spec.model().v1();
  p.v2 = spec.model().v2();
  p.c = spec.model().c();
  p.omega = spec.omega();
  p.b1 = spec.model().b1();
  p.b2 = spec.model().b2();
  p.seed = seed;
  return p;
}

ProblemFile generate_problem(Eigen::Index dim, std::uint64_t seed) {
  return from_risk_spec(generate_instance(dim, seed), seed);
}

}  // namespace metaeq
