#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "turnpike/system_model.hpp"

namespace turnpike::cli {

using json = nlohmann::ordered_json;

struct Scenario {
  std::string kind = "ode";
  DescriptorPlant plant;  // E = I for "ode"
  bool has_E = false;
  Vector x0, y_c, y_e;
  double t1 = 10.0;
  int grid = 101;
  Tolerances tol;
  std::uint32_t seed = kRegularitySeed;

  bool is_dae() const { return kind == "dae"; }
  LtiPlant lti() const { return {plant.A, plant.B, plant.C, plant.F}; }
};

namespace detail {

[[noreturn]] inline void fail(const std::string& src, const std::string& path,
                              const std::string& msg) {
  throw InputError(src + ": " + (path.empty() ? "/" : path) + ": " + msg);
}

inline double number(const json& j, const std::string& src, const std::string& path) {
  if (!j.is_number()) fail(src, path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) fail(src, path, "number is not finite");
  return v;
}

inline Matrix matrix(const json& j, const std::string& src, const std::string& path) {
  if (!j.is_array()) fail(src, path, "expected an array of rows");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = -1;
  for (std::size_t i = 0; i < j.size(); ++i) {
    std::string rp = path + "/" + std::to_string(i);
    if (!j[i].is_array()) fail(src, rp, "expected a row array");
    if (cols < 0) cols = static_cast<Eigen::Index>(j[i].size());
    if (static_cast<Eigen::Index>(j[i].size()) != cols)
      fail(src, rp, "row length " + std::to_string(j[i].size()) + " differs from " +
                        std::to_string(cols));
  }
  Matrix M(rows, std::max<Eigen::Index>(cols, 0));
  for (std::size_t i = 0; i < j.size(); ++i)
    for (std::size_t c = 0; c < j[i].size(); ++c)
      M(i, c) = number(j[i][c], src, path + "/" + std::to_string(i) + "/" + std::to_string(c));
  return M;
}

inline Vector vector(const json& j, const std::string& src, const std::string& path) {
  if (!j.is_array()) fail(src, path, "expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v(i) = number(j[i], src, path + "/" + std::to_string(i));
  return v;
}

inline json to_json(const Matrix& M) {
  json out = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(i, c));
    out.push_back(row);
  }
  return out;
}

inline json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace detail

inline Scenario parse_scenario(const json& j, const std::string& src = "scenario") {
  using namespace detail;
  if (!j.is_object()) fail(src, "", "expected a JSON object");
  static const char* known[] = {"kind", "E", "A", "B", "C", "F", "x0", "y_c", "y_e",
                                "t1", "grid", "tolerances", "seed", "name", "description"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) fail(src, "/" + it.key(), "unknown field");
  }
  Scenario s;
  if (j.contains("kind")) {
    if (!j["kind"].is_string()) fail(src, "/kind", "expected a string");
    s.kind = j["kind"].get<std::string>();
    if (s.kind != "ode" && s.kind != "dae") fail(src, "/kind", "must be \"ode\" or \"dae\"");
  }
  for (const char* k : {"A", "B", "C", "F", "x0"})
    if (!j.contains(k)) fail(src, std::string("/") + k, "missing required field");
  s.plant.A = matrix(j["A"], src, "/A");
  s.plant.B = matrix(j["B"], src, "/B");
  s.plant.C = matrix(j["C"], src, "/C");
  s.plant.F = matrix(j["F"], src, "/F");
  const Eigen::Index n = s.plant.A.rows();
  if (j.contains("E")) {
    s.has_E = true;
    s.plant.E = matrix(j["E"], src, "/E");
  } else {
    if (s.is_dae()) fail(src, "/E", "required for kind \"dae\"");
    s.plant.E = Matrix::Identity(n, n);
  }
  if (!s.is_dae() && s.has_E && s.plant.E != Matrix::Identity(n, n))
    fail(src, "/E", "kind \"ode\" requires E = I");
  s.x0 = vector(j["x0"], src, "/x0");
  s.y_c = j.contains("y_c") ? vector(j["y_c"], src, "/y_c") : Vector::Zero(s.plant.C.rows());
  s.y_e = j.contains("y_e") ? vector(j["y_e"], src, "/y_e") : Vector::Zero(s.plant.F.rows());
  if (j.contains("t1")) {
    s.t1 = number(j["t1"], src, "/t1");
    if (!(s.t1 > 0.0)) fail(src, "/t1", "must be positive");
  }
  if (j.contains("grid")) {
    if (!j["grid"].is_number_integer()) fail(src, "/grid", "expected an integer");
    s.grid = j["grid"].get<int>();
    if (s.grid < 16) fail(src, "/grid", "must be at least 16");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) fail(src, "/seed", "expected a non-negative integer");
    s.seed = j["seed"].get<std::uint32_t>();
  }
  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    if (!t.is_object()) fail(src, "/tolerances", "expected an object");
    for (auto it = t.begin(); it != t.end(); ++it) {
      std::string p = "/tolerances/" + it.key();
      double v = number(it.value(), src, p);
      if (it.key() == "ode_rel") s.tol.ode_rel = v;
      else if (it.key() == "ode_abs") s.tol.ode_abs = v;
      else if (it.key() == "residual") s.tol.residual = v;
      else if (it.key() == "rank_rel") s.tol.rank_rel = v;
      else if (it.key() == "psd_slack") s.tol.psd_slack = v;
      else fail(src, p, "unknown tolerance");
    }
  }
  try {
    s.tol.validate();
  } catch (const InputError& e) {
    fail(src, "/tolerances", e.what());
  }

  try {
    s.plant.validate_dims();
  } catch (const InputError& e) {
    fail(src, "", e.what());
  }
  if (s.x0.size() != n) fail(src, "/x0", "expected length " + std::to_string(n));
  if (s.y_c.size() != s.plant.C.rows())
    fail(src, "/y_c", "expected length " + std::to_string(s.plant.C.rows()));
  if (s.y_e.size() != s.plant.F.rows())
    fail(src, "/y_e", "expected length " + std::to_string(s.plant.F.rows()));
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": malformed JSON: " + e.what());
  }
  return parse_scenario(j, path);
}

inline json normalized(const Scenario& s) {
  json j;
  j["kind"] = s.kind;
  if (s.is_dae() || s.has_E) j["E"] = detail::to_json(s.plant.E);
  j["A"] = detail::to_json(s.plant.A);
  j["B"] = detail::to_json(s.plant.B);
  j["C"] = detail::to_json(s.plant.C);
  j["F"] = detail::to_json(s.plant.F);
  j["x0"] = detail::to_json(s.x0);
  j["y_c"] = detail::to_json(s.y_c);
  j["y_e"] = detail::to_json(s.y_e);
  j["t1"] = s.t1;
  j["grid"] = s.grid;
  json t;
  t["ode_rel"] = s.tol.ode_rel;
  t["ode_abs"] = s.tol.ode_abs;
  t["residual"] = s.tol.residual;
  if (s.tol.rank_rel) t["rank_rel"] = *s.tol.rank_rel;
  t["psd_slack"] = s.tol.psd_slack;
  j["tolerances"] = t;
  j["seed"] = s.seed;
  return j;
}

// Comma separated, header row, LF endings, 17 significant digits.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw InputError(path.string() + ": cannot write");
    out_ << std::setprecision(17);
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
  }

  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
    out_ << '\n';
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

inline std::vector<std::string> indexed(const std::string& stem, Eigen::Index count) {
  std::vector<std::string> out;
  for (Eigen::Index i = 1; i <= count; ++i) out.push_back(stem + "_" + std::to_string(i));
  return out;
}

}  // namespace turnpike::cli
