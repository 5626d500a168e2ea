#pragma once

// JSON model files and CSV report formatting.
//
// A model file looks like
//
//   {
//     "states": 2,                      // or ["a", "b"]
//     "pi": [0.5, 0.5],
//     "kernels": [[[0.9, 0.1], [0.1, 0.9]], [[0.6, 0.4], [0.4, 0.6]]],
//     "f": [1, -1],
//     "lambda_grid": [0.3, 0.5, 0.9],   // optional
//     "simulation": {"steps": 4096, "replicas": 200, "seed": 7,
//                    "scheme": "strat", "burn_in": 0}   // optional
//   }
//
// Matrices are row-major arrays of arrays.

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scanvar/errors.hpp"
#include "scanvar/kernels.hpp"
#include "scanvar/simulate.hpp"

namespace scanvar {

struct ModelFile {
  StateSpace space;
  KernelFamily family;
  Vector f;
  std::vector<double> lambda_grid;
  std::optional<SimulationConfig> simulation;
};

namespace detail {

using json = nlohmann::json;

inline void line_col(const std::string& text, std::size_t offset, std::size_t& line, std::size_t& col) {
  line = 1;
  col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
}

inline const json& field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end()) throw parse_error(std::string("missing field \"") + name + "\"");
  return *it;
}

inline double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw parse_error("field " + where + " must be a number, got " + std::string(v.type_name()));
  return v.get<double>();
}

inline Vector number_array(const json& v, const std::string& where) {
  if (!v.is_array()) throw parse_error("field " + where + " must be an array, got " + std::string(v.type_name()));
  Vector out(idx(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[idx(i)] = number(v[i], where + "[" + std::to_string(i) + "]");
  return out;
}

inline Matrix number_matrix(const json& v, const std::string& where) {
  if (!v.is_array()) throw parse_error("field " + where + " must be an array of rows");
  const std::size_t rows = v.size();
  std::size_t cols = rows;
  if (rows > 0) {
    if (!v[0].is_array()) throw parse_error("field " + where + "[0] must be an array");
    cols = v[0].size();
  }
  Matrix m(idx(rows), idx(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::string rw = where + "[" + std::to_string(r) + "]";
    const Vector row = number_array(v[r], rw);
    if (static_cast<std::size_t>(row.size()) != cols)
      throw validation_error(rw + " has " + std::to_string(row.size()) + " entries, expected " +
                             std::to_string(cols));
    m.row(idx(r)) = row.transpose();
  }
  return m;
}

inline SimScheme parse_sim_scheme(const std::string& s) {
  if (s == "rand") return SimScheme::rand;
  if (s == "strat") return SimScheme::strat;
  if (s == "embedded") return SimScheme::embedded;
  throw parse_error("field simulation.scheme must be rand, strat or embedded, got \"" + s + "\"");
}

inline std::size_t count(const json& v, const std::string& where) {
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw parse_error("field " + where + " must be a non-negative integer");
  return v.get<std::size_t>();
}

inline ModelFile model_from_json(const json& doc) {
  if (!doc.is_object()) throw parse_error("model must be a JSON object");

  const json& st = field(doc, "states");
  std::optional<StateSpace> space;
  if (st.is_number_integer()) {
    if (st.get<long long>() < 1) throw validation_error("field states must be >= 1");
    space.emplace(st.get<std::size_t>());
  } else if (st.is_array()) {
    std::vector<std::string> labels;
    for (const auto& l : st) {
      if (!l.is_string()) throw parse_error("field states must hold string labels");
      labels.push_back(l.get<std::string>());
    }
    space.emplace(labels.size(), labels);
  } else {
    throw parse_error("field states must be an integer or an array of labels");
  }
  const std::size_t n = space->n;

  const Vector pi = number_array(field(doc, "pi"), "pi");
  const json& ks = field(doc, "kernels");
  if (!ks.is_array()) throw parse_error("field kernels must be an array of matrices");
  std::vector<Matrix> mats;
  for (std::size_t i = 0; i < ks.size(); ++i) mats.push_back(number_matrix(ks[i], "kernels[" + std::to_string(i) + "]"));
  const Vector f = number_array(field(doc, "f"), "f");

  std::vector<std::string> problems;
  if (static_cast<std::size_t>(pi.size()) != n)
    problems.push_back("pi has " + std::to_string(pi.size()) + " entries but states = " + std::to_string(n));
  if (static_cast<std::size_t>(f.size()) != n)
    problems.push_back("f has " + std::to_string(f.size()) + " entries but states = " + std::to_string(n));
  if (!f.allFinite()) problems.push_back("f has non-finite entries");
  const auto rep = validate_family(pi, mats, tau_stoch, tau_rev);
  for (const auto& v : rep.violations()) problems.push_back(v);
  if (!problems.empty()) {
    std::string msg = "invalid model:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw validation_error(msg);
  }

  std::vector<Kernel> kernels;
  // validate_family already checked rows and signs against the same tolerance
  for (auto& m : mats) kernels.emplace_back(std::move(m), detail::unchecked);
  ModelFile out{*space, KernelFamily(*space, Dist(pi), std::move(kernels)), f, {}, std::nullopt};

  if (auto it = doc.find("lambda_grid"); it != doc.end()) {
    const Vector g = number_array(*it, "lambda_grid");
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      if (!(g[i] >= 0.0 && g[i] < 1.0))
        throw validation_error("lambda_grid[" + std::to_string(i) + "] = " + fmt(g[i]) + " outside [0, 1)");
      out.lambda_grid.push_back(g[i]);
    }
  }
  if (auto it = doc.find("simulation"); it != doc.end()) {
    if (!it->is_object()) throw parse_error("field simulation must be an object");
    SimulationConfig cfg;
    if (auto s = it->find("steps"); s != it->end()) cfg.steps = count(*s, "simulation.steps");
    if (auto s = it->find("replicas"); s != it->end()) cfg.replicas = count(*s, "simulation.replicas");
    if (auto s = it->find("seed"); s != it->end()) {
      if (!s->is_number_integer()) throw parse_error("field simulation.seed must be an integer");
      cfg.seed = s->get<std::uint64_t>();
    }
    if (auto s = it->find("scheme"); s != it->end()) {
      if (!s->is_string()) throw parse_error("field simulation.scheme must be a string");
      cfg.scheme = parse_sim_scheme(s->get<std::string>());
    }
    if (auto s = it->find("burn_in"); s != it->end()) cfg.burn_in = count(*s, "simulation.burn_in");
    try {
      cfg.validate();
    } catch (const config_error& e) {
      throw validation_error(e.what());
    }
    out.simulation = cfg;
  }
  return out;
}

} // namespace detail

/// Parse and validate a model. Throws parse_error (with line and column for
/// malformed JSON) or validation_error listing every violated invariant.
inline ModelFile parse_model(const std::string& text) {
  detail::json doc;
  try {
    doc = detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    std::size_t line = 0, col = 0;
    detail::line_col(text, e.byte > 0 ? e.byte - 1 : 0, line, col);
    throw parse_error("malformed JSON at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                          e.what(),
                      line, col);
  }
  try {
    return detail::model_from_json(doc);
  } catch (const detail::json::exception& e) {
    throw parse_error(std::string("bad model field: ") + e.what());
  }
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open model file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_model(ss.str());
  } catch (const parse_error& e) {
    throw parse_error(path + ": " + e.what(), e.line(), e.column());
  } catch (const validation_error& e) {
    throw validation_error(path + ": " + e.what());
  }
}

/// JSON text for a model; round-trips through parse_model.
inline std::string model_to_json(const KernelFamily& fam, const Vector& f, std::span<const double> lambda_grid = {}) {
  detail::json doc;
  if (fam.space().labels.empty())
    doc["states"] = fam.n();
  else
    doc["states"] = fam.space().labels;
  doc["pi"] = std::vector<double>(fam.pi().weights().begin(), fam.pi().weights().end());
  detail::json ks = detail::json::array();
  for (const auto& k : fam.kernels()) {
    detail::json rows = detail::json::array();
    for (Eigen::Index x = 0; x < k.matrix().rows(); ++x) {
      std::vector<double> row(k.matrix().row(x).begin(), k.matrix().row(x).end());
      rows.push_back(row);
    }
    ks.push_back(rows);
  }
  doc["kernels"] = ks;
  doc["f"] = std::vector<double>(f.begin(), f.end());
  if (!lambda_grid.empty()) doc["lambda_grid"] = std::vector<double>(lambda_grid.begin(), lambda_grid.end());
  return doc.dump(2) + "\n";
}

/// 9 significant digits, "nan" for NaN. Locale independent.
inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Comma-joined cells terminated by LF.
inline std::string csv_row(std::initializer_list<std::string> cells) {
  std::string out;
  bool first = true;
  for (const auto& c : cells) {
    if (!first) out += ',';
    out += c;
    first = false;
  }
  out += '\n';
  return out;
}

} // namespace scanvar
