#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hajek/covadj.hpp"
#include "hajek/core.hpp"
#include "hajek/detail/sha256.hpp"
#include "hajek/error.hpp"
#include "hajek/inference.hpp"
#include "hajek/simulate.hpp"
#include "hajek/version.hpp"

namespace hajek::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// CSV plumbing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r'))
    --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double parse_number(const std::string& tok, std::size_t line_no,
                           const std::string& column) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || tok.empty())
    fail_validation(errc::parse_error,
                    "line " + std::to_string(line_no) + ": cannot parse '" +
                        tok + "' in column " + column);
  if (!std::isfinite(v))
    fail_validation(errc::parse_error,
                    "line " + std::to_string(line_no) +
                        ": non-finite value in column " + column);
  return v;
}

inline int parse_z(const std::string& tok, std::size_t line_no) {
  if (tok == "0") return 0;
  if (tok == "1") return 1;
  fail_validation(errc::parse_error,
                  "line " + std::to_string(line_no) +
                      ": column z must be 0 or 1, got '" + tok + "'");
}

struct header_map {
  std::vector<std::string> names;

  int find(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return int(j);
    return -1;
  }
  int require(const std::string& name) const {
    const int j = find(name);
    if (j < 0)
      fail_validation(errc::parse_error, "missing column '" + name + "'");
    return j;
  }
};

inline std::vector<std::string> non_empty_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur)) lines.push_back(cur);
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Cluster-level CSV: columns stratum, cluster, weight, z, y (any order).
inline experiment_data parse_cluster_csv(const std::string& text) {
  const auto lines = detail::non_empty_lines(text);
  if (lines.empty()) fail_validation(errc::empty_input, "empty input");
  detail::header_map hdr{detail::split_line(lines[0])};
  const int c_stratum = hdr.require("stratum");
  const int c_cluster = hdr.require("cluster");
  const int c_weight = hdr.require("weight");
  const int c_z = hdr.require("z");
  const int c_y = hdr.require("y");

  std::vector<cluster_obs> units;
  units.reserve(lines.size() - 1);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (detail::trim(lines[li]).empty()) continue;
    const auto f = detail::split_line(lines[li]);
    if (f.size() != hdr.names.size())
      fail_validation(errc::parse_error,
                      "line " + std::to_string(li + 1) + ": expected " +
                          std::to_string(hdr.names.size()) + " fields, got " +
                          std::to_string(f.size()));
    cluster_obs u;
    u.stratum_id = f[c_stratum];
    u.cluster_id = f[c_cluster];
    u.weight = detail::parse_number(f[c_weight], li + 1, "weight");
    u.z = detail::parse_z(f[c_z], li + 1);
    u.y = detail::parse_number(f[c_y], li + 1, "y");
    units.push_back(std::move(u));
  }
  return experiment_data::build(std::move(units));
}

// Potential-outcome CSV: columns stratum, cluster, weight, y0, y1.
inline potential_table parse_potential_csv(const std::string& text) {
  const auto lines = detail::non_empty_lines(text);
  if (lines.empty()) fail_validation(errc::empty_input, "empty input");
  detail::header_map hdr{detail::split_line(lines[0])};
  const int c_stratum = hdr.require("stratum");
  const int c_cluster = hdr.require("cluster");
  const int c_weight = hdr.require("weight");
  const int c_y0 = hdr.require("y0");
  const int c_y1 = hdr.require("y1");

  std::vector<potential_row> rows;
  rows.reserve(lines.size() - 1);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (detail::trim(lines[li]).empty()) continue;
    const auto f = detail::split_line(lines[li]);
    if (f.size() != hdr.names.size())
      fail_validation(errc::parse_error,
                      "line " + std::to_string(li + 1) + ": expected " +
                          std::to_string(hdr.names.size()) + " fields, got " +
                          std::to_string(f.size()));
    potential_row r;
    r.stratum_id = f[c_stratum];
    r.cluster_id = f[c_cluster];
    r.weight = detail::parse_number(f[c_weight], li + 1, "weight");
    r.y0 = detail::parse_number(f[c_y0], li + 1, "y0");
    r.y1 = detail::parse_number(f[c_y1], li + 1, "y1");
    rows.push_back(std::move(r));
  }
  return potential_table::build(std::move(rows));
}

// Individual-level CSV: columns stratum, cluster, z, y, optional w
// (default 1), plus covariate columns. With an empty `covariates` list,
// every column beyond the standard ones is treated as a covariate, in
// header order.
inline individual_data parse_individual_csv(
    const std::string& text, const std::vector<std::string>& covariates = {}) {
  const auto lines = detail::non_empty_lines(text);
  if (lines.empty()) fail_validation(errc::empty_input, "empty input");
  detail::header_map hdr{detail::split_line(lines[0])};
  const int c_stratum = hdr.require("stratum");
  const int c_cluster = hdr.require("cluster");
  const int c_z = hdr.require("z");
  const int c_y = hdr.require("y");
  const int c_w = hdr.find("w");

  std::vector<int> c_x;
  std::vector<std::string> x_names;
  if (covariates.empty()) {
    for (std::size_t j = 0; j < hdr.names.size(); ++j) {
      const std::string& n = hdr.names[j];
      if (n == "stratum" || n == "cluster" || n == "z" || n == "y" || n == "w")
        continue;
      c_x.push_back(int(j));
      x_names.push_back(n);
    }
  } else {
    for (const std::string& n : covariates) {
      c_x.push_back(hdr.require(n));
      x_names.push_back(n);
    }
  }

  std::vector<individual_obs> rows;
  rows.reserve(lines.size() - 1);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (detail::trim(lines[li]).empty()) continue;
    const auto f = detail::split_line(lines[li]);
    if (f.size() != hdr.names.size())
      fail_validation(errc::parse_error,
                      "line " + std::to_string(li + 1) + ": expected " +
                          std::to_string(hdr.names.size()) + " fields, got " +
                          std::to_string(f.size()));
    individual_obs r;
    r.stratum_id = f[c_stratum];
    r.cluster_id = f[c_cluster];
    r.z = detail::parse_z(f[c_z], li + 1);
    r.y = detail::parse_number(f[c_y], li + 1, "y");
    r.weight = c_w >= 0 ? detail::parse_number(f[c_w], li + 1, "w") : 1.0;
    r.x.reserve(c_x.size());
    for (std::size_t k = 0; k < c_x.size(); ++k)
      r.x.push_back(detail::parse_number(f[c_x[k]], li + 1, x_names[k]));
    rows.push_back(std::move(r));
  }
  return individual_data::build(std::move(rows));
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail_validation(errc::parse_error, "cannot open file: " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_text_file(const std::string& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_validation(errc::parse_error, "cannot write file: " + path);
  out << content;
}

inline experiment_data read_cluster_csv(const std::string& path) {
  return parse_cluster_csv(read_text_file(path));
}

inline potential_table read_potential_csv(const std::string& path) {
  return parse_potential_csv(read_text_file(path));
}

inline individual_data read_individual_csv(
    const std::string& path, const std::vector<std::string>& covariates = {}) {
  return parse_individual_csv(read_text_file(path), covariates);
}

// ---------------------------------------------------------------------------
// Canonical forms and digests
// ---------------------------------------------------------------------------

inline std::string canonical_csv(const experiment_data& data) {
  std::string out = "stratum,cluster,weight,z,y\n";
  for (const cluster_obs& u : data.units()) {
    out += u.stratum_id;
    out += ',';
    out += u.cluster_id;
    out += ',';
    out += detail::format_g17(u.weight);
    out += ',';
    out += u.z ? '1' : '0';
    out += ',';
    out += detail::format_g17(u.y);
    out += '\n';
  }
  return out;
}

inline std::string canonical_csv(const potential_table& table) {
  std::string out = "stratum,cluster,weight,y0,y1\n";
  for (const potential_row& r : table.rows()) {
    out += r.stratum_id;
    out += ',';
    out += r.cluster_id;
    out += ',';
    out += detail::format_g17(r.weight);
    out += ',';
    out += detail::format_g17(r.y0);
    out += ',';
    out += detail::format_g17(r.y1);
    out += '\n';
  }
  return out;
}

inline std::string canonical_csv(const individual_data& data) {
  std::string out = "stratum,cluster,z,y,w,x...\n";
  for (const individual_obs& r : data.rows()) {
    out += r.stratum_id;
    out += ',';
    out += r.cluster_id;
    out += ',';
    out += r.z ? '1' : '0';
    out += ',';
    out += detail::format_g17(r.y);
    out += ',';
    out += detail::format_g17(r.weight);
    for (double v : r.x) {
      out += ',';
      out += detail::format_g17(v);
    }
    out += '\n';
  }
  return out;
}

template <typename T>
std::string input_digest(const T& data) {
  return hajek::detail::sha256::of(canonical_csv(data));
}

inline std::string text_digest(const std::string& text) {
  return hajek::detail::sha256::of(text);
}

// ---------------------------------------------------------------------------
// Bundled dataset: the 10-pair after-school program study (site sizes and
// mean outcome changes), cluster-level.
// ---------------------------------------------------------------------------

inline const std::string& osnap_csv() {
  static const std::string text =
      "stratum,cluster,weight,z,y\n"
      "p01,p01_t,110,1,0.00\n"
      "p01,p01_c,320,0,0.01\n"
      "p02,p02_t,142,1,0.05\n"
      "p02,p02_c,68,0,-0.02\n"
      "p03,p03_t,75,1,0.11\n"
      "p03,p03_c,80,0,0.00\n"
      "p04,p04_t,43,1,0.05\n"
      "p04,p04_c,95,0,0.00\n"
      "p05,p05_t,52,1,0.06\n"
      "p05,p05_c,67,0,0.02\n"
      "p06,p06_t,55,1,0.08\n"
      "p06,p06_c,38,0,0.00\n"
      "p07,p07_t,39,1,0.09\n"
      "p07,p07_c,46,0,0.03\n"
      "p08,p08_t,38,1,0.13\n"
      "p08,p08_c,39,0,0.00\n"
      "p09,p09_t,36,1,0.04\n"
      "p09,p09_c,40,0,-0.10\n"
      "p10,p10_t,31,1,0.09\n"
      "p10,p10_c,34,0,0.00\n";
  return text;
}

inline experiment_data load_dataset(const std::string& name) {
  if (name == "osnap") return parse_cluster_csv(osnap_csv());
  fail_validation(errc::config_error, "unknown bundled dataset: " + name);
}

// ---------------------------------------------------------------------------
// JSON report pieces
// ---------------------------------------------------------------------------

inline json interval_json(const interval& iv) {
  json j;
  j["lo"] = iv.lo;
  j["hi"] = iv.hi;
  j["level"] = iv.level;
  j["method"] = iv.method;
  j["flags"] = iv.flags;
  return j;
}

inline json test_json(const test_result& t) {
  json j;
  j["statistic"] = t.statistic;
  j["p_value"] = t.p_value;
  j["reject"] = t.reject;
  j["tau0"] = t.tau0;
  j["alpha"] = t.alpha;
  j["method"] = t.method;
  return j;
}

inline json summary_json(const sim::sim_summary& s) {
  json j;
  j["mode"] = s.mode;
  j["n_replicates"] = s.n_replicates;
  j["truth"] = s.truth;
  j["empirical_variance"] = s.empirical_variance;
  json est = json::object();
  for (const auto& [name, m] : s.estimators)
    est[name] = {{"bias", m.bias}, {"sd", m.sd}, {"rmse", m.rmse}};
  j["estimators"] = est;
  json var = json::object();
  for (const auto& [name, m] : s.variances)
    var[name] = {{"mean", m.mean},
                 {"relative_bias", m.relative_bias},
                 {"sd", m.sd}};
  j["variances"] = var;
  json ivs = json::object();
  for (const auto& [name, m] : s.intervals)
    ivs[name] = {{"coverage", m.coverage}, {"mean_length", m.mean_length}};
  j["intervals"] = ivs;
  return j;
}

// Tidy rows (group, name, metric, value) for CSV output.
struct metric_row {
  std::string group, name, metric;
  double value = 0.0;
};

inline std::vector<metric_row> summary_rows(const sim::sim_summary& s) {
  std::vector<metric_row> rows;
  for (const auto& [name, m] : s.estimators) {
    rows.push_back({"estimator", name, "bias", m.bias});
    rows.push_back({"estimator", name, "sd", m.sd});
    rows.push_back({"estimator", name, "rmse", m.rmse});
  }
  for (const auto& [name, m] : s.variances) {
    rows.push_back({"variance", name, "mean", m.mean});
    rows.push_back({"variance", name, "relative_bias", m.relative_bias});
    rows.push_back({"variance", name, "sd", m.sd});
  }
  for (const auto& [name, m] : s.intervals) {
    rows.push_back({"interval", name, "coverage", m.coverage});
    rows.push_back({"interval", name, "mean_length", m.mean_length});
  }
  return rows;
}

}  // namespace hajek::io
