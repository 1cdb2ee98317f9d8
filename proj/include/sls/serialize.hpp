#pragma once

// JSON round-trips for systems, responses, bound specifications, and dual
// certificates, plus the CSV emitters shared by the command-line tools.
// JSON numbers are dumped in shortest-round-trip form (bit-exact reload);
// CSV numbers print with 17 significant digits.

#include <sls/lti.hpp>
#include <sls/primal_dual.hpp>
#include <sls/saturation.hpp>
#include <sls/synthesis.hpp>

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sls {

using Json = nlohmann::json;

template <class Scalar>
Json matrix_to_json(const Mat<Scalar>& M) {
  Json rows = Json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class Scalar>
Mat<Scalar> matrix_from_json(const Json& j) {
  if (!j.is_array()) throw std::runtime_error("matrix_from_json: expected an array of rows");
  const Index rows = static_cast<Index>(j.size());
  if (rows == 0) return Mat<Scalar>(0, 0);
  if (!j[0].is_array()) throw std::runtime_error("matrix_from_json: rows must be arrays");
  const Index cols = static_cast<Index>(j[0].size());
  Mat<Scalar> M(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (!j[static_cast<size_t>(i)].is_array() || static_cast<Index>(j[static_cast<size_t>(i)].size()) != cols)
      throw std::runtime_error("matrix_from_json: ragged rows");
    for (Index c = 0; c < cols; ++c) M(i, c) = j[static_cast<size_t>(i)][static_cast<size_t>(c)].get<Scalar>();
  }
  return M;
}

template <class Scalar>
Json vector_to_json(const Vec<Scalar>& v) {
  Json arr = Json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

template <class Scalar>
Vec<Scalar> vector_from_json(const Json& j) {
  if (!j.is_array()) throw std::runtime_error("vector_from_json: expected an array");
  Vec<Scalar> v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = j[static_cast<size_t>(i)].get<Scalar>();
  return v;
}

template <class Scalar>
Json system_to_json(const LinearSystem<Scalar>& sys) {
  Json j;
  j["A"] = matrix_to_json(sys.A);
  j["B"] = matrix_to_json(sys.B);
  Json edges = Json::array();
  for (const auto& [a, b] : sys.graph.edges) edges.push_back(Json::array({a, b}));
  j["graph"] = Json{{"n", sys.graph.n}, {"edges", std::move(edges)}};
  Json hosts = Json::array();
  for (const auto& acts : sys.node_actuators) hosts.push_back(acts);
  j["node_actuators"] = std::move(hosts);
  return j;
}

template <class Scalar>
LinearSystem<Scalar> system_from_json(const Json& j) {
  LinearSystem<Scalar> sys;
  sys.A = matrix_from_json<Scalar>(j.at("A"));
  sys.B = matrix_from_json<Scalar>(j.at("B"));
  const Json& graph = j.at("graph");
  sys.graph.n = graph.at("n").get<Index>();
  for (const auto& e : graph.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw std::runtime_error("system_from_json: edges must be index pairs");
    sys.graph.edges.emplace_back(e[0].get<Index>(), e[1].get<Index>());
  }
  if (j.contains("node_actuators")) {
    for (const auto& acts : j.at("node_actuators")) sys.node_actuators.push_back(acts.get<std::vector<Index>>());
  } else {
    // Square systems default to one actuator per node, in node order.
    if (sys.B.rows() != sys.B.cols())
      throw std::runtime_error("system_from_json: node_actuators required for non-square B");
    for (Index i = 0; i < sys.B.cols(); ++i) sys.node_actuators.push_back({i});
  }
  sys.validate();
  return sys;
}

template <class Scalar>
Json response_to_json(const FirResponse<Scalar>& phi) {
  Json j;
  j["T"] = phi.horizon;
  Json px = Json::array(), pu = Json::array();
  for (const auto& M : phi.phi_x) px.push_back(matrix_to_json(M));
  for (const auto& M : phi.phi_u) pu.push_back(matrix_to_json(M));
  j["phi_x"] = std::move(px);
  j["phi_u"] = std::move(pu);
  return j;
}

template <class Scalar>
FirResponse<Scalar> response_from_json(const Json& j) {
  FirResponse<Scalar> phi;
  phi.horizon = j.at("T").get<Index>();
  for (const auto& m : j.at("phi_x")) phi.phi_x.push_back(matrix_from_json<Scalar>(m));
  for (const auto& m : j.at("phi_u")) phi.phi_u.push_back(matrix_from_json<Scalar>(m));
  phi.validate();
  return phi;
}

template <class Scalar>
Json spec_to_json(const RobustSpec<Scalar>& spec) {
  Json j;
  j["T"] = spec.T;
  j["G"] = matrix_to_json(spec.disturbance.P);
  j["g"] = vector_to_json(spec.disturbance.q);
  j["H"] = matrix_to_json(spec.performance.P);
  j["h"] = vector_to_json(spec.performance.q);
  return j;
}

namespace detail {

// Box bounds may be a single number (uniform) or a per-coordinate array.
template <class Scalar>
Vec<Scalar> bound_from_json(const Json& j, Index size, const char* name) {
  if (j.is_number()) return Vec<Scalar>::Constant(size, j.get<Scalar>());
  const Vec<Scalar> v = vector_from_json<Scalar>(j);
  if (v.size() != size)
    throw std::runtime_error(std::string("spec_from_json: ") + name + " has the wrong length");
  return v;
}

}  // namespace detail

// Accepts either the explicit polytope form {G,g,H,h,T} or the box shorthand
// {w_max,x_max,u_max,T}; the shorthand needs the state/input dimensions.
template <class Scalar>
RobustSpec<Scalar> spec_from_json(const Json& j, Index n, Index m) {
  const Index T = j.at("T").get<Index>();
  if (j.contains("G")) {
    RobustSpec<Scalar> spec;
    spec.T = T;
    spec.disturbance.P = matrix_from_json<Scalar>(j.at("G"));
    spec.disturbance.q = vector_from_json<Scalar>(j.at("g"));
    spec.performance.P = matrix_from_json<Scalar>(j.at("H"));
    spec.performance.q = vector_from_json<Scalar>(j.at("h"));
    if (spec.disturbance.P.cols() != n || spec.performance.P.cols() != n + m)
      throw std::runtime_error("spec_from_json: polytope dimensions do not match the system");
    spec.validate(n, m);
    return spec;
  }
  const Vec<Scalar> w = detail::bound_from_json<Scalar>(j.at("w_max"), n, "w_max");
  const Vec<Scalar> x = detail::bound_from_json<Scalar>(j.at("x_max"), n, "x_max");
  const Vec<Scalar> u = detail::bound_from_json<Scalar>(j.at("u_max"), m, "u_max");
  return make_box_spec(w, x, u, T);
}

template <class Scalar>
Json certificate_to_json(const DualCertificate<Scalar>& cert) {
  Json j;
  Json lam = Json::array();
  for (const auto& L : cert.lambda) lam.push_back(matrix_to_json(L));
  j["lambda"] = std::move(lam);
  j["sigma"] = vector_to_json<Scalar>(cert.sigma.transpose());
  return j;
}

template <class Scalar>
DualCertificate<Scalar> certificate_from_json(const Json& j) {
  DualCertificate<Scalar> cert;
  for (const auto& m : j.at("lambda")) cert.lambda.push_back(matrix_from_json<Scalar>(m));
  cert.sigma = vector_from_json<Scalar>(j.at("sigma")).transpose();
  return cert;
}

inline void save_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_json: cannot open " + path);
  out << j.dump(2) << '\n';
}

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_json: cannot open " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& err) {
    throw std::runtime_error("load_json: " + path + ": " + err.what());
  }
  return j;
}

// 17 significant digits: enough for binary64 to reload bit-exactly.
inline std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Columns: t, states, inputs, then (when a record is supplied) one clip flag
// per actuator and the norm of the clipped-input disturbance at that step.
template <class Scalar>
void write_trajectory_csv(std::ostream& out, const Trajectory<Scalar>& traj,
                          const SaturationRecord<Scalar>* rec = nullptr) {
  const Index n = traj.x_seq.empty() ? 0 : traj.x_seq.front().size();
  const Index m = traj.u_seq.empty() ? 0 : traj.u_seq.front().size();
  out << "t";
  for (Index i = 0; i < n; ++i) out << ",x" << (i + 1);
  for (Index a = 0; a < m; ++a) out << ",u" << (a + 1);
  if (rec) {
    for (Index a = 0; a < m; ++a) out << ",sat" << (a + 1);
    out << ",wbar_norm";
  }
  out << '\n';
  for (size_t t = 0; t < traj.x_seq.size(); ++t) {
    out << t;
    for (Index i = 0; i < n; ++i) out << ',' << csv_number(static_cast<double>(traj.x_seq[t](i)));
    for (Index a = 0; a < m; ++a) out << ',' << csv_number(static_cast<double>(traj.u_seq[t](a)));
    if (rec) {
      const bool have = t < rec->sat_flags.size();
      for (Index a = 0; a < m; ++a) out << ',' << (have && rec->sat_flags[t][static_cast<size_t>(a)] ? 1 : 0);
      out << ',' << csv_number(t < rec->wbar_norm.size() ? static_cast<double>(rec->wbar_norm[t]) : 0.0);
    }
    out << '\n';
  }
}

template <class Scalar>
void write_trace_csv(std::ostream& out, const std::vector<TraceRow<Scalar>>& trace) {
  out << "round,primal_residual,budget_violation,complementarity,wall_seconds\n";
  for (const auto& row : trace) {
    out << row.round << ',' << csv_number(static_cast<double>(row.primal_residual)) << ','
        << csv_number(static_cast<double>(row.budget_violation)) << ','
        << csv_number(static_cast<double>(row.complementarity)) << ','
        << csv_number(static_cast<double>(row.wall_seconds)) << '\n';
  }
}

// One line per performance row; attack_refs may be empty strings for rows
// whose worst-case disturbance was not exported.
template <class Scalar>
void write_audit_csv(std::ostream& out, const Vec<Scalar>& bounds, const Vec<Scalar>& worst,
                     const Vec<Scalar>& slack, const std::vector<std::string>& attack_refs) {
  if (bounds.size() != worst.size() || bounds.size() != slack.size() ||
      static_cast<size_t>(bounds.size()) != attack_refs.size())
    throw std::invalid_argument("write_audit_csv: column length mismatch");
  out << "row,bound,worst_case,slack,attack_file\n";
  for (Index r = 0; r < bounds.size(); ++r) {
    out << r << ',' << csv_number(static_cast<double>(bounds(r))) << ','
        << csv_number(static_cast<double>(worst(r))) << ',' << csv_number(static_cast<double>(slack(r))) << ','
        << attack_refs[static_cast<size_t>(r)] << '\n';
  }
}

// Headerless plotting front ends get column names plus "# key=value" metadata.
template <class Scalar>
void write_plot_data(std::ostream& out,
                     const std::vector<std::pair<std::string, std::vector<Scalar>>>& columns,
                     const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  if (columns.empty()) throw std::invalid_argument("write_plot_data: no columns");
  const size_t len = columns.front().second.size();
  for (const auto& [label, values] : columns)
    if (values.size() != len) throw std::invalid_argument("write_plot_data: column length mismatch");
  for (const auto& [key, value] : meta) out << "# " << key << '=' << value << '\n';
  for (size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c].first;
  out << '\n';
  for (size_t i = 0; i < len; ++i) {
    for (size_t c = 0; c < columns.size(); ++c)
      out << (c ? "," : "") << csv_number(static_cast<double>(columns[c].second[i]));
    out << '\n';
  }
}

template <class Scalar>
void write_plot_data(std::ostream& out, const std::string& x_label, const std::string& y_label,
                     const std::vector<Scalar>& x, const std::vector<Scalar>& y,
                     const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  write_plot_data<Scalar>(out, {{x_label, x}, {y_label, y}}, meta);
}

}  // namespace sls
