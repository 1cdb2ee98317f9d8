#pragma once

// Shared helpers for the test suites: an exhaustive active-set QP oracle,
// random valid FIR responses, and disturbance batteries.  These deliberately
// avoid the solver code paths they are used to cross-check.

#include <sls/core.hpp>
#include <sls/lti.hpp>
#include <sls/qp.hpp>

#include <optional>
#include <vector>

namespace testsupport {

using sls::Index;
using Mat = sls::Mat<double>;
using Vec = sls::Vec<double>;

struct OracleResult {
  bool feasible = false;
  Vec x;
  double objective = 0.0;
};

// Exhaustive active-set enumeration for small dense programs: try every
// subset of inequality rows as the active set, solve the resulting
// equality-constrained KKT system, and keep the feasible point with
// nonnegative multipliers and lowest objective.
inline OracleResult active_set_oracle(const sls::ConvexProgram<double>& prog) {
  const Index n = prog.num_vars();
  const Mat Q(prog.Q);
  const Mat E(prog.E);
  std::vector<Vec> ineq_rows;
  std::vector<double> ineq_rhs;
  for (Index i : prog.nonneg) {
    Vec row = Vec::Zero(n);
    row(i) = -1.0;  // -x_i <= 0
    ineq_rows.push_back(row);
    ineq_rhs.push_back(0.0);
  }
  const Mat M(prog.M);
  for (Index r = 0; r < M.rows(); ++r) {
    ineq_rows.push_back(M.row(r).transpose());
    ineq_rhs.push_back(prog.v(r));
  }
  const Index ni = static_cast<Index>(ineq_rows.size());
  if (ni > 20) throw std::invalid_argument("active_set_oracle: too many inequality rows");

  OracleResult best;
  const double feas_tol = 1e-8;
  for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << ni); ++mask) {
    std::vector<Index> active;
    for (Index i = 0; i < ni; ++i)
      if (mask & (std::uint64_t(1) << i)) active.push_back(i);
    const Index na = static_cast<Index>(active.size());
    const Index dim = n + E.rows() + na;
    Mat K = Mat::Zero(dim, dim);
    Vec rhs = Vec::Zero(dim);
    K.topLeftCorner(n, n) = Q;
    rhs.head(n) = -prog.c;
    if (E.rows() > 0) {
      K.block(n, 0, E.rows(), n) = E;
      K.block(0, n, n, E.rows()) = E.transpose();
      rhs.segment(n, E.rows()) = prog.f;
    }
    for (Index a = 0; a < na; ++a) {
      const Vec& row = ineq_rows[static_cast<size_t>(active[static_cast<size_t>(a)])];
      K.row(n + E.rows() + a).head(n) = row.transpose();
      K.col(n + E.rows() + a).head(n) = row;
      rhs(n + E.rows() + a) = ineq_rhs[static_cast<size_t>(active[static_cast<size_t>(a)])];
    }
    Eigen::FullPivLU<Mat> lu(K);
    if (!lu.isInvertible()) continue;
    const Vec sol = lu.solve(rhs);
    const Vec x = sol.head(n);
    bool ok = true;
    if (E.rows() > 0 && (E * x - prog.f).cwiseAbs().maxCoeff() > feas_tol) ok = false;
    for (Index i = 0; i < ni && ok; ++i)
      if (ineq_rows[static_cast<size_t>(i)].dot(x) > ineq_rhs[static_cast<size_t>(i)] + feas_tol) ok = false;
    for (Index a = 0; a < na && ok; ++a)
      if (sol(n + E.rows() + a) < -feas_tol) ok = false;
    if (!ok) continue;
    const double obj = sls::objective_value(prog, x);
    if (!best.feasible || obj < best.objective) {
      best.feasible = true;
      best.x = x;
      best.objective = obj;
    }
  }
  return best;
}

// Valid FIR response built by free choice of the first T-1 input taps; needs
// an invertible B to close the final-tap constraint.
inline sls::FirResponse<double> random_valid_response(const sls::LinearSystem<double>& sys, Index T, sls::Rng& rng,
                                                      double scale = 0.5) {
  sls::FirResponse<double> phi;
  phi.horizon = T;
  phi.phi_x.resize(static_cast<size_t>(T));
  phi.phi_u.resize(static_cast<size_t>(T));
  phi.phi_x[0] = Mat::Identity(sys.n(), sys.n());
  for (Index k = 0; k + 1 < T; ++k) {
    Mat pu(sys.m(), sys.n());
    for (Index r = 0; r < pu.rows(); ++r)
      for (Index c = 0; c < pu.cols(); ++c) pu(r, c) = scale * rng.symmetric();
    phi.phi_u[static_cast<size_t>(k)] = pu;
    phi.phi_x[static_cast<size_t>(k + 1)] = sys.A * phi.phi_x[static_cast<size_t>(k)] + sys.B * pu;
  }
  phi.phi_u[static_cast<size_t>(T - 1)] =
      -sys.B.fullPivLu().solve(sys.A * phi.phi_x[static_cast<size_t>(T - 1)]);
  return phi;
}

inline std::vector<Vec> random_disturbance(Index n, Index steps, double w_max, sls::Rng& rng) {
  std::vector<Vec> w(static_cast<size_t>(steps), Vec::Zero(n));
  for (auto& wt : w)
    for (Index j = 0; j < n; ++j) wt(j) = w_max * rng.symmetric();
  return w;
}

}  // namespace testsupport
