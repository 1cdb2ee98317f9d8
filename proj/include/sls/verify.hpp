#pragma once

// Independent certification of a synthesized response: exact worst-case
// disturbance construction by LP, the analytic box oracle, a per-row audit,
// and frequency-domain gain margins for model mismatch and for input
// compensators.

#include <sls/lti.hpp>
#include <sls/qp.hpp>
#include <sls/synthesis.hpp>

#include <optional>
#include <stdexcept>
#include <vector>

namespace sls {

template <class Scalar>
struct WorstCaseResult {
  std::vector<Vec<Scalar>> w_seq;  // length T, maximizes the row at time T
  Scalar achieved_value = Scalar(0);
  Index row_index = -1;
};

enum class Verdict { pass, fail };

inline const char* to_string(Verdict v) { return v == Verdict::pass ? "pass" : "fail"; }

template <class Scalar>
struct GainReport {
  Scalar margin = Scalar(0);            // max singular value over the frequency grid
  Index grid_points = 0;
  Scalar truncation_bound = Scalar(0);  // Lipschitz bound on the grid interpolation error
  Scalar l1_bound = Scalar(0);          // impulse-response series bound, a second certificate
  Verdict verdict = Verdict::fail;
};

namespace detail {

// Per-coordinate interval [lo, hi] when the polytope is an axis-aligned box
// (every row touches one coordinate); nullopt otherwise.
template <class Scalar>
std::optional<std::pair<Vec<Scalar>, Vec<Scalar>>> box_intervals(const Polytope<Scalar>& poly) {
  const Index n = poly.dim();
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  Vec<Scalar> lo = Vec<Scalar>::Constant(n, -inf);
  Vec<Scalar> hi = Vec<Scalar>::Constant(n, inf);
  for (Index r = 0; r < poly.rows(); ++r) {
    Index col = -1;
    for (Index j = 0; j < n; ++j) {
      if (poly.P(r, j) == Scalar(0)) continue;
      if (col >= 0) return std::nullopt;
      col = j;
    }
    if (col < 0) continue;  // 0 <= g row constrains nothing
    const Scalar a = poly.P(r, col);
    const Scalar bound = poly.q(r) / a;
    if (a > Scalar(0)) hi(col) = std::min(hi(col), bound);
    else lo(col) = std::max(lo(col), bound);
  }
  return std::make_pair(lo, hi);
}

}  // namespace detail

// w_max such that the polytope is exactly { |w_j| <= w_max_j }; nullopt for
// anything that is not a symmetric axis-aligned box.
template <class Scalar>
std::optional<Vec<Scalar>> symmetric_box_bounds(const Polytope<Scalar>& poly) {
  const auto iv = detail::box_intervals(poly);
  if (!iv) return std::nullopt;
  const auto& [lo, hi] = *iv;
  for (Index j = 0; j < poly.dim(); ++j)
    if (!std::isfinite(hi(j)) || lo(j) != -hi(j)) return std::nullopt;
  return hi;
}

// Exact worst case of H_row [x(T); u(T)] over per-step box disturbances:
// sum_k sum_j |(H_row Phi[k])_j| w_max_j, attained by the sign pattern.
template <class Scalar>
Scalar box_worst_case_oracle(const FirResponse<Scalar>& phi, const RowVec<Scalar>& H_row, const Vec<Scalar>& w_max) {
  phi.validate();
  if (H_row.size() != phi.n() + phi.m())
    throw std::invalid_argument("box_worst_case_oracle: H_row must have n+m entries");
  if (w_max.size() != phi.n()) throw std::invalid_argument("box_worst_case_oracle: w_max must have n entries");
  Scalar total = Scalar(0);
  for (Index k = 1; k <= phi.horizon; ++k) {
    const RowVec<Scalar> coeff = H_row * phi.stacked(k);
    for (Index j = 0; j < phi.n(); ++j) total += std::abs(coeff(j)) * w_max(j);
  }
  return total;
}

// Convenience overload against a RobustSpec row; refuses non-box disturbance
// sets, for which the analytic formula does not apply.
template <class Scalar>
Scalar box_worst_case_oracle(const FirResponse<Scalar>& phi, const RobustSpec<Scalar>& spec, Index row) {
  const auto w_max = symmetric_box_bounds(spec.disturbance);
  if (!w_max) throw std::invalid_argument("box_worst_case_oracle: disturbance set is not a symmetric box");
  if (row < 0 || row >= spec.p()) throw std::invalid_argument("box_worst_case_oracle: row out of range");
  return box_worst_case_oracle<Scalar>(phi, spec.performance.P.row(row), *w_max);
}

// Maximizes H_row [x(T); u(T)] = sum_t H_row Phi[T-t] w(t) over per-step
// disturbances Gw(t) <= g, as one stacked LP.  Coordinates with zero
// objective coefficient are forced to 0 when the disturbance set is a box
// containing the origin (deterministic tie-breaking).
template <class Scalar>
WorstCaseResult<Scalar> worst_case_disturbance(const FirResponse<Scalar>& phi, const RobustSpec<Scalar>& spec,
                                               Index row, const SolveOptions<Scalar>& opts = {}) {
  phi.validate();
  spec.validate(phi.n(), phi.m());
  if (spec.T != phi.horizon) throw std::invalid_argument("worst_case_disturbance: horizon mismatch");
  if (row < 0 || row >= spec.p()) throw std::invalid_argument("worst_case_disturbance: row out of range");
  const Index T = phi.horizon, n = phi.n(), q = spec.q();

  std::vector<RowVec<Scalar>> coeff(static_cast<size_t>(T));
  for (Index t = 0; t < T; ++t)
    coeff[static_cast<size_t>(t)] = spec.performance.P.row(row) * phi.stacked(T - t);

  ConvexProgram<Scalar> prog;
  const Index nv = T * n;
  prog.Q.resize(nv, nv);
  prog.c.resize(nv);
  for (Index t = 0; t < T; ++t)
    for (Index j = 0; j < n; ++j) prog.c(t * n + j) = -coeff[static_cast<size_t>(t)](j);
  std::vector<Triplet<Scalar>> m_trips;
  for (Index t = 0; t < T; ++t)
    for (Index r = 0; r < q; ++r)
      for (Index j = 0; j < n; ++j)
        if (spec.disturbance.P(r, j) != Scalar(0))
          m_trips.emplace_back(t * q + r, t * n + j, spec.disturbance.P(r, j));
  prog.M.resize(T * q, nv);
  prog.M.setFromTriplets(m_trips.begin(), m_trips.end());
  prog.v.resize(T * q);
  for (Index t = 0; t < T; ++t) prog.v.segment(t * q, q) = spec.disturbance.q;

  const auto res = solve(prog, opts);
  if (res.status == SolveStatus::unbounded)
    throw std::runtime_error("worst_case_disturbance: disturbance set is unbounded along the objective");
  if (res.status == SolveStatus::infeasible)
    throw std::runtime_error("worst_case_disturbance: disturbance set is empty");
  if (res.status != SolveStatus::optimal)
    throw std::runtime_error("worst_case_disturbance: LP did not converge");

  WorstCaseResult<Scalar> out;
  out.row_index = row;
  out.w_seq.resize(static_cast<size_t>(T));
  Vec<Scalar> w_flat = res.x_star;

  const auto iv = detail::box_intervals(spec.disturbance);
  if (iv) {
    Scalar coeff_scale = Scalar(0);
    for (const auto& c : coeff) coeff_scale = std::max(coeff_scale, c.cwiseAbs().maxCoeff());
    const Scalar zero_tol = Scalar(1e-12) * (Scalar(1) + coeff_scale);
    for (Index t = 0; t < T; ++t)
      for (Index j = 0; j < n; ++j)
        if (std::abs(coeff[static_cast<size_t>(t)](j)) <= zero_tol && iv->first(j) <= Scalar(0) &&
            iv->second(j) >= Scalar(0))
          w_flat(t * n + j) = Scalar(0);
  }
  out.achieved_value = Scalar(0);
  for (Index t = 0; t < T; ++t) {
    out.w_seq[static_cast<size_t>(t)] = w_flat.segment(t * n, n);
    out.achieved_value += coeff[static_cast<size_t>(t)].dot(out.w_seq[static_cast<size_t>(t)]);
  }
  return out;
}

// slack(row) = h_row - worst case value; rows are attacked in parallel.
template <class Scalar>
Vec<Scalar> check_robust_feasibility(const FirResponse<Scalar>& phi, const RobustSpec<Scalar>& spec,
                                     const SolveOptions<Scalar>& opts = {}) {
  phi.validate();
  spec.validate(phi.n(), phi.m());
  Vec<Scalar> slack(spec.p());
  parallel_for(spec.p(), [&](Index row) {
    slack(row) = spec.performance.q(row) - worst_case_disturbance(phi, spec, row, opts).achieved_value;
  });
  return slack;
}

namespace detail {

// Sums S0 = sum_i ||W_i|| and S1 = sum_i i ||W_i|| for W_i = E A^i B over all
// i >= 0, bounded rigorously: explicit spectral norms while i < s, then a
// geometric tail through ||A^s|| < 1/2 and submultiplicativity.
template <class Scalar>
std::pair<Scalar, Scalar> impulse_series_sums(const Mat<Scalar>& E, const Mat<Scalar>& A, const Mat<Scalar>& B) {
  Mat<Scalar> power = A;
  Index s = 1;
  while (spectral_norm<Scalar>(power) >= Scalar(0.5)) {
    power = power * power;
    s *= 2;
    if (s > (Index(1) << 20))
      throw std::runtime_error("impulse_series_sums: could not contract the power norm (is A stable?)");
  }
  const Scalar eta = spectral_norm<Scalar>(power);
  Scalar c0 = Scalar(0), c1 = Scalar(0);
  Mat<Scalar> w = E * B;  // E A^0 B
  Mat<Scalar> ea = E;
  for (Index i = 0; i < s; ++i) {
    const Scalar norm = spectral_norm<Scalar>(w);
    c0 += norm;
    c1 += Scalar(i) * norm;
    ea = ea * A;
    w = ea * B;
  }
  // ||W_{j+ms}|| <= ||W_j|| eta^m, so the full sums telescope into
  // geometric series over the block index m.
  const Scalar geo = Scalar(1) / (Scalar(1) - eta);
  const Scalar s0 = c0 * geo;
  const Scalar s1 = c1 * geo + Scalar(s) * c0 * eta * geo * geo;
  return {s0, s1};
}

}  // namespace detail

// Frequency-gridded norm of the model-error loop (A - A_hat)(zI - A)^{-1} B
// (z Phi_u).  The verdict is strict: margin plus the Lipschitz grid bound
// must stay below one.  Requires an open-loop stable A.
template <class Scalar>
GainReport<Scalar> small_gain_margin(const LinearSystem<Scalar>& sys, const Mat<Scalar>& A_hat,
                                     const FirResponse<Scalar>& phi, Index grid = 1024) {
  phi.validate();
  if (grid <= 0) throw std::invalid_argument("small_gain_margin: need at least one grid point");
  if (A_hat.rows() != sys.n() || A_hat.cols() != sys.n())
    throw std::invalid_argument("small_gain_margin: model matrix dimension mismatch");
  if (phi.n() != sys.n() || phi.m() != sys.m())
    throw std::invalid_argument("small_gain_margin: response dimension mismatch");
  if (spectral_radius<Scalar>(sys.A) >= Scalar(1))
    throw std::invalid_argument("small_gain_margin: A must be open-loop stable");

  using Cplx = std::complex<Scalar>;
  const Mat<Scalar> E = sys.A - A_hat;
  GainReport<Scalar> report;
  report.grid_points = grid;

  const Mat<std::complex<Scalar>> Bc = sys.B.template cast<Cplx>();
  const Mat<std::complex<Scalar>> Ec = E.template cast<Cplx>();
  for (Index gidx = 0; gidx < grid; ++gidx) {
    const Scalar theta = Scalar(2) * Scalar(EIGEN_PI) * Scalar(gidx) / Scalar(grid);
    const Cplx z = std::polar(Scalar(1), theta);
    Mat<Cplx> resolvent = -sys.A.template cast<Cplx>();
    resolvent.diagonal().array() += z;
    const Mat<Cplx> zphi = evaluate_transfer<Scalar>(phi.phi_u, theta, 1);
    const Mat<Cplx> loop = Ec * resolvent.partialPivLu().solve(Bc * zphi);
    report.margin = std::max(report.margin, spectral_norm<Scalar>(loop));
  }

  // Grid interpolation bound: the loop is sum_d tap_d z^{-d} with
  // tap_d = sum_k W_{d-k} Phi_u[k]; |d sigma / d theta| <= sum_d d ||tap_d||,
  // bounded through the series sums of W_i = E A^i B.
  const auto [s0, s1] = detail::impulse_series_sums<Scalar>(E, sys.A, sys.B);
  Scalar lipschitz = Scalar(0), series = Scalar(0);
  for (Index k = 1; k <= phi.horizon; ++k) {
    const Scalar nu = spectral_norm<Scalar>(phi.phi_u[static_cast<size_t>(k - 1)]);
    lipschitz += nu * (s1 + Scalar(k) * s0);
    series += nu * s0;
  }
  report.truncation_bound = lipschitz * Scalar(EIGEN_PI) / Scalar(grid);
  report.l1_bound = series;
  report.verdict = (report.margin + report.truncation_bound < Scalar(1)) ? Verdict::pass : Verdict::fail;
  return report;
}

// Frequency-gridded norm of z Phi_bar_u for an FIR compensator whose taps sit
// at delays 0..T-1 after the shift.  The underlying condition is closed
// (<= 1), so the verdict uses the grid value non-strictly; the Lipschitz
// bound is still reported.
template <class Scalar>
GainReport<Scalar> compensator_gain(const std::vector<Mat<Scalar>>& phi_bar_u, Index grid = 1024) {
  if (grid <= 0) throw std::invalid_argument("compensator_gain: need at least one grid point");
  GainReport<Scalar> report;
  report.grid_points = grid;
  if (phi_bar_u.empty()) {
    report.verdict = Verdict::pass;
    return report;
  }
  for (Index gidx = 0; gidx < grid; ++gidx) {
    const Scalar theta = Scalar(2) * Scalar(EIGEN_PI) * Scalar(gidx) / Scalar(grid);
    report.margin = std::max(report.margin, spectral_norm<Scalar>(evaluate_transfer<Scalar>(phi_bar_u, theta, 1)));
  }
  Scalar lipschitz = Scalar(0), series = Scalar(0);
  for (Index k = 1; k <= static_cast<Index>(phi_bar_u.size()); ++k) {
    const Scalar nu = spectral_norm<Scalar>(phi_bar_u[static_cast<size_t>(k - 1)]);
    lipschitz += Scalar(k - 1) * nu;
    series += nu;
  }
  report.truncation_bound = lipschitz * Scalar(EIGEN_PI) / Scalar(grid);
  report.l1_bound = series;
  report.verdict = (report.margin <= Scalar(1)) ? Verdict::pass : Verdict::fail;
  return report;
}

}  // namespace sls
