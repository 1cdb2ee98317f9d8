#pragma once

// Self-contained sparse convex QP/LP solver.
//
// Programs have the form
//   minimize   (1/2) x' Q x + c' x
//   subject to E x = f,   x_i >= 0 for i in nonneg,   M x <= v.
//
// The solver is an operator-splitting (ADMM) iteration on the stacked
// constraint C x in [lo, hi], with a single quasi-definite KKT factorization
// per penalty value, over-relaxation, deterministic adaptive penalty updates,
// divergence-based infeasibility certificates, and an active-set polish step
// that tightens accepted solutions to the requested KKT residual.
//
// Dual convention: one multiplier per stacked row in the order [E, nonneg, M];
// stationarity is Q x + c + C' y = 0 with y >= 0 pressing on upper bounds and
// y <= 0 on lower bounds.

#include <sls/core.hpp>

#include <algorithm>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace sls {

template <class Scalar>
struct ConvexProgram {
  SparseMat<Scalar> Q;
  Vec<Scalar> c;
  SparseMat<Scalar> E;
  Vec<Scalar> f;
  std::vector<Index> nonneg;
  SparseMat<Scalar> M;
  Vec<Scalar> v;

  Index num_vars() const { return c.size(); }

  void validate() const {
    const Index n = num_vars();
    if (Q.rows() != n || Q.cols() != n) throw std::invalid_argument("ConvexProgram: Q must be n x n");
    if (E.rows() != f.size()) throw std::invalid_argument("ConvexProgram: E/f row mismatch");
    if (E.rows() > 0 && E.cols() != n) throw std::invalid_argument("ConvexProgram: E column mismatch");
    if (M.rows() != v.size()) throw std::invalid_argument("ConvexProgram: M/v row mismatch");
    if (M.rows() > 0 && M.cols() != n) throw std::invalid_argument("ConvexProgram: M column mismatch");
    for (Index i : nonneg)
      if (i < 0 || i >= n) throw std::invalid_argument("ConvexProgram: nonneg index out of range");

    // Symmetry, then positive semidefiniteness by attempted factorization.
    SparseMat<Scalar> diff = SparseMat<Scalar>(Q.transpose()) - Q;
    diff.prune(Scalar(0));
    Scalar asym = Scalar(0);
    for (Index k = 0; k < diff.outerSize(); ++k)
      for (typename SparseMat<Scalar>::InnerIterator it(diff, k); it; ++it) asym = std::max(asym, std::abs(it.value()));
    if (asym > Scalar(1e-10)) throw std::invalid_argument("ConvexProgram: Q must be symmetric");

    bool diagonal_only = true;
    for (Index k = 0; k < Q.outerSize() && diagonal_only; ++k)
      for (typename SparseMat<Scalar>::InnerIterator it(Q, k); it; ++it)
        if (it.row() != it.col() && it.value() != Scalar(0)) {
          diagonal_only = false;
          break;
        }
    if (diagonal_only) {
      for (Index k = 0; k < Q.outerSize(); ++k)
        for (typename SparseMat<Scalar>::InnerIterator it(Q, k); it; ++it)
          if (it.value() < Scalar(-1e-12)) throw std::invalid_argument("ConvexProgram: Q is not positive semidefinite");
      return;
    }
    if (n <= 512) {
      const Mat<Scalar> qd(Q);
      Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(qd);
      const Scalar lo = es.eigenvalues().minCoeff();
      const Scalar hi = std::max(Scalar(1), Scalar(es.eigenvalues().cwiseAbs().maxCoeff()));
      if (lo < Scalar(-1e-10) * hi) throw std::invalid_argument("ConvexProgram: Q is not positive semidefinite");
      return;
    }
    Eigen::SimplicialLDLT<SparseMat<Scalar>> ldlt(Q);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < Scalar(-1e-10))
      throw std::invalid_argument("ConvexProgram: Q is not positive semidefinite");
  }
};

enum class SolveStatus { optimal, infeasible, unbounded, max_iter };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

template <class Scalar>
struct KktResiduals {
  Scalar stationarity = std::numeric_limits<Scalar>::infinity();
  Scalar primal = std::numeric_limits<Scalar>::infinity();
  Scalar complementarity = std::numeric_limits<Scalar>::infinity();

  Scalar max_residual() const { return std::max(stationarity, std::max(primal, complementarity)); }
};

template <class Scalar>
struct SolveResult {
  Vec<Scalar> x_star;
  Vec<Scalar> duals;  // stacked over [E, nonneg, M] rows
  SolveStatus status = SolveStatus::max_iter;
  Index iterations = 0;
  KktResiduals<Scalar> kkt;
  Vec<Scalar> certificate;  // normalized Farkas direction when infeasible/unbounded
};

template <class Scalar>
struct SolveOptions {
  Scalar tol = Scalar(1e-8);
  Index max_iter = 200000;
  Scalar over_relaxation = Scalar(1.6);
  Scalar rho = Scalar(0.1);
  Scalar sigma = Scalar(1e-6);
  Index check_every = 25;
  bool adaptive_rho = true;
  bool polish = true;
  Vec<Scalar> x0;  // optional warm start
  Vec<Scalar> y0;
};

template <class Scalar>
Scalar objective_value(const ConvexProgram<Scalar>& prog, const Vec<Scalar>& x) {
  return Scalar(0.5) * x.dot(prog.Q * x) + prog.c.dot(x);
}

namespace detail {

template <class Scalar>
struct StackedRows {
  SparseMat<Scalar> C;
  Vec<Scalar> lo;
  Vec<Scalar> hi;
  Index n_eq = 0, n_nn = 0, n_in = 0;
};

template <class Scalar>
StackedRows<Scalar> stack_rows(const ConvexProgram<Scalar>& prog) {
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  StackedRows<Scalar> s;
  s.n_eq = prog.E.rows();
  s.n_nn = static_cast<Index>(prog.nonneg.size());
  s.n_in = prog.M.rows();
  const Index rows = s.n_eq + s.n_nn + s.n_in;
  std::vector<Triplet<Scalar>> trips;
  trips.reserve(static_cast<size_t>(prog.E.nonZeros() + s.n_nn + prog.M.nonZeros()));
  for (Index k = 0; k < prog.E.outerSize(); ++k)
    for (typename SparseMat<Scalar>::InnerIterator it(prog.E, k); it; ++it)
      trips.emplace_back(it.row(), it.col(), it.value());
  for (Index i = 0; i < s.n_nn; ++i) trips.emplace_back(s.n_eq + i, prog.nonneg[static_cast<size_t>(i)], Scalar(1));
  for (Index k = 0; k < prog.M.outerSize(); ++k)
    for (typename SparseMat<Scalar>::InnerIterator it(prog.M, k); it; ++it)
      trips.emplace_back(s.n_eq + s.n_nn + it.row(), it.col(), it.value());
  s.C.resize(rows, prog.num_vars());
  s.C.setFromTriplets(trips.begin(), trips.end());
  s.lo.resize(rows);
  s.hi.resize(rows);
  s.lo.head(s.n_eq) = prog.f;
  s.hi.head(s.n_eq) = prog.f;
  s.lo.segment(s.n_eq, s.n_nn).setZero();
  s.hi.segment(s.n_eq, s.n_nn).setConstant(inf);
  s.lo.tail(s.n_in).setConstant(-inf);
  s.hi.tail(s.n_in) = prog.v;
  return s;
}

template <class Scalar>
KktResiduals<Scalar> kkt_from_stacked(const ConvexProgram<Scalar>& prog, const StackedRows<Scalar>& s,
                                      const Vec<Scalar>& x, const Vec<Scalar>& y) {
  KktResiduals<Scalar> r;
  Vec<Scalar> stat = prog.Q * x + prog.c;
  if (y.size() > 0) stat += s.C.transpose() * y;
  r.stationarity = stat.size() ? stat.template lpNorm<Eigen::Infinity>() : Scalar(0);
  r.primal = Scalar(0);
  r.complementarity = Scalar(0);
  if (s.C.rows() > 0) {
    const Vec<Scalar> cx = s.C * x;
    for (Index i = 0; i < cx.size(); ++i) {
      const Scalar upper_gap = s.hi(i) - cx(i);  // may be +inf
      const Scalar lower_gap = cx(i) - s.lo(i);
      if (std::isfinite(s.hi(i))) r.primal = std::max(r.primal, std::max(Scalar(0), -upper_gap));
      if (std::isfinite(s.lo(i))) r.primal = std::max(r.primal, std::max(Scalar(0), -lower_gap));
      if (s.lo(i) == s.hi(i)) continue;  // equality rows carry no complementarity term
      const Scalar yp = std::max(y(i), Scalar(0));
      const Scalar ym = std::max(-y(i), Scalar(0));
      r.complementarity =
          std::max(r.complementarity, yp * (std::isfinite(s.hi(i)) ? std::abs(upper_gap) : Scalar(1)));
      r.complementarity =
          std::max(r.complementarity, ym * (std::isfinite(s.lo(i)) ? std::abs(lower_gap) : Scalar(1)));
    }
  }
  return r;
}

// Equality-constrained resolve on the active rows, refined against the
// unregularized KKT system, with a few rounds of active-set repair: rows the
// candidate violates are added, active rows whose multiplier has the wrong
// sign are dropped.  The repair recovers weakly-active rows that y-sign
// identification misses (the ADMM multiplier is ~0 there).  Returns false
// when no reduced system can be factored.
template <class Scalar>
bool polish_solution(const ConvexProgram<Scalar>& prog, const StackedRows<Scalar>& s, Vec<Scalar>& x, Vec<Scalar>& y) {
  const Index nv = prog.num_vars();
  const Index mt = s.C.rows();
  // side: 0 inactive, +1 active at hi, -1 active at lo, 2 equality.
  std::vector<int> side(static_cast<size_t>(mt), 0);
  for (Index i = 0; i < mt; ++i) {
    if (s.lo(i) == s.hi(i)) side[static_cast<size_t>(i)] = 2;
    else if (y(i) > Scalar(0) && std::isfinite(s.hi(i))) side[static_cast<size_t>(i)] = 1;
    else if (y(i) < Scalar(0) && std::isfinite(s.lo(i))) side[static_cast<size_t>(i)] = -1;
  }

  const Scalar add_tol = Scalar(1e-9);
  const Scalar drop_tol = Scalar(1e-7);
  bool solved_once = false;
  Vec<Scalar> x_cand, y_cand;

  for (int round = 0; round < 10; ++round) {
    std::vector<Index> active;
    std::vector<Scalar> target;
    for (Index i = 0; i < mt; ++i) {
      const int sd = side[static_cast<size_t>(i)];
      if (sd == 0) continue;
      active.push_back(i);
      target.push_back(sd == -1 ? s.lo(i) : (sd == 1 ? s.hi(i) : s.lo(i)));
    }
    const Index na = static_cast<Index>(active.size());
    std::vector<Index> rowmap(static_cast<size_t>(mt), Index(-1));
    for (Index a = 0; a < na; ++a) rowmap[static_cast<size_t>(active[static_cast<size_t>(a)])] = a;

    std::vector<Triplet<Scalar>> trips;
    for (Index k = 0; k < prog.Q.outerSize(); ++k)
      for (typename SparseMat<Scalar>::InnerIterator it(prog.Q, k); it; ++it)
        trips.emplace_back(it.row(), it.col(), it.value());
    for (Index k = 0; k < s.C.outerSize(); ++k)
      for (typename SparseMat<Scalar>::InnerIterator it(s.C, k); it; ++it) {
        const Index a = rowmap[static_cast<size_t>(it.row())];
        if (a >= 0) {
          trips.emplace_back(nv + a, it.col(), it.value());
          trips.emplace_back(it.col(), nv + a, it.value());
        }
      }
    // The plain LDLT does no pivoting, so tiny regularization can still meet
    // an exactly cancelled pivot; escalate until the factorization goes
    // through and let iterative refinement strip the bias back out.
    Eigen::SimplicialLDLT<SparseMat<Scalar>> ldlt;
    bool factored = false;
    for (Scalar reg : {Scalar(1e-7), Scalar(1e-5), Scalar(1e-3)}) {
      auto reg_trips = trips;
      for (Index i = 0; i < nv; ++i) reg_trips.emplace_back(i, i, reg);
      for (Index a = 0; a < na; ++a) reg_trips.emplace_back(nv + a, nv + a, -reg);
      SparseMat<Scalar> K(nv + na, nv + na);
      K.setFromTriplets(reg_trips.begin(), reg_trips.end());
      ldlt.compute(K);
      if (ldlt.info() == Eigen::Success) {
        factored = true;
        break;
      }
    }
    if (!factored) return solved_once ? (x = x_cand, y = y_cand, true) : false;

    Vec<Scalar> rhs(nv + na);
    rhs.head(nv) = -prog.c;
    for (Index a = 0; a < na; ++a) rhs(nv + a) = target[static_cast<size_t>(a)];
    Vec<Scalar> sol = ldlt.solve(rhs);
    // Iterative refinement against the unregularized system.
    for (int pass = 0; pass < 3; ++pass) {
      Vec<Scalar> resid(nv + na);
      const Vec<Scalar> xs = sol.head(nv);
      const Vec<Scalar> ys = sol.tail(na);
      Vec<Scalar> cty = Vec<Scalar>::Zero(nv);
      Vec<Scalar> cx = Vec<Scalar>::Zero(na);
      for (Index k = 0; k < s.C.outerSize(); ++k)
        for (typename SparseMat<Scalar>::InnerIterator it(s.C, k); it; ++it) {
          const Index a = rowmap[static_cast<size_t>(it.row())];
          if (a >= 0) {
            cty(it.col()) += it.value() * ys(a);
            cx(a) += it.value() * xs(it.col());
          }
        }
      resid.head(nv) = -prog.c - (prog.Q * xs) - cty;
      for (Index a = 0; a < na; ++a) resid(nv + a) = target[static_cast<size_t>(a)] - cx(a);
      sol += ldlt.solve(resid);
    }

    x_cand = sol.head(nv);
    y_cand = Vec<Scalar>::Zero(mt);
    for (Index a = 0; a < na; ++a) y_cand(active[static_cast<size_t>(a)]) = sol(nv + a);
    solved_once = true;

    // Repair: add violated rows, drop wrong-sign multipliers.
    const Vec<Scalar> cx_full = mt ? Vec<Scalar>(s.C * x_cand) : Vec<Scalar>();
    const Scalar scale = Scalar(1) + (x_cand.size() ? x_cand.template lpNorm<Eigen::Infinity>() : Scalar(0));
    bool changed = false;
    for (Index i = 0; i < mt; ++i) {
      int& sd = side[static_cast<size_t>(i)];
      if (sd == 2) continue;
      if (sd == 0) {
        if (std::isfinite(s.hi(i)) && cx_full(i) > s.hi(i) + add_tol * scale) {
          sd = 1;
          changed = true;
        } else if (std::isfinite(s.lo(i)) && cx_full(i) < s.lo(i) - add_tol * scale) {
          sd = -1;
          changed = true;
        }
      } else if (sd == 1 && y_cand(i) < -drop_tol * scale) {
        sd = 0;
        changed = true;
      } else if (sd == -1 && y_cand(i) > drop_tol * scale) {
        sd = 0;
        changed = true;
      }
    }
    if (!changed) break;
  }

  x = x_cand;
  y = y_cand;
  return solved_once;
}

}  // namespace detail

// KKT residuals for a candidate primal/dual pair; duals are stacked over
// [E, nonneg, M] rows as documented at the top of this header.
template <class Scalar>
KktResiduals<Scalar> kkt_check(const ConvexProgram<Scalar>& prog, const Vec<Scalar>& x, const Vec<Scalar>& duals) {
  const auto s = detail::stack_rows(prog);
  if (duals.size() != s.C.rows()) throw std::invalid_argument("kkt_check: dual vector length mismatch");
  if (x.size() != prog.num_vars()) throw std::invalid_argument("kkt_check: primal vector length mismatch");
  return detail::kkt_from_stacked(prog, s, x, duals);
}

template <class Scalar>
SolveResult<Scalar> solve(const ConvexProgram<Scalar>& prog, const SolveOptions<Scalar>& opts = {}) {
  prog.validate();
  const Index nv = prog.num_vars();
  const auto s = detail::stack_rows(prog);
  const Index mt = s.C.rows();
  const Scalar inf = std::numeric_limits<Scalar>::infinity();

  SolveResult<Scalar> result;
  result.x_star = Vec<Scalar>::Zero(nv);
  result.duals = Vec<Scalar>::Zero(mt);

  Vec<Scalar> x = opts.x0.size() == nv ? opts.x0 : Vec<Scalar>::Zero(nv);
  Vec<Scalar> y = opts.y0.size() == mt ? opts.y0 : Vec<Scalar>::Zero(mt);
  Vec<Scalar> z = s.C * x;
  for (Index i = 0; i < mt; ++i) z(i) = std::clamp(z(i), s.lo(i), s.hi(i));

  Scalar rho_base = opts.rho;
  Vec<Scalar> rho(mt), rho_inv(mt);
  const auto set_rho = [&](Scalar base) {
    for (Index i = 0; i < mt; ++i) {
      const Scalar r = (s.lo(i) == s.hi(i)) ? base * Scalar(1e3) : base;
      rho(i) = r;
      rho_inv(i) = Scalar(1) / r;
    }
  };
  set_rho(rho_base);

  Eigen::SimplicialLDLT<SparseMat<Scalar>> kkt;
  const auto factorize = [&]() {
    std::vector<Triplet<Scalar>> trips;
    trips.reserve(static_cast<size_t>(prog.Q.nonZeros() + nv + 2 * s.C.nonZeros() + mt));
    for (Index k = 0; k < prog.Q.outerSize(); ++k)
      for (typename SparseMat<Scalar>::InnerIterator it(prog.Q, k); it; ++it)
        trips.emplace_back(it.row(), it.col(), it.value());
    for (Index i = 0; i < nv; ++i) trips.emplace_back(i, i, opts.sigma);
    for (Index k = 0; k < s.C.outerSize(); ++k)
      for (typename SparseMat<Scalar>::InnerIterator it(s.C, k); it; ++it) {
        trips.emplace_back(nv + it.row(), it.col(), it.value());
        trips.emplace_back(it.col(), nv + it.row(), it.value());
      }
    for (Index i = 0; i < mt; ++i) trips.emplace_back(nv + i, nv + i, -rho_inv(i));
    SparseMat<Scalar> K(nv + mt, nv + mt);
    K.setFromTriplets(trips.begin(), trips.end());
    kkt.compute(K);
    if (kkt.info() != Eigen::Success) throw std::runtime_error("solve: KKT factorization failed");
  };
  factorize();

  const Scalar alpha = opts.over_relaxation;
  const Scalar eps_inf = Scalar(1e-7);
  Vec<Scalar> rhs(nv + mt), sol(nv + mt), x_prev(nv), y_prev(mt);

  const auto try_polish_and_finish = [&](Index iter) -> bool {
    Vec<Scalar> xp = x, yp = y;
    const auto base = detail::kkt_from_stacked(prog, s, x, y);
    if (opts.polish && detail::polish_solution(prog, s, xp, yp)) {
      const auto polished = detail::kkt_from_stacked(prog, s, xp, yp);
      if (polished.max_residual() < base.max_residual()) {
        result.x_star = xp;
        result.duals = yp;
        result.kkt = polished;
      } else {
        result.x_star = x;
        result.duals = y;
        result.kkt = base;
      }
    } else {
      result.x_star = x;
      result.duals = y;
      result.kkt = base;
    }
    result.iterations = iter;
    const Scalar scale = Scalar(1) + std::max(result.x_star.size() ? result.x_star.template lpNorm<Eigen::Infinity>() : Scalar(0),
                                              prog.c.size() ? prog.c.template lpNorm<Eigen::Infinity>() : Scalar(0));
    if (result.kkt.max_residual() <= opts.tol * scale) {
      result.status = SolveStatus::optimal;
      return true;
    }
    return false;
  };

  for (Index iter = 1; iter <= opts.max_iter; ++iter) {
    x_prev = x;
    y_prev = y;

    rhs.head(nv) = opts.sigma * x - prog.c;
    for (Index i = 0; i < mt; ++i) rhs(nv + i) = z(i) - rho_inv(i) * y(i);
    sol = kkt.solve(rhs);
    const auto x_tilde = sol.head(nv);
    const auto nu = sol.tail(mt);

    Vec<Scalar> z_tilde(mt);
    for (Index i = 0; i < mt; ++i) z_tilde(i) = z(i) + rho_inv(i) * (nu(i) - y(i));

    x = alpha * x_tilde + (Scalar(1) - alpha) * x;
    for (Index i = 0; i < mt; ++i) {
      const Scalar relaxed = alpha * z_tilde(i) + (Scalar(1) - alpha) * z(i);
      const Scalar cand = relaxed + rho_inv(i) * y(i);
      const Scalar clamped = std::clamp(cand, s.lo(i), s.hi(i));
      y(i) = y(i) + rho(i) * (relaxed - clamped);
      z(i) = clamped;
    }

    if (iter % opts.check_every != 0 && iter != opts.max_iter) continue;

    const Vec<Scalar> cx = mt ? Vec<Scalar>(s.C * x) : Vec<Scalar>();
    const Vec<Scalar> qx = prog.Q * x;
    const Vec<Scalar> cty = mt ? Vec<Scalar>(s.C.transpose() * y) : Vec<Scalar>::Zero(nv);
    Scalar r_prim = Scalar(0), norm_cx = Scalar(0), norm_z = Scalar(0);
    for (Index i = 0; i < mt; ++i) {
      r_prim = std::max(r_prim, std::abs(cx(i) - z(i)));
      norm_cx = std::max(norm_cx, std::abs(cx(i)));
      norm_z = std::max(norm_z, std::abs(z(i)));
    }
    Vec<Scalar> stat = qx + prog.c + cty;
    const Scalar r_dual = stat.size() ? stat.template lpNorm<Eigen::Infinity>() : Scalar(0);
    const Scalar norm_qx = qx.size() ? qx.template lpNorm<Eigen::Infinity>() : Scalar(0);
    const Scalar norm_cty = cty.size() ? cty.template lpNorm<Eigen::Infinity>() : Scalar(0);
    const Scalar norm_c = prog.c.size() ? prog.c.template lpNorm<Eigen::Infinity>() : Scalar(0);
    const Scalar eps_prim = opts.tol + opts.tol * std::max(norm_cx, norm_z);
    const Scalar eps_dual = opts.tol + opts.tol * std::max({norm_qx, norm_cty, norm_c});

    if (r_prim <= eps_prim && r_dual <= eps_dual) {
      if (try_polish_and_finish(iter)) return result;
      // Polish could not certify; accept the ADMM iterate as optimal anyway
      // when the raw residuals meet the tolerance.
      result.status = SolveStatus::optimal;
      return result;
    }

    // Early exit: a cheap polish attempt once the iterate is in the basin.
    if (opts.polish && r_prim <= std::max(Scalar(1e-6), eps_prim) && r_dual <= std::max(Scalar(1e-6), eps_dual)) {
      Vec<Scalar> xp = x, yp = y;
      if (detail::polish_solution(prog, s, xp, yp)) {
        const auto polished = detail::kkt_from_stacked(prog, s, xp, yp);
        const Scalar scale = Scalar(1) + std::max(xp.size() ? xp.template lpNorm<Eigen::Infinity>() : Scalar(0), norm_c);
        if (polished.max_residual() <= opts.tol * scale) {
          result.x_star = xp;
          result.duals = yp;
          result.kkt = polished;
          result.iterations = iter;
          result.status = SolveStatus::optimal;
          return result;
        }
      }
    }

    // Infeasibility certificates from successive-iterate differences.
    const Vec<Scalar> dy = y - y_prev;
    const Scalar dy_norm = dy.size() ? dy.template lpNorm<Eigen::Infinity>() : Scalar(0);
    if (dy_norm > Scalar(0)) {
      const Vec<Scalar> ybar = dy / dy_norm;
      const Vec<Scalar> ct_ybar = s.C.transpose() * ybar;
      if (ct_ybar.template lpNorm<Eigen::Infinity>() <= eps_inf) {
        Scalar support = Scalar(0);
        bool usable = true;
        for (Index i = 0; i < mt; ++i) {
          if (ybar(i) > eps_inf) {
            if (!std::isfinite(s.hi(i))) {
              usable = false;
              break;
            }
            support += s.hi(i) * ybar(i);
          } else if (ybar(i) < -eps_inf) {
            if (!std::isfinite(s.lo(i))) {
              usable = false;
              break;
            }
            support += s.lo(i) * ybar(i);
          }
        }
        if (usable && support <= -eps_inf) {
          result.status = SolveStatus::infeasible;
          result.certificate = ybar;
          result.iterations = iter;
          result.x_star = x;
          result.duals = y;
          result.kkt = detail::kkt_from_stacked(prog, s, x, y);
          return result;
        }
      }
    }
    const Vec<Scalar> dx = x - x_prev;
    const Scalar dx_norm = dx.size() ? dx.template lpNorm<Eigen::Infinity>() : Scalar(0);
    if (dx_norm > Scalar(0)) {
      const Vec<Scalar> xbar = dx / dx_norm;
      const Vec<Scalar> qxbar = prog.Q * xbar;
      if (qxbar.template lpNorm<Eigen::Infinity>() <= eps_inf && prog.c.dot(xbar) <= -eps_inf) {
        const Vec<Scalar> cxbar = s.C * xbar;
        bool recession = true;
        for (Index i = 0; i < mt && recession; ++i) {
          if (std::isfinite(s.hi(i)) && cxbar(i) > eps_inf) recession = false;
          if (std::isfinite(s.lo(i)) && cxbar(i) < -eps_inf) recession = false;
        }
        if (recession) {
          result.status = SolveStatus::unbounded;
          result.certificate = xbar;
          result.iterations = iter;
          result.x_star = x;
          result.duals = y;
          result.kkt = detail::kkt_from_stacked(prog, s, x, y);
          return result;
        }
      }
    }

    // Deterministic penalty rebalancing.
    if (opts.adaptive_rho && iter % 100 == 0 && mt > 0) {
      const Scalar sp = r_prim / std::max(std::max(norm_cx, norm_z), Scalar(1e-12));
      const Scalar sd = r_dual / std::max(std::max({norm_qx, norm_cty, norm_c}), Scalar(1e-12));
      if (sp > Scalar(0) && sd > Scalar(0)) {
        const Scalar scale = std::sqrt(sp / sd);
        const Scalar proposed = std::clamp(rho_base * scale, Scalar(1e-6), Scalar(1e6));
        if (proposed > rho_base * Scalar(5) || proposed < rho_base / Scalar(5)) {
          rho_base = proposed;
          set_rho(rho_base);
          factorize();
        }
      }
    }
  }

  // Iteration budget exhausted; report the best information available.
  if (!try_polish_and_finish(opts.max_iter)) result.status = SolveStatus::max_iter;
  return result;
}

// One-constraint-per-line text dump for debugging program assembly.
template <class Scalar>
void dump(const ConvexProgram<Scalar>& prog, std::ostream& out) {
  out << "vars " << prog.num_vars() << "\n";
  out << "objective quadratic_diag";
  for (Index i = 0; i < prog.num_vars(); ++i) out << ' ' << prog.Q.coeff(i, i);
  out << "\nobjective linear";
  for (Index i = 0; i < prog.c.size(); ++i) out << ' ' << prog.c(i);
  out << "\n";
  const auto write_rows = [&out](const SparseMat<Scalar>& mat, const Vec<Scalar>& rhs, const char* tag,
                                 const char* rel) {
    Mat<Scalar> dense(mat);
    for (Index r = 0; r < dense.rows(); ++r) {
      out << tag;
      for (Index c = 0; c < dense.cols(); ++c)
        if (dense(r, c) != Scalar(0)) out << ' ' << c << ':' << dense(r, c);
      out << ' ' << rel << ' ' << rhs(r) << "\n";
    }
  };
  write_rows(prog.E, prog.f, "eq", "=");
  write_rows(prog.M, prog.v, "ineq", "<=");
  out << "nonneg";
  for (Index i : prog.nonneg) out << ' ' << i;
  out << "\n";
}

template <class Scalar>
void dump(const ConvexProgram<Scalar>& prog, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dump: cannot open " + path);
  dump(prog, out);
}

}  // namespace sls
