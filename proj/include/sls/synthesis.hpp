#pragma once

// Robust SLS synthesis: per-row dualization of the polytopic disturbance
// constraint, assembly of the joint response/multiplier program, the
// centralized solve, and dual pruning to the response sparsity pattern.
//
// The assembler is shared with the distributed module: a patch program is the
// same assembly restricted to a subset of disturbance columns, with the
// budget rows either kept as constraints (centralized) or replaced by a
// linear dual penalty (distributed primal update).

#include <sls/lti.hpp>
#include <sls/qp.hpp>

#include <optional>
#include <string>
#include <vector>

namespace sls {

template <class Scalar>
struct RobustSpec {
  Polytope<Scalar> disturbance;  // G w <= g, per time step
  Polytope<Scalar> performance;  // H [x; u] <= h, per time step
  Index T = 0;

  Index q() const { return disturbance.rows(); }
  Index p() const { return performance.rows(); }

  void validate(Index n, Index m) const {
    disturbance.validate();
    performance.validate();
    if (T <= 0) throw std::invalid_argument("RobustSpec: horizon must be positive");
    if (disturbance.dim() != n) throw std::invalid_argument("RobustSpec: G must have n columns");
    if (performance.dim() != n + m) throw std::invalid_argument("RobustSpec: H must have n+m columns");
    if (!disturbance.q.allFinite() || !performance.q.allFinite())
      throw std::invalid_argument("RobustSpec: bounds must be finite");
  }
};

// Symmetric box bounds |w| <= w_max, |x| <= x_max, |u| <= u_max expanded to
// stacked +/- identity rows.
template <class Scalar>
RobustSpec<Scalar> make_box_spec(const Vec<Scalar>& w_max, const Vec<Scalar>& x_max, const Vec<Scalar>& u_max,
                                 Index T) {
  const Index n = w_max.size();
  const Index m = u_max.size();
  if (x_max.size() != n) throw std::invalid_argument("make_box_spec: x_max must match w_max dimension");
  RobustSpec<Scalar> spec;
  spec.T = T;
  spec.disturbance.P.resize(2 * n, n);
  spec.disturbance.P << Mat<Scalar>::Identity(n, n), -Mat<Scalar>::Identity(n, n);
  spec.disturbance.q.resize(2 * n);
  spec.disturbance.q << w_max, w_max;
  spec.performance.P.resize(2 * (n + m), n + m);
  spec.performance.P << Mat<Scalar>::Identity(n + m, n + m), -Mat<Scalar>::Identity(n + m, n + m);
  spec.performance.q.resize(2 * (n + m));
  spec.performance.q << x_max, u_max, x_max, u_max;
  return spec;
}

template <class Scalar>
struct DualCertificate {
  std::vector<Mat<Scalar>> lambda;  // T matrices, p x q, entrywise >= 0
  RowVec<Scalar> sigma;             // 1 x p, entrywise >= 0

  Vec<Scalar> budget(const Vec<Scalar>& g) const {
    if (lambda.empty()) return Vec<Scalar>();
    Vec<Scalar> b = Vec<Scalar>::Zero(lambda.front().rows());
    for (const auto& l : lambda) b += l * g;
    return b;
  }
};

template <class Scalar>
struct InfeasibilityBreakdown;

template <class Scalar>
struct SynthesisResult {
  FirResponse<Scalar> phi;
  DualCertificate<Scalar> cert;
  Scalar cost = Scalar(0);
  SolveStatus status = SolveStatus::max_iter;
  SolveResult<Scalar> solver;
  std::string note;  // infeasibility summary when applicable
  Scalar infeasible_state_mass = Scalar(0);  // normalized certificate masses
  Scalar infeasible_input_mass = Scalar(0);
  Scalar infeasible_dynamics_mass = Scalar(0);
};

// Maps each performance row and each disturbance row to the single node it
// constrains; only exists when H and G are block diagonal under the node
// partition (the decoupled-bounds hypothesis).
struct Decoupling {
  std::vector<Index> h_row_node;
  std::vector<Index> g_row_node;
};

template <class Scalar>
std::optional<Decoupling> decoupling_structure(const LinearSystem<Scalar>& sys, const RobustSpec<Scalar>& spec) {
  const Index n = sys.n();
  Decoupling dec;
  dec.h_row_node.resize(static_cast<size_t>(spec.p()));
  dec.g_row_node.resize(static_cast<size_t>(spec.q()));
  for (Index r = 0; r < spec.p(); ++r) {
    Index node = -1;
    for (Index c = 0; c < spec.performance.dim(); ++c) {
      if (spec.performance.P(r, c) == Scalar(0)) continue;
      const Index owner = c < n ? c : sys.actuator_host(c - n);
      if (node == -1) node = owner;
      else if (node != owner) return std::nullopt;
    }
    if (node == -1) node = 0;  // all-zero row binds nothing; park it anywhere
    dec.h_row_node[static_cast<size_t>(r)] = node;
  }
  for (Index r = 0; r < spec.q(); ++r) {
    Index node = -1;
    for (Index c = 0; c < n; ++c) {
      if (spec.disturbance.P(r, c) == Scalar(0)) continue;
      if (node == -1) node = c;
      else if (node != c) return std::nullopt;
    }
    if (node == -1) node = 0;
    dec.g_row_node[static_cast<size_t>(r)] = node;
  }
  return dec;
}

// True when the stacked response block of (row node i, column node j) has any
// allowed entry at delay index k (0-based).
template <class Scalar>
bool block_supported(const LinearSystem<Scalar>& sys, const SupportMask& mask, Index k, Index i, Index j) {
  if (mask.x_support[static_cast<size_t>(k)](i, j)) return true;
  for (Index a : sys.node_actuators[static_cast<size_t>(i)])
    if (mask.u_support[static_cast<size_t>(k)](a, j)) return true;
  return false;
}

namespace detail {

struct VarMap {
  std::vector<Mat<Index>> phi_x;   // -1 where not a decision variable
  std::vector<Mat<Index>> phi_u;
  std::vector<Mat<Index>> lambda;
  Index count = 0;
};

enum class EqKind { affine, link };

struct RowTag {
  EqKind kind;
  Index h_row;  // performance row for link rows, -1 for affine rows
};

template <class Scalar>
struct Assembly {
  ConvexProgram<Scalar> prog;
  VarMap map;
  std::vector<RowTag> eq_tags;
  std::vector<Index> budget_rows;  // performance row index per M row
  Scalar cost_offset = Scalar(0);  // identity columns of phi_x[1]
  bool structurally_infeasible = false;
  std::string note;
};

template <class Scalar>
struct AssemblyOptions {
  std::vector<Index> columns;        // disturbance columns; empty = all
  bool include_budget_rows = true;   // emit constraint rows sum_k lambda[k] g <= h
  RowVec<Scalar> sigma;              // dual penalty row (1 x p); empty = none
  bool prune_lambda = false;         // restrict lambda to the response block pattern
  Scalar lambda_reg = Scalar(1e-8);  // tiny Tikhonov on lambda: unique minimal certificates
  Scalar weight_x = Scalar(1);       // objective weights on the two response channels
  Scalar weight_u = Scalar(1);
};

template <class Scalar>
Assembly<Scalar> assemble(const LinearSystem<Scalar>& sys, const RobustSpec<Scalar>& spec, const SupportMask& mask,
                          const AssemblyOptions<Scalar>& opts) {
  const Index n = sys.n(), m = sys.m(), T = spec.T, p = spec.p(), q = spec.q();
  spec.validate(n, m);
  if (mask.horizon() != T) throw std::invalid_argument("assemble: mask horizon must match spec horizon");
  for (Index i = 0; i < n; ++i)
    if (!mask.x_support[0](i, i)) throw std::invalid_argument("assemble: mask excludes the diagonal of phi_x[1]");

  std::vector<Index> cols = opts.columns;
  if (cols.empty())
    for (Index j = 0; j < n; ++j) cols.push_back(j);
  std::vector<char> col_selected(static_cast<size_t>(n), 0);
  for (Index j : cols) col_selected[static_cast<size_t>(j)] = 1;

  std::optional<Decoupling> dec;
  if (opts.prune_lambda || static_cast<Index>(cols.size()) != n) {
    dec = decoupling_structure(sys, spec);
    if (!dec) throw std::invalid_argument("assemble: bounds are not decoupled per node");
  }

  Assembly<Scalar> asm_out;
  VarMap& map = asm_out.map;
  map.phi_x.assign(static_cast<size_t>(T), Mat<Index>::Constant(n, n, -1));
  map.phi_u.assign(static_cast<size_t>(T), Mat<Index>::Constant(m, n, -1));
  map.lambda.assign(static_cast<size_t>(T), Mat<Index>::Constant(p, q, -1));

  Index next = 0;
  for (Index k = 1; k < T; ++k)  // phi_x[1] is the identity, not a variable
    for (Index j : cols)
      for (Index i = 0; i < n; ++i)
        if (mask.x_support[static_cast<size_t>(k)](i, j)) map.phi_x[static_cast<size_t>(k)](i, j) = next++;
  for (Index k = 0; k < T; ++k)
    for (Index j : cols)
      for (Index a = 0; a < m; ++a)
        if (mask.u_support[static_cast<size_t>(k)](a, j)) map.phi_u[static_cast<size_t>(k)](a, j) = next++;
  for (Index k = 0; k < T; ++k)
    for (Index r = 0; r < p; ++r)
      for (Index c = 0; c < q; ++c) {
        if (dec) {
          const Index cn = dec->g_row_node[static_cast<size_t>(c)];
          if (!col_selected[static_cast<size_t>(cn)]) continue;
          if (opts.prune_lambda &&
              !block_supported(sys, mask, k, dec->h_row_node[static_cast<size_t>(r)], cn))
            continue;
        }
        map.lambda[static_cast<size_t>(k)](r, c) = next++;
      }
  map.count = next;

  ConvexProgram<Scalar>& prog = asm_out.prog;
  prog.c = Vec<Scalar>::Zero(next);
  std::vector<Triplet<Scalar>> q_trips;
  for (Index k = 1; k < T; ++k)
    for (Index j : cols)
      for (Index i = 0; i < n; ++i) {
        const Index var = map.phi_x[static_cast<size_t>(k)](i, j);
        if (var >= 0) q_trips.emplace_back(var, var, Scalar(2) * opts.weight_x);
      }
  for (Index k = 0; k < T; ++k)
    for (Index j : cols)
      for (Index a = 0; a < m; ++a) {
        const Index var = map.phi_u[static_cast<size_t>(k)](a, j);
        if (var >= 0) q_trips.emplace_back(var, var, Scalar(2) * opts.weight_u);
      }
  for (Index k = 0; k < T; ++k)
    for (Index r = 0; r < p; ++r)
      for (Index c = 0; c < q; ++c) {
        const Index var = map.lambda[static_cast<size_t>(k)](r, c);
        if (var < 0) continue;
        if (opts.lambda_reg > Scalar(0)) q_trips.emplace_back(var, var, Scalar(2) * opts.lambda_reg);
        prog.nonneg.push_back(var);
        if (opts.sigma.size() == p) prog.c(var) += opts.sigma(r) * spec.disturbance.q(c);
      }
  prog.Q.resize(next, next);
  prog.Q.setFromTriplets(q_trips.begin(), q_trips.end());
  asm_out.cost_offset = opts.weight_x * Scalar(cols.size());  // identity entries of phi_x[1]

  // Equality rows.  A row with no surviving variables must have (numerically)
  // zero right-hand side, otherwise the mask itself forbids feasibility.
  std::vector<Triplet<Scalar>> e_trips;
  std::vector<Scalar> e_rhs;
  Index row = 0;
  const auto emit_row = [&](std::vector<std::pair<Index, Scalar>>& terms, Scalar rhs, EqKind kind, Index h_row) {
    if (terms.empty()) {
      if (std::abs(rhs) > Scalar(1e-11)) {
        asm_out.structurally_infeasible = true;
        if (asm_out.note.empty())
          asm_out.note = kind == EqKind::affine
                             ? "support mask cannot carry the dynamics coupling"
                             : "support mask cannot match the performance row " + std::to_string(h_row);
      }
      return;
    }
    for (const auto& [var, coef] : terms) e_trips.emplace_back(row, var, coef);
    e_rhs.push_back(rhs);
    asm_out.eq_tags.push_back({kind, h_row});
    ++row;
  };

  // phi_x value at delay index k (0-based) for entry (i, j): either a
  // variable or the identity constant.
  const auto phi_x_term = [&](Index k, Index i, Index j) -> std::pair<Index, Scalar> {
    if (k == 0) return {-1, i == j ? Scalar(1) : Scalar(0)};
    return {map.phi_x[static_cast<size_t>(k)](i, j), Scalar(0)};
  };

  std::vector<std::pair<Index, Scalar>> terms;
  for (Index j : cols) {
    for (Index k = 0; k + 1 < T; ++k) {
      for (Index i = 0; i < n; ++i) {
        terms.clear();
        Scalar rhs = Scalar(0);
        const Index lhs_var = map.phi_x[static_cast<size_t>(k + 1)](i, j);
        if (lhs_var >= 0) terms.emplace_back(lhs_var, Scalar(1));
        for (Index s = 0; s < n; ++s) {
          const Scalar a = sys.A(i, s);
          if (a == Scalar(0)) continue;
          const auto [var, cst] = phi_x_term(k, s, j);
          if (var >= 0) terms.emplace_back(var, -a);
          else rhs += a * cst;
        }
        for (Index aix = 0; aix < m; ++aix) {
          const Scalar b = sys.B(i, aix);
          if (b == Scalar(0)) continue;
          const Index var = map.phi_u[static_cast<size_t>(k)](aix, j);
          if (var >= 0) terms.emplace_back(var, -b);
        }
        emit_row(terms, rhs, EqKind::affine, -1);
      }
    }
    for (Index i = 0; i < n; ++i) {  // closing constraint A phi_x[T] + B phi_u[T] = 0
      terms.clear();
      Scalar rhs = Scalar(0);
      for (Index s = 0; s < n; ++s) {
        const Scalar a = sys.A(i, s);
        if (a == Scalar(0)) continue;
        const auto [var, cst] = phi_x_term(T - 1, s, j);
        if (var >= 0) terms.emplace_back(var, a);
        else rhs -= a * cst;
      }
      for (Index aix = 0; aix < m; ++aix) {
        const Scalar b = sys.B(i, aix);
        if (b == Scalar(0)) continue;
        const Index var = map.phi_u[static_cast<size_t>(T - 1)](aix, j);
        if (var >= 0) terms.emplace_back(var, b);
      }
      emit_row(terms, rhs, EqKind::affine, -1);
    }
  }

  // Link rows: H [phi_x[k]; phi_u[k]] = lambda[k] G, columnwise.
  for (Index k = 0; k < T; ++k) {
    for (Index r = 0; r < p; ++r) {
      for (Index j : cols) {
        terms.clear();
        Scalar rhs = Scalar(0);
        for (Index s = 0; s < n; ++s) {
          const Scalar hval = spec.performance.P(r, s);
          if (hval == Scalar(0)) continue;
          const auto [var, cst] = phi_x_term(k, s, j);
          if (var >= 0) terms.emplace_back(var, hval);
          else rhs -= hval * cst;
        }
        for (Index a = 0; a < m; ++a) {
          const Scalar hval = spec.performance.P(r, n + a);
          if (hval == Scalar(0)) continue;
          const Index var = map.phi_u[static_cast<size_t>(k)](a, j);
          if (var >= 0) terms.emplace_back(var, hval);
        }
        for (Index c = 0; c < q; ++c) {
          const Scalar gval = spec.disturbance.P(c, j);
          if (gval == Scalar(0)) continue;
          const Index var = map.lambda[static_cast<size_t>(k)](r, c);
          if (var >= 0) terms.emplace_back(var, -gval);
        }
        emit_row(terms, rhs, EqKind::link, r);
      }
    }
  }

  prog.E.resize(row, next);
  prog.E.setFromTriplets(e_trips.begin(), e_trips.end());
  prog.f = Eigen::Map<Vec<Scalar>>(e_rhs.data(), static_cast<Index>(e_rhs.size()));

  if (opts.include_budget_rows) {
    std::vector<Triplet<Scalar>> m_trips;
    std::vector<Scalar> m_rhs;
    Index mrow = 0;
    for (Index r = 0; r < p; ++r) {
      bool any = false;
      for (Index k = 0; k < T; ++k)
        for (Index c = 0; c < q; ++c) {
          const Index var = map.lambda[static_cast<size_t>(k)](r, c);
          if (var < 0 || spec.disturbance.q(c) == Scalar(0)) continue;
          m_trips.emplace_back(mrow, var, spec.disturbance.q(c));
          any = true;
        }
      if (!any) {
        if (spec.performance.q(r) < Scalar(0)) {
          asm_out.structurally_infeasible = true;
          if (asm_out.note.empty()) asm_out.note = "negative bound with no multiplier support";
        }
        continue;
      }
      m_rhs.push_back(spec.performance.q(r));
      asm_out.budget_rows.push_back(r);
      ++mrow;
    }
    prog.M.resize(mrow, next);
    prog.M.setFromTriplets(m_trips.begin(), m_trips.end());
    prog.v = Eigen::Map<Vec<Scalar>>(m_rhs.data(), static_cast<Index>(m_rhs.size()));
  } else {
    prog.M.resize(0, next);
    prog.v = Vec<Scalar>(0);
  }
  return asm_out;
}

template <class Scalar>
FirResponse<Scalar> extract_phi(const LinearSystem<Scalar>& sys, Index T, const VarMap& map, const Vec<Scalar>& x) {
  FirResponse<Scalar> phi;
  phi.horizon = T;
  phi.phi_x.assign(static_cast<size_t>(T), Mat<Scalar>::Zero(sys.n(), sys.n()));
  phi.phi_u.assign(static_cast<size_t>(T), Mat<Scalar>::Zero(sys.m(), sys.n()));
  phi.phi_x[0] = Mat<Scalar>::Identity(sys.n(), sys.n());
  for (Index k = 0; k < T; ++k) {
    for (Index i = 0; i < sys.n(); ++i)
      for (Index j = 0; j < sys.n(); ++j) {
        const Index var = map.phi_x[static_cast<size_t>(k)](i, j);
        if (var >= 0) phi.phi_x[static_cast<size_t>(k)](i, j) = x(var);
      }
    for (Index a = 0; a < sys.m(); ++a)
      for (Index j = 0; j < sys.n(); ++j) {
        const Index var = map.phi_u[static_cast<size_t>(k)](a, j);
        if (var >= 0) phi.phi_u[static_cast<size_t>(k)](a, j) = x(var);
      }
  }
  return phi;
}

template <class Scalar>
std::vector<Mat<Scalar>> extract_lambda(Index T, Index p, Index q, const VarMap& map, const Vec<Scalar>& x) {
  std::vector<Mat<Scalar>> lambda(static_cast<size_t>(T), Mat<Scalar>::Zero(p, q));
  for (Index k = 0; k < T; ++k)
    for (Index r = 0; r < p; ++r)
      for (Index c = 0; c < q; ++c) {
        const Index var = map.lambda[static_cast<size_t>(k)](r, c);
        if (var >= 0) lambda[static_cast<size_t>(k)](r, c) = std::max(Scalar(0), x(var));
      }
  return lambda;
}

}  // namespace detail

// Constraint system over the T*q multipliers of one performance row, for a
// fixed numeric response: equality lambda[k] G = H_row Phi[k] per delay,
// lambda >= 0, budget sum_k lambda[k] g <= h_i, objective min sum_k lambda[k] g.
// Variable ordering: k-major, then disturbance row (var = k*q + c).
// The set is satisfiable iff the robust constraint holds for every admissible
// disturbance sequence.
template <class Scalar>
ConvexProgram<Scalar> dualize_row(const RowVec<Scalar>& H_row, Scalar h_i, const std::vector<Mat<Scalar>>& phi_blocks,
                                  const Mat<Scalar>& G, const Vec<Scalar>& g) {
  const Index T = static_cast<Index>(phi_blocks.size());
  const Index q = G.rows();
  const Index n = G.cols();
  if (T == 0) throw std::invalid_argument("dualize_row: need at least one response block");
  if (g.size() != q) throw std::invalid_argument("dualize_row: G/g row mismatch");
  for (const auto& blk : phi_blocks)
    if (blk.rows() != H_row.size() || blk.cols() != n)
      throw std::invalid_argument("dualize_row: response block dimensions disagree with H_row/G");

  ConvexProgram<Scalar> prog;
  const Index nv = T * q;
  prog.Q.resize(nv, nv);
  prog.c = Vec<Scalar>::Zero(nv);
  for (Index k = 0; k < T; ++k)
    for (Index c = 0; c < q; ++c) {
      prog.c(k * q + c) = g(c);
      prog.nonneg.push_back(k * q + c);
    }
  std::vector<Triplet<Scalar>> e_trips;
  Vec<Scalar> rhs(T * n);
  for (Index k = 0; k < T; ++k) {
    const RowVec<Scalar> target = H_row * phi_blocks[static_cast<size_t>(k)];
    for (Index j = 0; j < n; ++j) {
      for (Index c = 0; c < q; ++c)
        if (G(c, j) != Scalar(0)) e_trips.emplace_back(k * n + j, k * q + c, G(c, j));
      rhs(k * n + j) = target(j);
    }
  }
  prog.E.resize(T * n, nv);
  prog.E.setFromTriplets(e_trips.begin(), e_trips.end());
  prog.f = rhs;
  std::vector<Triplet<Scalar>> m_trips;
  for (Index k = 0; k < T; ++k)
    for (Index c = 0; c < q; ++c)
      if (g(c) != Scalar(0)) m_trips.emplace_back(0, k * q + c, g(c));
  prog.M.resize(1, nv);
  prog.M.setFromTriplets(m_trips.begin(), m_trips.end());
  prog.v = Vec<Scalar>::Constant(1, h_i);
  return prog;
}

template <class Scalar>
struct SynthesisOptions {
  bool prune_lambda = false;
  Scalar lambda_reg = Scalar(1e-8);
  Scalar weight_x = Scalar(1);  // objective = weight_x sum ||phi_x||_F^2 + weight_u sum ||phi_u||_F^2
  Scalar weight_u = Scalar(1);
  SolveOptions<Scalar> solver{};
};

// Residuals of the certificate invariants for a given response.
template <class Scalar>
struct CertificateResiduals {
  Scalar link = std::numeric_limits<Scalar>::infinity();        // max |H Phi[k] - lambda[k] G|
  Scalar budget = std::numeric_limits<Scalar>::infinity();      // max(0, sum_k lambda[k] g - h)
  Scalar negativity = std::numeric_limits<Scalar>::infinity();  // max(0, -lambda)

  bool ok(Scalar tol) const { return link <= tol && budget <= tol && negativity <= tol; }
};

template <class Scalar>
CertificateResiduals<Scalar> check_certificate(const RobustSpec<Scalar>& spec, const FirResponse<Scalar>& phi,
                                               const DualCertificate<Scalar>& cert) {
  if (static_cast<Index>(cert.lambda.size()) != spec.T)
    throw std::invalid_argument("check_certificate: lambda horizon mismatch");
  CertificateResiduals<Scalar> res;
  res.link = Scalar(0);
  res.negativity = Scalar(0);
  for (Index k = 0; k < spec.T; ++k) {
    const Mat<Scalar> lhs = spec.performance.P * phi.stacked(k + 1);
    const Mat<Scalar> rhs = cert.lambda[static_cast<size_t>(k)] * spec.disturbance.P;
    res.link = std::max(res.link, inf_norm<Scalar>(lhs - rhs));
    const Scalar most_negative = cert.lambda[static_cast<size_t>(k)].minCoeff();
    res.negativity = std::max(res.negativity, std::max(Scalar(0), -most_negative));
  }
  const Vec<Scalar> slack = spec.performance.q - cert.budget(spec.disturbance.q);
  res.budget = std::max(Scalar(0), -slack.minCoeff());
  return res;
}

// Splits an infeasibility certificate's mass between state-bound, input-bound
// and dynamics rows; meaningful when each performance row touches one family.
template <class Scalar>
struct InfeasibilityBreakdown {
  Scalar state_mass = Scalar(0);
  Scalar input_mass = Scalar(0);
  Scalar dynamics_mass = Scalar(0);
  bool valid = false;  // true when a certificate carried any mass

  std::string to_string() const {
    if (!valid) return "no certificate available";
    std::string out = "certificate mass:";
    out += " state " + std::to_string(static_cast<double>(state_mass));
    out += ", input " + std::to_string(static_cast<double>(input_mass));
    out += ", dynamics " + std::to_string(static_cast<double>(dynamics_mass));
    return out;
  }
};

template <class Scalar>
InfeasibilityBreakdown<Scalar> classify_infeasibility(const LinearSystem<Scalar>& sys, const RobustSpec<Scalar>& spec,
                                                      const detail::Assembly<Scalar>& asmbl,
                                                      const Vec<Scalar>& certificate) {
  InfeasibilityBreakdown<Scalar> out;
  if (certificate.size() == 0) return out;
  const Index n_eq = asmbl.prog.E.rows();
  const Index n_nn = static_cast<Index>(asmbl.prog.nonneg.size());
  const auto add_row_mass = [&](Index h_row, Scalar mass) {
    bool state = false, input = false;
    for (Index c = 0; c < spec.performance.dim(); ++c)
      if (spec.performance.P(h_row, c) != Scalar(0)) ((c < sys.n()) ? state : input) = true;
    if (state) out.state_mass += mass;
    if (input) out.input_mass += mass;
  };
  for (Index i = 0; i < certificate.size(); ++i) {
    const Scalar mass = std::abs(certificate(i));
    if (mass <= Scalar(1e-10)) continue;
    if (i < n_eq) {
      const auto& tag = asmbl.eq_tags[static_cast<size_t>(i)];
      if (tag.kind == detail::EqKind::link) add_row_mass(tag.h_row, mass);
      else out.dynamics_mass += mass;
    } else if (i >= n_eq + n_nn) {
      add_row_mass(asmbl.budget_rows[static_cast<size_t>(i - n_eq - n_nn)], mass);
    }
  }
  const Scalar total = out.state_mass + out.input_mass + out.dynamics_mass;
  if (total > Scalar(0)) {
    out.state_mass /= total;
    out.input_mass /= total;
    out.dynamics_mass /= total;
    out.valid = true;
  }
  return out;
}

template <class Scalar>
SynthesisResult<Scalar> synthesize_centralized(const LinearSystem<Scalar>& sys, const RobustSpec<Scalar>& spec,
                                               const SupportMask& mask, const SynthesisOptions<Scalar>& opts = {}) {
  sys.validate();
  detail::AssemblyOptions<Scalar> aopts;
  aopts.prune_lambda = opts.prune_lambda;
  aopts.lambda_reg = opts.lambda_reg;
  aopts.weight_x = opts.weight_x;
  aopts.weight_u = opts.weight_u;
  const auto asmbl = detail::assemble(sys, spec, mask, aopts);
  SynthesisResult<Scalar> result;
  if (asmbl.structurally_infeasible) {
    result.status = SolveStatus::infeasible;
    result.note = asmbl.note;
    return result;
  }
  result.solver = solve(asmbl.prog, opts.solver);
  result.status = result.solver.status;
  if (result.status == SolveStatus::infeasible) {
    const auto breakdown = classify_infeasibility(sys, spec, asmbl, result.solver.certificate);
    result.note = breakdown.to_string();
    result.infeasible_state_mass = breakdown.state_mass;
    result.infeasible_input_mass = breakdown.input_mass;
    result.infeasible_dynamics_mass = breakdown.dynamics_mass;
    return result;
  }
  if (result.status != SolveStatus::optimal) return result;
  result.phi = detail::extract_phi(sys, spec.T, asmbl.map, result.solver.x_star);
  result.cert.lambda = detail::extract_lambda(spec.T, spec.p(), spec.q(), asmbl.map, result.solver.x_star);
  result.cert.sigma = RowVec<Scalar>::Zero(spec.p());
  const Index n_eq = asmbl.prog.E.rows();
  const Index n_nn = static_cast<Index>(asmbl.prog.nonneg.size());
  for (Index b = 0; b < static_cast<Index>(asmbl.budget_rows.size()); ++b) {
    const Scalar dual = result.solver.duals(n_eq + n_nn + b);
    result.cert.sigma(asmbl.budget_rows[static_cast<size_t>(b)]) = std::max(Scalar(0), dual);
  }
  result.cost = Scalar(0);
  for (const auto& p : result.phi.phi_x) result.cost += opts.weight_x * p.squaredNorm();
  for (const auto& p : result.phi.phi_u) result.cost += opts.weight_u * p.squaredNorm();
  return result;
}

// Zeroes multiplier blocks wherever the paired response block is masked away.
// Requires decoupled bounds; zeroing such blocks cannot break feasibility
// because their row targets vanish and lambda >= 0 only shrinks the budget.
template <class Scalar>
DualCertificate<Scalar> prune_dual(const LinearSystem<Scalar>& sys, const RobustSpec<Scalar>& spec,
                                   const SupportMask& mask, const DualCertificate<Scalar>& cert) {
  const auto dec = decoupling_structure(sys, spec);
  if (!dec) throw std::invalid_argument("prune_dual: bounds are not decoupled per node");
  DualCertificate<Scalar> out = cert;
  for (Index k = 0; k < static_cast<Index>(out.lambda.size()); ++k)
    for (Index r = 0; r < out.lambda[static_cast<size_t>(k)].rows(); ++r)
      for (Index c = 0; c < out.lambda[static_cast<size_t>(k)].cols(); ++c)
        if (!block_supported(sys, mask, k, dec->h_row_node[static_cast<size_t>(r)],
                             dec->g_row_node[static_cast<size_t>(c)]))
          out.lambda[static_cast<size_t>(k)](r, c) = Scalar(0);
  return out;
}

}  // namespace sls
