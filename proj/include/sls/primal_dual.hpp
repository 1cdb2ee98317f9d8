#pragma once

// Distributed synthesis by dual decomposition: the budget rows are priced by
// a dual vector sigma, each patch (node group) solves its own column-block
// program with the price as a linear penalty on its multipliers, and the
// prices ascend on the aggregated budget violation.  Communication is
// simulated over a message bus that enforces neighbor-only exchange.

#include <sls/synthesis.hpp>

#include <chrono>
#include <stdexcept>
#include <string>
#include <vector>

namespace sls {

struct Patch {
  Index id = -1;
  std::vector<Index> owned_columns;  // disturbance/state columns this agent optimizes
  std::vector<Index> coupled_rows;   // budget rows its multiplier blocks touch
  std::vector<Index> neighbor_ids;
};

template <class Scalar>
struct DualState {
  RowVec<Scalar> sigma;  // 1 x p, entrywise >= 0
  Index iteration = 0;
  std::vector<Scalar> residual_history;
};

enum class MessageKind { budget_contribution, sigma_slice };

template <class Scalar>
struct Message {
  Index from = -1;
  Index to = -1;
  Index round = 0;
  MessageKind kind = MessageKind::budget_contribution;
  std::vector<Index> rows;  // budget row indices the payload refers to
  Vec<Scalar> values;
};

// Neighbor-only transport.  Sending between undeclared pairs is a logic
// error: the algorithm must never need it.
template <class Scalar>
class MessageBus {
 public:
  explicit MessageBus(const std::vector<Patch>& patches) {
    const size_t k = patches.size();
    allowed_.assign(k, std::vector<char>(k, 0));
    for (const auto& p : patches) {
      allowed_[static_cast<size_t>(p.id)][static_cast<size_t>(p.id)] = 1;
      for (Index nb : p.neighbor_ids) {
        allowed_[static_cast<size_t>(p.id)][static_cast<size_t>(nb)] = 1;
        allowed_[static_cast<size_t>(nb)][static_cast<size_t>(p.id)] = 1;
      }
    }
  }

  void send(Message<Scalar> msg) {
    if (msg.from < 0 || msg.to < 0 || msg.from >= static_cast<Index>(allowed_.size()) ||
        msg.to >= static_cast<Index>(allowed_.size()) ||
        !allowed_[static_cast<size_t>(msg.from)][static_cast<size_t>(msg.to)])
      throw std::logic_error("MessageBus: message between non-neighbors");
    log_.push_back(std::move(msg));
  }

  // Messages addressed to `to` in `round` of the given kind, in send order.
  std::vector<const Message<Scalar>*> inbox(Index to, Index round, MessageKind kind) const {
    std::vector<const Message<Scalar>*> out;
    for (const auto& m : log_)
      if (m.to == to && m.round == round && m.kind == kind) out.push_back(&m);
    return out;
  }

  const std::vector<Message<Scalar>>& log() const { return log_; }

 private:
  std::vector<std::vector<char>> allowed_;
  std::vector<Message<Scalar>> log_;
};

// Splits the nodes into patches of `group_size` consecutive nodes (one node
// per patch by default).  Patches are neighbors when any of their response
// blocks couple under the support mask; a patch's coupled rows are the budget
// rows whose multiplier blocks can be nonzero against its owned columns.
// Requires per-node decoupled bounds.
template <class Scalar>
std::vector<Patch> decompose(const LinearSystem<Scalar>& sys, const SupportMask& mask, const RobustSpec<Scalar>& spec,
                             Index group_size = 1) {
  sys.validate();
  spec.validate(sys.n(), sys.m());
  if (mask.horizon() != spec.T) throw std::invalid_argument("decompose: mask horizon must match spec horizon");
  if (group_size < 1) throw std::invalid_argument("decompose: group size must be positive");
  const auto dec = decoupling_structure(sys, spec);
  if (!dec)
    throw std::invalid_argument("decompose: bounds couple multiple nodes; use centralized synthesis instead");

  const Index n = sys.n();
  const Index k = (n + group_size - 1) / group_size;
  std::vector<Patch> patches(static_cast<size_t>(k));
  std::vector<Index> node_patch(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Index pid = i / group_size;
    node_patch[static_cast<size_t>(i)] = pid;
    patches[static_cast<size_t>(pid)].id = pid;
    patches[static_cast<size_t>(pid)].owned_columns.push_back(i);
  }

  // Node-level coupling: any supported response block in either direction.
  const auto nodes_coupled = [&](Index i, Index j) {
    for (Index kk = 0; kk < spec.T; ++kk)
      if (block_supported(sys, mask, kk, i, j) || block_supported(sys, mask, kk, j, i)) return true;
    return false;
  };

  for (Index a = 0; a < k; ++a)
    for (Index b = a + 1; b < k; ++b) {
      bool coupled = false;
      for (Index i : patches[static_cast<size_t>(a)].owned_columns) {
        for (Index j : patches[static_cast<size_t>(b)].owned_columns)
          if (nodes_coupled(i, j)) {
            coupled = true;
            break;
          }
        if (coupled) break;
      }
      if (coupled) {
        patches[static_cast<size_t>(a)].neighbor_ids.push_back(b);
        patches[static_cast<size_t>(b)].neighbor_ids.push_back(a);
      }
    }

  for (auto& patch : patches) {
    for (Index r = 0; r < spec.p(); ++r) {
      const Index row_node = dec->h_row_node[static_cast<size_t>(r)];
      bool touches = false;
      for (Index j : patch.owned_columns) {
        for (Index kk = 0; kk < spec.T; ++kk)
          if (block_supported(sys, mask, kk, row_node, j)) {
            touches = true;
            break;
          }
        if (touches) break;
      }
      if (touches) patch.coupled_rows.push_back(r);
    }
  }
  return patches;
}

template <class Scalar>
struct PrimalUpdateResult {
  SolveStatus status = SolveStatus::max_iter;
  FirResponse<Scalar> phi_columns;         // full size, zero outside owned columns (delay-one tap stays identity)
  std::vector<Mat<Scalar>> lambda_blocks;  // full p x q, zero outside owned blocks
  Vec<Scalar> budget_contribution;         // p-vector: this patch's share of the budget
  Index iterations = 0;
  std::string note;
};

// A patch's program assembled once; per-round solves only swap the dual
// price into the linear term and warm-start from the previous solution.
template <class Scalar>
class PatchSession {
 public:
  PatchSession(const LinearSystem<Scalar>& sys, const RobustSpec<Scalar>& spec, const SupportMask& mask,
               const Patch& patch, Scalar lambda_reg = Scalar(1e-8), SolveOptions<Scalar> solver = {})
      : sys_(sys), spec_(spec), patch_(patch), solver_(solver) {
    detail::AssemblyOptions<Scalar> opts;
    opts.columns = patch.owned_columns;
    opts.include_budget_rows = false;
    opts.prune_lambda = true;
    opts.lambda_reg = lambda_reg;
    asmbl_ = detail::assemble(sys, spec, mask, opts);
    base_c_ = asmbl_.prog.c;
    for (Index k = 0; k < spec.T; ++k)
      for (Index r = 0; r < spec.p(); ++r)
        for (Index c = 0; c < spec.q(); ++c) {
          const Index var = asmbl_.map.lambda[static_cast<size_t>(k)](r, c);
          if (var >= 0 && spec.disturbance.q(c) != Scalar(0))
            penalty_.push_back({var, r, spec.disturbance.q(c)});
        }
  }

  bool structurally_infeasible() const { return asmbl_.structurally_infeasible; }
  const std::string& structural_note() const { return asmbl_.note; }
  const Patch& patch() const { return patch_; }

  PrimalUpdateResult<Scalar> step(const RowVec<Scalar>& sigma) {
    if (sigma.size() != spec_.p()) throw std::invalid_argument("PatchSession: sigma must have one entry per row");
    if (!sigma.allFinite() || sigma.minCoeff() < Scalar(0))
      throw std::invalid_argument("PatchSession: sigma must be finite and nonnegative");
    PrimalUpdateResult<Scalar> out;
    if (asmbl_.structurally_infeasible) {
      out.status = SolveStatus::infeasible;
      out.note = asmbl_.note;
      return out;
    }
    asmbl_.prog.c = base_c_;
    for (const auto& term : penalty_) asmbl_.prog.c(term.var) += sigma(term.row) * term.coef;
    SolveOptions<Scalar> opts = solver_;
    if (warm_x_.size() == asmbl_.prog.num_vars()) {
      opts.x0 = warm_x_;
      opts.y0 = warm_y_;
    }
    const auto res = solve(asmbl_.prog, opts);
    out.status = res.status;
    out.iterations = res.iterations;
    if (res.status != SolveStatus::optimal) return out;
    warm_x_ = res.x_star;
    warm_y_ = res.duals;
    out.phi_columns = detail::extract_phi(sys_, spec_.T, asmbl_.map, res.x_star);
    out.lambda_blocks = detail::extract_lambda(spec_.T, spec_.p(), spec_.q(), asmbl_.map, res.x_star);
    out.budget_contribution = Vec<Scalar>::Zero(spec_.p());
    for (const auto& blk : out.lambda_blocks) out.budget_contribution += blk * spec_.disturbance.q;
    return out;
  }

 private:
  struct PenaltyTerm {
    Index var;
    Index row;
    Scalar coef;
  };

  const LinearSystem<Scalar>& sys_;
  const RobustSpec<Scalar>& spec_;
  Patch patch_;
  SolveOptions<Scalar> solver_;
  detail::Assembly<Scalar> asmbl_;
  Vec<Scalar> base_c_;
  std::vector<PenaltyTerm> penalty_;
  Vec<Scalar> warm_x_, warm_y_;
};

// One-shot primal update (assembles, solves, discards the session).
template <class Scalar>
PrimalUpdateResult<Scalar> primal_update(const LinearSystem<Scalar>& sys, const RobustSpec<Scalar>& spec,
                                         const SupportMask& mask, const Patch& patch, const RowVec<Scalar>& sigma,
                                         Scalar lambda_reg = Scalar(1e-8)) {
  PatchSession<Scalar> session(sys, spec, mask, patch, lambda_reg);
  return session.step(sigma);
}

// Projected ascent, entrywise: sigma' = max(0, sigma + alpha (budget - h)).
template <class Scalar>
DualState<Scalar> dual_update(const DualState<Scalar>& state, const Vec<Scalar>& lambda_budget, const Vec<Scalar>& h,
                              Scalar alpha) {
  if (alpha <= Scalar(0)) throw std::invalid_argument("dual_update: step size must be positive");
  if (state.sigma.size() != lambda_budget.size() || state.sigma.size() != h.size())
    throw std::invalid_argument("dual_update: dimension mismatch");
  DualState<Scalar> next = state;
  for (Index r = 0; r < state.sigma.size(); ++r)
    next.sigma(r) = std::max(Scalar(0), state.sigma(r) + alpha * (lambda_budget(r) - h(r)));
  next.iteration = state.iteration + 1;
  return next;
}

template <class Scalar>
struct TraceRow {
  Index round = 0;
  Scalar primal_residual = Scalar(0);   // stacked dynamics residual
  Scalar budget_violation = Scalar(0);  // max(0, max_r (budget_r - h_r))
  Scalar complementarity = Scalar(0);   // |sigma . (budget - h)|
  double wall_seconds = 0.0;
};

template <class Scalar>
struct DistributedResult {
  SynthesisResult<Scalar> synthesis;
  DualState<Scalar> dual;
  std::vector<TraceRow<Scalar>> trace;
  std::vector<Message<Scalar>> message_log;
  Index rounds = 0;
  bool converged = false;
};

template <class Scalar>
struct RunOptions {
  Scalar alpha = Scalar(0);  // <= 0 selects the scale-aware default with backoff
  Scalar epsilon = Scalar(1e-4);
  Index max_rounds = 500;
  Index group_size = 1;
  Scalar lambda_reg = Scalar(1e-8);
  SolveOptions<Scalar> solver{};
};

// Synchronous rounds: concurrent primal updates, neighbor exchange of budget
// contributions to each row's owner, stopping test, projected dual ascent,
// and the sigma broadcast back to the coupled patches.  With the automatic
// step size, the step halves whenever the merit (violation plus
// complementarity) increases; an explicit alpha is kept fixed so that
// divergence is observable and reported.
template <class Scalar>
DistributedResult<Scalar> run_distributed(const LinearSystem<Scalar>& sys, const RobustSpec<Scalar>& spec,
                                          const SupportMask& mask, const RunOptions<Scalar>& options = {}) {
  using Clock = std::chrono::steady_clock;
  const Index n = sys.n(), p = spec.p(), T = spec.T;
  const auto patches = decompose(sys, mask, spec, options.group_size);
  const auto dec = decoupling_structure(sys, spec);  // decompose() guarantees success
  const Index k = static_cast<Index>(patches.size());
  std::vector<Index> node_patch(static_cast<size_t>(n));
  for (const auto& patch : patches)
    for (Index j : patch.owned_columns) node_patch[static_cast<size_t>(j)] = patch.id;
  const auto row_owner = [&](Index r) { return node_patch[static_cast<size_t>(dec->h_row_node[static_cast<size_t>(r)])]; };

  DistributedResult<Scalar> result;
  MessageBus<Scalar> bus(patches);

  std::vector<PatchSession<Scalar>> sessions;
  sessions.reserve(static_cast<size_t>(k));
  for (const auto& patch : patches)
    sessions.emplace_back(sys, spec, mask, patch, options.lambda_reg, options.solver);
  for (const auto& session : sessions)
    if (session.structurally_infeasible()) {
      result.synthesis.status = SolveStatus::infeasible;
      result.synthesis.note =
          "patch " + std::to_string(session.patch().id) + ": " + session.structural_note();
      return result;
    }

  const bool auto_alpha = options.alpha <= Scalar(0);
  const Scalar g_scale = spec.q() > 0 ? spec.disturbance.q.cwiseAbs().maxCoeff() : Scalar(1);
  Scalar alpha = auto_alpha ? Scalar(1) / (Scalar(T) * std::max(g_scale, Scalar(1e-12))) : options.alpha;

  DualState<Scalar> dual;
  dual.sigma = RowVec<Scalar>::Zero(p);

  std::vector<PrimalUpdateResult<Scalar>> updates(static_cast<size_t>(k));
  Scalar best_merit = std::numeric_limits<Scalar>::infinity();
  Scalar prev_merit = std::numeric_limits<Scalar>::infinity();
  Index last_backoff = 0;

  for (Index round = 1; round <= options.max_rounds; ++round) {
    const auto tic = Clock::now();
    parallel_for(k, [&](Index i) { updates[static_cast<size_t>(i)] = sessions[static_cast<size_t>(i)].step(dual.sigma); });
    for (Index i = 0; i < k; ++i) {
      const auto& up = updates[static_cast<size_t>(i)];
      if (up.status == SolveStatus::infeasible) {
        result.synthesis.status = SolveStatus::infeasible;
        result.synthesis.note = "patch " + std::to_string(i) + (up.note.empty() ? "" : ": " + up.note);
        result.rounds = round;
        result.dual = dual;
        result.message_log = bus.log();
        return result;
      }
      if (up.status != SolveStatus::optimal) {
        result.synthesis.status = up.status;
        result.synthesis.note = "patch " + std::to_string(i) + ": primal solve did not converge";
        result.rounds = round;
        result.dual = dual;
        result.message_log = bus.log();
        return result;
      }
    }

    // Stack the column blocks into one response/certificate.
    FirResponse<Scalar> phi;
    phi.horizon = T;
    phi.phi_x.assign(static_cast<size_t>(T), Mat<Scalar>::Zero(n, n));
    phi.phi_u.assign(static_cast<size_t>(T), Mat<Scalar>::Zero(sys.m(), n));
    std::vector<Mat<Scalar>> lambda(static_cast<size_t>(T), Mat<Scalar>::Zero(p, spec.q()));
    for (Index i = 0; i < k; ++i) {
      const auto& up = updates[static_cast<size_t>(i)];
      for (Index kk = 0; kk < T; ++kk) {
        phi.phi_x[static_cast<size_t>(kk)] += up.phi_columns.phi_x[static_cast<size_t>(kk)];
        phi.phi_u[static_cast<size_t>(kk)] += up.phi_columns.phi_u[static_cast<size_t>(kk)];
        lambda[static_cast<size_t>(kk)] += up.lambda_blocks[static_cast<size_t>(kk)];
      }
    }
    phi.phi_x[0] = Mat<Scalar>::Identity(n, n);  // identity tap is shared, not summed

    // Budget contributions travel to each row's owner.
    for (Index i = 0; i < k; ++i) {
      const auto& patch = patches[static_cast<size_t>(i)];
      const auto& up = updates[static_cast<size_t>(i)];
      std::vector<std::vector<Index>> rows_by_owner(static_cast<size_t>(k));
      for (Index r : patch.coupled_rows) rows_by_owner[static_cast<size_t>(row_owner(r))].push_back(r);
      for (Index owner = 0; owner < k; ++owner) {
        const auto& rows = rows_by_owner[static_cast<size_t>(owner)];
        if (rows.empty()) continue;
        Message<Scalar> msg;
        msg.from = i;
        msg.to = owner;
        msg.round = round;
        msg.kind = MessageKind::budget_contribution;
        msg.rows = rows;
        msg.values.resize(static_cast<Index>(rows.size()));
        for (size_t ri = 0; ri < rows.size(); ++ri)
          msg.values(static_cast<Index>(ri)) = up.budget_contribution(rows[ri]);
        bus.send(std::move(msg));
      }
    }
    Vec<Scalar> budget = Vec<Scalar>::Zero(p);
    for (Index owner = 0; owner < k; ++owner)
      for (const auto* msg : bus.inbox(owner, round, MessageKind::budget_contribution))
        for (size_t ri = 0; ri < msg->rows.size(); ++ri) budget(msg->rows[ri]) += msg->values(static_cast<Index>(ri));

    const Vec<Scalar> gap = budget - spec.performance.q;
    const Scalar violation = std::max(Scalar(0), gap.size() ? gap.maxCoeff() : Scalar(0));
    const Scalar complementarity = std::abs(dual.sigma.transpose().dot(gap));
    const Scalar merit = violation + complementarity;

    TraceRow<Scalar> row;
    row.round = round;
    row.primal_residual = affine_residual(sys, phi);
    row.budget_violation = violation;
    row.complementarity = complementarity;
    row.wall_seconds = std::chrono::duration<double>(Clock::now() - tic).count();
    result.trace.push_back(row);
    dual.residual_history.push_back(merit);
    result.rounds = round;

    if (merit < best_merit) {
      best_merit = merit;
      result.synthesis.phi = phi;
      result.synthesis.cert.lambda = lambda;
      result.synthesis.cert.sigma = dual.sigma;
      result.synthesis.cost = phi.h2_cost_sq();
    }

    if (violation <= options.epsilon && complementarity <= options.epsilon) {
      result.converged = true;
      result.synthesis.phi = phi;
      result.synthesis.cert.lambda = lambda;
      result.synthesis.cert.sigma = dual.sigma;
      result.synthesis.cost = phi.h2_cost_sq();
      result.synthesis.status = SolveStatus::optimal;
      break;
    }

    if (auto_alpha && round >= 2 && merit > prev_merit * Scalar(1.05) && round - last_backoff >= 5) {
      alpha *= Scalar(0.5);
      last_backoff = round;
    }
    prev_merit = merit;

    dual = dual_update(dual, budget, spec.performance.q, alpha);

    // Broadcast the refreshed prices from each owner to the coupled patches.
    for (Index owner = 0; owner < k; ++owner) {
      std::vector<std::vector<Index>> rows_by_patch(static_cast<size_t>(k));
      for (Index r = 0; r < p; ++r) {
        if (row_owner(r) != owner) continue;
        for (const auto& patch : patches) {
          if (patch.id == owner) continue;
          for (Index cr : patch.coupled_rows)
            if (cr == r) {
              rows_by_patch[static_cast<size_t>(patch.id)].push_back(r);
              break;
            }
        }
      }
      for (Index to = 0; to < k; ++to) {
        const auto& rows = rows_by_patch[static_cast<size_t>(to)];
        if (rows.empty()) continue;
        Message<Scalar> msg;
        msg.from = owner;
        msg.to = to;
        msg.round = round;
        msg.kind = MessageKind::sigma_slice;
        msg.rows = rows;
        msg.values.resize(static_cast<Index>(rows.size()));
        for (size_t ri = 0; ri < rows.size(); ++ri) msg.values(static_cast<Index>(ri)) = dual.sigma(rows[ri]);
        bus.send(std::move(msg));
      }
    }
  }

  if (!result.converged) {
    result.synthesis.status = SolveStatus::max_iter;
    bool non_monotone = false;
    for (size_t i = 1; i < dual.residual_history.size(); ++i)
      if (dual.residual_history[i] > dual.residual_history[i - 1] * Scalar(1.0000001)) non_monotone = true;
    result.synthesis.note = non_monotone ? "did not converge; residuals oscillate (step size too large?)"
                                         : "did not converge within the round limit";
  }
  result.dual = dual;
  result.message_log = bus.log();
  return result;
}

// Spec'd convenience signature.
template <class Scalar>
DistributedResult<Scalar> run_distributed(const LinearSystem<Scalar>& sys, const RobustSpec<Scalar>& spec,
                                          const SupportMask& mask, Scalar alpha, Scalar epsilon, Index max_rounds) {
  RunOptions<Scalar> options;
  options.alpha = alpha;
  options.epsilon = epsilon;
  options.max_rounds = max_rounds;
  return run_distributed(sys, spec, mask, options);
}

}  // namespace sls
