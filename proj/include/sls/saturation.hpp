#pragma once

// Actuator saturation: clamp/cutoff operators, the internal-model (IMC)
// realization of an FIR state-feedback controller, and a compensation scheme
// that treats the clipped input as an extra disturbance handled by a second
// response designed with the saturated node's actuators frozen to zero.

#include <sls/synthesis.hpp>

#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sls {

template <class Scalar>
struct InputBox {
  Vec<Scalar> u_min;
  Vec<Scalar> u_max;

  Index m() const { return u_min.size(); }

  void validate() const {
    if (u_min.size() != u_max.size()) throw std::invalid_argument("InputBox: bound dimensions differ");
    for (Index a = 0; a < u_min.size(); ++a)
      if (!(u_min(a) <= Scalar(0)) || !(u_max(a) >= Scalar(0)))
        throw std::invalid_argument("InputBox: the box must contain the origin");
  }
};

template <class Scalar>
InputBox<Scalar> symmetric_input_box(Index m, Scalar limit) {
  InputBox<Scalar> box;
  box.u_min = Vec<Scalar>::Constant(m, -limit);
  box.u_max = Vec<Scalar>::Constant(m, limit);
  box.validate();
  return box;
}

// Entrywise clamp: the projection onto a box under any monotone norm.
template <class Scalar>
Vec<Scalar> saturate(const Vec<Scalar>& u, const InputBox<Scalar>& box) {
  if (u.size() != box.m()) throw std::invalid_argument("saturate: dimension mismatch");
  return u.cwiseMax(box.u_min).cwiseMin(box.u_max);
}

// The part of the command the actuator cannot deliver.
template <class Scalar>
Vec<Scalar> cutoff(const Vec<Scalar>& u, const InputBox<Scalar>& box) {
  return u - saturate(u, box);
}

// Peak (l-inf induced) gain from a bounded disturbance history to the input
// channel of an FIR response: the largest absolute row sum across all taps.
// A value <= 1 makes the clipped-command feedback path non-expansive.
template <class Scalar>
Scalar input_peak_gain(const FirResponse<Scalar>& phi) {
  phi.validate();
  Scalar gain = Scalar(0);
  for (Index a = 0; a < phi.m(); ++a) {
    Scalar row_sum = Scalar(0);
    for (Index k = 0; k < phi.horizon; ++k) row_sum += phi.phi_u[(size_t)k].row(a).template lpNorm<1>();
    gain = std::max(gain, row_sum);
  }
  return gain;
}

// Stateful realization of the FIR controller: the internal model predicts the
// next state from the APPLIED input, so the innovation recovers the true
// disturbance (one step late) even when the command was clipped.
template <class Scalar>
struct ImcController {
  FirResponse<Scalar> phi;
  Mat<Scalar> A_hat;
  Mat<Scalar> B;
  std::deque<Vec<Scalar>> delta_buffer;  // newest first, length exactly phi.horizon
  Vec<Scalar> x_prev;
  Vec<Scalar> u_prev;

  ImcController(FirResponse<Scalar> phi_in, Mat<Scalar> A_hat_in, Mat<Scalar> B_in)
      : phi(std::move(phi_in)), A_hat(std::move(A_hat_in)), B(std::move(B_in)) {
    phi.validate();
    if (A_hat.rows() != phi.n() || A_hat.cols() != phi.n())
      throw std::invalid_argument("ImcController: model matrix must be n x n");
    if (B.rows() != phi.n() || B.cols() != phi.m())
      throw std::invalid_argument("ImcController: input matrix must be n x m");
    reset();
  }

  void reset() {
    delta_buffer.assign(static_cast<size_t>(phi.horizon), Vec<Scalar>::Zero(phi.n()));
    x_prev = Vec<Scalar>::Zero(phi.n());
    u_prev = Vec<Scalar>::Zero(phi.m());
  }
};

// One controller tick: innovation, FIR command, optional clamp.  Returns the
// applied input and advances the internal state; `u0_out`, when given,
// receives the command before clamping.
template <class Scalar>
Vec<Scalar> imc_step(ImcController<Scalar>& ctrl, const Vec<Scalar>& x,
                     const std::optional<InputBox<Scalar>>& box = std::nullopt, Vec<Scalar>* u0_out = nullptr) {
  if (x.size() != ctrl.phi.n()) throw std::invalid_argument("imc_step: state dimension mismatch");
  Vec<Scalar> delta = x - ctrl.A_hat * ctrl.x_prev - ctrl.B * ctrl.u_prev;
  ctrl.delta_buffer.push_front(std::move(delta));
  ctrl.delta_buffer.pop_back();

  Vec<Scalar> u0 = Vec<Scalar>::Zero(ctrl.phi.m());
  for (Index k = 1; k <= ctrl.phi.horizon; ++k)
    u0.noalias() += ctrl.phi.phi_u[static_cast<size_t>(k - 1)] * ctrl.delta_buffer[static_cast<size_t>(k - 1)];
  if (u0_out) *u0_out = u0;

  Vec<Scalar> applied = box ? saturate(u0, *box) : u0;
  ctrl.x_prev = x;
  ctrl.u_prev = applied;
  return applied;
}

template <class Scalar>
Vec<Scalar> imc_step(ImcController<Scalar>& ctrl, const Vec<Scalar>& x, const InputBox<Scalar>& box,
                     Vec<Scalar>* u0_out = nullptr) {
  return imc_step(ctrl, x, std::optional<InputBox<Scalar>>(box), u0_out);
}

// Auxiliary response that absorbs the clipped input of one node.  Its own
// actuators cannot help (their rows are identically zero), so the rest of the
// network steers the leftover mass out within the FIR horizon.
template <class Scalar>
struct Compensator {
  FirResponse<Scalar> phi_bar;
  Index saturated_node = -1;
  std::deque<Vec<Scalar>> wbar_buffer;  // newest first, length exactly phi_bar.horizon

  void reset() {
    wbar_buffer.assign(static_cast<size_t>(phi_bar.horizon), Vec<Scalar>::Zero(phi_bar.n()));
  }
};

// Solves the nominal design with the saturated node's actuator rows removed
// from the input response.  Throws when no such response exists (e.g. a
// single node with nonzero dynamics has nobody left to do the work).
template <class Scalar>
Compensator<Scalar> synthesize_compensator(const LinearSystem<Scalar>& sys, const SupportMask& mask,
                                           Index saturated_node, Index T, const SolveOptions<Scalar>& solver = {}) {
  sys.validate();
  if (saturated_node < 0 || saturated_node >= sys.n())
    throw std::invalid_argument("synthesize_compensator: node index out of range");
  if (mask.horizon() != T) throw std::invalid_argument("synthesize_compensator: mask horizon mismatch");

  SupportMask zeroed = mask;
  for (Index k = 0; k < T; ++k)
    for (Index a = 0; a < sys.m(); ++a)
      if (sys.actuator_host(a) == saturated_node)
        for (Index j = 0; j < sys.n(); ++j) zeroed.u_support[static_cast<size_t>(k)](a, j) = false;

  RobustSpec<Scalar> unconstrained;  // no bounds: only the dynamics and the support pattern remain
  unconstrained.T = T;
  unconstrained.disturbance.P = Mat<Scalar>::Zero(0, sys.n());
  unconstrained.disturbance.q = Vec<Scalar>::Zero(0);
  unconstrained.performance.P = Mat<Scalar>::Zero(0, sys.n() + sys.m());
  unconstrained.performance.q = Vec<Scalar>::Zero(0);

  detail::AssemblyOptions<Scalar> opts;
  const auto asmbl = detail::assemble(sys, unconstrained, zeroed, opts);
  const std::string who = "node " + std::to_string(saturated_node);
  if (asmbl.structurally_infeasible)
    throw std::runtime_error("synthesize_compensator: infeasible for " + who +
                             (asmbl.note.empty() ? "" : " (" + asmbl.note + ")"));
  const auto res = solve(asmbl.prog, solver);
  if (res.status == SolveStatus::infeasible)
    throw std::runtime_error("synthesize_compensator: infeasible for " + who +
                             ": zeroing its actuators leaves no response that settles within the horizon");
  if (res.status != SolveStatus::optimal)
    throw std::runtime_error("synthesize_compensator: solver did not converge for " + who);

  Compensator<Scalar> comp;
  comp.phi_bar = detail::extract_phi(sys, T, asmbl.map, res.x_star);
  comp.saturated_node = saturated_node;
  comp.reset();
  return comp;
}

// Optional per-step bookkeeping for the saturated runners (CSV reporting and
// the comparison experiments).
template <class Scalar>
struct SaturationRecord {
  std::vector<Vec<Scalar>> u0_seq;             // pre-clamp commands
  std::vector<std::vector<char>> sat_flags;    // per step, per actuator
  std::vector<Scalar> wbar_norm;               // per step, norm of the clipped-input disturbance
  std::vector<std::string> log;
};

namespace detail {

template <class Scalar>
std::vector<Vec<Scalar>> padded_disturbance(const LinearSystem<Scalar>& sys, const std::vector<Vec<Scalar>>& w_seq,
                                            Index horizon) {
  if (horizon < 0) throw std::invalid_argument("saturated run: horizon must be nonnegative");
  for (const auto& w : w_seq)
    if (w.size() != sys.n()) throw std::invalid_argument("saturated run: disturbance dimension mismatch");
  std::vector<Vec<Scalar>> padded(static_cast<size_t>(horizon), Vec<Scalar>::Zero(sys.n()));
  for (Index t = 0; t < horizon && t < static_cast<Index>(w_seq.size()); ++t)
    padded[static_cast<size_t>(t)] = w_seq[static_cast<size_t>(t)];
  return padded;
}

template <class Scalar>
void record_step(SaturationRecord<Scalar>* record, const Vec<Scalar>& u0, const Vec<Scalar>& applied,
                 Scalar wbar_norm) {
  if (!record) return;
  record->u0_seq.push_back(u0);
  std::vector<char> flags(static_cast<size_t>(u0.size()), 0);
  for (Index a = 0; a < u0.size(); ++a) flags[static_cast<size_t>(a)] = u0(a) != applied(a);
  record->sat_flags.push_back(std::move(flags));
  record->wbar_norm.push_back(wbar_norm);
}

}  // namespace detail

// Plant rollout under the clamped FIR controller, no compensation.  States
// x(0..horizon), inputs u(0..horizon), driven by w(0..horizon-1) (the given
// sequence, zero-padded or truncated to the horizon).
template <class Scalar>
Trajectory<Scalar> run_naive_saturated(const LinearSystem<Scalar>& sys, const FirResponse<Scalar>& phi,
                                       const InputBox<Scalar>& box, const std::vector<Vec<Scalar>>& w_seq,
                                       Index horizon, SaturationRecord<Scalar>* record = nullptr) {
  sys.validate();
  phi.validate();
  box.validate();
  if (phi.n() != sys.n() || phi.m() != sys.m())
    throw std::invalid_argument("run_naive_saturated: response does not match the system");
  if (box.m() != sys.m()) throw std::invalid_argument("run_naive_saturated: box does not match the input count");

  const auto w = detail::padded_disturbance(sys, w_seq, horizon);
  Trajectory<Scalar> traj;
  traj.w_seq = w;
  traj.x_seq.resize(static_cast<size_t>(horizon + 1), Vec<Scalar>::Zero(sys.n()));
  traj.u_seq.resize(static_cast<size_t>(horizon + 1), Vec<Scalar>::Zero(sys.m()));

  ImcController<Scalar> ctrl(phi, sys.A, sys.B);
  const std::optional<InputBox<Scalar>> clamp(box);
  Vec<Scalar> x = Vec<Scalar>::Zero(sys.n());
  for (Index t = 0; t <= horizon; ++t) {
    traj.x_seq[static_cast<size_t>(t)] = x;
    Vec<Scalar> u0;
    const Vec<Scalar> applied = imc_step(ctrl, x, clamp, &u0);
    detail::record_step(record, u0, applied, Scalar((sys.B * (u0 - applied)).norm()));
    traj.u_seq[static_cast<size_t>(t)] = applied;
    if (t < horizon) x = sys.A * x + sys.B * applied + w[static_cast<size_t>(t)];
  }
  return traj;
}

// Plant rollout with per-node compensation.  The internal model is fed the
// pre-clamp command, so the innovation sees the clipped part as an extra
// disturbance w_bar = B * cutoff(u0); each node's own compensator response
// then reacts to its share of w_bar.  Nodes without a compensator fall back
// to the nominal response (which reproduces the uncompensated loop for that
// node exactly); the fallback is logged.
template <class Scalar>
Trajectory<Scalar> run_compensated(const LinearSystem<Scalar>& sys, const FirResponse<Scalar>& phi,
                                   const std::vector<Compensator<Scalar>>& compensators, const InputBox<Scalar>& box,
                                   const std::vector<Vec<Scalar>>& w_seq, Index horizon,
                                   SaturationRecord<Scalar>* record = nullptr) {
  sys.validate();
  phi.validate();
  box.validate();
  if (phi.n() != sys.n() || phi.m() != sys.m())
    throw std::invalid_argument("run_compensated: response does not match the system");
  if (box.m() != sys.m()) throw std::invalid_argument("run_compensated: box does not match the input count");
  const Index n = sys.n(), T = phi.horizon;

  std::vector<const FirResponse<Scalar>*> node_response(static_cast<size_t>(n), nullptr);
  for (const auto& comp : compensators) {
    if (comp.saturated_node < 0 || comp.saturated_node >= n)
      throw std::invalid_argument("run_compensated: compensator node index out of range");
    comp.phi_bar.validate();
    if (comp.phi_bar.horizon != T || comp.phi_bar.n() != n || comp.phi_bar.m() != sys.m())
      throw std::invalid_argument("run_compensated: compensator dimensions do not match the nominal response");
    node_response[static_cast<size_t>(comp.saturated_node)] = &comp.phi_bar;
  }
  std::vector<char> fallback_logged(static_cast<size_t>(n), 0);

  const auto w = detail::padded_disturbance(sys, w_seq, horizon);
  Trajectory<Scalar> traj;
  traj.w_seq = w;
  traj.x_seq.resize(static_cast<size_t>(horizon + 1), Vec<Scalar>::Zero(n));
  traj.u_seq.resize(static_cast<size_t>(horizon + 1), Vec<Scalar>::Zero(sys.m()));

  std::deque<Vec<Scalar>> delta_buffer(static_cast<size_t>(T), Vec<Scalar>::Zero(n));
  // Per node: the history of its share of w_bar (newest first).
  std::vector<std::deque<Vec<Scalar>>> wbar(static_cast<size_t>(n),
                                            std::deque<Vec<Scalar>>(static_cast<size_t>(T), Vec<Scalar>::Zero(n)));
  std::vector<char> wbar_active(static_cast<size_t>(n), 0);  // skip all-zero convolutions
  Vec<Scalar> x_prev = Vec<Scalar>::Zero(n);
  Vec<Scalar> u0_prev = Vec<Scalar>::Zero(sys.m());
  Vec<Scalar> x = Vec<Scalar>::Zero(n);

  for (Index t = 0; t <= horizon; ++t) {
    traj.x_seq[static_cast<size_t>(t)] = x;

    delta_buffer.push_front(x - sys.A * x_prev - sys.B * u0_prev);
    delta_buffer.pop_back();

    Vec<Scalar> u0 = Vec<Scalar>::Zero(sys.m());
    for (Index k = 1; k <= T; ++k)
      u0.noalias() += phi.phi_u[static_cast<size_t>(k - 1)] * delta_buffer[static_cast<size_t>(k - 1)];
    for (Index i = 0; i < n; ++i) {
      if (!wbar_active[static_cast<size_t>(i)]) continue;
      const auto& response = node_response[static_cast<size_t>(i)] ? *node_response[static_cast<size_t>(i)] : phi;
      const auto& buffer = wbar[static_cast<size_t>(i)];
      for (Index k = 1; k <= T; ++k)
        u0.noalias() += response.phi_u[static_cast<size_t>(k - 1)] * buffer[static_cast<size_t>(k - 1)];
    }

    const Vec<Scalar> applied = saturate(u0, box);
    const Vec<Scalar> clipped = u0 - applied;
    detail::record_step(record, u0, applied, Scalar((sys.B * clipped).norm()));
    traj.u_seq[static_cast<size_t>(t)] = applied;

    // Split the clipped input by hosting node and push each share.
    for (Index i = 0; i < n; ++i) {
      Vec<Scalar> share = Vec<Scalar>::Zero(n);
      bool any = false;
      for (Index a = 0; a < sys.m(); ++a) {
        if (sys.actuator_host(a) != i || clipped(a) == Scalar(0)) continue;
        share.noalias() += sys.B.col(a) * clipped(a);
        any = true;
      }
      if (any) {
        wbar_active[static_cast<size_t>(i)] = 1;
        if (record && !node_response[static_cast<size_t>(i)] && !fallback_logged[static_cast<size_t>(i)]) {
          record->log.push_back("node " + std::to_string(i) +
                                " saturated without a compensator; nominal response used");
          fallback_logged[static_cast<size_t>(i)] = 1;
        }
      }
      auto& buffer = wbar[static_cast<size_t>(i)];
      buffer.push_front(std::move(share));
      buffer.pop_back();
    }

    x_prev = x;
    u0_prev = u0;
    if (t < horizon) x = sys.A * x + sys.B * applied + w[static_cast<size_t>(t)];
  }
  return traj;
}

}  // namespace sls
