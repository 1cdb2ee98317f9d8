#pragma once

// Discrete-time LTI plant description, finite-impulse-response closed-loop
// maps, locality masks derived from the interconnection graph, and the
// closed-loop convolution simulator.

#include <sls/core.hpp>

#include <algorithm>
#include <complex>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

namespace sls {

// Undirected interconnection graph on n nodes.
struct Graph {
  Index n = 0;
  std::vector<std::pair<Index, Index>> edges;

  std::vector<std::vector<Index>> adjacency() const {
    std::vector<std::vector<Index>> adj(static_cast<size_t>(n));
    for (const auto& [a, b] : edges) {
      if (a < 0 || b < 0 || a >= n || b >= n) throw std::invalid_argument("Graph: edge endpoint out of range");
      if (a == b) continue;
      adj[static_cast<size_t>(a)].push_back(b);
      adj[static_cast<size_t>(b)].push_back(a);
    }
    return adj;
  }

  // Hop distances from every node; unreachable pairs get n (> any real path).
  Mat<Index> distances() const {
    const auto adj = adjacency();
    Mat<Index> dist = Mat<Index>::Constant(n, n, n);
    for (Index s = 0; s < n; ++s) {
      dist(s, s) = 0;
      std::queue<Index> frontier;
      frontier.push(s);
      while (!frontier.empty()) {
        const Index v = frontier.front();
        frontier.pop();
        for (Index w : adj[static_cast<size_t>(v)]) {
          if (dist(s, w) > dist(s, v) + 1) {
            dist(s, w) = dist(s, v) + 1;
            frontier.push(w);
          }
        }
      }
    }
    return dist;
  }
};

// Plant x(t+1) = A x(t) + B u(t) + w(t) with actuators assigned to nodes.
template <class Scalar>
struct LinearSystem {
  Mat<Scalar> A;  // n x n
  Mat<Scalar> B;  // n x m
  Graph graph;
  std::vector<std::vector<Index>> node_actuators;  // node -> actuator columns of B

  Index n() const { return A.rows(); }
  Index m() const { return B.cols(); }

  // Structural checks.  Every nonzero off-diagonal coupling must be covered by
  // an edge; edges without coupling are allowed (communication links may
  // exist where the dynamics happen to be zero, e.g. a chain with zero gain).
  void validate() const {
    if (A.rows() != A.cols()) throw std::invalid_argument("LinearSystem: A must be square");
    if (B.rows() != A.rows()) throw std::invalid_argument("LinearSystem: B row count must match A");
    if (graph.n != A.rows()) throw std::invalid_argument("LinearSystem: graph size must match state dimension");
    if (static_cast<Index>(node_actuators.size()) != A.rows())
      throw std::invalid_argument("LinearSystem: node_actuators must have one entry per node");
    std::vector<char> seen(static_cast<size_t>(B.cols()), 0);
    for (const auto& acts : node_actuators)
      for (Index a : acts) {
        if (a < 0 || a >= B.cols()) throw std::invalid_argument("LinearSystem: actuator index out of range");
        if (seen[static_cast<size_t>(a)]++) throw std::invalid_argument("LinearSystem: actuator assigned twice");
      }
    for (char s : seen)
      if (!s) throw std::invalid_argument("LinearSystem: unassigned actuator column");
    const Mat<Index> dist = graph.distances();
    for (Index i = 0; i < A.rows(); ++i)
      for (Index j = 0; j < A.cols(); ++j)
        if (i != j && A(i, j) != Scalar(0) && dist(i, j) > 1)
          throw std::invalid_argument("LinearSystem: A couples nodes with no connecting edge");
  }

  // Node hosting actuator column a.
  Index actuator_host(Index a) const {
    for (Index i = 0; i < static_cast<Index>(node_actuators.size()); ++i)
      for (Index col : node_actuators[static_cast<size_t>(i)])
        if (col == a) return i;
    throw std::invalid_argument("LinearSystem: unknown actuator");
  }
};

// FIR closed-loop maps.  phi_x[k-1] and phi_u[k-1] hold the spectral elements
// at delay k for k = 1..horizon; phi_x[0] is pinned to the identity by every
// synthesis routine in this toolkit.
template <class Scalar>
struct FirResponse {
  Index horizon = 0;
  std::vector<Mat<Scalar>> phi_x;
  std::vector<Mat<Scalar>> phi_u;

  Index n() const { return phi_x.empty() ? 0 : phi_x.front().cols(); }
  Index m() const { return phi_u.empty() ? 0 : phi_u.front().rows(); }

  void validate() const {
    if (horizon <= 0) throw std::invalid_argument("FirResponse: horizon must be positive");
    if (static_cast<Index>(phi_x.size()) != horizon || static_cast<Index>(phi_u.size()) != horizon)
      throw std::invalid_argument("FirResponse: need exactly horizon spectral elements");
    for (const auto& p : phi_x)
      if (p.rows() != n() || p.cols() != n()) throw std::invalid_argument("FirResponse: ragged phi_x");
    for (const auto& p : phi_u)
      if (p.rows() != m() || p.cols() != n()) throw std::invalid_argument("FirResponse: ragged phi_u");
  }

  // Stacked element [phi_x[k]; phi_u[k]] at 1-based delay k.
  Mat<Scalar> stacked(Index k) const {
    Mat<Scalar> s(n() + m(), n());
    s.topRows(n()) = phi_x[static_cast<size_t>(k - 1)];
    s.bottomRows(m()) = phi_u[static_cast<size_t>(k - 1)];
    return s;
  }

  // Sum of squared Frobenius norms over both channels, identity tap included.
  Scalar h2_cost_sq() const {
    Scalar c = Scalar(0);
    for (const auto& p : phi_x) c += p.squaredNorm();
    for (const auto& p : phi_u) c += p.squaredNorm();
    return c;
  }
};

// Polytope { w : P w <= q }.
template <class Scalar>
struct Polytope {
  Mat<Scalar> P;
  Vec<Scalar> q;

  Index rows() const { return P.rows(); }
  Index dim() const { return P.cols(); }

  void validate() const {
    if (P.rows() != q.size()) throw std::invalid_argument("Polytope: row count mismatch");
  }

  bool contains(const Vec<Scalar>& w, Scalar tol) const {
    if (w.size() != dim()) throw std::invalid_argument("Polytope: dimension mismatch");
    return rows() == 0 || ((P * w - q).maxCoeff() <= tol);
  }
};

// Per-delay sparsity patterns for phi_x (n x n) and phi_u (m x n).
struct SupportMask {
  std::vector<BoolGrid> x_support;
  std::vector<BoolGrid> u_support;

  Index horizon() const { return static_cast<Index>(x_support.size()); }
};

template <class Scalar>
struct Trajectory {
  std::vector<Vec<Scalar>> x_seq;
  std::vector<Vec<Scalar>> u_seq;
  std::vector<Vec<Scalar>> w_seq;
};

// Bidirectional chain: node i couples to its neighbors with weight rho*alpha
// and keeps rho*(1 - deg(i)*alpha) on the diagonal; every node has its own
// actuator (B = I) and the graph is the path 0-1-...-(n-1).
template <class Scalar>
LinearSystem<Scalar> make_chain_system(Index n, Scalar alpha, Scalar rho) {
  if (n < 2) throw std::invalid_argument("make_chain_system: need at least two nodes");
  if (!std::isfinite(static_cast<double>(alpha)) || !std::isfinite(static_cast<double>(rho)))
    throw std::invalid_argument("make_chain_system: alpha and rho must be finite");
  LinearSystem<Scalar> sys;
  sys.A = Mat<Scalar>::Zero(n, n);
  sys.B = Mat<Scalar>::Identity(n, n);
  sys.graph.n = n;
  sys.node_actuators.resize(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Index degree = (n == 1) ? 0 : ((i == 0 || i == n - 1) ? 1 : 2);
    sys.A(i, i) = rho * (Scalar(1) - Scalar(degree) * alpha);
    if (i + 1 < n) {
      sys.A(i, i + 1) = rho * alpha;
      sys.A(i + 1, i) = rho * alpha;
      sys.graph.edges.emplace_back(i, i + 1);
    }
    sys.node_actuators[static_cast<size_t>(i)] = {i};
  }
  return sys;
}

// Worst entrywise violation of the closed-loop recursion:
//   phi_x[1] = I,
//   phi_x[k+1] = A phi_x[k] + B phi_u[k]   (k = 1..T-1),
//   A phi_x[T] + B phi_u[T] = 0.
template <class Scalar>
Scalar affine_residual(const LinearSystem<Scalar>& sys, const FirResponse<Scalar>& phi) {
  phi.validate();
  if (phi.n() != sys.n() || phi.m() != sys.m())
    throw std::invalid_argument("affine_residual: system/response dimension mismatch");
  const Index T = phi.horizon;
  Scalar r = inf_norm<Scalar>(phi.phi_x.front() - Mat<Scalar>::Identity(sys.n(), sys.n()));
  for (Index k = 0; k + 1 < T; ++k)
    r = std::max(r, inf_norm<Scalar>(phi.phi_x[static_cast<size_t>(k + 1)] - sys.A * phi.phi_x[static_cast<size_t>(k)] -
                                     sys.B * phi.phi_u[static_cast<size_t>(k)]));
  r = std::max(r, inf_norm<Scalar>(sys.A * phi.phi_x[static_cast<size_t>(T - 1)] + sys.B * phi.phi_u[static_cast<size_t>(T - 1)]));
  return r;
}

// d-hop locality pattern, identical across delays: a state entry (i, j) is
// allowed iff dist(i, j) <= d; an input row follows its actuator's host node.
template <class Scalar>
SupportMask locality_support(const LinearSystem<Scalar>& sys, Index T, Index d) {
  if (T <= 0) throw std::invalid_argument("locality_support: horizon must be positive");
  if (d < 0) throw std::invalid_argument("locality_support: d must be nonnegative");
  const Mat<Index> dist = sys.graph.distances();
  BoolGrid x_grid(sys.n(), sys.n());
  for (Index i = 0; i < sys.n(); ++i)
    for (Index j = 0; j < sys.n(); ++j) x_grid(i, j) = dist(i, j) <= d;
  BoolGrid u_grid(sys.m(), sys.n());
  for (Index a = 0; a < sys.m(); ++a) {
    const Index host = sys.actuator_host(a);
    for (Index j = 0; j < sys.n(); ++j) u_grid(a, j) = dist(host, j) <= d;
  }
  SupportMask mask;
  mask.x_support.assign(static_cast<size_t>(T), x_grid);
  mask.u_support.assign(static_cast<size_t>(T), u_grid);
  return mask;
}

template <class Scalar>
bool respects_support(const FirResponse<Scalar>& phi, const SupportMask& mask, Scalar tol) {
  if (mask.horizon() != phi.horizon) throw std::invalid_argument("respects_support: horizon mismatch");
  for (Index k = 0; k < phi.horizon; ++k) {
    const auto& px = phi.phi_x[static_cast<size_t>(k)];
    const auto& pu = phi.phi_u[static_cast<size_t>(k)];
    for (Index i = 0; i < px.rows(); ++i)
      for (Index j = 0; j < px.cols(); ++j)
        if (!mask.x_support[static_cast<size_t>(k)](i, j) && std::abs(px(i, j)) > tol) return false;
    for (Index a = 0; a < pu.rows(); ++a)
      for (Index j = 0; j < pu.cols(); ++j)
        if (!mask.u_support[static_cast<size_t>(k)](a, j) && std::abs(pu(a, j)) > tol) return false;
  }
  return true;
}

// Convolution rollout from rest:
//   x(t) = sum_{k=1..min(t,T)} phi_x[k] w(t-k),  u(t) likewise.
// Given w(0..L-1), returns x and u over t = 0..L (one step past the last
// disturbance) so the plant recursion can be checked on every supplied step.
template <class Scalar>
Trajectory<Scalar> simulate_closed_loop(const FirResponse<Scalar>& phi, const std::vector<Vec<Scalar>>& w_seq) {
  phi.validate();
  const Index T = phi.horizon;
  const Index L = static_cast<Index>(w_seq.size());
  for (const auto& w : w_seq)
    if (w.size() != phi.n()) throw std::invalid_argument("simulate_closed_loop: disturbance dimension mismatch");
  Trajectory<Scalar> traj;
  traj.w_seq = w_seq;
  traj.x_seq.resize(static_cast<size_t>(L + 1), Vec<Scalar>::Zero(phi.n()));
  traj.u_seq.resize(static_cast<size_t>(L + 1), Vec<Scalar>::Zero(phi.m()));
  for (Index t = 0; t <= L; ++t) {
    Vec<Scalar> x = Vec<Scalar>::Zero(phi.n());
    Vec<Scalar> u = Vec<Scalar>::Zero(phi.m());
    for (Index k = 1; k <= std::min(t, T); ++k) {
      const auto& w = w_seq[static_cast<size_t>(t - k)];
      x.noalias() += phi.phi_x[static_cast<size_t>(k - 1)] * w;
      u.noalias() += phi.phi_u[static_cast<size_t>(k - 1)] * w;
    }
    traj.x_seq[static_cast<size_t>(t)] = x;
    traj.u_seq[static_cast<size_t>(t)] = u;
  }
  return traj;
}

// Evaluates sum_k taps[k] * exp(-i (k - shift) theta) with k counted 1-based,
// i.e. the transfer function times z^shift on the unit circle.
template <class Scalar>
Mat<std::complex<Scalar>> evaluate_transfer(const std::vector<Mat<Scalar>>& taps, Scalar theta, Index shift) {
  if (taps.empty()) throw std::invalid_argument("evaluate_transfer: no taps");
  Mat<std::complex<Scalar>> acc = Mat<std::complex<Scalar>>::Zero(taps.front().rows(), taps.front().cols());
  for (Index k = 1; k <= static_cast<Index>(taps.size()); ++k) {
    const Scalar angle = -(Scalar(k) - Scalar(shift)) * theta;
    const std::complex<Scalar> rot(std::cos(angle), std::sin(angle));
    acc += taps[static_cast<size_t>(k - 1)].template cast<std::complex<Scalar>>() * rot;
  }
  return acc;
}

template <class Scalar>
std::pair<Mat<std::complex<Scalar>>, Mat<std::complex<Scalar>>> evaluate_transfer(const FirResponse<Scalar>& phi,
                                                                                  Scalar theta, Index shift) {
  return {evaluate_transfer(phi.phi_x, theta, shift), evaluate_transfer(phi.phi_u, theta, shift)};
}

}  // namespace sls
