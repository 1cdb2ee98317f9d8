#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sls/lti.hpp>

#include "support.hpp"

using namespace sls;
using Matd = Mat<double>;
using Vecd = Vec<double>;

namespace {

FirResponse<double> scalar_response(std::vector<double> px, std::vector<double> pu) {
  FirResponse<double> phi;
  phi.horizon = static_cast<Index>(px.size());
  for (double v : px) phi.phi_x.push_back(Matd::Constant(1, 1, v));
  for (double v : pu) phi.phi_u.push_back(Matd::Constant(1, 1, v));
  return phi;
}

LinearSystem<double> scalar_system(double a, double b) {
  LinearSystem<double> sys;
  sys.A = Matd::Constant(1, 1, a);
  sys.B = Matd::Constant(1, 1, b);
  sys.graph.n = 1;
  sys.node_actuators = {{0}};
  return sys;
}

}  // namespace

TEST_CASE("chain generator matches the benchmark coefficients") {
  const auto sys = make_chain_system<double>(5, 0.4, 1.0);
  sys.validate();
  CHECK(sys.A(0, 0) == doctest::Approx(0.6));
  CHECK(sys.A(4, 4) == doctest::Approx(0.6));
  for (Index i = 1; i < 4; ++i) CHECK(sys.A(i, i) == doctest::Approx(0.2));
  for (Index i = 0; i < 4; ++i) {
    CHECK(sys.A(i, i + 1) == doctest::Approx(0.4));
    CHECK(sys.A(i + 1, i) == doctest::Approx(0.4));
  }
  CHECK(sys.A(0, 2) == 0.0);
  CHECK(sys.B.isIdentity(0.0));
  CHECK(sys.graph.edges.size() == 4);
}

TEST_CASE("chain generator corner cases") {
  const auto sys = make_chain_system<double>(2, 0.0, 1.0);
  CHECK(sys.A.isIdentity(0.0));
  CHECK(sys.B.isIdentity(0.0));
  sys.validate();  // zero-coupling edges are allowed

  const auto neutral = make_chain_system<double>(3, 0.4, 1.0);
  CHECK(spectral_radius<double>(neutral.A) == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(make_chain_system<double>(1, 0.4, 1.0), std::invalid_argument);
}

TEST_CASE("structural consistency check rejects coupling without an edge") {
  auto sys = make_chain_system<double>(3, 0.4, 1.0);
  sys.A(0, 2) = 0.1;  // couples nodes two hops apart
  CHECK_THROWS_AS(sys.validate(), std::invalid_argument);
}

TEST_CASE("affine residual on the scalar deadbeat response") {
  const auto sys = scalar_system(0.5, 1.0);
  const auto phi = scalar_response({1.0}, {-0.5});
  CHECK(affine_residual(sys, phi) == doctest::Approx(0.0));

  const auto bad = scalar_response({0.7}, {-0.5});
  CHECK(affine_residual(sys, bad) >= 0.3 - 1e-12);
}

TEST_CASE("affine residual rejects mismatched dimensions") {
  const auto sys = make_chain_system<double>(3, 0.4, 1.0);
  const auto phi = scalar_response({1.0}, {-0.5});
  CHECK_THROWS_AS(affine_residual(sys, phi), std::invalid_argument);
}

TEST_CASE("affine residual vanishes on generated valid responses") {
  Rng rng(7);
  const auto sys = make_chain_system<double>(5, 0.4, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const auto phi = testsupport::random_valid_response(sys, 4, rng);
    CHECK(affine_residual(sys, phi) <= 1e-12);
  }
}

TEST_CASE("locality support follows hop distance") {
  const auto sys = make_chain_system<double>(5, 0.4, 1.0);
  const auto mask = locality_support(sys, 4, 1);
  REQUIRE(mask.horizon() == 4);
  for (Index k = 0; k < 4; ++k) {
    const auto& g = mask.x_support[static_cast<size_t>(k)];
    for (Index j = 0; j < 5; ++j) CHECK(g(2, j) == (j >= 1 && j <= 3));
  }
  // B = I, so input rows mirror state rows.
  CHECK((mask.u_support[0] == mask.x_support[0]).all());

  const auto dense = locality_support(sys, 2, 4);
  CHECK(dense.x_support[0].all());

  const auto diag = locality_support(sys, 2, 0);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) CHECK(diag.x_support[0](i, j) == (i == j));
}

TEST_CASE("locality support is symmetric on undirected graphs") {
  const auto sys = make_chain_system<double>(7, 0.3, 0.9);
  for (Index d = 0; d <= 3; ++d) {
    const auto mask = locality_support(sys, 2, d);
    for (Index i = 0; i < 7; ++i)
      for (Index j = 0; j < 7; ++j) CHECK(mask.x_support[0](i, j) == mask.x_support[0](j, i));
  }
}

TEST_CASE("impulse simulation recovers the spectral elements") {
  Rng rng(11);
  const auto sys = make_chain_system<double>(4, 0.4, 1.0);
  const auto phi = testsupport::random_valid_response(sys, 3, rng);
  for (Index j = 0; j < 4; ++j) {
    std::vector<Vecd> w(8, Vecd::Zero(4));
    w[0] = Vecd::Unit(4, j);
    const auto traj = simulate_closed_loop(phi, w);
    CHECK(traj.x_seq[0].isZero(0.0));
    for (Index k = 1; k <= 3; ++k) {
      CHECK((traj.x_seq[static_cast<size_t>(k)] - phi.phi_x[static_cast<size_t>(k - 1)].col(j)).cwiseAbs().maxCoeff() ==
            doctest::Approx(0.0));
      CHECK((traj.u_seq[static_cast<size_t>(k)] - phi.phi_u[static_cast<size_t>(k - 1)].col(j)).cwiseAbs().maxCoeff() ==
            doctest::Approx(0.0));
    }
    for (size_t k = 4; k < traj.x_seq.size(); ++k) CHECK(traj.x_seq[k].isZero(0.0));
  }
}

TEST_CASE("zero disturbance keeps the loop at rest") {
  Rng rng(3);
  const auto sys = make_chain_system<double>(3, 0.2, 0.8);
  const auto phi = testsupport::random_valid_response(sys, 4, rng);
  const auto traj = simulate_closed_loop(phi, std::vector<Vecd>(10, Vecd::Zero(3)));
  for (const auto& x : traj.x_seq) CHECK(x.isZero(0.0));
  for (const auto& u : traj.u_seq) CHECK(u.isZero(0.0));
}

TEST_CASE("simulated trajectories satisfy the plant recursion") {
  Rng rng(21);
  const auto sys = make_chain_system<double>(5, 0.4, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const auto phi = testsupport::random_valid_response(sys, 4, rng);
    const auto w = testsupport::random_disturbance(5, 25, 1.0, rng);
    const auto traj = simulate_closed_loop(phi, w);
    double resid = 0.0;
    for (size_t t = 0; t + 1 < traj.x_seq.size(); ++t) {
      const Vecd pred = sys.A * traj.x_seq[t] + sys.B * traj.u_seq[t] + w[t];
      resid = std::max(resid, (traj.x_seq[t + 1] - pred).cwiseAbs().maxCoeff());
    }
    CHECK(resid <= 1e-8);
  }
}

TEST_CASE("transfer evaluation on the unit circle") {
  FirResponse<double> phi;
  phi.horizon = 1;
  phi.phi_x = {Matd::Identity(1, 1)};
  phi.phi_u = {Matd::Constant(1, 1, 0.5)};
  for (double theta : {0.0, 0.31, 2.1, 3.14159}) {
    const auto [fx, fu] = evaluate_transfer(phi, theta, Index(1));
    CHECK(std::abs(fu(0, 0) - std::complex<double>(0.5, 0.0)) <= 1e-12);
  }

  FirResponse<double> two;
  two.horizon = 2;
  two.phi_x = {Matd::Identity(1, 1), Matd::Constant(1, 1, 1.0)};
  two.phi_u = {Matd::Constant(1, 1, 1.0), Matd::Constant(1, 1, 1.0)};
  const auto at_zero = evaluate_transfer(two, 0.0, Index(0));
  CHECK(std::abs(at_zero.first(0, 0) - std::complex<double>(2.0, 0.0)) <= 1e-12);
  const auto at_pi = evaluate_transfer(two.phi_u, 3.14159265358979323846, Index(0));
  CHECK(std::abs(at_pi(0, 0)) <= 1e-12);
}

TEST_CASE("float instantiation compiles and runs") {
  const auto sys = make_chain_system<float>(3, 0.4f, 1.0f);
  CHECK(sys.A(0, 0) == doctest::Approx(0.6f));
}
