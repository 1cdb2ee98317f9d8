#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sls/qp.hpp>

#include <cstdio>
#include <sstream>

#include "support.hpp"

using namespace sls;
using Matd = Mat<double>;
using Vecd = Vec<double>;

namespace {

SparseMat<double> sparse_from(const Matd& dense) {
  return dense.sparseView();
}

ConvexProgram<double> empty_program(Index n) {
  ConvexProgram<double> prog;
  prog.Q = SparseMat<double>(n, n);
  prog.c = Vecd::Zero(n);
  prog.E = SparseMat<double>(0, n);
  prog.f = Vecd(0);
  prog.M = SparseMat<double>(0, n);
  prog.v = Vecd(0);
  return prog;
}

}  // namespace

TEST_CASE("minimum of x^2 over the nonnegative ray") {
  auto prog = empty_program(1);
  prog.Q = sparse_from(Matd::Constant(1, 1, 2.0));
  prog.nonneg = {0};
  const auto res = solve(prog);
  REQUIRE(res.status == SolveStatus::optimal);
  CHECK(std::abs(res.x_star(0)) <= 1e-8);
  CHECK(res.kkt.max_residual() <= 1e-8);
}

TEST_CASE("projection onto an equality constraint") {
  auto prog = empty_program(2);
  prog.Q = sparse_from(2.0 * Matd::Identity(2, 2));
  prog.c = Vecd::Constant(2, -2.0);  // (x-1)^2 + (y-1)^2 up to a constant
  Matd e(1, 2);
  e << 1.0, 1.0;
  prog.E = sparse_from(e);
  prog.f = Vecd::Constant(1, 1.0);
  const auto res = solve(prog);
  REQUIRE(res.status == SolveStatus::optimal);
  CHECK(res.x_star(0) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(res.x_star(1) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(res.kkt.max_residual() <= 1e-8);
}

TEST_CASE("linear program lands on the box vertex") {
  auto prog = empty_program(1);
  prog.c = Vecd::Constant(1, -1.0);  // maximize beta
  Matd m(2, 1);
  m << 1.0, -1.0;
  prog.M = sparse_from(m);
  prog.v = Vecd::Constant(2, 1.0);
  const auto res = solve(prog);
  REQUIRE(res.status == SolveStatus::optimal);
  CHECK(res.x_star(0) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("kkt residuals at and away from the optimum") {
  auto prog = empty_program(2);
  prog.Q = sparse_from(2.0 * Matd::Identity(2, 2));
  prog.c = Vecd::Constant(2, -2.0);
  Matd e(1, 2);
  e << 1.0, 1.0;
  prog.E = sparse_from(e);
  prog.f = Vecd::Constant(1, 1.0);

  Vecd x_opt = Vecd::Constant(2, 0.5);
  Vecd duals = Vecd::Constant(1, 1.0);  // 2x - 2 + y = 0 at x = 0.5
  const auto at_opt = kkt_check(prog, x_opt, duals);
  CHECK(at_opt.max_residual() <= 1e-8);

  Vecd x_off = x_opt;
  x_off(0) += 0.1;
  const auto off = kkt_check(prog, x_off, duals);
  CHECK(off.stationarity > 0.05);

  Vecd x_infeas = Vecd::Constant(2, 1.0);
  const auto infeas = kkt_check(prog, x_infeas, duals);
  CHECK(infeas.primal == doctest::Approx(1.0));  // x + y = 2 vs 1
}

TEST_CASE("solver reports an infeasibility certificate") {
  auto prog = empty_program(1);
  prog.Q = sparse_from(Matd::Constant(1, 1, 2.0));
  prog.nonneg = {0};
  Matd e(1, 1);
  e << 1.0;
  prog.E = sparse_from(e);
  prog.f = Vecd::Constant(1, -1.0);  // x = -1 contradicts x >= 0
  const auto res = solve(prog);
  CHECK(res.status == SolveStatus::infeasible);
  CHECK(res.certificate.size() == 2);
}

TEST_CASE("solver flags unbounded descent directions") {
  auto prog = empty_program(1);
  prog.c = Vecd::Constant(1, -1.0);
  prog.nonneg = {0};  // min -x over x >= 0
  const auto res = solve(prog);
  CHECK(res.status == SolveStatus::unbounded);
}

TEST_CASE("construction errors") {
  auto prog = empty_program(2);
  Matd indefinite(2, 2);
  indefinite << 0.0, 1.0, 1.0, 0.0;
  prog.Q = sparse_from(indefinite);
  CHECK_THROWS_AS(solve(prog), std::invalid_argument);

  auto bad_dims = empty_program(2);
  Matd e(1, 3);
  e << 1.0, 1.0, 1.0;
  bad_dims.E = sparse_from(e);
  bad_dims.f = Vecd::Constant(1, 1.0);
  CHECK_THROWS_AS(solve(bad_dims), std::invalid_argument);

  auto bad_index = empty_program(2);
  bad_index.nonneg = {5};
  CHECK_THROWS_AS(solve(bad_index), std::invalid_argument);
}

TEST_CASE("determinism: identical inputs give identical runs") {
  Rng rng(5);
  auto prog = empty_program(4);
  Matd q = Matd::Zero(4, 4);
  for (Index i = 0; i < 4; ++i) q(i, i) = 1.0 + rng.uniform01();
  prog.Q = sparse_from(q);
  for (Index i = 0; i < 4; ++i) prog.c(i) = rng.symmetric();
  Matd m(8, 4);
  m << Matd::Identity(4, 4), -Matd::Identity(4, 4);
  prog.M = sparse_from(m);
  prog.v = Vecd::Constant(8, 1.0);

  const auto a = solve(prog);
  const auto b = solve(prog);
  REQUIRE(a.status == SolveStatus::optimal);
  CHECK(a.iterations == b.iterations);
  CHECK((a.x_star.array() == b.x_star.array()).all());
  CHECK((a.duals.array() == b.duals.array()).all());
}

TEST_CASE("active-set oracle agreement on random boxed programs") {
  Rng rng(12345);
  int solved = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = static_cast<Index>(rng.integer(1, 6));
    auto prog = empty_program(n);
    Matd q = Matd::Zero(n, n);
    const bool strictly_convex = trial % 3 != 0;
    for (Index i = 0; i < n; ++i) q(i, i) = strictly_convex ? rng.uniform(0.2, 3.0) : 0.0;
    prog.Q = sparse_from(q);
    for (Index i = 0; i < n; ++i) prog.c(i) = 2.0 * rng.symmetric();
    Matd m(2 * n, n);
    m << Matd::Identity(n, n), -Matd::Identity(n, n);
    prog.M = sparse_from(m);
    prog.v = Vecd(2 * n);
    for (Index i = 0; i < n; ++i) {
      const double lo = rng.uniform(-2.0, 0.0);
      const double hi = rng.uniform(0.1, 2.0);
      prog.v(i) = hi;
      prog.v(n + i) = -lo;
    }
    if (trial % 4 == 0 && n >= 2) {
      Matd e = Matd::Zero(1, n);
      e(0, 0) = 1.0;
      e(0, 1) = 1.0;
      prog.E = sparse_from(e);
      prog.f = Vecd::Constant(1, 0.3);  // inside the boxes above
    }

    const auto oracle = testsupport::active_set_oracle(prog);
    REQUIRE(oracle.feasible);
    const auto res = solve(prog);
    REQUIRE(res.status == SolveStatus::optimal);
    CHECK(std::abs(objective_value(prog, res.x_star) - oracle.objective) <= 1e-6 * (1.0 + std::abs(oracle.objective)));
    if (strictly_convex)
      CHECK((res.x_star - oracle.x).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + oracle.x.cwiseAbs().maxCoeff()));
    ++solved;
  }
  CHECK(solved == 40);
}

TEST_CASE("scaling the objective leaves the argmin unchanged") {
  Rng rng(99);
  auto prog = empty_program(3);
  Matd q = Matd::Zero(3, 3);
  for (Index i = 0; i < 3; ++i) q(i, i) = rng.uniform(0.5, 2.0);
  prog.Q = sparse_from(q);
  for (Index i = 0; i < 3; ++i) prog.c(i) = rng.symmetric();
  Matd m(6, 3);
  m << Matd::Identity(3, 3), -Matd::Identity(3, 3);
  prog.M = sparse_from(m);
  prog.v = Vecd::Constant(6, 0.4);

  const auto base = solve(prog);
  auto scaled = prog;
  scaled.Q = SparseMat<double>(100.0 * q.sparseView());
  scaled.c = 100.0 * prog.c;
  const auto s = solve(scaled);
  REQUIRE(base.status == SolveStatus::optimal);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK((base.x_star - s.x_star).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("program dump writes one constraint per line") {
  auto prog = empty_program(2);
  prog.Q = sparse_from(2.0 * Matd::Identity(2, 2));
  Matd e(1, 2);
  e << 1.0, -1.0;
  prog.E = sparse_from(e);
  prog.f = Vecd::Constant(1, 0.5);
  prog.nonneg = {1};
  std::ostringstream out;
  dump(prog, out);
  const std::string text = out.str();
  CHECK(text.find("eq") != std::string::npos);
  CHECK(text.find("nonneg 1") != std::string::npos);
}
