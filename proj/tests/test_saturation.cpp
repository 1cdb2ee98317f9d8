#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sls/saturation.hpp>
#include <sls/verify.hpp>

#include <random>

using sls::Compensator;
using sls::FirResponse;
using sls::ImcController;
using sls::Index;
using sls::InputBox;
using sls::Mat;
using sls::SaturationRecord;
using sls::Vec;

namespace {

struct ChainSetup {
  sls::LinearSystem<double> sys;
  sls::SupportMask mask;
  FirResponse<double> phi;
};

// Nominal design on the 5-node chain with slack bounds: the box constraints
// never bind, so the response is the plain least-energy design.
ChainSetup chain_design(double rho) {
  ChainSetup s{sls::make_chain_system<double>(5, 0.4, rho), {}, {}};
  const Index T = 4;
  s.mask = sls::locality_support(s.sys, T, 3);
  const Vec<double> w_bound = Vec<double>::Constant(5, 0.5);
  const Vec<double> slack = Vec<double>::Constant(5, 100.0);
  const auto spec = sls::make_box_spec(w_bound, slack, slack, T);
  auto result = sls::synthesize_centralized(s.sys, spec, s.mask);
  REQUIRE(result.status == sls::SolveStatus::optimal);
  s.phi = result.phi;
  return s;
}

std::vector<Vec<double>> random_disturbance(Index n, Index len, unsigned seed, double amp) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-amp, amp);
  std::vector<Vec<double>> w(static_cast<size_t>(len), Vec<double>::Zero(n));
  for (auto& wt : w)
    for (Index i = 0; i < n; ++i) wt(i) = dist(rng);
  return w;
}

Index last_clip_step(const SaturationRecord<double>& rec) {
  Index last = -1;
  for (size_t t = 0; t < rec.sat_flags.size(); ++t)
    for (char f : rec.sat_flags[t])
      if (f) last = static_cast<Index>(t);
  return last;
}

int total_clip_steps(const SaturationRecord<double>& rec) {
  int count = 0;
  for (const auto& flags : rec.sat_flags)
    for (char f : flags) count += (f != 0);
  return count;
}

double tail_energy(const sls::Trajectory<double>& traj, Index from) {
  double e = 0.0;
  for (size_t t = static_cast<size_t>(from); t < traj.x_seq.size(); ++t) e += traj.x_seq[t].squaredNorm();
  return e;
}

}  // namespace

TEST_CASE("clamping projects onto the box and cutoff keeps the remainder") {
  const auto box = sls::symmetric_input_box<double>(1, 1.0);
  Vec<double> u1 = Vec<double>::Constant(1, 0.3);
  CHECK(sls::saturate(u1, box)(0) == 0.3);
  CHECK(sls::cutoff(u1, box)(0) == 0.0);

  Vec<double> u2 = Vec<double>::Constant(1, 2.0);
  CHECK(sls::saturate(u2, box)(0) == 1.0);
  CHECK(sls::cutoff(u2, box)(0) == 1.0);

  const auto box2 = sls::symmetric_input_box<double>(2, 1.0);
  Vec<double> u3(2);
  u3 << 2.0, -3.0;
  CHECK(sls::saturate(u3, box2)(0) == 1.0);
  CHECK(sls::saturate(u3, box2)(1) == -1.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-4.0, 4.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vec<double> u(2);
    u << dist(rng), dist(rng);
    const Vec<double> sat = sls::saturate(u, box2);
    const Vec<double> cut = sls::cutoff(u, box2);
    CHECK((sat + cut - u).lpNorm<Eigen::Infinity>() == 0.0);          // exact split
    CHECK((sls::saturate(sat, box2) - sat).lpNorm<Eigen::Infinity>() == 0.0);  // idempotent
    const bool inside = (u.array() >= -1.0).all() && (u.array() <= 1.0).all();
    CHECK((cut.lpNorm<Eigen::Infinity>() == 0.0) == inside);
  }

  InputBox<double> bad;
  bad.u_min = Vec<double>::Constant(1, 0.5);  // does not contain the origin
  bad.u_max = Vec<double>::Constant(1, 1.0);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  Vec<double> wrong = Vec<double>::Zero(3);
  CHECK_THROWS_AS(sls::saturate(wrong, box2), std::invalid_argument);
}

TEST_CASE("the input peak gain is the largest absolute row sum over taps") {
  FirResponse<double> f;
  f.horizon = 2;
  f.phi_x = {Mat<double>::Identity(2, 2), Mat<double>::Zero(2, 2)};
  Mat<double> u1(1, 2), u2(1, 2);
  u1 << 0.5, -1.0;
  u2 << 0.25, 0.0;
  f.phi_u = {u1, u2};
  CHECK(sls::input_peak_gain(f) == doctest::Approx(1.75).epsilon(1e-12));
}

TEST_CASE("the stateful controller reproduces the convolution closed loop") {
  const auto setup = chain_design(0.9);
  const Index T = 4;

  for (unsigned seed = 0; seed < 20; ++seed) {
    const auto w = random_disturbance(5, 10 * T, seed, 0.5);
    const auto reference = sls::simulate_closed_loop(setup.phi, w);

    ImcController<double> ctrl(setup.phi, setup.sys.A, setup.sys.B);
    Vec<double> x = Vec<double>::Zero(5);
    double worst = 0.0;
    for (Index t = 0; t < 10 * T; ++t) {
      worst = std::max(worst, (x - reference.x_seq[static_cast<size_t>(t)]).lpNorm<Eigen::Infinity>());
      const Vec<double> u = sls::imc_step(ctrl, x);
      worst = std::max(worst, (u - reference.u_seq[static_cast<size_t>(t)]).lpNorm<Eigen::Infinity>());
      x = setup.sys.A * x + setup.sys.B * u + w[static_cast<size_t>(t)];
    }
    CHECK(worst <= 1e-8);
  }
}

TEST_CASE("zero disturbance keeps the loop at rest") {
  const auto setup = chain_design(0.9);
  ImcController<double> ctrl(setup.phi, setup.sys.A, setup.sys.B);
  const auto box = sls::symmetric_input_box<double>(5, 0.2);
  Vec<double> x = Vec<double>::Zero(5);
  for (Index t = 0; t < 40; ++t) {
    const Vec<double> u = sls::imc_step(ctrl, x, box);
    CHECK(u.lpNorm<Eigen::Infinity>() == 0.0);
    x = setup.sys.A * x + setup.sys.B * u;
    CHECK(x.lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("the innovation recovers the disturbance exactly even when commands clip") {
  const auto setup = chain_design(0.9);
  const Index T = 4;
  const auto box = sls::symmetric_input_box<double>(5, 0.15);
  const auto w = random_disturbance(5, 50 * T, 21, 0.5);

  ImcController<double> ctrl(setup.phi, setup.sys.A, setup.sys.B);
  Vec<double> x = Vec<double>::Zero(5);
  int clipped = 0;
  double peak_x = 0.0;
  for (Index t = 0; t < 50 * T; ++t) {
    Vec<double> u0;
    const Vec<double> u = sls::imc_step(ctrl, x, box, &u0);
    if ((u - u0).lpNorm<Eigen::Infinity>() > 0.0) ++clipped;
    // Newest buffer entry is the innovation formed this step; it must equal
    // the disturbance injected one step earlier regardless of clipping.
    const Vec<double> expected = (t == 0) ? Vec<double>::Zero(5) : w[static_cast<size_t>(t - 1)];
    CHECK((ctrl.delta_buffer.front() - expected).lpNorm<Eigen::Infinity>() <= 1e-13);
    x = setup.sys.A * x + setup.sys.B * u + w[static_cast<size_t>(t)];
    peak_x = std::max(peak_x, x.lpNorm<Eigen::Infinity>());
  }
  CHECK(clipped > 20);     // the box genuinely binds
  CHECK(peak_x <= 10.0);   // and the loop stays bounded over the long run
}

TEST_CASE("a compensator never commands the node it protects") {
  const auto setup = chain_design(0.9);
  const Index T = 4;
  const double expected_gain[5] = {1.934757625045, 1.262809001046, 1.257975726606, 1.262809001046,
                                   1.934757625045};
  for (Index i = 0; i < 5; ++i) {
    const auto comp = sls::synthesize_compensator(setup.sys, setup.mask, i, T);
    CHECK(comp.saturated_node == i);
    for (Index k = 0; k < T; ++k)
      CHECK(comp.phi_bar.phi_u[static_cast<size_t>(k)].row(i).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(sls::affine_residual(setup.sys, comp.phi_bar) <= 1e-6);
    CHECK((comp.phi_bar.phi_x[0] - Mat<double>::Identity(5, 5)).lpNorm<Eigen::Infinity>() <= 1e-9);
    CHECK(sls::input_peak_gain(comp.phi_bar) ==
          doctest::Approx(expected_gain[static_cast<size_t>(i)]).epsilon(1e-6));
  }
  CHECK_THROWS_AS(sls::synthesize_compensator(setup.sys, setup.mask, 7, T), std::invalid_argument);
}

TEST_CASE("a single isolated node cannot shed its own actuator") {
  sls::LinearSystem<double> sys;
  sys.A = Mat<double>::Constant(1, 1, 0.2);
  sys.B = Mat<double>::Identity(1, 1);
  sys.graph.n = 1;
  sys.node_actuators = {{0}};
  const auto mask = sls::locality_support(sys, 4, 1);
  try {
    sls::synthesize_compensator(sys, mask, 0, 4);
    FAIL("expected an infeasibility error");
  } catch (const std::runtime_error& err) {
    CHECK(std::string(err.what()).find("node 0") != std::string::npos);
  }
}

TEST_CASE("matching responses make the compensated and naive loops identical") {
  const auto setup = chain_design(0.9);
  const auto box = sls::symmetric_input_box<double>(5, 0.15);
  const auto w = random_disturbance(5, 80, 7, 0.5);

  std::vector<Compensator<double>> mirrors;
  for (Index i = 0; i < 5; ++i) {
    Compensator<double> c;
    c.phi_bar = setup.phi;
    c.saturated_node = i;
    c.reset();
    mirrors.push_back(std::move(c));
  }

  SaturationRecord<double> rec_naive, rec_comp;
  const auto naive = sls::run_naive_saturated(setup.sys, setup.phi, box, w, 80, &rec_naive);
  const auto comp = sls::run_compensated(setup.sys, setup.phi, mirrors, box, w, 80, &rec_comp);

  CHECK(total_clip_steps(rec_naive) >= 10);  // saturation genuinely active
  REQUIRE(naive.x_seq.size() == comp.x_seq.size());
  double worst = 0.0;
  for (size_t t = 0; t < naive.x_seq.size(); ++t) {
    worst = std::max(worst, (naive.x_seq[t] - comp.x_seq[t]).lpNorm<Eigen::Infinity>());
    worst = std::max(worst, (naive.u_seq[t] - comp.u_seq[t]).lpNorm<Eigen::Infinity>());
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("an idle box leaves the compensated loop at the nominal trajectory") {
  const auto setup = chain_design(0.9);
  const auto wide = sls::symmetric_input_box<double>(5, 1e9);
  const auto w = random_disturbance(5, 40, 13, 0.5);

  std::vector<Compensator<double>> comps;
  for (Index i = 0; i < 5; ++i) comps.push_back(sls::synthesize_compensator(setup.sys, setup.mask, i, 4));

  SaturationRecord<double> rec;
  const auto traj = sls::run_compensated(setup.sys, setup.phi, comps, wide, w, 40, &rec);
  const auto reference = sls::simulate_closed_loop(setup.phi, w);

  CHECK(total_clip_steps(rec) == 0);
  CHECK(rec.log.empty());
  for (double v : rec.wbar_norm) CHECK(v == 0.0);
  double worst = 0.0;
  for (size_t t = 0; t < reference.x_seq.size(); ++t)
    worst = std::max(worst, (traj.x_seq[t] - reference.x_seq[t]).lpNorm<Eigen::Infinity>());
  CHECK(worst <= 1e-8);
}

TEST_CASE("compensation pays off after the last clipping event") {
  const auto setup = chain_design(0.9);
  const auto box = sls::symmetric_input_box<double>(5, 0.15);
  const Index horizon = 60;
  std::vector<Vec<double>> w(1, Vec<double>::Zero(5));
  w[0](0) = 1.0;  // one hard shove at the boundary node

  std::vector<Compensator<double>> comps;
  for (Index i = 0; i < 5; ++i) comps.push_back(sls::synthesize_compensator(setup.sys, setup.mask, i, 4));

  SaturationRecord<double> rec_naive, rec_comp;
  const auto naive = sls::run_naive_saturated(setup.sys, setup.phi, box, w, horizon, &rec_naive);
  const auto comp = sls::run_compensated(setup.sys, setup.phi, comps, box, w, horizon, &rec_comp);

  const Index t0 = std::max(last_clip_step(rec_naive), last_clip_step(rec_comp));
  REQUIRE(t0 == 2);
  CHECK(total_clip_steps(rec_naive) == 2);
  CHECK(total_clip_steps(rec_comp) == 3);

  const double e_naive = tail_energy(naive, t0 + 1);
  const double e_comp = tail_energy(comp, t0 + 1);
  CHECK(e_comp <= e_naive);
  CHECK(e_naive == doctest::Approx(0.098218690015).epsilon(1e-6));
  CHECK(e_comp == doctest::Approx(0.088512557310).epsilon(1e-6));
  CHECK(e_comp / e_naive == doctest::Approx(0.901178353085).epsilon(1e-6));
}

TEST_CASE("a clipping node without a compensator falls back to the nominal response") {
  const auto setup = chain_design(0.9);
  const auto box = sls::symmetric_input_box<double>(5, 0.3);
  const Index horizon = 40;
  std::vector<Vec<double>> w(1, Vec<double>::Zero(5));
  w[0](2) = 1.5;  // clips actuators 1 and 3 only at this limit

  std::vector<Compensator<double>> partial;
  for (Index i : {0, 2, 4}) partial.push_back(sls::synthesize_compensator(setup.sys, setup.mask, i, 4));

  SaturationRecord<double> rec_naive, rec_comp;
  const auto naive = sls::run_naive_saturated(setup.sys, setup.phi, box, w, horizon, &rec_naive);
  const auto comp = sls::run_compensated(setup.sys, setup.phi, partial, box, w, horizon, &rec_comp);

  REQUIRE(total_clip_steps(rec_naive) == 2);
  bool noted1 = false, noted3 = false;
  for (const auto& line : rec_comp.log) {
    if (line.find("node 1") != std::string::npos) noted1 = true;
    if (line.find("node 3") != std::string::npos) noted3 = true;
  }
  CHECK(noted1);
  CHECK(noted3);

  // With every clipping node on fallback, the run degenerates to the naive loop.
  double worst = 0.0;
  for (size_t t = 0; t < naive.x_seq.size(); ++t)
    worst = std::max(worst, (naive.x_seq[t] - comp.x_seq[t]).lpNorm<Eigen::Infinity>());
  CHECK(worst <= 1e-10);
}

TEST_CASE("a modest model mismatch stays contractive and bounded") {
  const auto setup = chain_design(0.9);
  Mat<double> A_hat = setup.sys.A;
  A_hat(0, 1) += 0.02;
  A_hat(3, 2) -= 0.02;

  const auto report = sls::small_gain_margin(setup.sys, A_hat, setup.phi);
  CHECK(report.margin == doctest::Approx(0.108155170).epsilon(1e-6));
  CHECK(report.margin + report.truncation_bound < 1.0);
  CHECK(report.verdict == sls::Verdict::pass);

  ImcController<double> ctrl(setup.phi, A_hat, setup.sys.B);
  const auto w = random_disturbance(5, 400, 11, 0.5);
  Vec<double> x = Vec<double>::Zero(5);
  double peak_x = 0.0, peak_w = 0.0;
  for (Index t = 0; t < 400; ++t) {
    const Vec<double> u = sls::imc_step(ctrl, x);
    x = setup.sys.A * x + setup.sys.B * u + w[static_cast<size_t>(t)];
    peak_x = std::max(peak_x, x.lpNorm<Eigen::Infinity>());
    peak_w = std::max(peak_w, w[static_cast<size_t>(t)].lpNorm<Eigen::Infinity>());
  }
  CHECK(peak_x <= 2.0 * peak_w);  // observed ratio is about 1.35
}
