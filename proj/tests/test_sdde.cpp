#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "kolsim/measures.hpp"
#include "kolsim/sdde.hpp"
#include "support/reference.hpp"
#include "support/test_util.hpp"

using namespace kolsim;
using namespace testutil;

namespace {

SimConfig quick(double horizon, std::uint64_t seed, double dt = 0.0) {
  SimConfig c;
  c.horizon = horizon;
  c.seed = seed;
  c.dt = dt;
  return c;
}

}  // namespace

TEST_CASE("sdde: empty face gives the identically zero trajectory") {
  ModelSpec m = build_zoo_model(lv_criterion_params());
  SimConfig cfg = quick(20.0, 1);
  Segment init = make_initial_segment(m, cfg, std::vector<double>{5.0, 3.0}, std::vector<int>{});
  Trajectory traj = integrate(m, init, cfg, std::vector<int>{});
  REQUIRE(traj.status == RunStatus::ok);
  for (std::size_t s = 0; s < traj.samples(); ++s)
    for (int i = 0; i < 2; ++i) CHECK(traj.state(s, i) == 0.0);
}

TEST_CASE("sdde: exact positivity on-face and bitwise zero off-face") {
  ModelSpec m = build_zoo_model(lv_criterion_params());
  SimConfig cfg = quick(200.0, 7);
  std::vector<int> face = {0};
  Segment init = make_initial_segment(m, cfg, std::vector<double>{1.0, 0.8}, face);
  CHECK(init.now(1) == 0.0);  // off-face clamped at construction
  Trajectory traj = integrate(m, init, cfg, face);
  REQUIRE(traj.status == RunStatus::ok);
  const double zero = 0.0;
  for (std::size_t s = 0; s < traj.samples(); ++s) {
    CHECK(traj.state(s, 0) > 0.0);
    CHECK(std::memcmp(&traj.states[s * 2 + 1], &zero, sizeof(double)) == 0);
    CHECK(std::isinf(traj.log_state(s, 1)));
  }
}

TEST_CASE("sdde: logistic face time-average matches the stationary mean") {
  auto p = lv_criterion_params();  // face dynamics: a=2, sigma_11=2, b_11=1
  ModelSpec m = build_zoo_model(p);
  SimConfig cfg = quick(4000.0, 11, p.r / 64.0);
  std::vector<int> face = {0};
  Segment init = make_initial_segment(m, cfg, default_face_state(m, face), face);
  Trajectory traj = integrate(m, init, cfg, face);
  OccupationStats stats = accumulate(m, traj, cfg);
  double mean = stats.mean_now[0].mean();
  double se = stats.mean_now[0].standard_error().value();
  CHECK(std::abs(mean - 1.0) <= 3.0 * se);
}

TEST_CASE("sdde: r = 0 matches the memoryless reference step-for-step") {
  auto p = lv_criterion_params();
  p.r = 0.0;
  p.b_hat = mat2(0.2, 0.1, 0.3, 0.25);  // no-delay kernels still read lag zero
  ModelSpec m = build_zoo_model(p);
  SimConfig cfg = quick(100000.0 / 128.0, 4242, 1.0 / 128.0);
  std::vector<int> face = {0, 1};
  std::vector<double> x0 = {0.9, 1.4};
  Segment init = make_initial_segment(m, cfg, x0, face);
  CHECK(init.steps() == 0);
  Trajectory traj = integrate(m, init, cfg, face);
  REQUIRE(traj.status == RunStatus::ok);
  auto ref = refint::lv_memoryless(p.a, p.b, p.b_hat, p.noise.gamma, x0, cfg.dt, 100000, cfg.seed, 0);
  REQUIRE(traj.samples() == ref.states.size());
  double worst = 0.0;
  for (std::size_t s = 0; s < traj.samples(); ++s)
    for (int i = 0; i < 2; ++i)
      worst = std::max(worst, rel_err(traj.state(s, i), ref.states[s][static_cast<std::size_t>(i)]));
  CHECK(worst <= 1e-12);
}

TEST_CASE("sdde: pathwise refinement gap shrinks with dt (same Brownian path)") {
  auto p = lv_criterion_params();
  ModelSpec m = build_zoo_model(p);
  std::vector<int> face = {0, 1};
  std::vector<double> x0 = {1.0, 0.5};

  // one fine table of standard normals; coarser levels aggregate pairs
  const double T = 8.0;
  const int fine_per_coarse = 4;
  const double dt0 = p.r / 64.0;
  const double dt_fine = dt0 / fine_per_coarse;
  const long fine_steps = std::lround(T / dt_fine);
  std::vector<double> table(static_cast<std::size_t>(fine_steps) * 2);
  RngStream noise(99, 0);
  for (auto& v : table) v = noise.next_gaussian();

  auto endpoint = [&](int refine) {
    SimConfig cfg = quick(T, 99, dt0 / refine);
    int group = fine_per_coarse / refine;
    NoiseFn fn = [&table, group](std::int64_t step, std::span<double> z) {
      for (int j = 0; j < 2; ++j) {
        double sum = 0.0;
        for (int g = 0; g < group; ++g) {
          std::int64_t fine_step = (step - 1) * group + g;
          sum += table[static_cast<std::size_t>(fine_step) * 2 + j];
        }
        z[static_cast<std::size_t>(j)] = sum / std::sqrt(static_cast<double>(group));
      }
    };
    Segment init = make_initial_segment(m, cfg, x0, face);
    Trajectory traj = integrate(m, init, cfg, face, 0, fn);
    REQUIRE(traj.status == RunStatus::ok);
    std::size_t last = traj.samples() - 1;
    return std::pair<double, double>{traj.state(last, 0), traj.state(last, 1)};
  };

  auto [a1, b1] = endpoint(1);
  auto [a2, b2] = endpoint(2);
  auto [a4, b4] = endpoint(4);
  double gap_coarse = std::abs(a1 - a2) + std::abs(b1 - b2);
  double gap_fine = std::abs(a2 - a4) + std::abs(b2 - b4);
  CHECK(gap_fine < gap_coarse);
}

TEST_CASE("sdde: continuity in the initial segment under a shared noise stream") {
  ModelSpec m = build_zoo_model(lv_criterion_params());
  SimConfig cfg = quick(5.0, 31, 1.0 / 64.0);
  std::vector<int> face = {0, 1};

  auto endpoint_gap = [&](double delta) {
    Segment base = make_initial_segment(m, cfg, std::vector<double>{1.0, 0.7}, face);
    Segment shifted = make_initial_segment(m, cfg, std::vector<double>{1.0 + delta, 0.7}, face);
    Trajectory t0 = integrate(m, base, cfg, face, 0);
    Trajectory t1 = integrate(m, shifted, cfg, face, 0);
    std::size_t last = t0.samples() - 1;
    double gap = 0.0;
    for (int i = 0; i < 2; ++i) gap = std::max(gap, std::abs(t0.state(last, i) - t1.state(last, i)));
    return gap;
  };

  double g1 = endpoint_gap(1e-3);
  double g2 = endpoint_gap(5e-4);
  double g3 = endpoint_gap(2.5e-4);
  CHECK(g2 <= 0.55 * g1);
  CHECK(g3 <= 0.55 * g2);
}

TEST_CASE("sdde: replicator stays on the simplex after renormalization") {
  auto p = replicator_example_params(3);
  p.total = 2.0;
  ModelSpec m = build_zoo_model(p);
  SimConfig cfg = quick(100.0, 17, p.r / 64.0);
  std::vector<int> face = {0, 1, 2};
  Segment init = make_initial_segment(m, cfg, std::vector<double>{0.8, 0.7, 0.5}, face);
  Trajectory traj = integrate(m, init, cfg, face);
  REQUIRE(traj.status == RunStatus::ok);
  for (std::size_t s = 0; s < traj.samples(); ++s) {
    double sum = traj.state(s, 0) + traj.state(s, 1) + traj.state(s, 2);
    CHECK(std::abs(sum / p.total - 1.0) <= 1e-12);
  }
  CHECK(traj.max_simplex_defect > 0.0);   // the raw step has a defect
  CHECK(traj.max_simplex_defect < 0.05);  // and it stays O(dt) small
}

TEST_CASE("sdde: divergence ceiling aborts with a report") {
  auto p = lv_criterion_params();
  p.a = vec2(30.0, 1.5);
  ModelSpec m = build_zoo_model(p);
  SimConfig cfg = quick(50.0, 3);
  cfg.divergence_ceiling_log = 1.0;
  std::vector<int> face = {0};
  Segment init = make_initial_segment(m, cfg, std::vector<double>{1.0, 0.0}, face);
  Trajectory traj = integrate(m, init, cfg, face);
  CHECK(traj.status == RunStatus::diverged);
  CHECK(traj.fault_species == 0);
  CHECK(traj.fault_time > 0.0);
}

TEST_CASE("sdde: non-finite coefficients abort with the offending segment") {
  ModelSpec m;
  m.n = 1;
  m.drivers = 1;
  m.r = 0.0;
  m.noise = NoiseSpec::identity(1);
  m.kernels = {DelayKernel::point(0.0)};
  m.kolmogorov = {true};
  m.names = {"1"};
  m.drift_fn = [](const SegmentView& v, std::span<double> out) {
    out[0] = v.now(0) < 2.0 ? 1.0 : std::numeric_limits<double>::quiet_NaN();
  };
  m.diffusion_fn = [](const SegmentView&, std::span<double> out) { out[0] = 0.1; };
  SimConfig cfg = quick(10.0, 5);
  std::vector<int> face = {0};
  Segment init = make_initial_segment(m, cfg, std::vector<double>{1.0}, face);
  Trajectory traj = integrate(m, init, cfg, face);
  CHECK(traj.status == RunStatus::nan_coefficient);
  CHECK(traj.fault_species == 0);
  CHECK(traj.fault_segment.species() == 1);
  CHECK(traj.fault_segment.now(0) >= 2.0);
}

TEST_CASE("sdde: integrate is deterministic per (seed, replicate)") {
  ModelSpec m = build_zoo_model(lv_criterion_params());
  SimConfig cfg = quick(50.0, 2024);
  std::vector<int> face = {0, 1};
  Segment init = make_initial_segment(m, cfg, std::vector<double>{1.0, 1.0}, face);
  Trajectory t1 = integrate(m, init, cfg, face, 3);
  Trajectory t2 = integrate(m, init, cfg, face, 3);
  REQUIRE(t1.samples() == t2.samples());
  CHECK(std::memcmp(t1.states.data(), t2.states.data(), t1.states.size() * sizeof(double)) == 0);
  Trajectory t3 = integrate(m, init, cfg, face, 4);
  CHECK(std::memcmp(t1.states.data(), t3.states.data(), t1.states.size() * sizeof(double)) != 0);
}

TEST_CASE("sdde: record stride thins the samples") {
  ModelSpec m = build_zoo_model(lv_criterion_params());
  SimConfig cfg = quick(10.0, 1);
  cfg.record_stride = 16;
  std::vector<int> face = {0, 1};
  Segment init = make_initial_segment(m, cfg, std::vector<double>{1.0, 1.0}, face);
  Trajectory traj = integrate(m, init, cfg, face);
  CHECK(traj.samples() == 1 + 10 * 64 / 16);
  CHECK(traj.times[1] == doctest::Approx(16.0 / 64.0));
}

TEST_CASE("sdde: config validation") {
  SimConfig cfg;
  cfg.seed = 1;
  cfg.dt = 2.0;
  CHECK_THROWS_AS(cfg.validate(1.0), std::invalid_argument);  // dt > r
  cfg.dt = 0.5;
  cfg.burn_in = 1.0;
  CHECK_THROWS_AS(cfg.validate(1.0), std::invalid_argument);
  cfg.burn_in = 0.2;
  cfg.replicates = 0;
  CHECK_THROWS_AS(cfg.validate(1.0), std::invalid_argument);
  cfg.replicates = 1;
  cfg.extinction_floor_log = 0.0;
  CHECK_THROWS_AS(cfg.validate(1.0), std::invalid_argument);
  cfg.extinction_floor_log = -23.0;
  CHECK_NOTHROW(cfg.validate(1.0));
  CHECK(SimConfig{}.resolved_dt(1.0) == 1.0 / 64.0);
  CHECK(SimConfig{}.resolved_dt(0.0) == 1.0 / 128.0);
}

TEST_CASE("sdde: brownian_increments draws from the shared stream layout") {
  RngStream a(5, 0), b(5, 0);
  std::vector<double> inc(3);
  brownian_increments(a, 0.25, inc);
  for (int j = 0; j < 3; ++j) CHECK(inc[static_cast<std::size_t>(j)] == 0.5 * b.next_gaussian());
}
