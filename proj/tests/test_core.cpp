#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "kolsim/model.hpp"
#include "kolsim/rng.hpp"
#include "kolsim/segment.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace kolsim;
using namespace testutil;

TEST_CASE("rng: determinism for the same (seed, stream, counter)") {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream c(42, 8);
  bool all_equal = true;
  RngStream a2(42, 7);
  for (int i = 0; i < 100; ++i) all_equal = all_equal && (a2.next_u64() == c.next_u64());
  CHECK_FALSE(all_equal);
}

TEST_CASE("rng: brownian increment moments") {
  RngStream stream(123, 0);
  const int n = 1'000'000;
  const double dt = 0.01;
  std::vector<double> buf(2);
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n / 2; ++i) {
    brownian_increments(stream, dt, buf);
    sum += buf[0] + buf[1];
    sum2 += buf[0] * buf[0] + buf[1] * buf[1];
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 * std::sqrt(dt / n));
  CHECK(std::abs(var - dt) < 0.02 * dt);
}

TEST_CASE("rng: uniforms lie strictly inside (0,1)") {
  RngStream stream(9, 1);
  for (int i = 0; i < 100000; ++i) {
    double u = stream.next_uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("segment: linear interpolation between grid columns") {
  Segment seg(1, 4, 0.25);  // window [-1, 0]
  for (int k = 0; k <= 4; ++k) seg.grid(0, k) = static_cast<double>(k);  // value 4 at now
  SegmentView v = seg.view();
  CHECK(v.at(0, 0.0) == 4.0);
  CHECK(v.at(0, 0.25) == 3.0);
  CHECK(v.at(0, 1.0) == 0.0);
  CHECK(v.at(0, 0.125) == doctest::Approx(3.5).epsilon(1e-14));
  CHECK(v.at(0, 2.0) == 0.0);  // clamped to the oldest column
}

TEST_CASE("segment: delay kernel validation") {
  CHECK_THROWS(DelayKernel{{{-0.1, 1.0}}}.validate(1.0));
  CHECK_THROWS(DelayKernel{{{2.0, 1.0}}}.validate(1.0));
  CHECK_THROWS(DelayKernel{{{0.5, 0.4}, {0.25, 0.4}}}.validate(1.0));
  DelayKernel ok{{{0.5, 0.5}, {0.25, 0.5}}};
  ok.validate(1.0);
  CHECK(ok.max_lag() == 0.5);
}

namespace {

oracle::Path path_of(const SegmentView& v) {
  return [&v](int i, double lag) { return v.at(i, lag); };
}

void check_rows(std::span<const double> got, const std::vector<double>& want, double tol = 1e-12) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i)
    CHECK(rel_err(got[i], want[i]) < tol);
}

}  // namespace

TEST_CASE("model: coefficient transcriptions agree on 1000 random segments") {
  RngStream rng(2024, 0);
  std::vector<double> drift;

  SUBCASE("competitive LV") {
    auto p = lv_criterion_params();
    p.b_hat = mat2(0.3, -0.2, 1.5, 0.1);
    ModelSpec m = build_zoo_model(p);
    drift.resize(2);
    for (int t = 0; t < 1000; ++t) {
      Segment seg = random_segment(rng, 2, 64, p.r / 64.0);
      SegmentView v = seg.view();
      m.eval_drift(v, drift);
      check_rows(drift, oracle::lv_drift(p.a, p.b, p.b_hat, p.r, path_of(v)));
    }
  }

  SUBCASE("predator prey") {
    auto p = pp_example_params();
    p.b_hat(1, 0) = 0.2;
    p.b_hat(2, 2) = -0.3;
    ModelSpec m = build_zoo_model(p);
    drift.resize(3);
    for (int t = 0; t < 1000; ++t) {
      Segment seg = random_segment(rng, 3, 64, p.r / 64.0);
      SegmentView v = seg.view();
      m.eval_drift(v, drift);
      check_rows(drift, oracle::predator_prey_drift(p.a, p.b, p.b_hat, p.r, path_of(v)));
    }
  }

  SUBCASE("replicator drift and diffusion") {
    auto p = replicator_example_params(3);
    ModelSpec m = build_zoo_model(p);
    drift.resize(3);
    std::vector<double> diff(9);
    for (int t = 0; t < 1000; ++t) {
      Segment seg = random_segment(rng, 3, 64, p.r / 64.0);
      SegmentView v = seg.view();
      m.eval_drift(v, drift);
      check_rows(drift, oracle::replicator_drift(p.payoff_matrix, p.total, p.r, path_of(v)));
      m.eval_diffusion(v, diff);
      for (int i = 0; i < 3; ++i) {
        auto row = oracle::replicator_diffusion_row(p.sigma_strength, p.total, i, path_of(v));
        check_rows(std::span<const double>(diff.data() + 3 * i, 3), row);
      }
    }
  }

  SUBCASE("sir linear incidence") {
    auto p = sir_criterion_params();
    ModelSpec m = build_zoo_model(p);
    drift.resize(2);
    for (int t = 0; t < 1000; ++t) {
      Segment seg = random_segment(rng, 2, 64, p.r / 64.0);
      SegmentView v = seg.view();
      m.eval_drift(v, drift);
      check_rows(drift, oracle::sir_linear_drift(p.a, p.b1, p.b2, p.c1, p.c2, p.r, path_of(v)));
    }
  }

  SUBCASE("chemostat") {
    auto p = chemostat_example_params(2);
    ModelSpec m = build_zoo_model(p);
    drift.resize(3);
    std::vector<std::function<double(double)>> uptake;
    for (auto mu : p.monod) uptake.push_back([mu](double s) { return mu.m * s / (mu.k + s); });
    for (int t = 0; t < 1000; ++t) {
      Segment seg = random_segment(rng, 3, 64, p.r / 64.0);
      SegmentView v = seg.view();
      m.eval_drift(v, drift);
      check_rows(drift, oracle::chemostat_drift(p.a, uptake, p.r, path_of(v)));
    }
  }
}

TEST_CASE("model: unit-noise diffusion rows are gamma transposed") {
  auto p = lv_criterion_params();
  Eigen::MatrixXd gamma(2, 2);
  gamma << 1.2, 0.3, 0.0, 0.9;
  p.noise = NoiseSpec::from_gamma(gamma);
  ModelSpec m = build_zoo_model(p);
  std::vector<double> diff(4);
  Segment seg = Segment::constant(2, 64, p.r / 64.0, std::vector<double>{1.0, 2.0});
  m.eval_diffusion(seg.view(), diff);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(diff[static_cast<std::size_t>(2 * i + j)] == gamma(j, i));
  // row quadratic variation matches the cached sigma diagonal
  for (int i = 0; i < 2; ++i) {
    double q = diff[static_cast<std::size_t>(2 * i)] * diff[static_cast<std::size_t>(2 * i)] +
               diff[static_cast<std::size_t>(2 * i + 1)] * diff[static_cast<std::size_t>(2 * i + 1)];
    CHECK(q == doctest::Approx(m.sigma(i, i)).epsilon(1e-15));
  }
}

TEST_CASE("model: builder rejections") {
  auto p = lv_criterion_params();
  SUBCASE("b_hat at the -b_ii boundary") {
    p.b_hat(0, 0) = -1.0;  // == -b_11
    CHECK_THROWS_AS(build_zoo_model(p), std::invalid_argument);
  }
  SUBCASE("non positive definite sigma") {
    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 1.0, 1.0, 1.0;
    CHECK_THROWS_AS(NoiseSpec::from_sigma(bad), std::invalid_argument);
    p.noise.gamma << 1.0, 1.0, 1.0, 1.0;  // rank deficient
    p.noise.sigma = p.noise.gamma.transpose() * p.noise.gamma;
    CHECK_THROWS_AS(build_zoo_model(p), std::invalid_argument);
  }
  SUBCASE("negative delay") {
    p.r = -1.0;
    CHECK_THROWS_AS(build_zoo_model(p), std::invalid_argument);
  }
  SUBCASE("chemostat a out of range") {
    auto c = chemostat_example_params();
    c.a = 1.0;
    CHECK_THROWS_AS(build_zoo_model(c), std::invalid_argument);
  }
}

TEST_CASE("model: zero interaction decouples competitive LV") {
  auto p = lv_criterion_params();
  p.b = mat2(1.0, 0.0, 0.0, 1.0);
  p.b_hat = mat2(0.0, 0.0, 0.0, 0.0);
  ModelSpec m = build_zoo_model(p);
  std::vector<double> drift(2), drift2(2);
  Segment seg = Segment::constant(2, 64, p.r / 64.0, std::vector<double>{0.7, 0.4});
  m.eval_drift(seg.view(), drift);
  for (int k = 0; k <= 64; ++k) seg.grid(1, k) = 5.0 + 0.1 * k;  // perturb species 2 history
  m.eval_drift(seg.view(), drift2);
  CHECK(drift[0] == drift2[0]);  // species 1 does not read species 2
  CHECK(drift[1] != drift2[1]);
}

TEST_CASE("model: sir per-capita infected drift at a constant segment") {
  auto p = sir_criterion_params();
  p.c1 = 0.3;
  p.c2 = 0.4;
  ModelSpec m = build_zoo_model(p);
  double s_bar = 1.7, i_bar = 0.6;
  Segment seg = Segment::constant(2, 64, p.r / 64.0, std::vector<double>{s_bar, i_bar});
  std::vector<double> drift(2);
  m.eval_drift(seg.view(), drift);
  CHECK(drift[1] == doctest::Approx(-p.b2 + p.c1 * s_bar + p.c2 * s_bar).epsilon(1e-15));
}

TEST_CASE("model: replicator vertex drift difference") {
  auto p = replicator_example_params(2);
  p.total = 3.0;
  ModelSpec m = build_zoo_model(p);
  Segment seg = Segment::constant(2, 64, p.r / 64.0, std::vector<double>{0.0, 3.0});
  std::vector<double> drift(2);
  m.eval_drift(seg.view(), drift);
  std::vector<double> vertex = {0.0, 3.0};
  double f1 = p.payoff(0, vertex), f2 = p.payoff(1, vertex);
  CHECK(drift[0] == doctest::Approx(f1 - f2).epsilon(1e-15));
}

TEST_CASE("model: replicator weighted rows sum to zero on the simplex") {
  auto p = replicator_example_params(3);
  p.total = 2.0;
  ModelSpec m = build_zoo_model(p);
  RngStream rng(5, 5);
  std::vector<double> drift(3), diff(9);
  for (int t = 0; t < 200; ++t) {
    Segment seg(3, 32, p.r / 32.0);
    for (int k = 0; k <= 32; ++k) {
      double u1 = rng.next_uniform(), u2 = rng.next_uniform();
      double lo = std::min(u1, u2), hi = std::max(u1, u2);
      seg.grid(0, k) = p.total * lo;
      seg.grid(1, k) = p.total * (hi - lo);
      seg.grid(2, k) = p.total * (1.0 - hi);
    }
    SegmentView v = seg.view();
    m.eval_drift(v, drift);
    m.eval_diffusion(v, diff);
    double weighted_drift = 0.0;
    for (int i = 0; i < 3; ++i) weighted_drift += v.now(i) * drift[static_cast<std::size_t>(i)];
    CHECK(std::abs(weighted_drift) < 1e-12 * p.total);
    for (int j = 0; j < 3; ++j) {
      double weighted_col = 0.0;
      for (int i = 0; i < 3; ++i) weighted_col += v.now(i) * diff[static_cast<std::size_t>(3 * i + j)];
      CHECK(std::abs(weighted_col) < 1e-12 * p.total);
    }
  }
}

TEST_CASE("model: face restriction clamps and is idempotent") {
  auto p = lv_criterion_params();
  ModelSpec m = build_zoo_model(p);
  std::vector<int> keep = {0};
  ModelSpec face = restrict_to_face(m, keep);
  ModelSpec face2 = restrict_to_face(face, keep);

  RngStream rng(7, 0);
  std::vector<double> d1(2), d2(2), dfull(2);
  for (int t = 0; t < 100; ++t) {
    Segment seg = random_segment(rng, 2, 64, p.r / 64.0);
    SegmentView v = seg.view();
    face.eval_drift(v, d1);
    face2.eval_drift(v, d2);
    CHECK(d1[0] == d2[0]);
    CHECK(d1[1] == d2[1]);
    CHECK(d1[1] == 0.0);  // excluded species row is zeroed
    // surviving species evaluated on the zeroed segment
    Segment zeroed = seg;
    zeroed.zero_species(1);
    m.eval_drift(zeroed.view(), dfull);
    CHECK(d1[0] == dfull[0]);
  }
}

TEST_CASE("model: restriction to the empty face is the absorbing model") {
  ModelSpec m = build_zoo_model(lv_criterion_params());
  ModelSpec dead = restrict_to_face(m, std::vector<int>{});
  Segment seg = Segment::constant(2, 64, 1.0 / 64.0, std::vector<double>{3.0, 4.0});
  std::vector<double> drift(2);
  dead.eval_drift(seg.view(), drift);
  CHECK(drift[0] == 0.0);
  CHECK(drift[1] == 0.0);
}

TEST_CASE("model: chemostat nutrient face keeps the recycling equation") {
  auto p = chemostat_example_params(2);
  ModelSpec m = build_zoo_model(p);
  ModelSpec face = restrict_to_face(m, std::vector<int>{0});
  RngStream rng(11, 2);
  std::vector<double> drift(3);
  for (int t = 0; t < 100; ++t) {
    Segment seg = random_segment(rng, 3, 64, p.r / 64.0);
    SegmentView v = seg.view();
    face.eval_drift(v, drift);
    double s0 = v.now(0), sr = v.at(0, p.r);
    CHECK(rel_err(drift[0], (1.0 - s0 + p.a * sr) / s0) < 1e-12);
    CHECK(drift[1] == 0.0);
    CHECK(drift[2] == 0.0);
  }
}

TEST_CASE("model: component names resolve") {
  ModelSpec sir = build_zoo_model(sir_criterion_params());
  CHECK(sir.component_index("S") == 0);
  CHECK(sir.component_index("I") == 1);
  CHECK_THROWS(sir.component_index("R"));
  ModelSpec chem = build_zoo_model(chemostat_example_params(2));
  CHECK(chem.component_index("S") == 0);
  CHECK(chem.component_index("x2") == 2);
}
