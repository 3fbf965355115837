#include "kolsim/sdde.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <thread>

namespace kolsim {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void SimConfig::validate(double r) const {
  double d = resolved_dt(r);
  if (!(d > 0.0)) throw std::invalid_argument("sim: dt must be positive");
  if (r > 0.0 && d > r) throw std::invalid_argument("sim: dt must not exceed the delay r");
  if (!(horizon > 0.0)) throw std::invalid_argument("sim: horizon must be positive");
  if (burn_in < 0.0 || burn_in >= 1.0) throw std::invalid_argument("sim: burn_in must be in [0,1)");
  if (replicates < 1) throw std::invalid_argument("sim: replicates must be >= 1");
  if (!(extinction_floor_log < 0.0)) throw std::invalid_argument("sim: extinction floor must be < 0");
  if (record_stride < 1) throw std::invalid_argument("sim: record_stride must be >= 1");
  if (threads < 1) throw std::invalid_argument("sim: threads must be >= 1");
}

std::size_t Trajectory::first_post_burn_in() const {
  for (std::size_t s = 0; s < times.size(); ++s)
    if (times[s] >= burn_in_time - 1e-12 * horizon) return s;
  return times.size();
}

std::vector<int> full_face(const ModelSpec& model) {
  std::vector<int> face;
  face.reserve(static_cast<std::size_t>(model.n));
  for (int i = 0; i < model.n; ++i)
    if (model.on_restricted_face(i)) face.push_back(i);
  return face;
}

Segment make_initial_segment(const ModelSpec& model, const SimConfig& config,
                             std::span<const double> x, std::span<const int> face) {
  double dt = config.resolved_dt(model.r);
  int steps = model.r > 0.0 ? static_cast<int>(std::ceil(model.r / dt - 1e-9)) : 0;
  std::vector<double> clamped(x.begin(), x.end());
  std::vector<unsigned char> on(static_cast<std::size_t>(model.n), 0);
  for (int i : face) on[static_cast<std::size_t>(i)] = 1;
  for (int i = 0; i < model.n; ++i)
    if (!on[static_cast<std::size_t>(i)]) clamped[static_cast<std::size_t>(i)] = 0.0;
  return Segment::constant(model.n, steps, dt, clamped);
}

Trajectory integrate(const ModelSpec& model, const Segment& initial, const SimConfig& config,
                     std::span<const int> face, int replicate, const NoiseFn& noise_override) {
  config.validate(model.r);
  const int n = model.n;
  const int m = model.drivers;
  const double dt = config.resolved_dt(model.r);
  if (initial.species() != n) throw std::invalid_argument("integrate: initial segment dimension");
  if (initial.dt() != dt && initial.steps() > 0)
    throw std::invalid_argument("integrate: initial segment grid step mismatch");
  for (const auto& kernel : model.kernels)
    if (kernel.max_lag() > initial.max_lag() + 1e-12)
      throw std::invalid_argument("integrate: initial segment shorter than the largest lag");

  const int cols = initial.steps() + 1;
  const std::int64_t total_steps = std::llround(config.horizon / dt);

  Trajectory traj;
  traj.n = n;
  traj.dt = dt;
  traj.horizon = config.horizon;
  traj.burn_in_time = config.burn_in_time();
  traj.history_steps = initial.steps();
  traj.on_face.assign(static_cast<std::size_t>(n), 0);
  for (int i : face) {
    if (i < 0 || i >= n) throw std::invalid_argument("integrate: face species out of range");
    if (!model.on_restricted_face(i))
      throw std::invalid_argument("integrate: face species clamped by the model restriction");
    traj.on_face[static_cast<std::size_t>(i)] = 1;
  }
  traj.integrand_valid.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i)
    traj.integrand_valid[static_cast<std::size_t>(i)] =
        traj.on_face[static_cast<std::size_t>(i)] || model.kolmogorov[static_cast<std::size_t>(i)];

  // Ring of the last cols columns; head points at "now".
  std::vector<double> ring = initial.raw();
  int head = cols - 1;

  std::vector<double> x(static_cast<std::size_t>(n)), lnx(static_cast<std::size_t>(n), kNegInf);
  for (int i = 0; i < n; ++i) {
    double v = initial.now(i);
    if (traj.on_face[static_cast<std::size_t>(i)]) {
      if (!(v > 0.0))
        throw std::invalid_argument("integrate: face species must start strictly positive");
      x[static_cast<std::size_t>(i)] = v;
      lnx[static_cast<std::size_t>(i)] = std::log(v);
    } else {
      x[static_cast<std::size_t>(i)] = 0.0;
      // clamp the ring history of off-face species to exact zero
      for (int k = 0; k < cols; ++k) ring[static_cast<std::size_t>(k) * n + i] = 0.0;
    }
  }

  std::vector<double> drift(static_cast<std::size_t>(n));
  std::vector<double> diff(static_cast<std::size_t>(n) * m);
  std::vector<double> z(static_cast<std::size_t>(m));
  std::vector<double> growth_acc(static_cast<std::size_t>(n), 0.0);
  std::vector<double> integrand(static_cast<std::size_t>(n), 0.0);

  RngStream stream(config.seed, static_cast<std::uint64_t>(replicate));
  const double sqrt_dt = std::sqrt(dt);

  const std::size_t expected =
      static_cast<std::size_t>(total_steps / config.record_stride + 2) * static_cast<std::size_t>(n);
  traj.times.reserve(expected / static_cast<std::size_t>(n));
  traj.states.reserve(expected);
  traj.log_states.reserve(expected);
  traj.growth.reserve(expected);

  auto record = [&](double t) {
    traj.times.push_back(t);
    traj.states.insert(traj.states.end(), x.begin(), x.end());
    traj.log_states.insert(traj.log_states.end(), lnx.begin(), lnx.end());
    traj.growth.insert(traj.growth.end(), growth_acc.begin(), growth_acc.end());
  };
  auto snapshot_segment = [&]() {
    Segment s(n, cols - 1, dt);
    for (int k = 0; k < cols; ++k) {
      int c = head - (cols - 1 - k);
      if (c < 0) c += cols;
      for (int i = 0; i < n; ++i) s.grid(i, k) = ring[static_cast<std::size_t>(c) * n + i];
    }
    return s;
  };

  record(0.0);

  for (std::int64_t step = 1; step <= total_steps; ++step) {
    SegmentView view(ring.data(), n, cols, head, dt);
    model.eval_drift(view, drift);
    if (!model.constant_diffusion || step == 1) model.eval_diffusion(view, diff);

    bool fault = false;
    for (int i = 0; i < n && !fault; ++i) {
      if (!traj.integrand_valid[static_cast<std::size_t>(i)]) continue;
      double g2 = 0.0;
      for (int j = 0; j < m; ++j) {
        double g = diff[static_cast<std::size_t>(i) * m + j];
        g2 += g * g;
      }
      double q = drift[static_cast<std::size_t>(i)] - 0.5 * g2;
      integrand[static_cast<std::size_t>(i)] = q;
      if (!std::isfinite(q)) {
        if (traj.on_face[static_cast<std::size_t>(i)]) {
          traj.status = RunStatus::nan_coefficient;
          traj.fault_species = i;
          traj.fault_time = (step - 1) * dt;
          traj.fault_segment = snapshot_segment();
          fault = true;
        } else {
          traj.integrand_valid[static_cast<std::size_t>(i)] = 0;  // sticky
        }
      }
    }
    if (fault) break;

    if (noise_override)
      noise_override(step, z);
    else
      for (int j = 0; j < m; ++j) z[static_cast<std::size_t>(j)] = stream.next_gaussian();

    bool diverged = false;
    for (int i = 0; i < n; ++i) {
      if (traj.integrand_valid[static_cast<std::size_t>(i)])
        growth_acc[static_cast<std::size_t>(i)] += integrand[static_cast<std::size_t>(i)] * dt;
      if (!traj.on_face[static_cast<std::size_t>(i)]) continue;
      double noise = 0.0;
      for (int j = 0; j < m; ++j)
        noise += diff[static_cast<std::size_t>(i) * m + j] * z[static_cast<std::size_t>(j)];
      lnx[static_cast<std::size_t>(i)] +=
          integrand[static_cast<std::size_t>(i)] * dt + noise * sqrt_dt;
      if (lnx[static_cast<std::size_t>(i)] > config.divergence_ceiling_log) {
        traj.status = RunStatus::diverged;
        traj.fault_species = i;
        traj.fault_time = step * dt;
        diverged = true;
      }
      x[static_cast<std::size_t>(i)] = std::exp(lnx[static_cast<std::size_t>(i)]);
    }
    if (diverged) {
      traj.fault_segment = snapshot_segment();
      break;
    }

    if (model.simplex_total > 0.0) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) sum += x[static_cast<std::size_t>(i)];
      if (sum > 0.0) {
        double defect = std::abs(sum / model.simplex_total - 1.0);
        if (defect > traj.max_simplex_defect) traj.max_simplex_defect = defect;
        double correction = std::log(model.simplex_total) - std::log(sum);
        for (int i = 0; i < n; ++i) {
          if (!traj.on_face[static_cast<std::size_t>(i)]) continue;
          lnx[static_cast<std::size_t>(i)] += correction;
          x[static_cast<std::size_t>(i)] = std::exp(lnx[static_cast<std::size_t>(i)]);
        }
      }
    }

    head = head + 1 == cols ? 0 : head + 1;
    std::memcpy(ring.data() + static_cast<std::size_t>(head) * n, x.data(),
                static_cast<std::size_t>(n) * sizeof(double));

    if (step % config.record_stride == 0 || step == total_steps) record(step * dt);
  }

  traj.final_segment = snapshot_segment();
  return traj;
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (int k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<int> next{0};
  int workers = threads < count ? threads : count;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (int k = next.fetch_add(1); k < count; k = next.fetch_add(1)) fn(k);
    });
  for (auto& t : pool) t.join();
}

}  // namespace kolsim
