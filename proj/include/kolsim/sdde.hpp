#ifndef KOLSIM_SDDE_HPP
#define KOLSIM_SDDE_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "kolsim/model.hpp"
#include "kolsim/rng.hpp"
#include "kolsim/segment.hpp"

namespace kolsim {

struct SimConfig {
  double dt = 0.0;  // <= 0 resolves to r/64 (r > 0) or 1/128
  double horizon = 1000.0;
  double burn_in = 0.2;  // fraction of the horizon discarded for statistics
  std::uint64_t seed = 0;
  int replicates = 1;
  double extinction_floor_log = -23.0;  // ln X_i below this counts as absorbed
  int record_stride = 1;
  double divergence_ceiling_log = 50.0;
  int threads = 1;

  double resolved_dt(double r) const {
    if (dt > 0.0) return dt;
    return r > 0.0 ? r / 64.0 : 1.0 / 128.0;
  }
  double burn_in_time() const { return burn_in * horizon; }
  void validate(double r) const;
};

enum class RunStatus { ok, diverged, nan_coefficient };

// One realized path: recorded states, log-states and the cumulative
// per-capita growth integrals  int_0^t (F_i - 1/2 sum_j G_ij^2) ds,
// accumulated with exactly the sums the stepping used.
struct Trajectory {
  int n = 0;
  double dt = 0.0;
  double horizon = 0.0;
  double burn_in_time = 0.0;
  int history_steps = 0;  // N_r

  std::vector<unsigned char> on_face;
  std::vector<unsigned char> integrand_valid;

  std::vector<double> times;
  std::vector<double> states;      // sample-major, n per sample
  std::vector<double> log_states;  // -inf for face-zero species
  std::vector<double> growth;      // cumulative integrals, sample-major

  RunStatus status = RunStatus::ok;
  int fault_species = -1;
  double fault_time = 0.0;
  Segment fault_segment;

  double max_simplex_defect = 0.0;  // pre-renormalization, relative
  Segment final_segment;

  std::size_t samples() const { return times.size(); }
  double state(std::size_t s, int i) const { return states[s * static_cast<std::size_t>(n) + i]; }
  double log_state(std::size_t s, int i) const {
    return log_states[s * static_cast<std::size_t>(n) + i];
  }
  double growth_at(std::size_t s, int i) const { return growth[s * static_cast<std::size_t>(n) + i]; }
  // First recorded sample with time >= burn-in.
  std::size_t first_post_burn_in() const;
};

// Supplies the standard normal vector for a given step (testing hook: noise
// tables, refinement couplings).  The default draws from RngStream(seed,
// replicate).
using NoiseFn = std::function<void(std::int64_t step, std::span<double> z)>;

// Euler-Maruyama in logarithmic coordinates over a ring-buffer history.
// Off-face species stay bitwise zero; on-face species stay strictly positive.
// Deterministic given (config.seed, replicate).
Trajectory integrate(const ModelSpec& model, const Segment& initial, const SimConfig& config,
                     std::span<const int> face, int replicate = 0,
                     const NoiseFn& noise_override = nullptr);

// Initial history grid matching (model, config): constant at x, face-clamped.
Segment make_initial_segment(const ModelSpec& model, const SimConfig& config,
                             std::span<const double> x, std::span<const int> face);

std::vector<int> full_face(const ModelSpec& model);

// Runs fn(k) for k = 0..count-1 on up to `threads` workers.  Results must be
// written to per-index slots; merging in index order keeps runs deterministic.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

}  // namespace kolsim

#endif
