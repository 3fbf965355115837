#include "kolsim/invasion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kolsim {

namespace {

struct ReplicateOutcome {
  bool ok = false;
  bool diverged = false;
  double lambda = 0.0;
  double within_se = 0.0;
  bool collapsed = false;
};

// Fraction of the window the face minimum spends below eps; a collapsing
// face run samples the wrong ergodic measure.
bool face_collapsed(const OccupationStats& stats, double eps = 1e-6, double budget = 0.2) {
  for (std::size_t k = 0; k < stats.eps_grid.size(); ++k)
    if (std::abs(stats.eps_grid[k] - eps) < 1e-15) return stats.face_occupancy[k].mean() > budget;
  return false;
}

void pool_replicates(InvasionEstimate& est, const std::vector<ReplicateOutcome>& outcomes) {
  std::vector<double> values;
  std::vector<double> within;
  for (const auto& o : outcomes) {
    if (o.diverged) {
      ++est.divergent_replicates;
      continue;
    }
    if (!o.ok) continue;
    values.push_back(o.lambda);
    within.push_back(o.within_se);
    est.wrong_ergodic_measure = est.wrong_ergodic_measure || o.collapsed;
  }
  est.per_replicate = values;
  est.replicates = static_cast<int>(values.size());
  if (values.empty()) {
    est.valid = false;
    est.message = "no usable replicates";
    return;
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  est.lambda = mean;
  if (values.size() >= 2) {
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size() - 1);
    est.se = std::sqrt(var / static_cast<double>(values.size()));
    // dispersion across replicates far beyond the within-run error suggests
    // the face supports more than one ergodic measure
    std::vector<double> w = within;
    std::sort(w.begin(), w.end());
    double med = w[w.size() / 2];
    if (med > 0.0 && std::sqrt(var) > 5.0 * med) est.multimodal_suspected = true;
  } else {
    est.se = within.front();
  }
  if (est.wrong_ergodic_measure) est.message = "face run collapsed toward a sub-face";
}

}  // namespace

InvasionEstimate estimate_lambda(const ModelSpec& model, std::span<const int> face, int species,
                                 const SimConfig& config, const Segment* initial) {
  InvasionEstimate est;
  est.face.assign(face.begin(), face.end());
  std::sort(est.face.begin(), est.face.end());
  est.species = species;
  est.method = "time-average";
  est.horizon = config.horizon;
  if (species < 0 || species >= model.n) throw std::invalid_argument("estimate_lambda: bad species");
  for (int i : face)
    if (i == species) throw std::invalid_argument("estimate_lambda: species must be off-face");
  if (!model.kolmogorov[static_cast<std::size_t>(species)])
    throw std::invalid_argument(
        "estimate_lambda: species has no per-capita form on the face (non-Kolmogorov component)");

  Segment init = initial ? *initial
                         : make_initial_segment(model, config,
                                                default_face_state(model, face), face);

  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(config.replicates));
  parallel_for(config.replicates, config.threads, [&](int k) {
    ReplicateOutcome& out = outcomes[static_cast<std::size_t>(k)];
    Trajectory traj = integrate(model, init, config, face, k);
    if (traj.status != RunStatus::ok) {
      out.diverged = true;
      return;
    }
    if (!traj.integrand_valid[static_cast<std::size_t>(species)]) return;
    std::size_t first = traj.first_post_burn_in();
    std::size_t last = traj.samples() - 1;
    if (first >= last) return;
    double span = traj.times[last] - traj.times[first];
    out.lambda = (traj.growth_at(last, species) - traj.growth_at(first, species)) / span;
    OccupationStats stats = accumulate(model, traj, config);
    auto se = stats.integrand[static_cast<std::size_t>(species)].standard_error();
    out.within_se = se.value_or(0.0);
    out.collapsed = !face.empty() && face_collapsed(stats);
    out.ok = true;
  });
  pool_replicates(est, outcomes);
  return est;
}

namespace {

std::vector<int> sorted(std::span<const int> face) {
  std::vector<int> f(face.begin(), face.end());
  std::sort(f.begin(), f.end());
  return f;
}

std::optional<double> lv_closed_form(const Eigen::VectorXd& a, const Eigen::MatrixXd& b,
                                     const Eigen::MatrixXd& bh, const NoiseSpec& noise,
                                     const std::vector<int>& face, int i) {
  if (face.empty()) return a(i) - noise.sigma(i, i) / 2.0;
  if (face.size() == 1) {
    int j = face[0];
    // the single-species face measure has mean (a_j - s_jj/2)/(b_jj + bh_jj)
    return a(i) - noise.sigma(i, i) / 2.0 -
           (a(j) - noise.sigma(j, j) / 2.0) * (b(i, j) + bh(i, j)) / (b(j, j) + bh(j, j));
  }
  return std::nullopt;
}

}  // namespace

std::optional<double> closed_form_lambda(const ModelSpec& model, std::span<const int> face_in,
                                         int species) {
  std::vector<int> face = sorted(face_in);
  for (int i : face)
    if (i == species) return std::nullopt;

  if (const auto* lv = std::get_if<CompetitiveLVParams>(&model.zoo))
    return lv_closed_form(lv->a, lv->b, lv->b_hat, model.noise, face, species);

  if (const auto* pp = std::get_if<PredatorPreyParams>(&model.zoo)) {
    if (face.empty()) {
      if (species == 0) return pp->a(0) - model.sigma(0, 0) / 2.0;
      return -pp->a(species) - model.sigma(species, species) / 2.0;
    }
    if (face == std::vector<int>{0} && species >= 1) {
      // prey face: predators see b_i1 X_1(t) - bh_i1 X_1(t-r)
      return -pp->a(species) - model.sigma(species, species) / 2.0 +
             (pp->a(0) - model.sigma(0, 0) / 2.0) * (pp->b(species, 0) - pp->b_hat(species, 0)) /
                 (pp->b(0, 0) + pp->b_hat(0, 0));
    }
    return std::nullopt;
  }

  if (const auto* rep = std::get_if<ReplicatorParams>(&model.zoo)) {
    if (face.size() != 1) return std::nullopt;
    int k = face[0];
    std::vector<double> vertex(static_cast<std::size_t>(model.n), 0.0);
    vertex[static_cast<std::size_t>(k)] = rep->total;
    double fi = rep->payoff(species, vertex);
    double fk = rep->payoff(k, vertex);
    double si = rep->sigma_strength(species), sk = rep->sigma_strength(k);
    return fi - fk - (si * si + sk * sk) / 2.0;
  }

  if (const auto* sir = std::get_if<SirParams>(&model.zoo)) {
    if (species != 1) return std::nullopt;  // only the infected compartment has a rate
    if (face.empty()) return -sir->b2 - model.sigma(1, 1) / 2.0;
    if (face == std::vector<int>{0} && sir->linear())
      return -sir->b2 - model.sigma(1, 1) / 2.0 + sir->a * (sir->c1 + sir->c2) / sir->b1;
    return std::nullopt;
  }

  // chemostat rates need the uptake integral against the nutrient face
  // measure, which has no closed form
  return std::nullopt;
}

InvasionEstimate lyapunov_exponent(const ModelSpec& model, std::span<const int> face, int species,
                                   const SimConfig& config, double invader_scale,
                                   double invader_cap) {
  InvasionEstimate est;
  est.face.assign(face.begin(), face.end());
  std::sort(est.face.begin(), est.face.end());
  est.species = species;
  est.method = "lyapunov-exponent";
  est.horizon = config.horizon;
  if (!(invader_scale > 0.0)) throw std::invalid_argument("lyapunov_exponent: bad invader scale");
  for (int i : face)
    if (i == species) throw std::invalid_argument("lyapunov_exponent: species must be off-face");
  if (!model.kolmogorov[static_cast<std::size_t>(species)])
    throw std::invalid_argument("lyapunov_exponent: species has no per-capita form");

  std::vector<int> joint(face.begin(), face.end());
  joint.push_back(species);
  std::sort(joint.begin(), joint.end());
  double log_cap = std::log(invader_cap);

  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(config.replicates));
  std::vector<unsigned char> capped(static_cast<std::size_t>(config.replicates), 0);
  parallel_for(config.replicates, config.threads, [&](int k) {
    ReplicateOutcome& out = outcomes[static_cast<std::size_t>(k)];
    // face species relax into their quasi-stationary window first
    Segment start;
    if (!face.empty()) {
      SimConfig warm = config;
      warm.horizon = std::max(config.burn_in_time(), 10.0 * config.resolved_dt(model.r));
      warm.record_stride = 1 << 20;  // only endpoints are needed
      Trajectory warm_run = integrate(model, make_initial_segment(model, warm,
                                                                  default_face_state(model, face),
                                                                  face),
                                      warm, face, k);
      if (warm_run.status != RunStatus::ok) {
        out.diverged = true;
        return;
      }
      start = warm_run.final_segment;
    } else {
      start = make_initial_segment(model, config, std::vector<double>(static_cast<std::size_t>(model.n), 0.0),
                                   face);
    }
    for (int c = 0; c <= start.steps(); ++c) start.grid(species, c) = invader_scale;

    Trajectory traj = integrate(model, start, config, joint, k + (1 << 20));
    if (traj.status != RunStatus::ok) {
      out.diverged = true;
      return;
    }
    double ln0 = std::log(invader_scale);
    std::size_t last = traj.samples() - 1;
    out.lambda = (traj.log_state(last, species) - ln0) / traj.times[last];
    for (std::size_t s = 0; s <= last; ++s)
      if (traj.log_state(s, species) > log_cap) {
        capped[static_cast<std::size_t>(k)] = 1;
        break;
      }
    out.within_se = 0.0;
    out.ok = true;
  });
  pool_replicates(est, outcomes);
  for (auto c : capped) est.invader_capped = est.invader_capped || c != 0;
  if (est.invader_capped)
    est.message = "invader exceeded the macroscopic cap; estimate biased, prefer the face time-average";
  return est;
}

}  // namespace kolsim
