#include "kolsim/classify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace kolsim {

namespace {

// Sign oracle over closed forms and Monte Carlo estimates with the 4-SE
// inconclusiveness rule.
class LambdaOracle {
 public:
  LambdaOracle(const ModelSpec& model, const SimConfig& config, const ClassifyOptions& opts,
               RegimeReport& report)
      : model_(model), config_(config), opts_(opts), report_(report) {}

  LambdaEntry get(std::vector<int> face, int species) {
    std::sort(face.begin(), face.end());
    auto key = std::make_pair(face, species);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;

    LambdaEntry entry;
    entry.face = face;
    entry.species = species;
    std::optional<double> cf = closed_form_lambda(model_, face, species);
    if (opts_.use_closed_forms && cf.has_value()) {
      entry.value = *cf;
      entry.se = 0.0;
      entry.method = "closed-form";
    } else {
      InvasionEstimate est = estimate_lambda(model_, face, species, config_);
      entry.value = est.lambda;
      entry.se = est.se;
      entry.method = "time-average";
      entry.valid = est.valid && !est.wrong_ergodic_measure;
    }
    cache_.emplace(key, entry);
    report_.lambda_table.push_back(entry);
    if (cf.has_value() && !opts_.use_closed_forms) {
      // keep the analytic value visible next to the estimate
      LambdaEntry ref = entry;
      ref.value = *cf;
      ref.se = 0.0;
      ref.method = "closed-form";
      report_.lambda_table.push_back(ref);
    }
    return entry;
  }

  // +1 / -1, or 0 when the 4-SE interval contains zero (or the estimate is
  // unusable).
  int sign(const std::vector<int>& face, int species) {
    LambdaEntry e = get(face, species);
    int s = 0;
    if (e.valid && std::abs(e.value) > 4.0 * e.se && e.value != 0.0) s = e.value > 0.0 ? 1 : -1;
    BranchRecord rec;
    rec.face = e.face;
    rec.species = e.species;
    rec.value = e.value;
    rec.se = e.se;
    rec.method = e.method;
    rec.sign = s;
    report_.branches.push_back(rec);
    return s;
  }

 private:
  const ModelSpec& model_;
  const SimConfig& config_;
  const ClassifyOptions& opts_;
  RegimeReport& report_;
  std::map<std::pair<std::vector<int>, int>, LambdaEntry> cache_;
};

std::string classify_competitive_lv(LambdaOracle& lam) {
  int s1 = lam.sign({}, 0);
  int s2 = lam.sign({}, 1);
  if (s1 == 0 || s2 == 0) return "inconclusive";
  if (s1 < 0 && s2 < 0) return "both-extinct";
  if (s1 > 0 && s2 < 0) {
    int s21 = lam.sign({0}, 1);
    return s21 < 0 ? "1-wins" : "inconclusive";
  }
  if (s1 < 0 && s2 > 0) {
    int s12 = lam.sign({1}, 0);
    return s12 < 0 ? "2-wins" : "inconclusive";
  }
  int s21 = lam.sign({0}, 1);
  int s12 = lam.sign({1}, 0);
  if (s21 == 0 || s12 == 0) return "inconclusive";
  if (s21 < 0 && s12 < 0) return "bistable";
  if (s21 < 0 && s12 > 0) return "1-wins";
  if (s21 > 0 && s12 < 0) return "2-wins";
  return "coexistence";
}

std::string classify_predator_prey(LambdaOracle& lam) {
  int s1 = lam.sign({}, 0);
  if (s1 == 0) return "inconclusive";
  if (s1 < 0) return "all-extinct";
  int s2 = lam.sign({0}, 1);
  int s3 = lam.sign({0}, 2);
  if (s2 == 0 || s3 == 0) return "inconclusive";
  if (s2 < 0 && s3 < 0) return "predators-extinct";
  if (s2 > 0 && s3 < 0) {
    int t3 = lam.sign({0, 1}, 2);
    return t3 < 0 ? "predator-3-extinct" : "inconclusive";
  }
  if (s2 < 0 && s3 > 0) {
    int t2 = lam.sign({0, 2}, 1);
    return t2 < 0 ? "predator-2-extinct" : "inconclusive";
  }
  int t3 = lam.sign({0, 1}, 2);
  int t2 = lam.sign({0, 2}, 1);
  if (t2 == 0 || t3 == 0) return "inconclusive";
  if (t3 < 0 && t2 > 0) return "predator-3-extinct";
  if (t2 < 0 && t3 > 0) return "predator-2-extinct";
  if (t2 < 0 && t3 < 0) return "predator-bistable";
  return "coexistence";
}

std::string classify_replicator(LambdaOracle& lam, const ModelSpec& model) {
  int n = model.n;
  if (n == 2) {
    int s1 = lam.sign({1}, 0);  // invasion of strategy 1 at the vertex of 2
    int s2 = lam.sign({0}, 1);
    if (s1 == 0 || s2 == 0) return "inconclusive";
    if (s1 < 0 && s2 > 0) return "2-wins";
    if (s1 > 0 && s2 < 0) return "1-wins";
    if (s1 < 0 && s2 < 0) return "bistable";
    return "coexistence";
  }
  if (n != 3) return "unclassified";

  // vertex invadability: max over invaders at each vertex
  auto vertex_unstable = [&](int k) -> int {
    int best = -1;
    for (int i = 0; i < 3; ++i) {
      if (i == k) continue;
      int s = lam.sign({k}, i);
      if (s == 0) return 0;
      best = std::max(best, s);
    }
    return best;
  };
  int u1 = vertex_unstable(0), u2 = vertex_unstable(1), u3 = vertex_unstable(2);
  if (u1 == 0 || u2 == 0 || u3 == 0) return "inconclusive";

  std::vector<int> extinct;
  for (int l = 0; l < 3; ++l) {
    int ul = l == 0 ? u1 : (l == 1 ? u2 : u3);
    if (ul < 0) {  // every invader dies at this vertex
      extinct.push_back(l);
      continue;
    }
    if (u1 > 0 && u2 > 0 && u3 > 0) {
      std::vector<int> edge;
      for (int i = 0; i < 3; ++i)
        if (i != l) edge.push_back(i);
      int sl = lam.sign(edge, l);
      if (sl == 0) return "inconclusive";
      if (sl < 0) extinct.push_back(l);
    }
  }
  if (extinct.empty()) return "none-extinct-detected";
  std::string label;
  for (int l : extinct) label += (label.empty() ? "" : "+") + ("strategy-" + model.names[static_cast<std::size_t>(l)] + "-extinct");
  return label;
}

std::string classify_sir(LambdaOracle& lam) {
  int s = lam.sign({0}, 1);
  if (s == 0) return "inconclusive";
  return s < 0 ? "disease-extinct" : "endemic";
}

std::string classify_chemostat(LambdaOracle& lam, const ModelSpec& model) {
  int nc = model.n - 1;
  if (nc == 1) {
    int s = lam.sign({0}, 1);
    if (s == 0) return "inconclusive";
    return s < 0 ? "washout" : "persistent";
  }
  if (nc != 2) return "unclassified";
  int s1 = lam.sign({0}, 1);
  int s2 = lam.sign({0}, 2);
  if (s1 == 0 || s2 == 0) return "inconclusive";
  if (s1 < 0 && s2 < 0) return "both-washout";
  if (s1 > 0 && s2 < 0) {
    int t2 = lam.sign({0, 1}, 2);
    if (t2 == 0) return "inconclusive";
    return t2 < 0 ? "consumer-2-washout" : "coexistence";
  }
  if (s1 < 0 && s2 > 0) {
    int t1 = lam.sign({0, 2}, 1);
    if (t1 == 0) return "inconclusive";
    return t1 < 0 ? "consumer-1-washout" : "coexistence";
  }
  int t2 = lam.sign({0, 1}, 2);
  int t1 = lam.sign({0, 2}, 1);
  if (t1 == 0 || t2 == 0) return "inconclusive";
  if (t1 > 0 && t2 > 0) return "coexistence";
  if (t1 > 0 && t2 < 0) return "consumer-2-washout";
  if (t1 < 0 && t2 > 0) return "consumer-1-washout";
  return "washout-bistable";
}

double wilson_bound(double count, double total, bool upper) {
  if (total <= 0.0) return 0.0;
  const double z = 1.959963984540054;  // 95%
  double p = count / total;
  double z2 = z * z;
  double denom = 1.0 + z2 / total;
  double center = p + z2 / (2.0 * total);
  double half = z * std::sqrt(p * (1.0 - p) / total + z2 / (4.0 * total * total));
  double v = (center + (upper ? half : -half)) / denom;
  return std::clamp(v, 0.0, 1.0);
}

}  // namespace

std::optional<std::vector<int>> detect_absorbed_face(const Trajectory& traj, double eps_log,
                                                     double occupancy_threshold) {
  if (traj.samples() == 0) return std::nullopt;
  std::size_t last = traj.samples() - 1;
  double half_time = traj.times[last] / 2.0;
  std::size_t half_start = last;
  for (std::size_t s = 0; s <= last; ++s)
    if (traj.times[s] >= half_time) {
      half_start = s;
      break;
    }
  std::vector<int> survivors;
  for (int i = 0; i < traj.n; ++i) {
    bool terminal_low = traj.log_state(last, i) < eps_log;
    std::size_t below = 0, total = 0;
    for (std::size_t s = half_start; s <= last; ++s) {
      ++total;
      if (traj.log_state(s, i) < eps_log / 2.0) ++below;
    }
    bool occupied = total > 0 && static_cast<double>(below) / static_cast<double>(total) > occupancy_threshold;
    if (terminal_low != occupied) return std::nullopt;  // ambiguous species
    if (!terminal_low) survivors.push_back(i);
  }
  return survivors;
}

void estimate_basin_probabilities(const ModelSpec& model, const Segment& initial,
                                  const SimConfig& config, const ClassifyOptions& opts,
                                  RegimeReport& report) {
  for (int i = 0; i < model.n; ++i)
    if (!(initial.now(i) > 0.0))
      throw std::invalid_argument("basin estimation: initial segment must be strictly interior");
  std::vector<int> all = full_face(model);

  std::vector<FaceOutcome> outcomes(static_cast<std::size_t>(config.replicates));
  parallel_for(config.replicates, config.threads, [&](int k) {
    FaceOutcome& out = outcomes[static_cast<std::size_t>(k)];
    out.replicate = k;
    Trajectory traj = integrate(model, initial, config, all, k);
    if (traj.status != RunStatus::ok) return;  // unassigned
    out.face = detect_absorbed_face(traj, config.extinction_floor_log, opts.occupancy_threshold);
    std::size_t last = traj.samples() - 1;
    out.terminal_log.resize(static_cast<std::size_t>(model.n));
    out.empirical_rate.resize(static_cast<std::size_t>(model.n));
    for (int i = 0; i < model.n; ++i) {
      out.terminal_log[static_cast<std::size_t>(i)] = traj.log_state(last, i);
      out.empirical_rate[static_cast<std::size_t>(i)] = traj.log_state(last, i) / traj.times[last];
    }
  });

  // A run with no extinct species has not met any absorption criterion by
  // the horizon; it stays in the unassigned bucket.
  std::map<std::vector<int>, std::vector<const FaceOutcome*>> by_face;
  int assigned = 0;
  for (const auto& out : outcomes) {
    if (out.face.has_value() && *out.face != all) {
      by_face[*out.face].push_back(&out);
      ++assigned;
    }
  }
  report.outcomes = outcomes;
  report.total_runs = config.replicates;
  report.assigned = assigned;
  report.unassigned = config.replicates - assigned;
  report.horizon_too_short =
      report.unassigned > 0 && 5 * report.unassigned > config.replicates;  // > 20%

  report.basins.clear();
  for (const auto& [face, runs] : by_face) {
    BasinEstimate basin;
    basin.face = face;
    basin.count = static_cast<int>(runs.size());
    basin.probability = static_cast<double>(basin.count) / config.replicates;
    basin.wilson_low = wilson_bound(basin.count, config.replicates, false);
    basin.wilson_high = wilson_bound(basin.count, config.replicates, true);
    std::vector<unsigned char> on(static_cast<std::size_t>(model.n), 0);
    for (int i : face) on[static_cast<std::size_t>(i)] = 1;
    for (int i = 0; i < model.n; ++i) {
      if (on[static_cast<std::size_t>(i)]) continue;
      double mean = 0.0;
      for (const auto* run : runs) mean += run->empirical_rate[static_cast<std::size_t>(i)];
      mean /= static_cast<double>(runs.size());
      double se = 0.0;
      if (runs.size() >= 2) {
        for (const auto* run : runs) {
          double d = run->empirical_rate[static_cast<std::size_t>(i)] - mean;
          se += d * d;
        }
        se = std::sqrt(se / static_cast<double>(runs.size() - 1) / static_cast<double>(runs.size()));
      }
      basin.mean_rate[i] = mean;
      basin.rate_se[i] = se;
      auto cf = closed_form_lambda(model, face, i);
      if (cf.has_value()) {
        basin.closed_form_rate[i] = *cf;
        double tol = std::max(4.0 * se, 0.1 * std::abs(*cf));
        if (std::abs(mean - *cf) > tol) basin.rate_check_passed = false;
      }
    }
    report.basins.push_back(std::move(basin));
  }
}

RegimeReport classify_regime(const ModelSpec& model, const SimConfig& config,
                             const ClassifyOptions& opts) {
  RegimeReport report;
  report.model_name = model.name;
  LambdaOracle lam(model, config, opts, report);

  if (std::holds_alternative<CompetitiveLVParams>(model.zoo))
    report.regime = classify_competitive_lv(lam);
  else if (std::holds_alternative<PredatorPreyParams>(model.zoo))
    report.regime = classify_predator_prey(lam);
  else if (std::holds_alternative<ReplicatorParams>(model.zoo))
    report.regime = classify_replicator(lam, model);
  else if (std::holds_alternative<SirParams>(model.zoo))
    report.regime = classify_sir(lam);
  else if (std::holds_alternative<ChemostatParams>(model.zoo))
    report.regime = classify_chemostat(lam, model);
  else {
    // user-defined models get a rate table but no named regime: report the
    // growth rates at total extinction for every per-capita component
    report.regime = "unclassified";
    for (int i = 0; i < model.n; ++i)
      if (model.kolmogorov[static_cast<std::size_t>(i)]) lam.get({}, i);
  }

  if (opts.run_basins) {
    std::vector<double> start = opts.initial;
    if (start.empty()) start = default_face_state(model, full_face(model));
    Segment initial = make_initial_segment(model, config, start, full_face(model));
    estimate_basin_probabilities(model, initial, config, opts, report);
  }
  return report;
}

}  // namespace kolsim
