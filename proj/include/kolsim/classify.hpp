#ifndef KOLSIM_CLASSIFY_HPP
#define KOLSIM_CLASSIFY_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kolsim/invasion.hpp"
#include "kolsim/model.hpp"
#include "kolsim/sdde.hpp"

namespace kolsim {

struct LambdaEntry {
  std::vector<int> face;
  int species = -1;
  double value = 0.0;
  double se = 0.0;
  std::string method;
  bool valid = true;
};

// One consulted predicate of the decision tree: which rate was tested, the
// sign it resolved to (+1, -1, or 0 when its 4-SE interval straddles zero).
struct BranchRecord {
  std::vector<int> face;
  int species = -1;
  double value = 0.0;
  double se = 0.0;
  std::string method;
  int sign = 0;
};

struct FaceOutcome {
  int replicate = -1;
  std::optional<std::vector<int>> face;   // surviving species; nullopt = unassigned
  std::vector<double> terminal_log;       // ln X_i(T)
  std::vector<double> empirical_rate;     // ln X_i(T)/T (extinct species)
};

struct BasinEstimate {
  std::vector<int> face;
  int count = 0;
  double probability = 0.0;
  double wilson_low = 0.0, wilson_high = 0.0;
  // per extinct species: mean empirical rate, its SE, closed-form rate if any
  std::map<int, double> mean_rate;
  std::map<int, double> rate_se;
  std::map<int, double> closed_form_rate;
  bool rate_check_passed = true;
};

struct RegimeReport {
  std::string model_name;
  std::string regime = "inconclusive";
  std::vector<LambdaEntry> lambda_table;
  std::vector<BranchRecord> branches;

  std::vector<BasinEstimate> basins;
  std::vector<FaceOutcome> outcomes;
  int assigned = 0;
  int unassigned = 0;
  int total_runs = 0;
  bool horizon_too_short = false;  // > 20% of runs unassigned
};

struct ClassifyOptions {
  bool use_closed_forms = true;   // fall back to Monte Carlo where unavailable
  bool run_basins = false;
  std::vector<double> initial;    // interior start for basin runs; empty = default
  double occupancy_threshold = 0.95;
};

// Reproduces the per-model extinction/persistence decision tree from rates
// on boundary faces.  A rate whose 4-SE interval contains zero makes the
// label "inconclusive" (critical cases are excluded by the theory).
RegimeReport classify_regime(const ModelSpec& model, const SimConfig& config,
                             const ClassifyOptions& opts = {});

// Monte Carlo estimate of the per-face absorption probabilities from an
// interior start, with Wilson 95% intervals and empirical extinction rates.
void estimate_basin_probabilities(const ModelSpec& model, const Segment& initial,
                                  const SimConfig& config, const ClassifyOptions& opts,
                                  RegimeReport& report);

// Two-part criterion: terminal level below eps_log and occupancy of
// {ln X_i < eps_log/2} over the final half-window above the threshold.
// Species meeting exactly one of the two are ambiguous -> nullopt.
std::optional<std::vector<int>> detect_absorbed_face(const Trajectory& traj, double eps_log,
                                                     double occupancy_threshold);

}  // namespace kolsim

#endif
