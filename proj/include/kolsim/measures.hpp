#ifndef KOLSIM_MEASURES_HPP
#define KOLSIM_MEASURES_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kolsim/model.hpp"
#include "kolsim/sdde.hpp"

namespace kolsim {

// Equal-weight sample accumulator split into batches; the batch means give a
// standard error that respects autocorrelation.  Merging concatenates batch
// lists, so disjoint windows combine associatively.
struct BatchSeries {
  std::vector<double> batch_sum;
  std::vector<double> batch_count;

  double total() const;
  double count() const;
  double mean() const;  // 0 when empty
  // Standard error of the mean from batch means; nullopt below min_batches.
  std::optional<double> standard_error(int min_batches = 20) const;
  void merge(const BatchSeries& other);
};

// The random normalized occupation measure of a run, realized through its
// action on a fixed functional basis over the post-burn-in window.
struct OccupationStats {
  int n = 0;
  double window = 0.0;  // time covered (post burn-in)
  std::vector<unsigned char> on_face;
  std::vector<unsigned char> integrand_valid;

  std::vector<BatchSeries> mean_now;    // phi_i(0)
  std::vector<BatchSeries> mean_lag;    // phi_i(-r)
  std::vector<BatchSeries> integrand;   // F_i - 1/2 sum_j G_ij^2
  std::map<std::string, BatchSeries> basis;

  std::vector<double> eps_grid;
  std::vector<BatchSeries> face_occupancy;  // min over face species X_i < eps
  std::vector<double> radius_grid;
  std::vector<BatchSeries> tail;  // |X(t)| > R

  void merge(const OccupationStats& other);
};

struct MeasureOptions {
  std::vector<double> eps_grid = {1e-8, 1e-6, 1e-4, 1e-2, 1e-1};
  std::vector<double> radius_grid = {0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0};
  int batches = 32;
};

// Every recorded post-burn-in sample contributes with equal weight.  The
// model supplies the delay span and the zoo basis functionals; statistics
// windows never reach across the burn-in boundary.
OccupationStats accumulate(const ModelSpec& model, const Trajectory& traj, const SimConfig& config,
                           const MeasureOptions& opts = {});

struct StationarityReport {
  struct PerSpecies {
    int species = 0;
    double z = 0.0;
    bool se_available = false;
    bool flagged = false;  // |z| > 4
  };
  std::vector<PerSpecies> species;
  bool any_flagged = false;
};

// z-score of mean phi_i(0) - mean phi_i(-r); an ergodic stationary window
// makes both integrals of the same invariant measure, so z should be small.
StationarityReport stationarity_diagnostic(const OccupationStats& stats);

struct TailMassResult {
  double radius_used = 0.0;
  double fraction = 0.0;
  bool snapped = false;  // R was not on the grid; nearest point used
};

TailMassResult tail_mass(const OccupationStats& stats, double radius);

}  // namespace kolsim

#endif
