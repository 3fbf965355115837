#include "kolsim/measures.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kolsim {

double BatchSeries::total() const {
  double s = 0.0;
  for (double v : batch_sum) s += v;
  return s;
}

double BatchSeries::count() const {
  double s = 0.0;
  for (double v : batch_count) s += v;
  return s;
}

double BatchSeries::mean() const {
  double c = count();
  return c > 0.0 ? total() / c : 0.0;
}

std::optional<double> BatchSeries::standard_error(int min_batches) const {
  int nonempty = 0;
  for (double c : batch_count)
    if (c > 0.0) ++nonempty;
  if (nonempty < min_batches) return std::nullopt;
  double grand = mean();
  double var = 0.0;
  for (std::size_t b = 0; b < batch_sum.size(); ++b) {
    if (batch_count[b] <= 0.0) continue;
    double d = batch_sum[b] / batch_count[b] - grand;
    var += d * d;
  }
  var /= (nonempty - 1);
  return std::sqrt(var / nonempty);
}

void BatchSeries::merge(const BatchSeries& other) {
  batch_sum.insert(batch_sum.end(), other.batch_sum.begin(), other.batch_sum.end());
  batch_count.insert(batch_count.end(), other.batch_count.begin(), other.batch_count.end());
}

void OccupationStats::merge(const OccupationStats& other) {
  if (n == 0) {
    *this = other;
    return;
  }
  if (other.n != n || other.eps_grid != eps_grid || other.radius_grid != radius_grid)
    throw std::invalid_argument("occupation stats: incompatible merge");
  window += other.window;
  for (int i = 0; i < n; ++i) {
    mean_now[static_cast<std::size_t>(i)].merge(other.mean_now[static_cast<std::size_t>(i)]);
    mean_lag[static_cast<std::size_t>(i)].merge(other.mean_lag[static_cast<std::size_t>(i)]);
    integrand[static_cast<std::size_t>(i)].merge(other.integrand[static_cast<std::size_t>(i)]);
    integrand_valid[static_cast<std::size_t>(i)] =
        integrand_valid[static_cast<std::size_t>(i)] && other.integrand_valid[static_cast<std::size_t>(i)];
  }
  for (auto& [key, series] : basis) series.merge(other.basis.at(key));
  for (std::size_t k = 0; k < eps_grid.size(); ++k) face_occupancy[k].merge(other.face_occupancy[k]);
  for (std::size_t k = 0; k < radius_grid.size(); ++k) tail[k].merge(other.tail[k]);
}

namespace {

// Trajectory-backed segment window ending at sample s (requires stride 1 so
// recorded samples sit on the integration grid).
SegmentView window_view(const Trajectory& traj, std::size_t s) {
  std::size_t cols = static_cast<std::size_t>(traj.history_steps) + 1;
  const double* base = traj.states.data() + (s + 1 - cols) * static_cast<std::size_t>(traj.n);
  return SegmentView(base, traj.n, static_cast<int>(cols), traj.history_steps, traj.dt);
}

Segment materialize_window(const Trajectory& traj, std::size_t s, double r_span, int steps) {
  Segment seg(traj.n, steps, steps > 0 ? r_span / steps : traj.dt);
  double t_now = traj.times[s];
  for (int k = 0; k <= steps; ++k) {
    double t = t_now - (steps > 0 ? (steps - k) * (r_span / steps) : 0.0);
    // locate by time in the recorded series (uniform stride)
    double pos = (t - traj.times.front()) / (traj.times[1] - traj.times.front());
    auto lo = static_cast<std::size_t>(std::max(0.0, std::floor(pos)));
    if (lo >= traj.samples() - 1) lo = traj.samples() - 2;
    double frac = pos - static_cast<double>(lo);
    frac = std::clamp(frac, 0.0, 1.0);
    for (int i = 0; i < traj.n; ++i) {
      double a = traj.state(lo, i), b = traj.state(lo + 1, i);
      seg.grid(i, k) = a + frac * (b - a);
    }
  }
  return seg;
}

}  // namespace

OccupationStats accumulate(const ModelSpec& model, const Trajectory& traj, const SimConfig& config,
                           const MeasureOptions& opts) {
  if (traj.horizon <= traj.burn_in_time)
    throw std::invalid_argument("accumulate: horizon does not exceed burn-in");
  const int n = traj.n;
  OccupationStats stats;
  stats.n = n;
  stats.on_face = traj.on_face;
  stats.integrand_valid = traj.integrand_valid;
  stats.eps_grid = opts.eps_grid;
  stats.radius_grid = opts.radius_grid;

  const int nb = opts.batches;
  auto fresh = [&]() {
    BatchSeries s;
    s.batch_sum.assign(static_cast<std::size_t>(nb), 0.0);
    s.batch_count.assign(static_cast<std::size_t>(nb), 0.0);
    return s;
  };
  stats.mean_now.assign(static_cast<std::size_t>(n), fresh());
  stats.mean_lag.assign(static_cast<std::size_t>(n), fresh());
  stats.integrand.assign(static_cast<std::size_t>(n), fresh());
  for (const auto& [key, fn] : model.basis) stats.basis.emplace(key, fresh());
  stats.face_occupancy.assign(stats.eps_grid.size(), fresh());
  stats.tail.assign(stats.radius_grid.size(), fresh());

  // Start late enough that every sample has a full lag window behind it and
  // none of it reaches back across the burn-in boundary.
  std::size_t first = traj.first_post_burn_in();
  std::size_t lag_samples = 0;
  double r_span = model.r;
  bool grid_aligned = config.record_stride == 1 && traj.history_steps >= 0;
  if (r_span > 0.0) {
    double sample_dt = traj.dt * config.record_stride;
    lag_samples = static_cast<std::size_t>(std::ceil(r_span / sample_dt - 1e-9));
    if (first < lag_samples) first = lag_samples;
  }
  std::size_t last = traj.samples();
  if (first >= last) throw std::invalid_argument("accumulate: window too short for statistics");
  std::size_t total = last - first;
  stats.window = traj.times[last - 1] - (first > 0 ? traj.times[first - 1] : 0.0);

  for (std::size_t s = first; s < last; ++s) {
    int b = static_cast<int>(((s - first) * static_cast<std::size_t>(nb)) / total);
    double norm2 = 0.0;
    double min_face = std::numeric_limits<double>::infinity();
    bool any_face = false;
    for (int i = 0; i < n; ++i) {
      double xi = traj.state(s, i);
      norm2 += xi * xi;
      stats.mean_now[static_cast<std::size_t>(i)].batch_sum[static_cast<std::size_t>(b)] += xi;
      stats.mean_now[static_cast<std::size_t>(i)].batch_count[static_cast<std::size_t>(b)] += 1.0;
      if (traj.on_face[static_cast<std::size_t>(i)]) {
        any_face = true;
        min_face = std::min(min_face, xi);
      }
    }
    if (!any_face) min_face = 0.0;  // empty face: the zero state
    double norm = std::sqrt(norm2);

    bool lagged_time_ok = true;
    for (int i = 0; i < n; ++i) {
      double xl;
      if (r_span <= 0.0) {
        xl = traj.state(s, i);
      } else if (s >= lag_samples) {
        xl = traj.state(s - lag_samples, i);
      } else {
        lagged_time_ok = false;
        xl = 0.0;
      }
      if (lagged_time_ok) {
        stats.mean_lag[static_cast<std::size_t>(i)].batch_sum[static_cast<std::size_t>(b)] += xl;
        stats.mean_lag[static_cast<std::size_t>(i)].batch_count[static_cast<std::size_t>(b)] += 1.0;
      }
    }

    // growth increments give the exact in-step integrand average
    if (s + 1 < last) {
      double dt_pair = traj.times[s + 1] - traj.times[s];
      for (int i = 0; i < n; ++i) {
        if (!traj.integrand_valid[static_cast<std::size_t>(i)]) continue;
        double inc = traj.growth_at(s + 1, i) - traj.growth_at(s, i);
        stats.integrand[static_cast<std::size_t>(i)].batch_sum[static_cast<std::size_t>(b)] +=
            inc / dt_pair;
        stats.integrand[static_cast<std::size_t>(i)].batch_count[static_cast<std::size_t>(b)] += 1.0;
      }
    }

    if (!model.basis.empty()) {
      if (grid_aligned && s >= static_cast<std::size_t>(traj.history_steps)) {
        SegmentView v = window_view(traj, s);
        for (const auto& [key, fn] : model.basis) {
          stats.basis.at(key).batch_sum[static_cast<std::size_t>(b)] += fn(v);
          stats.basis.at(key).batch_count[static_cast<std::size_t>(b)] += 1.0;
        }
      } else if (traj.samples() >= 2) {
        Segment seg = materialize_window(traj, s, r_span, traj.history_steps);
        SegmentView v = seg.view();
        for (const auto& [key, fn] : model.basis) {
          stats.basis.at(key).batch_sum[static_cast<std::size_t>(b)] += fn(v);
          stats.basis.at(key).batch_count[static_cast<std::size_t>(b)] += 1.0;
        }
      }
    }

    for (std::size_t k = 0; k < stats.eps_grid.size(); ++k) {
      stats.face_occupancy[k].batch_sum[static_cast<std::size_t>(b)] +=
          (min_face < stats.eps_grid[k]) ? 1.0 : 0.0;
      stats.face_occupancy[k].batch_count[static_cast<std::size_t>(b)] += 1.0;
    }
    for (std::size_t k = 0; k < stats.radius_grid.size(); ++k) {
      stats.tail[k].batch_sum[static_cast<std::size_t>(b)] += (norm > stats.radius_grid[k]) ? 1.0 : 0.0;
      stats.tail[k].batch_count[static_cast<std::size_t>(b)] += 1.0;
    }
  }
  return stats;
}

StationarityReport stationarity_diagnostic(const OccupationStats& stats) {
  StationarityReport report;
  for (int i = 0; i < stats.n; ++i) {
    StationarityReport::PerSpecies ps;
    ps.species = i;
    const auto& now = stats.mean_now[static_cast<std::size_t>(i)];
    const auto& lag = stats.mean_lag[static_cast<std::size_t>(i)];
    // batch-wise difference of the two means
    std::vector<double> diffs;
    std::size_t nb = std::min(now.batch_sum.size(), lag.batch_sum.size());
    for (std::size_t b = 0; b < nb; ++b) {
      if (now.batch_count[b] <= 0.0 || lag.batch_count[b] <= 0.0) continue;
      diffs.push_back(now.batch_sum[b] / now.batch_count[b] -
                      lag.batch_sum[b] / lag.batch_count[b]);
    }
    if (diffs.size() >= 20) {
      ps.se_available = true;
      double mean = 0.0;
      for (double d : diffs) mean += d;
      mean /= static_cast<double>(diffs.size());
      // successive-difference variance: unbiased for stationary batch means,
      // but a smooth drift between batches is signal, not noise
      double sq = 0.0;
      for (std::size_t b = 1; b < diffs.size(); ++b)
        sq += (diffs[b] - diffs[b - 1]) * (diffs[b] - diffs[b - 1]);
      double var = sq / (2.0 * static_cast<double>(diffs.size() - 1));
      double se = std::sqrt(var / static_cast<double>(diffs.size()));
      ps.z = se > 0.0 ? mean / se : 0.0;
      ps.flagged = std::abs(ps.z) > 4.0;
    }
    report.any_flagged = report.any_flagged || ps.flagged;
    report.species.push_back(ps);
  }
  return report;
}

TailMassResult tail_mass(const OccupationStats& stats, double radius) {
  if (stats.radius_grid.empty()) throw std::invalid_argument("tail_mass: empty radius grid");
  std::size_t best = 0;
  double best_d = std::abs(stats.radius_grid[0] - radius);
  for (std::size_t k = 1; k < stats.radius_grid.size(); ++k) {
    double d = std::abs(stats.radius_grid[k] - radius);
    if (d < best_d) {
      best = k;
      best_d = d;
    }
  }
  TailMassResult res;
  res.radius_used = stats.radius_grid[best];
  res.fraction = stats.tail[best].mean();
  res.snapped = best_d > 1e-12 * (1.0 + std::abs(radius));
  return res;
}

}  // namespace kolsim
