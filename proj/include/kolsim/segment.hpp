#ifndef KOLSIM_SEGMENT_HPP
#define KOLSIM_SEGMENT_HPP

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace kolsim {

// Probability measure on [0, r] represented as a finite atomic mixture.
// Distributed kernels must be pre-quadratured by the caller.
struct DelayKernel {
  struct Atom {
    double lag = 0.0;
    double weight = 1.0;
  };
  std::vector<Atom> atoms;

  static DelayKernel point(double lag) { return DelayKernel{{Atom{lag, 1.0}}}; }

  double max_lag() const {
    double m = 0.0;
    for (const auto& a : atoms) m = a.lag > m ? a.lag : m;
    return m;
  }

  void validate(double r) const {
    double total = 0.0;
    for (const auto& a : atoms) {
      if (a.lag < 0.0) throw std::invalid_argument("delay kernel: negative lag");
      if (a.lag > r * (1.0 + 1e-12)) throw std::invalid_argument("delay kernel: lag exceeds r");
      if (a.weight < 0.0) throw std::invalid_argument("delay kernel: negative weight");
      total += a.weight;
    }
    if (atoms.empty() || total < 1.0 - 1e-9 || total > 1.0 + 1e-9)
      throw std::invalid_argument("delay kernel: weights must sum to 1");
  }
};

// Read-only window over the trailing history of a path on a uniform grid.
// Storage is column-major: `cols` columns of `n` values; column `head` is
// "now" and column (head - k mod cols) is k grid steps back.  at(i, lag)
// linearly interpolates between grid columns; a zero mask, when set, makes
// the masked species read exactly 0 (face clamping).
class SegmentView {
 public:
  SegmentView(const double* data, int n, int cols, int head, double dt,
              const unsigned char* keep_mask = nullptr)
      : data_(data), mask_(keep_mask), n_(n), cols_(cols), head_(head), dt_(dt) {}

  int species() const { return n_; }
  double grid_step() const { return dt_; }
  double max_lag() const { return dt_ * (cols_ - 1); }

  double now(int i) const {
    if (mask_ && !mask_[i]) return 0.0;
    return col_value(i, 0);
  }

  double at(int i, double lag) const {
    if (mask_ && !mask_[i]) return 0.0;
    if (lag <= 0.0 || cols_ == 1) return col_value(i, 0);
    double pos = lag / dt_;
    int k = static_cast<int>(pos);
    if (k >= cols_ - 1) return col_value(i, cols_ - 1);
    double frac = pos - k;
    double a = col_value(i, k);
    if (frac == 0.0) return a;
    double b = col_value(i, k + 1);
    return a + frac * (b - a);
  }

  SegmentView masked(const unsigned char* keep_mask) const {
    SegmentView v(*this);
    v.mask_ = keep_mask;  // views are masked at most once (face restriction)
    return v;
  }

 private:
  double col_value(int i, int steps_back) const {
    int c = head_ - steps_back;
    if (c < 0) c += cols_;
    return data_[static_cast<std::size_t>(c) * n_ + i];
  }

  const double* data_;
  const unsigned char* mask_;
  int n_, cols_, head_;
  double dt_;
};

// Owning dense history grid.  Column k (k = 0..steps, oldest first) holds the
// state at time -(steps - k)*dt relative to "now".
class Segment {
 public:
  Segment() = default;
  Segment(int n, int steps, double dt)
      : n_(n), steps_(steps), dt_(dt), values_(static_cast<std::size_t>(n) * (steps + 1), 0.0) {
    if (n <= 0 || steps < 0 || dt < 0.0) throw std::invalid_argument("segment: bad shape");
  }

  static Segment constant(int n, int steps, double dt, std::span<const double> x) {
    Segment s(n, steps, dt);
    if (static_cast<int>(x.size()) != n) throw std::invalid_argument("segment: size mismatch");
    for (int k = 0; k <= steps; ++k)
      for (int i = 0; i < n; ++i) s.grid(i, k) = x[i];
    return s;
  }

  int species() const { return n_; }
  int steps() const { return steps_; }
  double dt() const { return dt_; }
  double max_lag() const { return dt_ * steps_; }

  double& grid(int i, int k) { return values_[static_cast<std::size_t>(k) * n_ + i]; }
  double grid(int i, int k) const { return values_[static_cast<std::size_t>(k) * n_ + i]; }

  double now(int i) const { return grid(i, steps_); }

  void zero_species(int i) {
    for (int k = 0; k <= steps_; ++k) grid(i, k) = 0.0;
  }

  SegmentView view() const { return SegmentView(values_.data(), n_, steps_ + 1, steps_, dt_); }

  const std::vector<double>& raw() const { return values_; }
  std::vector<double>& raw() { return values_; }

 private:
  int n_ = 0;
  int steps_ = 0;
  double dt_ = 0.0;
  std::vector<double> values_;
};

}  // namespace kolsim

#endif
