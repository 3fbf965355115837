#ifndef KOLSIM_MODEL_HPP
#define KOLSIM_MODEL_HPP

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kolsim/segment.hpp"

namespace kolsim {

// Driving noise E = gamma^T B for m = n independent Brownian motions B.
// sigma is cached as gamma^T * gamma exactly as computed.
struct NoiseSpec {
  Eigen::MatrixXd gamma;
  Eigen::MatrixXd sigma;

  static NoiseSpec from_gamma(const Eigen::MatrixXd& g);
  // Upper-triangular gamma with gamma^T gamma = s (Cholesky); rejects
  // non-symmetric or non-positive-definite input.
  static NoiseSpec from_sigma(const Eigen::MatrixXd& s);
  static NoiseSpec identity(int n);

  int dim() const { return static_cast<int>(gamma.cols()); }
  double min_sigma_eigenvalue() const;
  double sigma_star() const;  // max entry of sigma
  void require_positive_definite() const;
};

struct CompetitiveLVParams {
  Eigen::VectorXd a;
  Eigen::MatrixXd b;      // b(i,j) >= 0 off-diagonal, b(i,i) > 0
  Eigen::MatrixXd b_hat;  // b_hat(i,j) > -b(i,i)
  double r = 1.0;
  NoiseSpec noise;
  void validate() const;
};

// One prey (index 0) and two competing predators (indices 1, 2).
struct PredatorPreyParams {
  Eigen::VectorXd a;      // a(0): prey growth, a(1..2): predator death rates
  Eigen::MatrixXd b;      // 3x3, signs per role; b(i,i) > 0
  Eigen::MatrixXd b_hat;  // b_hat(i,j) > -b(i,i)
  double r = 1.0;
  NoiseSpec noise;
  void validate() const;
};

using PayoffFn = std::function<double(std::span<const double>)>;

struct ReplicatorParams {
  double total = 1.0;  // population size; states live on the simplex sum = total
  std::vector<PayoffFn> payoffs;
  Eigen::MatrixXd payoff_matrix;  // used (and echoed) when payoffs is empty
  Eigen::VectorXd sigma_strength;
  double r = 1.0;
  void validate() const;
  int dim() const { return static_cast<int>(sigma_strength.size()); }
  double payoff(int i, std::span<const double> x) const;
};

// f(s0, s_r, i0, i_r): per-infective incidence read at the current and
// delayed values of both compartments.
using IncidenceFn = std::function<double(double, double, double, double)>;

struct SirParams {
  double a = 1.0;   // recruitment
  double b1 = 1.0;  // susceptible death rate
  double b2 = 1.0;  // infected removal rate
  double c1 = 0.0, c2 = 0.0;   // linear incidence rates
  IncidenceFn f1, f2;          // general incidence; empty = linear (c1, c2)
  double r = 1.0;
  NoiseSpec noise;  // 2x2, components (S, I)
  bool linear() const { return !f1 && !f2; }
  void validate() const;
};

using UptakeFn = std::function<double(double)>;

struct MonodUptake {
  double m = 1.0;  // maximal rate
  double k = 1.0;  // half-saturation
  double operator()(double s) const { return m * s / (k + s); }
};

struct ChemostatParams {
  double a = 0.0;  // delayed nutrient recycling, in [0, 1)
  std::vector<UptakeFn> uptake;
  std::vector<MonodUptake> monod;  // used (and echoed) when uptake is empty
  double r = 1.0;
  NoiseSpec noise;  // (n+1)x(n+1); component 0 is the nutrient
  int consumers() const {
    return static_cast<int>(uptake.empty() ? monod.size() : uptake.size());
  }
  double eval_uptake(int i, double s) const {
    return uptake.empty() ? monod[static_cast<std::size_t>(i)](s) : uptake[static_cast<std::size_t>(i)](s);
  }
  void validate() const;
};

using ZooParams = std::variant<std::monostate, CompetitiveLVParams, PredatorPreyParams,
                               ReplicatorParams, SirParams, ChemostatParams>;

using CoefficientFn = std::function<void(const SegmentView&, std::span<double>)>;
using BasisFn = std::function<double(const SegmentView&)>;

// Coefficients of the stochastic functional system in per-capita form:
// dX_i = X_i F_i(X_t) dt + X_i sum_j G_ij(X_t) dB_j.  Immutable after
// construction; coefficient evaluation is pure and shareable across threads.
struct ModelSpec {
  int n = 0;        // state components
  int drivers = 0;  // independent Brownian drivers (m)
  double r = 0.0;   // delay span covered by the kernels
  NoiseSpec noise;
  std::vector<DelayKernel> kernels;
  std::vector<bool> kolmogorov;    // per-capita form stays finite at x_i = 0
  std::vector<std::string> names;  // component names used by the CLI/reports

  CoefficientFn drift_fn;      // F, all n rows
  CoefficientFn diffusion_fn;  // G, n x drivers row-major
  bool constant_diffusion = false;
  std::vector<double> diffusion_rows;  // cached G when constant
  bool unit_g = false;  // noise enters as X_i dE_i (bare diffusion scalar g = 1)

  double simplex_total = 0.0;  // > 0: renormalize the state sum each step

  std::string name = "custom";
  ZooParams zoo;
  std::vector<std::pair<std::string, BasisFn>> basis;  // tracked functionals

  // Face restriction: null means the full model; entries 0 are clamped.
  std::shared_ptr<const std::vector<unsigned char>> face_mask;

  void eval_drift(const SegmentView& v, std::span<double> out) const {
    if (face_mask) {
      drift_fn(v.masked(face_mask->data()), out);
      for (int i = 0; i < n; ++i)
        if (!(*face_mask)[i]) out[i] = 0.0;
    } else {
      drift_fn(v, out);
    }
  }

  void eval_diffusion(const SegmentView& v, std::span<double> out) const {
    if (constant_diffusion) {
      std::copy(diffusion_rows.begin(), diffusion_rows.end(), out.begin());
      if (face_mask)
        for (int i = 0; i < n; ++i)
          if (!(*face_mask)[i])
            for (int j = 0; j < drivers; ++j) out[static_cast<std::size_t>(i) * drivers + j] = 0.0;
      return;
    }
    if (face_mask) {
      diffusion_fn(v.masked(face_mask->data()), out);
      for (int i = 0; i < n; ++i)
        if (!(*face_mask)[i])
          for (int j = 0; j < drivers; ++j) out[static_cast<std::size_t>(i) * drivers + j] = 0.0;
    } else {
      diffusion_fn(v, out);
    }
  }

  bool on_restricted_face(int i) const { return !face_mask || (*face_mask)[i] != 0; }

  double sigma(int i, int j) const { return noise.sigma(i, j); }
  int component_index(const std::string& name) const;  // throws on unknown name
};

ModelSpec build_zoo_model(const CompetitiveLVParams& p);
ModelSpec build_zoo_model(const PredatorPreyParams& p);
ModelSpec build_zoo_model(const ReplicatorParams& p);
ModelSpec build_zoo_model(const SirParams& p);
ModelSpec build_zoo_model(const ChemostatParams& p);
ModelSpec build_zoo_model(const ZooParams& p);

// Species outside `keep` are clamped to exactly zero in state and history;
// their coefficient rows become zero.  Composes with an existing restriction
// (the intersection is taken), so the operation is idempotent.
ModelSpec restrict_to_face(const ModelSpec& m, std::span<const int> keep);

// Constant segment a face run starts from: the closed-form face mean where
// one exists, otherwise a model-appropriate interior level.
std::vector<double> default_face_state(const ModelSpec& m, std::span<const int> face);

}  // namespace kolsim

#endif
