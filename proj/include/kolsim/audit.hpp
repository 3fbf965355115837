#ifndef KOLSIM_AUDIT_HPP
#define KOLSIM_AUDIT_HPP

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kolsim/model.hpp"
#include "kolsim/sdde.hpp"
#include "kolsim/segment.hpp"

namespace kolsim {

using ScalarField = std::function<double(std::span<const double>)>;

// Concrete constants and functions instantiating the standing assumptions.
// Certificates are audited, not discovered: sampled checks can report "no
// violation found", never "verified".
struct AssumptionCertificate {
  Eigen::VectorXd c;  // positive weights
  double gamma_b = 1e-3;
  double gamma_0 = 1e-2;
  double A0 = 1.0;
  double A1 = 2e-2;
  double A2 = 1e-2;  // requires A1 > A2 > 0
  double M = 100.0;
  ScalarField h;  // continuous, >= 1
  std::string h_desc = "1";
  DelayKernel mu;

  // dissipative-growth data: either K_tilde (condition a) or the bracket
  // (b1, b2, h1, mu1) (condition b)
  std::optional<double> K_tilde;
  double b1 = 0.0, b2 = 0.0;
  ScalarField h1;
  DelayKernel mu1;
  bool has_growth_bracket() const { return static_cast<bool>(h1); }

  // Lyapunov-functional data
  double lv_gamma = 5e-4;  // gamma < gamma_b
  Eigen::VectorXd rho;     // empty means rho = 0
  double p0 = 0.0;         // 0 resolves from the cd-p0 bound at validation

  double resolved_p0(int n, double sigma_star) const;
  void validate(int n, double sigma_star) const;  // cd-p0 and ordering checks
};

// Piecewise-linear random segments with bounded slope, deterministic per
// (seed, index).
struct SegmentSampler {
  std::vector<double> radius_grid = {1.0, 5.0, 10.0, 25.0, 50.0};
  double max_slope = 10.0;
  int count = 1000;
  std::uint64_t seed = 0;
  int knots = 9;
  int grid_steps = 64;
  double floor_at_zero = 0.0;            // enforce phi_i(0) >= floor (D_eps sampling)
  std::vector<int> zero_species;         // face constraints

  Segment sample(int index, int n, double r) const;
  double max_radius() const;
};

struct ViolationReport {
  std::string assumption;
  int samples = 0;
  int violations = 0;
  double worst_margin = -std::numeric_limits<double>::infinity();  // max LHS - RHS
  int worst_index = -1;
  std::vector<double> worst_state;  // phi(0) of the worst sample
  std::vector<std::string> notes;   // non-finite h evaluations etc.
};

// Drift condition: the weighted per-capita drift of (1 + c^T x), its
// quadratic-variation correction and the gamma_b coefficient mass must be
// dominated by the h-dissipation on the right.
ViolationReport check_drift_condition(const ModelSpec& model, const AssumptionCertificate& cert,
                                      const SegmentSampler& sampler);

// Coefficient-growth condition (a) or (b), per sample.
ViolationReport check_growth_condition(const ModelSpec& model, const AssumptionCertificate& cert,
                                       const SegmentSampler& sampler);

struct SpectrumReport {
  int samples = 0;
  int violations = 0;
  double min_eigenvalue = std::numeric_limits<double>::infinity();  // of the per-capita covariance
  double max_inverse_norm = 0.0;  // of (x_i x_j a_ij) over D_{eps,R}, Frobenius
  std::vector<double> worst_state;
};

SpectrumReport check_nondegeneracy(const ModelSpec& model, const SegmentSampler& sampler,
                                   double eps, double radius);

// V_rho(phi) = (1 + c^T x) * prod_i x_i^rho_i * exp{A2 int mu(ds) int_s^0
// e^{gamma(u-s)} h(phi(u)) du}, inner integrals by trapezoid on the grid.
double evaluate_V(const AssumptionCertificate& cert, const Segment& segment);
double log_V(const AssumptionCertificate& cert, const Segment& segment);

struct GeneratorCheck {
  double estimate = 0.0;  // (E V^p0(X_dt) - V^p0(phi)) / dt
  double rhs = 0.0;       // certificate bound
  double margin = 0.0;    // estimate - rhs
  double mc_se = 0.0;
  int mc_samples = 0;
};

GeneratorCheck check_generator_bound(const ModelSpec& model, const AssumptionCertificate& cert,
                                     const Segment& segment, double delta, int mc_samples,
                                     std::uint64_t seed);

struct MomentBoundCheck {
  struct Point {
    double t = 0.0;
    double mean = 0.0;
    double se = 0.0;
    double bound = 0.0;
    bool pass = false;
  };
  std::vector<Point> points;
  double m_bar = 0.0;  // (A0/gamma_0) * observed sup of V^p0 over C_{V,M} samples
  bool pass = true;
};

// Empirical decay of E V^p0 along trajectories (rho >= 0 only).
MomentBoundCheck check_moment_bound(const ModelSpec& model, const AssumptionCertificate& cert,
                                    const Segment& initial, std::span<const double> times,
                                    int replicates, std::uint64_t seed,
                                    const SegmentSampler& cvm_sampler);

struct CertificateSearch {
  bool found = false;
  AssumptionCertificate cert;
  std::string note;
  double train_worst_margin = 0.0;
};

// Coarse grid search over (gamma_b, A1, A2, quadratic h coefficient) for the
// zoo models with per-capita coefficients finite on all of C_+; A0 and
// K_tilde are synthesized from a training sample set with headroom.
CertificateSearch find_certificate(const ModelSpec& model, const SegmentSampler& train);

}  // namespace kolsim

#endif
