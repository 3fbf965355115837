#include "kolsim/audit.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kolsim/rng.hpp"

namespace kolsim {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Shared per-sample coefficient evaluation for the audit formulas.
struct CoefficientSample {
  std::vector<double> x;       // phi(0)
  std::vector<double> drift;   // F_i
  Eigen::MatrixXd cov;         // a_ij = sum_k G_ik G_jk (per-capita rates)
  std::vector<double> g2;      // the "g_i^2" mass of the gamma_b term
};

CoefficientSample eval_coefficients(const ModelSpec& model, const SegmentView& view) {
  CoefficientSample s;
  int n = model.n, m = model.drivers;
  s.x.resize(static_cast<std::size_t>(n));
  s.drift.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) s.x[static_cast<std::size_t>(i)] = view.now(i);
  model.eval_drift(view, s.drift);
  std::vector<double> g(static_cast<std::size_t>(n) * m);
  model.eval_diffusion(view, g);
  s.cov.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      double v = 0.0;
      for (int k = 0; k < m; ++k)
        v += g[static_cast<std::size_t>(i) * m + k] * g[static_cast<std::size_t>(j) * m + k];
      s.cov(i, j) = v;
      s.cov(j, i) = v;
    }
  // The gamma_b coefficient mass uses the bare diffusion scalars: 1 for the
  // X_i dE_i models, the per-capita variance rate a_ii otherwise.
  s.g2.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    s.g2[static_cast<std::size_t>(i)] = model.unit_g ? 1.0 : s.cov(i, i);
  return s;
}

double kernel_integral_h(const ScalarField& h, const DelayKernel& mu, const SegmentView& view,
                         int n, bool* finite) {
  std::vector<double> xs(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (const auto& atom : mu.atoms) {
    for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = view.at(i, atom.lag);
    double hv = h(xs);
    if (!std::isfinite(hv) && finite) *finite = false;
    acc += atom.weight * hv;
  }
  return acc;
}

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace

double AssumptionCertificate::resolved_p0(int n, double sigma_star) const {
  if (p0 > 0.0) return p0;
  double cap = std::min(1.0, gamma_b / (8.0 * n * std::max(sigma_star, 1e-300)));
  return 0.5 * cap;
}

void AssumptionCertificate::validate(int n, double sigma_star) const {
  require(static_cast<int>(c.size()) == n, "certificate: weight vector dimension");
  for (int i = 0; i < n; ++i) require(c(i) > 0.0, "certificate: weights must be positive");
  require(gamma_b > 0.0 && gamma_0 > 0.0 && A0 > 0.0, "certificate: constants must be positive");
  require(A1 > A2 && A2 > 0.0, "certificate: need A1 > A2 > 0");
  require(M > 0.0, "certificate: M must be positive");
  require(static_cast<bool>(h), "certificate: missing h");
  require(lv_gamma < gamma_b, "certificate: need gamma < gamma_b");
  double rho_cap = std::min({gamma_b / 2.0, 1.0 / n, gamma_b / (4.0 * std::max(sigma_star, 1e-300))});
  if (rho.size() > 0) {
    require(static_cast<int>(rho.size()) == n, "certificate: rho dimension");
    require(rho.norm() < rho_cap, "certificate: |rho| violates the cd-p0 bound");
  }
  double p0_cap = std::min(1.0, gamma_b / (8.0 * n * std::max(sigma_star, 1e-300)));
  if (p0 > 0.0) require(p0 < p0_cap, "certificate: p0 violates the cd-p0 bound");
  if (has_growth_bracket()) require(b1 > 0.0 && b2 > 0.0, "certificate: need b1, b2 > 0");
}

double SegmentSampler::max_radius() const {
  double m = 0.0;
  for (double r : radius_grid) m = std::max(m, r);
  return m;
}

Segment SegmentSampler::sample(int index, int n, double r) const {
  RngStream stream(seed, static_cast<std::uint64_t>(index) + 0x5347u);
  double radius = radius_grid[static_cast<std::size_t>(index) % radius_grid.size()];
  double amp = radius / std::sqrt(static_cast<double>(n));
  int steps = r > 0.0 ? grid_steps : 0;
  double dt = r > 0.0 ? r / steps : 1.0;
  Segment seg(n, steps, dt);

  int nk = std::max(2, knots);
  std::vector<double> knot_vals(static_cast<std::size_t>(nk));
  for (int i = 0; i < n; ++i) {
    bool zeroed = std::find(zero_species.begin(), zero_species.end(), i) != zero_species.end();
    double prev = zeroed ? 0.0 : amp * stream.next_uniform();
    knot_vals[0] = prev;
    double knot_gap = r > 0.0 ? r / (nk - 1) : 1.0;
    for (int k = 1; k < nk; ++k) {
      double v = zeroed ? 0.0 : amp * stream.next_uniform();
      double cap = max_slope * knot_gap;
      v = std::clamp(v, prev - cap, prev + cap);
      v = std::clamp(v, 0.0, amp);
      knot_vals[static_cast<std::size_t>(k)] = v;
      prev = v;
    }
    for (int kcol = 0; kcol <= steps; ++kcol) {
      double pos = steps > 0 ? static_cast<double>(kcol) / steps * (nk - 1) : nk - 1.0;
      int k0 = std::min(static_cast<int>(pos), nk - 2);
      double frac = pos - k0;
      seg.grid(i, kcol) = knot_vals[static_cast<std::size_t>(k0)] +
                          frac * (knot_vals[static_cast<std::size_t>(k0) + 1] -
                                  knot_vals[static_cast<std::size_t>(k0)]);
    }
    if (!zeroed && floor_at_zero > 0.0 && seg.grid(i, steps) < floor_at_zero)
      seg.grid(i, steps) = floor_at_zero;
  }
  return seg;
}

ViolationReport check_drift_condition(const ModelSpec& model, const AssumptionCertificate& cert,
                                      const SegmentSampler& sampler) {
  cert.validate(model.n, model.noise.sigma_star());
  ViolationReport report;
  report.assumption = "drift-dissipation";
  for (int idx = 0; idx < sampler.count; ++idx) {
    Segment seg = sampler.sample(idx, model.n, model.r);
    SegmentView view = seg.view();
    CoefficientSample s = eval_coefficients(model, view);
    double cx = 0.0;
    for (int i = 0; i < model.n; ++i) cx += cert.c(i) * s.x[static_cast<std::size_t>(i)];
    double denom = 1.0 + cx;

    double t1 = 0.0, t2 = 0.0, mass = 0.0;
    for (int i = 0; i < model.n; ++i) {
      t1 += cert.c(i) * s.x[static_cast<std::size_t>(i)] * s.drift[static_cast<std::size_t>(i)];
      mass += std::abs(s.drift[static_cast<std::size_t>(i)]) + s.g2[static_cast<std::size_t>(i)];
      for (int j = 0; j < model.n; ++j)
        t2 += cert.c(i) * cert.c(j) * s.x[static_cast<std::size_t>(i)] * s.x[static_cast<std::size_t>(j)] *
              s.cov(i, j);
    }
    double lhs = t1 / denom - 0.5 * t2 / (denom * denom) + cert.gamma_b * mass;

    bool finite = true;
    double hx = cert.h(s.x);
    if (!std::isfinite(hx)) finite = false;
    double hint = kernel_integral_h(cert.h, cert.mu, view, model.n, &finite);
    if (!finite) {
      report.notes.push_back("non-finite h at sample " + std::to_string(idx));
      ++report.samples;
      continue;
    }
    double rhs = (norm2(s.x) < cert.M ? cert.A0 : 0.0) - cert.gamma_0 - cert.A1 * hx + cert.A2 * hint;

    double margin = lhs - rhs;
    ++report.samples;
    if (margin > 0.0) ++report.violations;
    if (margin > report.worst_margin) {
      report.worst_margin = margin;
      report.worst_index = idx;
      report.worst_state = s.x;
    }
  }
  return report;
}

ViolationReport check_growth_condition(const ModelSpec& model, const AssumptionCertificate& cert,
                                       const SegmentSampler& sampler) {
  ViolationReport report;
  const bool bracket = cert.has_growth_bracket();
  if (!bracket && !cert.K_tilde.has_value())
    throw std::invalid_argument("growth condition: certificate carries neither K_tilde nor (b1,b2,h1,mu1)");
  report.assumption = bracket ? "coefficient-growth-bracket" : "coefficient-growth-bound";
  const ScalarField& h = bracket ? cert.h1 : cert.h;
  const DelayKernel& mu = bracket ? cert.mu1 : cert.mu;

  for (int idx = 0; idx < sampler.count; ++idx) {
    Segment seg = sampler.sample(idx, model.n, model.r);
    SegmentView view = seg.view();
    CoefficientSample s = eval_coefficients(model, view);
    double mass = 0.0;
    for (int i = 0; i < model.n; ++i)
      mass += std::abs(s.drift[static_cast<std::size_t>(i)]) + s.g2[static_cast<std::size_t>(i)];

    bool finite = true;
    double hx = h(s.x);
    if (!std::isfinite(hx)) finite = false;
    double hint = kernel_integral_h(h, mu, view, model.n, &finite);
    if (!finite) {
      report.notes.push_back("non-finite h at sample " + std::to_string(idx));
      ++report.samples;
      continue;
    }

    double margin;
    if (bracket) {
      double upper = cert.b2 * (hx + hint) - mass;       // must be >= 0
      double lower = mass - cert.b1 * hx;                // must be >= 0
      margin = std::max(-upper, -lower);
    } else {
      margin = mass - *cert.K_tilde * (hx + hint);
    }
    ++report.samples;
    if (margin > 0.0) ++report.violations;
    if (margin > report.worst_margin) {
      report.worst_margin = margin;
      report.worst_index = idx;
      report.worst_state = s.x;
    }
  }
  return report;
}

SpectrumReport check_nondegeneracy(const ModelSpec& model, const SegmentSampler& sampler,
                                   double eps, double radius) {
  require(eps > 0.0 && radius > 0.0, "nondegeneracy: need eps, R > 0");
  SpectrumReport report;
  SegmentSampler boxed = sampler;
  boxed.radius_grid = {radius};
  boxed.floor_at_zero = eps;
  for (int idx = 0; idx < boxed.count; ++idx) {
    Segment seg = boxed.sample(idx, model.n, model.r);
    SegmentView view = seg.view();
    CoefficientSample s = eval_coefficients(model, view);
    ++report.samples;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.cov);
    double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < report.min_eigenvalue) report.min_eigenvalue = min_eig;
    if (min_eig <= 0.0) {
      ++report.violations;
      report.worst_state = s.x;
      continue;
    }

    Eigen::MatrixXd scaled(model.n, model.n);
    for (int i = 0; i < model.n; ++i)
      for (int j = 0; j < model.n; ++j)
        scaled(i, j) = s.x[static_cast<std::size_t>(i)] * s.x[static_cast<std::size_t>(j)] * s.cov(i, j);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(scaled);
    if (!lu.isInvertible()) {
      ++report.violations;
      report.worst_state = s.x;
      continue;
    }
    double inv_norm = lu.inverse().norm();  // Frobenius
    if (inv_norm > report.max_inverse_norm) report.max_inverse_norm = inv_norm;
  }
  return report;
}

namespace {

// int mu(ds) int_s^0 e^{gamma(u-s)} h(phi(u)) du, trapezoid per atom.
double double_integral_h(const AssumptionCertificate& cert, const Segment& seg) {
  int n = seg.species();
  SegmentView view = seg.view();
  std::vector<double> xs(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (const auto& atom : cert.mu.atoms) {
    if (atom.lag <= 0.0) continue;  // int_0^0 = 0
    int intervals = std::max(1, static_cast<int>(std::ceil(atom.lag / std::max(seg.dt(), 1e-12) - 1e-9)));
    double step = atom.lag / intervals;
    double inner = 0.0;
    for (int k = 0; k <= intervals; ++k) {
      double u = -atom.lag + k * step;  // u in [-lag, 0]
      for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = view.at(i, -u);
      double w = (k == 0 || k == intervals) ? 0.5 : 1.0;
      inner += w * std::exp(cert.lv_gamma * (u + atom.lag)) * cert.h(xs);
    }
    acc += atom.weight * inner * step;
  }
  return acc;
}

}  // namespace

double log_V(const AssumptionCertificate& cert, const Segment& seg) {
  int n = seg.species();
  double cx = 0.0;
  for (int i = 0; i < n; ++i) cx += cert.c(i) * seg.now(i);
  double lv = std::log1p(cx);
  if (cert.rho.size() > 0) {
    for (int i = 0; i < n; ++i) {
      double rho_i = cert.rho(i);
      if (rho_i == 0.0) continue;
      double xi = seg.now(i);
      if (xi <= 0.0) {
        if (rho_i < 0.0)
          throw std::domain_error("V is non-finite: negative exponent rho_i with phi_i(0) = 0");
        return -std::numeric_limits<double>::infinity();  // x^rho = 0, log = -inf
      }
      lv += rho_i * std::log(xi);
    }
  }
  lv += cert.A2 * double_integral_h(cert, seg);
  return lv;
}

double evaluate_V(const AssumptionCertificate& cert, const Segment& seg) {
  return std::exp(log_V(cert, seg));
}

GeneratorCheck check_generator_bound(const ModelSpec& model, const AssumptionCertificate& cert,
                                     const Segment& segment, double delta, int mc_samples,
                                     std::uint64_t seed) {
  cert.validate(model.n, model.noise.sigma_star());
  require(delta > 0.0 && mc_samples > 1, "generator bound: need delta > 0 and mc_samples > 1");
  double p0 = cert.resolved_p0(model.n, model.noise.sigma_star());

  double mu_exp = 0.0;  // int e^{-gamma s} mu(ds)
  for (const auto& atom : cert.mu.atoms) mu_exp += atom.weight * std::exp(cert.lv_gamma * atom.lag);
  double a_cap = cert.A1 - cert.A2 * mu_exp;
  require(a_cap > 0.0, "generator bound: certificate violates A1 > A2 int e^{-gamma s} mu(ds)");
  double a_const = 0.99 * a_cap;

  SegmentView view = segment.view();
  CoefficientSample s = eval_coefficients(model, view);
  double hx = cert.h(s.x);
  double dih = double_integral_h(cert, segment);
  double mass = 0.0;
  for (int i = 0; i < model.n; ++i)
    mass += std::abs(s.drift[static_cast<std::size_t>(i)]) + s.g2[static_cast<std::size_t>(i)];

  double v0_log = log_V(cert, segment);
  double v0_p0 = std::exp(p0 * v0_log);
  double bracket = (norm2(s.x) < cert.M ? cert.A0 : 0.0) - cert.gamma_0 - a_const * hx -
                   cert.A2 * cert.lv_gamma * dih - 0.5 * cert.gamma_b * mass;

  GeneratorCheck check;
  check.rhs = p0 * v0_p0 * bracket;
  check.mc_samples = mc_samples;

  SimConfig one_step;
  one_step.dt = delta;
  one_step.horizon = delta;
  one_step.burn_in = 0.0;
  one_step.seed = seed;
  one_step.record_stride = 1;

  std::vector<int> face;
  for (int i = 0; i < model.n; ++i)
    if (segment.now(i) > 0.0 && model.on_restricted_face(i)) face.push_back(i);

  // The one-step state needs the same grid step; re-grid the segment so a
  // single step of size delta appends one column.
  Segment initial = segment;
  if (segment.dt() != delta && segment.steps() > 0) {
    int steps = static_cast<int>(std::ceil(segment.max_lag() / delta - 1e-9));
    initial = Segment(model.n, steps, delta);
    SegmentView src = segment.view();
    for (int k = 0; k <= steps; ++k)
      for (int i = 0; i < model.n; ++i) initial.grid(i, k) = src.at(i, (steps - k) * delta);
  }

  double sum = 0.0, sum2 = 0.0;
  for (int k = 0; k < mc_samples; ++k) {
    Trajectory traj = integrate(model, initial, one_step, face, k);
    double v = std::exp(p0 * log_V(cert, traj.final_segment));
    double inc = (v - v0_p0) / delta;
    sum += inc;
    sum2 += inc * inc;
  }
  check.estimate = sum / mc_samples;
  double var = (sum2 - sum * sum / mc_samples) / (mc_samples - 1);
  check.mc_se = std::sqrt(std::max(var, 0.0) / mc_samples);
  check.margin = check.estimate - check.rhs;
  return check;
}

MomentBoundCheck check_moment_bound(const ModelSpec& model, const AssumptionCertificate& cert,
                                    const Segment& initial, std::span<const double> times,
                                    int replicates, std::uint64_t seed,
                                    const SegmentSampler& cvm_sampler) {
  cert.validate(model.n, model.noise.sigma_star());
  for (int i = 0; i < static_cast<int>(cert.rho.size()); ++i)
    require(cert.rho(i) >= 0.0, "moment bound: decay form needs rho >= 0");
  double p0 = cert.resolved_p0(model.n, model.noise.sigma_star());

  MomentBoundCheck result;
  // observed sup of V^p0 over sampled members of C_{V,M}
  double sup = 0.0;
  int members = 0;
  for (int idx = 0; idx < cvm_sampler.count; ++idx) {
    Segment seg = cvm_sampler.sample(idx, model.n, model.r);
    double dih = double_integral_h(cert, seg);
    std::vector<double> x(static_cast<std::size_t>(model.n));
    for (int i = 0; i < model.n; ++i) x[static_cast<std::size_t>(i)] = seg.now(i);
    if (cert.A2 * cert.lv_gamma * dih > cert.A0 || norm2(x) > cert.M) continue;
    ++members;
    sup = std::max(sup, std::exp(p0 * log_V(cert, seg)));
  }
  require(members > 0, "moment bound: no sampled segment lies in C_{V,M}");
  result.m_bar = cert.A0 / cert.gamma_0 * sup;

  double v0 = std::exp(p0 * log_V(cert, initial));
  std::vector<int> face;
  for (int i = 0; i < model.n; ++i)
    if (initial.now(i) > 0.0) face.push_back(i);

  for (double t : times) {
    SimConfig run;
    run.dt = initial.steps() > 0 ? initial.dt() : 0.0;
    run.horizon = t;
    run.burn_in = 0.0;
    run.seed = seed;
    run.record_stride = 1 << 20;
    double sum = 0.0, sum2 = 0.0;
    for (int k = 0; k < replicates; ++k) {
      Trajectory traj = integrate(model, initial, run, face, k);
      double v = std::exp(p0 * log_V(cert, traj.final_segment));
      sum += v;
      sum2 += v * v;
    }
    MomentBoundCheck::Point point;
    point.t = t;
    point.mean = sum / replicates;
    double var = (sum2 - sum * sum / replicates) / std::max(replicates - 1, 1);
    point.se = std::sqrt(std::max(var, 0.0) / replicates);
    point.bound = v0 * std::exp(-cert.gamma_0 * p0 * t) + result.m_bar;
    point.pass = point.mean <= point.bound + 4.0 * point.se;
    result.pass = result.pass && point.pass;
    result.points.push_back(point);
  }
  return result;
}

CertificateSearch find_certificate(const ModelSpec& model, const SegmentSampler& train) {
  CertificateSearch search;
  for (int i = 0; i < model.n; ++i)
    if (!model.kolmogorov[static_cast<std::size_t>(i)]) {
      search.note =
          "no certificate: component '" + model.names[static_cast<std::size_t>(i)] +
          "' has no per-capita form near zero, so the coefficient mass is unbounded on C_+";
      return search;
    }

  const double radius = train.max_radius();
  AssumptionCertificate best;
  double best_a0 = std::numeric_limits<double>::infinity();

  for (double gamma_b : {1e-4, 1e-3, 1e-2}) {
    for (double kappa : {0.01, 0.1, 1.0}) {
      for (double a2 : {1e-3, 1e-2}) {
        AssumptionCertificate cert;
        cert.c = Eigen::VectorXd::Ones(model.n);
        cert.gamma_b = gamma_b;
        cert.gamma_0 = 1e-2;
        cert.A2 = a2;
        cert.lv_gamma = gamma_b / 2.0;
        cert.mu = model.kernels.empty() ? DelayKernel::point(model.r) : model.kernels.front();
        double mu_exp = 0.0;
        for (const auto& atom : cert.mu.atoms)
          mu_exp += atom.weight * std::exp(cert.lv_gamma * atom.lag);
        cert.A1 = 2.0 * a2 * mu_exp;  // keeps A1 > A2 int e^{-gamma s} dmu
        cert.M = 1.05 * radius;
        cert.h = [kappa](std::span<const double> x) {
          double n2 = 0.0;
          for (double v : x) n2 += v * v;
          return 1.0 + kappa * n2;
        };
        cert.h_desc = "1 + " + std::to_string(kappa) + "*|x|^2";

        // synthesize A0 and K_tilde from the training set
        double a0_req = 0.0;
        double ktilde_req = 0.0;
        bool usable = true;
        for (int idx = 0; idx < train.count && usable; ++idx) {
          Segment seg = train.sample(idx, model.n, model.r);
          SegmentView view = seg.view();
          CoefficientSample s = eval_coefficients(model, view);
          double cx = 0.0;
          for (int i = 0; i < model.n; ++i) cx += s.x[static_cast<std::size_t>(i)];
          double denom = 1.0 + cx;
          double t1 = 0.0, t2 = 0.0, mass = 0.0;
          for (int i = 0; i < model.n; ++i) {
            t1 += s.x[static_cast<std::size_t>(i)] * s.drift[static_cast<std::size_t>(i)];
            mass += std::abs(s.drift[static_cast<std::size_t>(i)]) + s.g2[static_cast<std::size_t>(i)];
            for (int j = 0; j < model.n; ++j)
              t2 += s.x[static_cast<std::size_t>(i)] * s.x[static_cast<std::size_t>(j)] * s.cov(i, j);
          }
          double lhs = t1 / denom - 0.5 * t2 / (denom * denom) + gamma_b * mass;
          double hx = cert.h(s.x);
          bool finite = std::isfinite(hx) && std::isfinite(mass);
          double hint = kernel_integral_h(cert.h, cert.mu, view, model.n, &finite);
          if (!finite) {
            usable = false;
            break;
          }
          a0_req = std::max(a0_req, lhs + cert.gamma_0 + cert.A1 * hx - cert.A2 * hint);
          ktilde_req = std::max(ktilde_req, mass / (hx + hint));
        }
        if (!usable) continue;
        double a0 = 1.25 * a0_req + 10.0;
        if (a0 < best_a0) {
          best_a0 = a0;
          cert.A0 = a0;
          cert.K_tilde = 1.25 * ktilde_req + 1.0;
          best = cert;
          search.train_worst_margin = a0_req;
        }
      }
    }
  }
  if (!std::isfinite(best_a0)) {
    search.note = "no certificate: training evaluation produced non-finite coefficients";
    return search;
  }
  search.found = true;
  search.cert = best;
  search.note = "A0 and K_tilde synthesized on the training set with 25% headroom";
  return search;
}

}  // namespace kolsim
