#include "kolsim/model.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kolsim {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::vector<std::string> numbered_names(int n, const std::string& prefix = "") {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i + 1));
  return names;
}

// Shared validation for the Lotka-Volterra interaction tables.
void validate_lv_tables(const Eigen::VectorXd& a, const Eigen::MatrixXd& b,
                        const Eigen::MatrixXd& b_hat, double r) {
  int n = static_cast<int>(a.size());
  require(n >= 1, "lv: empty parameter vector");
  require(b.rows() == n && b.cols() == n && b_hat.rows() == n && b_hat.cols() == n,
          "lv: interaction tables must be n x n");
  require(r >= 0.0, "lv: negative delay");
  for (int i = 0; i < n; ++i) {
    require(a(i) > 0.0, "lv: rates a_i must be positive");
    require(b(i, i) > 0.0, "lv: intra-specific b_ii must be positive");
    for (int j = 0; j < n; ++j) {
      if (i != j) require(b(i, j) >= 0.0, "lv: inter-specific b_ij must be nonnegative");
      require(b_hat(i, j) > -b(i, i), "lv: b_hat_ij must exceed -b_ii");
    }
  }
}

}  // namespace

NoiseSpec NoiseSpec::from_gamma(const Eigen::MatrixXd& g) {
  require(g.rows() == g.cols() && g.rows() >= 1, "noise: gamma must be square");
  NoiseSpec s;
  s.gamma = g;
  s.sigma = g.transpose() * g;
  return s;
}

NoiseSpec NoiseSpec::from_sigma(const Eigen::MatrixXd& m) {
  require(m.rows() == m.cols() && m.rows() >= 1, "noise: sigma must be square");
  require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + m.cwiseAbs().maxCoeff()),
          "noise: sigma must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  require(llt.info() == Eigen::Success, "noise: sigma is not positive definite");
  // sigma = L L^T, so gamma = L^T gives gamma^T gamma = sigma.
  return from_gamma(Eigen::MatrixXd(llt.matrixL().transpose()));
}

NoiseSpec NoiseSpec::identity(int n) { return from_gamma(Eigen::MatrixXd::Identity(n, n)); }

double NoiseSpec::min_sigma_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  return es.eigenvalues().minCoeff();
}

double NoiseSpec::sigma_star() const { return sigma.maxCoeff(); }

void NoiseSpec::require_positive_definite() const {
  require(min_sigma_eigenvalue() > 0.0, "noise: sigma is not positive definite");
}

void CompetitiveLVParams::validate() const {
  validate_lv_tables(a, b, b_hat, r);
  require(noise.dim() == static_cast<int>(a.size()), "lv: noise dimension mismatch");
  noise.require_positive_definite();
}

void PredatorPreyParams::validate() const {
  require(a.size() == 3, "predator-prey: exactly three species (one prey, two predators)");
  validate_lv_tables(a, b, b_hat, r);
  require(noise.dim() == 3, "predator-prey: noise must be 3x3");
  noise.require_positive_definite();
}

void ReplicatorParams::validate() const {
  int n = dim();
  require(n >= 2, "replicator: need at least two strategies");
  require(total > 0.0, "replicator: population size must be positive");
  require(r >= 0.0, "replicator: negative delay");
  for (int i = 0; i < n; ++i) require(sigma_strength(i) >= 0.0, "replicator: sigma_i must be >= 0");
  if (payoffs.empty())
    require(payoff_matrix.rows() == n && payoff_matrix.cols() == n,
            "replicator: payoff matrix must be n x n");
  else
    require(static_cast<int>(payoffs.size()) == n, "replicator: one payoff per strategy");
}

double ReplicatorParams::payoff(int i, std::span<const double> x) const {
  if (!payoffs.empty()) return payoffs[static_cast<std::size_t>(i)](x);
  double v = 0.0;
  for (int j = 0; j < dim(); ++j) v += payoff_matrix(i, j) * x[static_cast<std::size_t>(j)];
  return v;
}

void SirParams::validate() const {
  require(a > 0.0, "sir: recruitment a must be positive");
  require(b1 > 0.0 && b2 > 0.0, "sir: death rates must be positive");
  if (linear()) require(c1 > 0.0 && c2 > 0.0, "sir: incidence rates must be positive");
  require(r >= 0.0, "sir: negative delay");
  require(noise.dim() == 2, "sir: noise must be 2x2");
  noise.require_positive_definite();
}

void ChemostatParams::validate() const {
  require(a >= 0.0 && a < 1.0, "chemostat: a must lie in [0, 1)");
  require(consumers() >= 1, "chemostat: need at least one consumer");
  require(r >= 0.0, "chemostat: negative delay");
  require(noise.dim() == consumers() + 1, "chemostat: noise must be (n+1)x(n+1)");
  noise.require_positive_definite();
  if (uptake.empty())
    for (const auto& u : monod) require(u.m > 0.0 && u.k > 0.0, "chemostat: bad Monod parameters");
}

int ModelSpec::component_index(const std::string& name_in) const {
  for (int i = 0; i < n; ++i)
    if (names[static_cast<std::size_t>(i)] == name_in) return i;
  throw std::invalid_argument("unknown component name: " + name_in);
}

namespace {

// Common skeleton for the models whose noise enters as X_i dE_i with E =
// gamma^T B: constant per-capita diffusion rows G_ij = gamma(j, i).
ModelSpec make_unit_noise_model(int n, double r, const NoiseSpec& noise) {
  ModelSpec m;
  m.n = n;
  m.drivers = n;
  m.r = r;
  m.noise = noise;
  m.kernels = {DelayKernel::point(r)};
  m.kolmogorov.assign(static_cast<std::size_t>(n), true);
  m.names = numbered_names(n);
  m.constant_diffusion = true;
  m.unit_g = true;
  m.diffusion_rows.resize(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m.diffusion_rows[static_cast<std::size_t>(i) * n + j] = noise.gamma(j, i);
  auto rows = m.diffusion_rows;
  m.diffusion_fn = [rows](const SegmentView&, std::span<double> out) {
    std::copy(rows.begin(), rows.end(), out.begin());
  };
  return m;
}

}  // namespace

ModelSpec build_zoo_model(const CompetitiveLVParams& p) {
  p.validate();
  int n = static_cast<int>(p.a.size());
  ModelSpec m = make_unit_noise_model(n, p.r, p.noise);
  m.name = "competitive_lv";
  m.zoo = p;
  double r = p.r;
  Eigen::VectorXd a = p.a;
  Eigen::MatrixXd b = p.b, bh = p.b_hat;
  m.drift_fn = [n, r, a, b, bh](const SegmentView& v, std::span<double> out) {
    for (int i = 0; i < n; ++i) {
      double f = a(i);
      for (int j = 0; j < n; ++j) f -= b(i, j) * v.now(j) + bh(i, j) * v.at(j, r);
      out[static_cast<std::size_t>(i)] = f;
    }
  };
  return m;
}

ModelSpec build_zoo_model(const PredatorPreyParams& p) {
  p.validate();
  ModelSpec m = make_unit_noise_model(3, p.r, p.noise);
  m.name = "predator_prey";
  m.zoo = p;
  double r = p.r;
  Eigen::VectorXd a = p.a;
  Eigen::MatrixXd b = p.b, bh = p.b_hat;
  m.drift_fn = [r, a, b, bh](const SegmentView& v, std::span<double> out) {
    // prey
    double f0 = a(0);
    for (int j = 0; j < 3; ++j) f0 -= b(0, j) * v.now(j) + bh(0, j) * v.at(j, r);
    out[0] = f0;
    // predators: growth from the current prey level, all delayed terms damping
    for (int i = 1; i < 3; ++i) {
      double f = -a(i) + b(i, 0) * v.now(0);
      for (int j = 1; j < 3; ++j) f -= b(i, j) * v.now(j);
      for (int j = 0; j < 3; ++j) f -= bh(i, j) * v.at(j, r);
      out[static_cast<std::size_t>(i)] = f;
    }
  };
  return m;
}

ModelSpec build_zoo_model(const ReplicatorParams& p) {
  p.validate();
  int n = p.dim();
  ModelSpec m;
  m.n = n;
  m.drivers = n;
  m.r = p.r;
  m.noise = NoiseSpec::from_gamma(Eigen::MatrixXd(p.sigma_strength.asDiagonal()));
  m.kernels = {DelayKernel::point(p.r)};
  m.kolmogorov.assign(static_cast<std::size_t>(n), true);
  m.names = numbered_names(n);
  m.name = "replicator";
  m.zoo = p;
  m.simplex_total = p.total;
  double r = p.r;
  double total = p.total;
  ReplicatorParams params = p;
  m.drift_fn = [n, r, total, params](const SegmentView& v, std::span<double> out) {
    std::vector<double> lagged(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) lagged[static_cast<std::size_t>(j)] = v.at(j, r);
    double mean_payoff = 0.0;
    std::vector<double> fit(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      fit[static_cast<std::size_t>(j)] = params.payoff(j, lagged);
      mean_payoff += v.now(j) * fit[static_cast<std::size_t>(j)];
    }
    mean_payoff /= total;
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = fit[static_cast<std::size_t>(i)] - mean_payoff;
  };
  Eigen::VectorXd sig = p.sigma_strength;
  m.diffusion_fn = [n, total, sig](const SegmentView& v, std::span<double> out) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        out[static_cast<std::size_t>(i) * n + j] =
            (i == j ? sig(i) : 0.0) - sig(j) * v.now(j) / total;
  };
  return m;
}

ModelSpec build_zoo_model(const SirParams& p) {
  p.validate();
  ModelSpec m = make_unit_noise_model(2, p.r, p.noise);
  m.name = "sir";
  m.zoo = p;
  m.names = {"S", "I"};
  m.kolmogorov = {false, true};  // S has constant recruitment
  double r = p.r;
  SirParams params = p;
  m.drift_fn = [r, params](const SegmentView& v, std::span<double> out) {
    double s0 = v.now(0), sr = v.at(0, r);
    double i0 = v.now(1), ir = v.at(1, r);
    double inc1, inc2;
    if (params.linear()) {
      inc1 = params.c1 * s0 + params.c2 * sr;
      inc2 = inc1;
    } else {
      inc1 = params.f1(s0, sr, i0, ir);
      inc2 = params.f2(s0, sr, i0, ir);
    }
    out[0] = (params.a - params.b1 * s0 - i0 * inc1) / s0;
    out[1] = -params.b2 + inc2;
  };
  SirParams basis_params = p;
  m.basis.emplace_back("incidence", [r, basis_params](const SegmentView& v) {
    double s0 = v.now(0), sr = v.at(0, r);
    if (basis_params.linear()) return basis_params.c1 * s0 + basis_params.c2 * sr;
    return basis_params.f2(s0, sr, v.now(1), v.at(1, r));
  });
  return m;
}

ModelSpec build_zoo_model(const ChemostatParams& p) {
  p.validate();
  int nc = p.consumers();
  ModelSpec m = make_unit_noise_model(nc + 1, p.r, p.noise);
  m.name = "chemostat";
  m.zoo = p;
  m.names.assign(1, "S");
  for (int i = 1; i <= nc; ++i) m.names.push_back("x" + std::to_string(i));
  m.kolmogorov.assign(static_cast<std::size_t>(nc) + 1, true);
  m.kolmogorov[0] = false;  // nutrient has constant inflow
  double r = p.r;
  ChemostatParams params = p;
  m.drift_fn = [nc, r, params](const SegmentView& v, std::span<double> out) {
    double s0 = v.now(0), sr = v.at(0, r);
    double consumption = 0.0;
    for (int i = 0; i < nc; ++i) consumption += v.now(i + 1) * params.eval_uptake(i, s0);
    out[0] = (1.0 - s0 + params.a * sr - consumption) / s0;
    for (int i = 0; i < nc; ++i) out[static_cast<std::size_t>(i) + 1] = params.eval_uptake(i, sr) - 1.0;
  };
  for (int i = 0; i < nc; ++i) {
    ChemostatParams bp = p;
    m.basis.emplace_back("uptake_" + std::to_string(i + 1), [i, r, bp](const SegmentView& v) {
      return bp.eval_uptake(i, v.at(0, r));
    });
  }
  return m;
}

ModelSpec build_zoo_model(const ZooParams& p) {
  return std::visit(
      [](const auto& params) -> ModelSpec {
        using T = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<T, std::monostate>)
          throw std::invalid_argument("build_zoo_model: empty parameter record");
        else
          return build_zoo_model(params);
      },
      p);
}

ModelSpec restrict_to_face(const ModelSpec& m, std::span<const int> keep) {
  auto mask = std::make_shared<std::vector<unsigned char>>(static_cast<std::size_t>(m.n), 0);
  for (int i : keep) {
    if (i < 0 || i >= m.n) throw std::invalid_argument("restrict_to_face: species out of range");
    (*mask)[static_cast<std::size_t>(i)] = 1;
  }
  if (m.face_mask)
    for (int i = 0; i < m.n; ++i)
      (*mask)[static_cast<std::size_t>(i)] =
          (*mask)[static_cast<std::size_t>(i)] && (*m.face_mask)[static_cast<std::size_t>(i)];
  ModelSpec out = m;
  out.face_mask = std::move(mask);
  return out;
}

std::vector<double> default_face_state(const ModelSpec& m, std::span<const int> face) {
  std::vector<double> x(static_cast<std::size_t>(m.n), 0.0);
  std::vector<unsigned char> on(static_cast<std::size_t>(m.n), 0);
  for (int i : face) on[static_cast<std::size_t>(i)] = 1;
  int on_count = 0;
  for (auto v : on) on_count += v;

  if (const auto* lv = std::get_if<CompetitiveLVParams>(&m.zoo)) {
    for (int i = 0; i < m.n; ++i)
      if (on[static_cast<std::size_t>(i)]) {
        double level = (lv->a(i) - m.sigma(i, i) / 2.0) / (lv->b(i, i) + lv->b_hat(i, i));
        x[static_cast<std::size_t>(i)] = level > 0.0 ? level : 1.0;
      }
    return x;
  }
  if (const auto* pp = std::get_if<PredatorPreyParams>(&m.zoo)) {
    for (int i = 0; i < m.n; ++i)
      if (on[static_cast<std::size_t>(i)]) {
        double level = i == 0 ? (pp->a(0) - m.sigma(0, 0) / 2.0) / (pp->b(0, 0) + pp->b_hat(0, 0)) : 1.0;
        x[static_cast<std::size_t>(i)] = level > 0.0 ? level : 1.0;
      }
    return x;
  }
  if (const auto* rep = std::get_if<ReplicatorParams>(&m.zoo)) {
    if (on_count > 0)
      for (int i = 0; i < m.n; ++i)
        if (on[static_cast<std::size_t>(i)]) x[static_cast<std::size_t>(i)] = rep->total / on_count;
    return x;
  }
  if (const auto* sir = std::get_if<SirParams>(&m.zoo)) {
    if (on[0]) x[0] = sir->a / sir->b1;
    if (on[1]) x[1] = 1.0;
    return x;
  }
  if (const auto* ch = std::get_if<ChemostatParams>(&m.zoo)) {
    if (on[0]) x[0] = 1.0 / (1.0 - ch->a);
    for (int i = 1; i < m.n; ++i)
      if (on[static_cast<std::size_t>(i)]) x[static_cast<std::size_t>(i)] = 1.0;
    return x;
  }
  for (int i = 0; i < m.n; ++i)
    if (on[static_cast<std::size_t>(i)]) x[static_cast<std::size_t>(i)] = 1.0;
  return x;
}

}  // namespace kolsim
