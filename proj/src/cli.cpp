#include "kolsim/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "kolsim/audit.hpp"
#include "kolsim/classify.hpp"
#include "kolsim/invasion.hpp"
#include "kolsim/measures.hpp"
#include "kolsim/report.hpp"
#include "kolsim/sdde.hpp"

namespace kolsim {

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check_keys(const Json& obj, const std::string& path, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError(path + ": unknown key '" + key + "'");
}

const Json& need(const Json& obj, const std::string& path, const std::string& key) {
  if (!obj.contains(key)) throw ConfigError(path + ": missing key '" + key + "'");
  return obj.at(key);
}

double need_number(const Json& obj, const std::string& path, const std::string& key) {
  const Json& v = need(obj, path, key);
  if (!v.is_number()) throw ConfigError(path + "." + key + ": expected a number");
  return v.get<double>();
}

double get_number(const Json& obj, const std::string& path, const std::string& key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(path + "." + key + ": expected a number");
  return v.get<double>();
}

Eigen::VectorXd parse_vector(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a nonempty array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(path + ": expected numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd parse_matrix(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a matrix (array of rows)");
  std::size_t cols = 0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array()) throw ConfigError(path + ": expected a matrix (array of rows)");
    if (i == 0)
      cols = j[i].size();
    else if (j[i].size() != cols)
      throw ConfigError(path + ": ragged matrix");
  }
  Eigen::MatrixXd m(j.size(), cols);
  for (std::size_t i = 0; i < j.size(); ++i)
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) throw ConfigError(path + ": expected numbers");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
    }
  return m;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

NoiseSpec parse_noise(const Json& params, const std::string& path, int n) {
  bool has_gamma = params.contains("gamma");
  bool has_sigma = params.contains("sigma");
  if (has_gamma == has_sigma)
    throw ConfigError(path + ": give exactly one of 'gamma' or 'sigma'");
  Eigen::MatrixXd m = parse_matrix(params.at(has_gamma ? "gamma" : "sigma"), path);
  if (m.rows() != n || m.cols() != n) throw ConfigError(path + ": noise matrix must be n x n");
  NoiseSpec noise = has_gamma ? NoiseSpec::from_gamma(m) : NoiseSpec::from_sigma(m);
  noise.require_positive_definite();
  return noise;
}

// --- model block ------------------------------------------------------

ModelSpec parse_model(const Json& block, Json& echo) {
  check_keys(block, "model", {"name", "params"});
  std::string name = need(block, "model", "name").get<std::string>();
  const Json& params = need(block, "model", "params");
  const std::string path = "model.params";
  echo["name"] = name;

  if (name == "competitive_lv" || name == "predator_prey") {
    check_keys(params, path, {"a", "b", "b_hat", "r", "gamma", "sigma"});
    Eigen::VectorXd a = parse_vector(need(params, path, "a"), path + ".a");
    int n = static_cast<int>(a.size());
    Eigen::MatrixXd b = parse_matrix(need(params, path, "b"), path + ".b");
    Eigen::MatrixXd bh = parse_matrix(need(params, path, "b_hat"), path + ".b_hat");
    double r = need_number(params, path, "r");
    NoiseSpec noise = parse_noise(params, path, n);
    Json pe;
    pe["a"] = std::vector<double>(a.data(), a.data() + a.size());
    pe["b"] = matrix_json(b);
    pe["b_hat"] = matrix_json(bh);
    pe["r"] = r;
    pe["gamma"] = matrix_json(noise.gamma);
    echo["params"] = pe;
    if (name == "competitive_lv")
      return build_zoo_model(CompetitiveLVParams{a, b, bh, r, noise});
    return build_zoo_model(PredatorPreyParams{a, b, bh, r, noise});
  }

  if (name == "replicator") {
    check_keys(params, path, {"total", "payoff", "sigma", "r"});
    ReplicatorParams p;
    p.total = need_number(params, path, "total");
    p.payoff_matrix = parse_matrix(need(params, path, "payoff"), path + ".payoff");
    p.sigma_strength = parse_vector(need(params, path, "sigma"), path + ".sigma");
    p.r = need_number(params, path, "r");
    Json pe;
    pe["total"] = p.total;
    pe["payoff"] = matrix_json(p.payoff_matrix);
    pe["sigma"] = std::vector<double>(p.sigma_strength.data(),
                                      p.sigma_strength.data() + p.sigma_strength.size());
    pe["r"] = p.r;
    echo["params"] = pe;
    return build_zoo_model(p);
  }

  if (name == "sir") {
    check_keys(params, path, {"a", "b1", "b2", "incidence", "r", "gamma", "sigma"});
    SirParams p;
    p.a = need_number(params, path, "a");
    p.b1 = need_number(params, path, "b1");
    p.b2 = need_number(params, path, "b2");
    p.r = need_number(params, path, "r");
    p.noise = parse_noise(params, path, 2);
    const Json& inc = need(params, path, "incidence");
    check_keys(inc, path + ".incidence", {"type", "c1", "c2", "alpha"});
    std::string type = need(inc, path + ".incidence", "type").get<std::string>();
    Json ie;
    ie["type"] = type;
    if (type == "linear") {
      p.c1 = need_number(inc, path + ".incidence", "c1");
      p.c2 = need_number(inc, path + ".incidence", "c2");
      ie["c1"] = p.c1;
      ie["c2"] = p.c2;
    } else if (type == "saturated") {
      // c-weighted susceptible mass damped by the current infected level
      double c1 = need_number(inc, path + ".incidence", "c1");
      double c2 = need_number(inc, path + ".incidence", "c2");
      double alpha = need_number(inc, path + ".incidence", "alpha");
      if (alpha < 0.0) throw ConfigError(path + ".incidence.alpha: must be >= 0");
      auto f = [c1, c2, alpha](double s0, double sr, double i0, double) {
        return (c1 * s0 + c2 * sr) / (1.0 + alpha * i0);
      };
      p.f1 = f;
      p.f2 = f;
      ie["c1"] = c1;
      ie["c2"] = c2;
      ie["alpha"] = alpha;
    } else {
      throw ConfigError(path + ".incidence.type: expected 'linear' or 'saturated'");
    }
    Json pe;
    pe["a"] = p.a;
    pe["b1"] = p.b1;
    pe["b2"] = p.b2;
    pe["incidence"] = ie;
    pe["r"] = p.r;
    pe["gamma"] = matrix_json(p.noise.gamma);
    echo["params"] = pe;
    return build_zoo_model(p);
  }

  if (name == "chemostat") {
    check_keys(params, path, {"a", "uptake", "r", "gamma", "sigma"});
    ChemostatParams p;
    p.a = need_number(params, path, "a");
    p.r = need_number(params, path, "r");
    const Json& uptake = need(params, path, "uptake");
    if (!uptake.is_array() || uptake.empty())
      throw ConfigError(path + ".uptake: expected a nonempty array");
    Json ue = Json::array();
    for (const auto& u : uptake) {
      check_keys(u, path + ".uptake[]", {"type", "m", "k"});
      if (need(u, path + ".uptake[]", "type").get<std::string>() != "monod")
        throw ConfigError(path + ".uptake[].type: expected 'monod'");
      MonodUptake mu;
      mu.m = need_number(u, path + ".uptake[]", "m");
      mu.k = need_number(u, path + ".uptake[]", "k");
      p.monod.push_back(mu);
      Json e;
      e["type"] = "monod";
      e["m"] = mu.m;
      e["k"] = mu.k;
      ue.push_back(e);
    }
    p.noise = parse_noise(params, path, p.consumers() + 1);
    Json pe;
    pe["a"] = p.a;
    pe["uptake"] = ue;
    pe["r"] = p.r;
    pe["gamma"] = matrix_json(p.noise.gamma);
    echo["params"] = pe;
    return build_zoo_model(p);
  }

  throw ConfigError("model.name: unknown model '" + name + "'");
}

// --- sim block --------------------------------------------------------

SimConfig parse_sim(const Json& block, const ModelSpec& model, int threads, Json& echo) {
  check_keys(block, "sim",
             {"seed", "dt", "horizon", "burn_in", "replicates", "extinction_floor_log",
              "record_stride", "divergence_ceiling_log"});
  SimConfig config;
  const Json& seed = need(block, "sim", "seed");  // mandatory: no entropy defaults
  if (!seed.is_number_unsigned()) throw ConfigError("sim.seed: expected a nonnegative integer");
  config.seed = seed.get<std::uint64_t>();
  config.dt = get_number(block, "sim", "dt", 0.0);
  config.horizon = get_number(block, "sim", "horizon", 1000.0);
  config.burn_in = get_number(block, "sim", "burn_in", 0.2);
  config.replicates = static_cast<int>(get_number(block, "sim", "replicates", 1.0));
  config.extinction_floor_log = get_number(block, "sim", "extinction_floor_log", -23.0);
  config.record_stride = static_cast<int>(get_number(block, "sim", "record_stride", 1.0));
  config.divergence_ceiling_log = get_number(block, "sim", "divergence_ceiling_log", 50.0);
  config.threads = threads;
  config.dt = config.resolved_dt(model.r);
  config.validate(model.r);
  echo["seed"] = config.seed;
  echo["dt"] = config.dt;
  echo["horizon"] = config.horizon;
  echo["burn_in"] = config.burn_in;
  echo["replicates"] = config.replicates;
  echo["extinction_floor_log"] = config.extinction_floor_log;
  echo["record_stride"] = config.record_stride;
  echo["divergence_ceiling_log"] = config.divergence_ceiling_log;
  return config;
}

std::vector<int> parse_face(const Json& arr, const ModelSpec& model, const std::string& path) {
  if (!arr.is_array()) throw ConfigError(path + ": expected an array of component names");
  std::vector<int> face;
  for (const auto& item : arr) {
    if (!item.is_string()) throw ConfigError(path + ": expected component names");
    face.push_back(model.component_index(item.get<std::string>()));
  }
  std::sort(face.begin(), face.end());
  face.erase(std::unique(face.begin(), face.end()), face.end());
  return face;
}

std::vector<double> parse_initial(const Json& arr, const ModelSpec& model, const std::string& path) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != model.n)
    throw ConfigError(path + ": expected one value per component");
  std::vector<double> x;
  for (const auto& v : arr) {
    if (!v.is_number()) throw ConfigError(path + ": expected numbers");
    x.push_back(v.get<double>());
  }
  return x;
}

void write_file(const std::string& file_path, const std::string& content) {
  std::filesystem::path p(file_path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file_path);
  out << content;
}

struct OutputPaths {
  std::string report_json;
  std::string trajectory_csv;
};

OutputPaths parse_output(const Json& cfg, Json& echo) {
  OutputPaths paths;
  if (!cfg.contains("output")) return paths;
  const Json& block = cfg.at("output");
  check_keys(block, "output", {"report_json", "trajectory_csv"});
  if (block.contains("report_json")) paths.report_json = block.at("report_json").get<std::string>();
  if (block.contains("trajectory_csv"))
    paths.trajectory_csv = block.at("trajectory_csv").get<std::string>();
  echo = block;
  return paths;
}

// --- audit parsing ----------------------------------------------------

SegmentSampler parse_sampler(const Json& block, const std::string& path, Json& echo) {
  check_keys(block, path, {"radius_grid", "count", "seed", "max_slope", "knots", "grid_steps"});
  SegmentSampler sampler;
  if (block.contains("radius_grid")) {
    sampler.radius_grid.clear();
    for (const auto& v : block.at("radius_grid")) sampler.radius_grid.push_back(v.get<double>());
  }
  sampler.count = static_cast<int>(get_number(block, path, "count", 1000.0));
  sampler.seed = static_cast<std::uint64_t>(get_number(block, path, "seed", 1.0));
  sampler.max_slope = get_number(block, path, "max_slope", 10.0);
  sampler.knots = static_cast<int>(get_number(block, path, "knots", 9.0));
  sampler.grid_steps = static_cast<int>(get_number(block, path, "grid_steps", 64.0));
  echo["radius_grid"] = sampler.radius_grid;
  echo["count"] = sampler.count;
  echo["seed"] = sampler.seed;
  echo["max_slope"] = sampler.max_slope;
  echo["knots"] = sampler.knots;
  echo["grid_steps"] = sampler.grid_steps;
  return sampler;
}

ScalarField parse_h(const Json& block, const std::string& path, Json& echo) {
  check_keys(block, path, {"type", "kappa"});
  std::string type = need(block, path, "type").get<std::string>();
  echo["type"] = type;
  if (type == "one") return [](std::span<const double>) { return 1.0; };
  double kappa = need_number(block, path, "kappa");
  echo["kappa"] = kappa;
  if (type == "quadratic")
    return [kappa](std::span<const double> x) {
      double n2 = 0.0;
      for (double v : x) n2 += v * v;
      return 1.0 + kappa * n2;
    };
  if (type == "linear")
    return [kappa](std::span<const double> x) {
      double s = 0.0;
      for (double v : x) s += v;
      return 1.0 + kappa * s;
    };
  throw ConfigError(path + ".type: expected 'one', 'linear' or 'quadratic'");
}

AssumptionCertificate parse_certificate(const Json& block, const ModelSpec& model, Json& echo) {
  check_keys(block, "task.certificate",
             {"c", "gamma_b", "gamma_0", "A0", "A1", "A2", "M", "h", "mu", "K_tilde", "b1", "b2",
              "h1", "lv_gamma", "p0", "rho"});
  AssumptionCertificate cert;
  cert.c = block.contains("c") ? parse_vector(block.at("c"), "task.certificate.c")
                               : Eigen::VectorXd::Ones(model.n);
  cert.gamma_b = need_number(block, "task.certificate", "gamma_b");
  cert.gamma_0 = need_number(block, "task.certificate", "gamma_0");
  cert.A0 = need_number(block, "task.certificate", "A0");
  cert.A1 = need_number(block, "task.certificate", "A1");
  cert.A2 = need_number(block, "task.certificate", "A2");
  cert.M = need_number(block, "task.certificate", "M");
  Json he;
  cert.h = parse_h(need(block, "task.certificate", "h"), "task.certificate.h", he);
  cert.h_desc = he.dump();
  if (block.contains("mu")) {
    const Json& mu = block.at("mu");
    check_keys(mu, "task.certificate.mu", {"lags", "weights"});
    DelayKernel kernel;
    kernel.atoms.clear();
    const Json& lags = need(mu, "task.certificate.mu", "lags");
    const Json& weights = need(mu, "task.certificate.mu", "weights");
    if (lags.size() != weights.size())
      throw ConfigError("task.certificate.mu: lags/weights length mismatch");
    for (std::size_t k = 0; k < lags.size(); ++k)
      kernel.atoms.push_back({lags[k].get<double>(), weights[k].get<double>()});
    kernel.validate(model.r > 0.0 ? model.r : 0.0);
    cert.mu = kernel;
  } else {
    cert.mu = DelayKernel::point(model.r);
  }
  if (block.contains("K_tilde")) cert.K_tilde = block.at("K_tilde").get<double>();
  if (block.contains("h1")) {
    Json h1e;
    cert.h1 = parse_h(block.at("h1"), "task.certificate.h1", h1e);
    cert.b1 = need_number(block, "task.certificate", "b1");
    cert.b2 = need_number(block, "task.certificate", "b2");
    cert.mu1 = cert.mu;
  }
  cert.lv_gamma = get_number(block, "task.certificate", "lv_gamma", cert.gamma_b / 2.0);
  cert.p0 = get_number(block, "task.certificate", "p0", 0.0);
  if (block.contains("rho")) cert.rho = parse_vector(block.at("rho"), "task.certificate.rho");

  echo["c"] = std::vector<double>(cert.c.data(), cert.c.data() + cert.c.size());
  echo["gamma_b"] = cert.gamma_b;
  echo["gamma_0"] = cert.gamma_0;
  echo["A0"] = cert.A0;
  echo["A1"] = cert.A1;
  echo["A2"] = cert.A2;
  echo["M"] = cert.M;
  echo["h"] = he;
  Json mue;
  Json lags = Json::array(), weights = Json::array();
  for (const auto& atom : cert.mu.atoms) {
    lags.push_back(atom.lag);
    weights.push_back(atom.weight);
  }
  mue["lags"] = lags;
  mue["weights"] = weights;
  echo["mu"] = mue;
  if (cert.K_tilde) echo["K_tilde"] = *cert.K_tilde;
  echo["lv_gamma"] = cert.lv_gamma;
  if (cert.p0 > 0.0) echo["p0"] = cert.p0;
  return cert;
}

Json certificate_echo(const AssumptionCertificate& cert) {
  Json e;
  e["c"] = std::vector<double>(cert.c.data(), cert.c.data() + cert.c.size());
  e["gamma_b"] = cert.gamma_b;
  e["gamma_0"] = cert.gamma_0;
  e["A0"] = cert.A0;
  e["A1"] = cert.A1;
  e["A2"] = cert.A2;
  e["M"] = cert.M;
  e["h"] = cert.h_desc;
  if (cert.K_tilde) e["K_tilde"] = *cert.K_tilde;
  e["lv_gamma"] = cert.lv_gamma;
  return e;
}

// --- task runners -----------------------------------------------------

int run_simulate(const ModelSpec& model, const SimConfig& config, const Json& task,
                 const OutputPaths& out, Json& report, Json& task_echo) {
  check_keys(task, "task", {"face", "initial"});
  std::vector<int> face = task.contains("face") ? parse_face(task.at("face"), model, "task.face")
                                                : full_face(model);
  std::vector<double> start = task.contains("initial")
                                  ? parse_initial(task.at("initial"), model, "task.initial")
                                  : default_face_state(model, face);
  task_echo["face"] = face_names(model, face);
  task_echo["initial"] = start;

  Segment initial = make_initial_segment(model, config, start, face);
  std::vector<Trajectory> trajectories(static_cast<std::size_t>(config.replicates));
  parallel_for(config.replicates, config.threads, [&](int k) {
    trajectories[static_cast<std::size_t>(k)] = integrate(model, initial, config, face, k);
  });

  for (const auto& traj : trajectories)
    if (traj.status != RunStatus::ok)
      throw NumericalAbort(traj.status == RunStatus::diverged
                               ? "trajectory diverged (ln X exceeded the ceiling) for component " +
                                     model.names[static_cast<std::size_t>(traj.fault_species)]
                               : "non-finite coefficient for component " +
                                     model.names[static_cast<std::size_t>(traj.fault_species)]);

  OccupationStats merged;
  for (const auto& traj : trajectories) merged.merge(accumulate(model, traj, config));
  report["occupation"] = to_json(model, merged);
  report["stationarity"] = to_json(model, stationarity_diagnostic(merged));
  if (model.simplex_total > 0.0) {
    double defect = 0.0;
    for (const auto& traj : trajectories) defect = std::max(defect, traj.max_simplex_defect);
    report["max_simplex_defect"] = defect;
  }
  if (!out.trajectory_csv.empty()) write_file(out.trajectory_csv, trajectory_csv(trajectories[0]));
  return 0;
}

int run_invasion(const ModelSpec& model, const SimConfig& config, const Json& task,
                 bool closed_form_flag, Json& report, Json& task_echo) {
  check_keys(task, "task", {"face", "species", "method", "invader_scale", "invader_cap", "initial"});
  std::vector<int> face = parse_face(need(task, "task", "face"), model, "task.face");
  int species = model.component_index(need(task, "task", "species").get<std::string>());
  std::string method = task.contains("method") ? task.at("method").get<std::string>() : "time-average";
  task_echo["face"] = face_names(model, face);
  task_echo["species"] = model.names[static_cast<std::size_t>(species)];
  task_echo["method"] = method;

  if (closed_form_flag) {
    auto cf = closed_form_lambda(model, face, species);
    if (!cf.has_value())
      throw ConfigError("no closed form for this (model, face, species); drop --closed-form");
    InvasionEstimate est;
    est.face = face;
    est.species = species;
    est.lambda = *cf;
    est.se = 0.0;
    est.method = "closed-form";
    report["result"] = to_json(model, est);
    return 0;
  }

  std::optional<Segment> start;
  if (task.contains("initial")) {
    std::vector<double> x = parse_initial(task.at("initial"), model, "task.initial");
    start = make_initial_segment(model, config, x, face);
    task_echo["initial"] = x;
  }

  InvasionEstimate est;
  if (method == "time-average") {
    est = estimate_lambda(model, face, species, config, start ? &*start : nullptr);
  } else if (method == "lyapunov") {
    double scale = get_number(task, "task", "invader_scale", 1e-6);
    double cap = get_number(task, "task", "invader_cap", 0.1);
    task_echo["invader_scale"] = scale;
    task_echo["invader_cap"] = cap;
    est = lyapunov_exponent(model, face, species, config, scale, cap);
  } else {
    throw ConfigError("task.method: expected 'time-average' or 'lyapunov'");
  }
  if (!est.valid) throw NumericalAbort("invasion estimate unusable: " + est.message);
  auto cf = closed_form_lambda(model, face, species);
  report["result"] = to_json(model, est);
  if (cf.has_value()) report["closed_form"] = *cf;
  return 0;
}

int run_classify(const ModelSpec& model, const SimConfig& config, const Json& task, bool strict,
                 Json& report, Json& task_echo) {
  check_keys(task, "task", {"initial", "basins", "use_closed_forms", "occupancy_threshold"});
  ClassifyOptions opts;
  opts.run_basins = !task.contains("basins") || task.at("basins").get<bool>();
  if (task.contains("use_closed_forms")) opts.use_closed_forms = task.at("use_closed_forms").get<bool>();
  opts.occupancy_threshold = get_number(task, "task", "occupancy_threshold", 0.95);
  if (task.contains("initial")) opts.initial = parse_initial(task.at("initial"), model, "task.initial");
  task_echo["basins"] = opts.run_basins;
  task_echo["use_closed_forms"] = opts.use_closed_forms;
  task_echo["occupancy_threshold"] = opts.occupancy_threshold;
  if (!opts.initial.empty()) task_echo["initial"] = opts.initial;

  RegimeReport regime = classify_regime(model, config, opts);
  report["result"] = to_json(model, regime);
  if (strict && regime.regime == "inconclusive") return 4;
  return 0;
}

int run_audit(const ModelSpec& model, const SimConfig& config, const Json& task,
              const OutputPaths&, Json& report, Json& task_echo) {
  check_keys(task, "task",
             {"checks", "sampler", "certificate", "grid_search", "eps", "radius", "mc_samples",
              "initial", "times", "moment_replicates"});
  Json sampler_echo;
  SegmentSampler sampler = task.contains("sampler")
                               ? parse_sampler(task.at("sampler"), "task.sampler", sampler_echo)
                               : parse_sampler(Json::object(), "task.sampler", sampler_echo);
  task_echo["sampler"] = sampler_echo;

  AssumptionCertificate cert;
  bool have_cert = false;
  if (task.contains("grid_search") && task.at("grid_search").get<bool>()) {
    SegmentSampler train = sampler;
    train.seed = sampler.seed + 1;  // synthesize on fresh draws, audit on the configured set
    CertificateSearch search = find_certificate(model, train);
    report["grid_search"] = Json{{"found", search.found}, {"note", search.note}};
    if (!search.found) throw NumericalAbort("certificate search failed: " + search.note);
    cert = search.cert;
    have_cert = true;
    report["certificate"] = certificate_echo(cert);
    task_echo["grid_search"] = true;
  } else if (task.contains("certificate")) {
    Json cert_echo;
    cert = parse_certificate(task.at("certificate"), model, cert_echo);
    have_cert = true;
    task_echo["certificate"] = cert_echo;
  }

  std::vector<std::string> checks;
  if (task.contains("checks"))
    for (const auto& c : task.at("checks")) checks.push_back(c.get<std::string>());
  else
    checks = {"drift", "growth", "nondegeneracy"};
  task_echo["checks"] = checks;

  Json results = Json::array();
  for (const std::string& check : checks) {
    if (check == "drift" || check == "growth") {
      if (!have_cert) throw ConfigError("audit: '" + check + "' needs a certificate or grid_search");
      ViolationReport vr = check == "drift" ? check_drift_condition(model, cert, sampler)
                                            : check_growth_condition(model, cert, sampler);
      results.push_back(to_json(vr));
    } else if (check == "nondegeneracy") {
      double eps = get_number(task, "task", "eps", 0.1);
      double radius = get_number(task, "task", "radius", 10.0);
      Json j = to_json(check_nondegeneracy(model, sampler, eps, radius));
      j["assumption"] = "noise-nondegeneracy";
      j["eps"] = eps;
      j["radius"] = radius;
      results.push_back(j);
    } else if (check == "generator" || check == "moment") {
      if (!have_cert) throw ConfigError("audit: '" + check + "' needs a certificate or grid_search");
      std::vector<double> start = task.contains("initial")
                                      ? parse_initial(task.at("initial"), model, "task.initial")
                                      : default_face_state(model, full_face(model));
      Segment seg = make_initial_segment(model, config, start, full_face(model));
      if (check == "generator") {
        int mc = static_cast<int>(get_number(task, "task", "mc_samples", 1000.0));
        Json j = to_json(check_generator_bound(model, cert, seg, config.resolved_dt(model.r), mc,
                                               config.seed));
        j["assumption"] = "generator-drift-bound";
        results.push_back(j);
      } else {
        std::vector<double> times;
        if (task.contains("times"))
          for (const auto& t : task.at("times")) times.push_back(t.get<double>());
        else
          times = {model.r > 0 ? model.r : 1.0, 2.0 * (model.r > 0 ? model.r : 1.0)};
        int reps = static_cast<int>(get_number(task, "task", "moment_replicates", 64.0));
        Json j = to_json(check_moment_bound(model, cert, seg, times, reps, config.seed, sampler));
        j["assumption"] = "moment-decay-bound";
        results.push_back(j);
      }
    } else {
      throw ConfigError("audit: unknown check '" + check + "'");
    }
  }
  report["audits"] = results;
  return 0;
}

int dispatch(const std::string& subcommand, const std::string& config_path, bool strict,
             bool closed_form_flag, int threads) {
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "error: cannot read config " << config_path << "\n";
    return 2;
  }
  Json cfg;
  try {
    cfg = Json::parse(in);
  } catch (const std::exception& e) {
    std::cerr << "error: config parse: " << e.what() << "\n";
    return 2;
  }

  try {
    check_keys(cfg, "config", {"schema", "model", "sim", "task", "output"});
    if (!cfg.contains("schema") || !cfg.at("schema").is_number_integer() ||
        cfg.at("schema").get<int>() != 1)
      throw ConfigError("config: expected \"schema\": 1");

    Json echo;
    echo["schema"] = 1;
    Json model_echo;
    ModelSpec model = parse_model(need(cfg, "config", "model"), model_echo);
    echo["model"] = model_echo;
    Json sim_echo;
    SimConfig config = parse_sim(need(cfg, "config", "sim"), model, threads, sim_echo);
    echo["sim"] = sim_echo;
    Json task = cfg.contains("task") ? cfg.at("task") : Json::object();
    Json output_echo = Json::object();
    OutputPaths out = parse_output(cfg, output_echo);

    Json report;
    report["schema"] = 1;
    report["task"] = subcommand;
    Json task_echo = Json::object();

    int code = 0;
    if (subcommand == "simulate")
      code = run_simulate(model, config, task, out, report, task_echo);
    else if (subcommand == "invasion")
      code = run_invasion(model, config, task, closed_form_flag, report, task_echo);
    else if (subcommand == "classify")
      code = run_classify(model, config, task, strict, report, task_echo);
    else
      code = run_audit(model, config, task, out, report, task_echo);

    echo["task"] = task_echo;
    echo["output"] = output_echo;
    report["config"] = echo;
    std::string serialized = report.dump(2) + "\n";
    if (!out.report_json.empty())
      write_file(out.report_json, serialized);
    else
      std::cout << serialized;
    return code;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalAbort& e) {
    std::cerr << "abort: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int cli_run(int argc, const char* const* argv) {
  CLI::App app{"Simulation laboratory for stochastic delay Kolmogorov systems"};
  app.require_subcommand(1);

  std::string config_path;
  bool strict = false;
  bool closed_form = false;
  int threads = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_flag("--strict", strict, "exit 4 on inconclusive classification");
    sub->add_option("--threads", threads, "cap on concurrent replicates");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "integrate and record occupation statistics");
  add_common(simulate);
  CLI::App* invasion = app.add_subcommand("invasion", "estimate a boundary-face invasion rate");
  add_common(invasion);
  invasion->add_flag("--closed-form", closed_form, "use the analytic rate where available");
  CLI::App* classify = app.add_subcommand("classify", "regime label and basin probabilities");
  add_common(classify);
  CLI::App* audit = app.add_subcommand("audit", "numerical checks of the standing assumptions");
  add_common(audit);

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  std::string sub;
  if (simulate->parsed()) sub = "simulate";
  if (invasion->parsed()) sub = "invasion";
  if (classify->parsed()) sub = "classify";
  if (audit->parsed()) sub = "audit";
  if (threads < 1) threads = 1;
  return dispatch(sub, config_path, strict, closed_form, threads);
}

}  // namespace kolsim
