#include "kolsim/report.hpp"

#include <cstdio>

namespace kolsim {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Json face_names(const ModelSpec& model, std::span<const int> face) {
  Json arr = Json::array();
  for (int i : face) arr.push_back(model.names[static_cast<std::size_t>(i)]);
  return arr;
}

namespace {

Json series_json(const BatchSeries& series) {
  Json j;
  j["mean"] = series.mean();
  auto se = series.standard_error();
  if (se.has_value())
    j["se"] = *se;
  else
    j["se"] = nullptr;  // window too short for batch means
  j["count"] = series.count();
  return j;
}

}  // namespace

Json to_json(const ModelSpec& model, const InvasionEstimate& est) {
  Json j;
  j["face"] = face_names(model, est.face);
  j["species"] = est.species >= 0 ? Json(model.names[static_cast<std::size_t>(est.species)]) : Json(nullptr);
  j["lambda"] = est.lambda;
  j["se"] = est.se;
  j["method"] = est.method;
  j["replicates"] = est.replicates;
  j["horizon"] = est.horizon;
  j["per_replicate"] = est.per_replicate;
  Json flags;
  flags["divergent_replicates"] = est.divergent_replicates;
  flags["wrong_ergodic_measure"] = est.wrong_ergodic_measure;
  flags["invader_capped"] = est.invader_capped;
  flags["multimodal_suspected"] = est.multimodal_suspected;
  flags["valid"] = est.valid;
  j["flags"] = flags;
  if (!est.message.empty()) j["message"] = est.message;
  return j;
}

Json to_json(const ModelSpec& model, const OccupationStats& stats) {
  Json j;
  j["window"] = stats.window;
  Json per_species = Json::array();
  for (int i = 0; i < stats.n; ++i) {
    Json s;
    s["name"] = model.names[static_cast<std::size_t>(i)];
    s["on_face"] = stats.on_face[static_cast<std::size_t>(i)] != 0;
    s["mean_now"] = series_json(stats.mean_now[static_cast<std::size_t>(i)]);
    s["mean_lagged"] = series_json(stats.mean_lag[static_cast<std::size_t>(i)]);
    if (stats.integrand_valid[static_cast<std::size_t>(i)])
      s["growth_integrand"] = series_json(stats.integrand[static_cast<std::size_t>(i)]);
    else
      s["growth_integrand"] = nullptr;
    per_species.push_back(s);
  }
  j["species"] = per_species;
  if (!stats.basis.empty()) {
    Json basis;
    for (const auto& [key, series] : stats.basis) basis[key] = series_json(series);
    j["basis"] = basis;
  }
  Json occ = Json::array();
  for (std::size_t k = 0; k < stats.eps_grid.size(); ++k) {
    Json e;
    e["eps"] = stats.eps_grid[k];
    e["fraction"] = stats.face_occupancy[k].mean();
    occ.push_back(e);
  }
  j["face_occupancy"] = occ;
  Json tails = Json::array();
  for (std::size_t k = 0; k < stats.radius_grid.size(); ++k) {
    Json e;
    e["radius"] = stats.radius_grid[k];
    e["fraction"] = stats.tail[k].mean();
    tails.push_back(e);
  }
  j["tail_mass"] = tails;
  return j;
}

Json to_json(const ModelSpec& model, const StationarityReport& report) {
  Json arr = Json::array();
  for (const auto& ps : report.species) {
    Json s;
    s["name"] = model.names[static_cast<std::size_t>(ps.species)];
    s["z"] = ps.z;
    s["se_available"] = ps.se_available;
    s["flagged"] = ps.flagged;
    arr.push_back(s);
  }
  Json j;
  j["species"] = arr;
  j["any_flagged"] = report.any_flagged;
  return j;
}

Json to_json(const ModelSpec& model, const RegimeReport& report) {
  Json j;
  j["model"] = report.model_name;
  j["regime"] = report.regime;
  Json table = Json::array();
  for (const auto& e : report.lambda_table) {
    Json row;
    row["face"] = face_names(model, e.face);
    row["species"] = model.names[static_cast<std::size_t>(e.species)];
    row["lambda"] = e.value;
    row["se"] = e.se;
    row["method"] = e.method;
    row["valid"] = e.valid;
    table.push_back(row);
  }
  j["lambda_table"] = table;
  Json branches = Json::array();
  for (const auto& b : report.branches) {
    Json row;
    row["face"] = face_names(model, b.face);
    row["species"] = model.names[static_cast<std::size_t>(b.species)];
    row["lambda"] = b.value;
    row["se"] = b.se;
    row["method"] = b.method;
    row["sign"] = b.sign;
    branches.push_back(row);
  }
  j["branches"] = branches;
  if (report.total_runs > 0) {
    Json basins = Json::array();
    for (const auto& basin : report.basins) {
      Json row;
      row["face"] = face_names(model, basin.face);
      row["count"] = basin.count;
      row["probability"] = basin.probability;
      row["wilson_95"] = Json::array({basin.wilson_low, basin.wilson_high});
      Json rates = Json::array();
      for (const auto& [species, mean] : basin.mean_rate) {
        Json r;
        r["species"] = model.names[static_cast<std::size_t>(species)];
        r["mean_rate"] = mean;
        r["se"] = basin.rate_se.at(species);
        if (basin.closed_form_rate.count(species))
          r["closed_form"] = basin.closed_form_rate.at(species);
        rates.push_back(r);
      }
      row["extinction_rates"] = rates;
      row["rate_check_passed"] = basin.rate_check_passed;
      basins.push_back(row);
    }
    j["basins"] = basins;
    Json assignments = Json::array();
    for (const auto& outcome : report.outcomes) {
      if (outcome.face.has_value())
        assignments.push_back(face_names(model, *outcome.face));
      else
        assignments.push_back(nullptr);
    }
    j["assignments"] = assignments;
    j["assigned"] = report.assigned;
    j["unassigned"] = report.unassigned;
    j["total_runs"] = report.total_runs;
    j["horizon_too_short"] = report.horizon_too_short;
  }
  return j;
}

Json to_json(const ViolationReport& report) {
  Json j;
  j["assumption"] = report.assumption;
  j["samples"] = report.samples;
  j["violations"] = report.violations;
  j["worst_margin"] = report.worst_margin;
  j["worst_index"] = report.worst_index;
  j["worst_state"] = report.worst_state;
  if (!report.notes.empty()) j["notes"] = report.notes;
  return j;
}

Json to_json(const SpectrumReport& report) {
  Json j;
  j["samples"] = report.samples;
  j["violations"] = report.violations;
  j["min_eigenvalue"] = report.min_eigenvalue;
  j["max_inverse_norm"] = report.max_inverse_norm;
  if (!report.worst_state.empty()) j["worst_state"] = report.worst_state;
  return j;
}

Json to_json(const GeneratorCheck& check) {
  Json j;
  j["estimate"] = check.estimate;
  j["rhs"] = check.rhs;
  j["margin"] = check.margin;
  j["mc_se"] = check.mc_se;
  j["mc_samples"] = check.mc_samples;
  return j;
}

Json to_json(const MomentBoundCheck& check) {
  Json j;
  j["m_bar"] = check.m_bar;
  Json points = Json::array();
  for (const auto& p : check.points) {
    Json row;
    row["t"] = p.t;
    row["mean"] = p.mean;
    row["se"] = p.se;
    row["bound"] = p.bound;
    row["pass"] = p.pass;
    points.push_back(row);
  }
  j["points"] = points;
  j["pass"] = check.pass;
  return j;
}

std::string trajectory_csv(const Trajectory& traj) {
  std::string out = "t";
  for (int i = 0; i < traj.n; ++i) out += ",x" + std::to_string(i + 1);
  out += "\n";
  for (std::size_t s = 0; s < traj.samples(); ++s) {
    out += format_double(traj.times[s]);
    for (int i = 0; i < traj.n; ++i) {
      out += ',';
      out += format_double(traj.state(s, i));
    }
    out += '\n';
  }
  return out;
}

}  // namespace kolsim
