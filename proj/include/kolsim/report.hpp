#ifndef KOLSIM_REPORT_HPP
#define KOLSIM_REPORT_HPP

#include <nlohmann/json.hpp>
#include <string>

#include "kolsim/audit.hpp"
#include "kolsim/classify.hpp"
#include "kolsim/invasion.hpp"
#include "kolsim/measures.hpp"
#include "kolsim/model.hpp"

namespace kolsim {

using Json = nlohmann::ordered_json;

Json face_names(const ModelSpec& model, std::span<const int> face);

Json to_json(const ModelSpec& model, const InvasionEstimate& est);
Json to_json(const ModelSpec& model, const OccupationStats& stats);
Json to_json(const ModelSpec& model, const StationarityReport& report);
Json to_json(const ModelSpec& model, const RegimeReport& report);
Json to_json(const ViolationReport& report);
Json to_json(const SpectrumReport& report);
Json to_json(const GeneratorCheck& check);
Json to_json(const MomentBoundCheck& check);

// Writes `t,x1,...,xn` rows with %.17g numbers and \n line ends.
std::string trajectory_csv(const Trajectory& traj);

std::string format_double(double v);

}  // namespace kolsim

#endif
