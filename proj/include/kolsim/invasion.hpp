#ifndef KOLSIM_INVASION_HPP
#define KOLSIM_INVASION_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kolsim/measures.hpp"
#include "kolsim/model.hpp"
#include "kolsim/sdde.hpp"

namespace kolsim {

// Estimate of the invasion rate of a species against the ergodic measure on
// a boundary face: the expected per-capita log-growth rate under that
// measure, whose sign separates invasion from extinction.
struct InvasionEstimate {
  std::vector<int> face;
  int species = -1;
  double lambda = 0.0;
  double se = 0.0;
  std::string method;  // "time-average" | "closed-form" | "lyapunov-exponent"
  int replicates = 0;
  double horizon = 0.0;
  std::vector<double> per_replicate;

  int divergent_replicates = 0;
  bool wrong_ergodic_measure = false;  // face run collapsed toward a sub-face
  bool invader_capped = false;         // lyapunov estimator left the linear regime
  bool multimodal_suspected = false;   // replicate dispersion >> within-run SE
  bool valid = true;
  std::string message;
};

// Post-burn-in time average, over replicates, of the per-capita log-growth
// integrand of `species` along the face-restricted trajectory.
InvasionEstimate estimate_lambda(const ModelSpec& model, std::span<const int> face, int species,
                                 const SimConfig& config, const Segment* initial = nullptr);

// Exact arithmetic evaluation of the boundary-face rate where a closed form
// exists for the zoo model; nullopt otherwise.
std::optional<double> closed_form_lambda(const ModelSpec& model, std::span<const int> face,
                                         int species);

// Direct ln X_i(T)/T estimate with the invader seeded at invader_scale and
// the face species taken from their quasi-stationary window.  The invader's
// feedback on the face is retained, so this is a biased cross-check of
// estimate_lambda once the invader becomes macroscopic.
InvasionEstimate lyapunov_exponent(const ModelSpec& model, std::span<const int> face, int species,
                                   const SimConfig& config, double invader_scale,
                                   double invader_cap = 0.1);

}  // namespace kolsim

#endif
