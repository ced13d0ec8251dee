#pragma once

// Mapping between inverse temperatures and interpretable edge-status
// probabilities. Exact for the unconstrained edge-wise Gibbs prior; under an
// in-degree cap the induced flip probability differs slightly, so these are
// heuristics there.

#include <cmath>
#include <optional>
#include <sstream>
#include <string>

#include "jointnet/errors.hpp"

namespace jointnet {

struct ElicitationResult {
  std::optional<double> h_eta;
  std::optional<double> h_lambda;
  std::optional<double> eta;
  std::optional<double> lambda;
  std::optional<double> expected_shd_latent;
  std::optional<double> expected_shd_individual;
};

// Probability that an edge status is kept: 1 / (1 + e^-tau).
inline double h_from_temperature(double tau) {
  if (!(tau >= 0.0)) throw InvalidArgument("inverse temperature must be >= 0");
  return 1.0 / (1.0 + std::exp(-tau));
}

inline double temperature_from_h(double h) {
  if (!(h >= 0.5 && h < 1.0)) throw InvalidArgument("h must lie in [0.5, 1)");
  return std::log(h / (1.0 - h));
}

// Expected number of slot disagreements over all P^2 slots.
inline double expected_shd(int P, double h) {
  if (P <= 0) throw InvalidArgument("P must be positive");
  if (!(h >= 0.0 && h <= 1.0)) throw InvalidArgument("h must be a probability");
  return static_cast<double>(P) * P * (1.0 - h);
}

inline double h_from_expected_shd(int P, double shd) {
  if (P <= 0) throw InvalidArgument("P must be positive");
  const double h = 1.0 - shd / (static_cast<double>(P) * P);
  if (!(h >= 0.5 && h <= 1.0)) throw InvalidArgument("expected SHD must lie in [0, P^2/2]");
  return h;
}

// s1 = p(slot agrees between two individuals) = 1 - 2 h_l + 2 h_l^2
inline double pairwise_agreement(double h_lambda) { return 1.0 - 2.0 * h_lambda + 2.0 * h_lambda * h_lambda; }

// s2 = p(slot agrees between an individual and the prior) = 1 - h_l - h_e + 2 h_l h_e
inline double prior_agreement(double h_eta, double h_lambda) {
  return 1.0 - h_lambda - h_eta + 2.0 * h_lambda * h_eta;
}

// Inverts the two agreement probabilities into (h_eta, h_lambda) and the
// corresponding temperatures. A value of h = 1 maps to an infinite
// temperature, which is left unset.
inline ElicitationResult two_step_elicitation(double s1, double s2) {
  if (!(s1 >= 0.5 && s1 <= 1.0)) throw InvalidArgument("s1 must lie in [0.5, 1]; no real solution otherwise");
  const double h_lambda = 0.5 * (1.0 + std::sqrt(2.0 * s1 - 1.0));

  ElicitationResult r;
  r.h_lambda = h_lambda;
  if (h_lambda < 1.0) r.lambda = temperature_from_h(h_lambda);

  const double slope = 2.0 * h_lambda - 1.0;
  if (slope == 0.0) {
    if (s2 != 0.5) throw InvalidArgument("h_lambda = 0.5 requires s2 = 0.5 (inputs inconsistent)");
    return r;  // h_eta is unidentified
  }
  const double h_eta = (s2 + h_lambda - 1.0) / slope;
  if (!(h_eta >= 0.5 && h_eta < 1.0)) {
    std::ostringstream msg;
    msg << "elicited h_eta = " << h_eta << " lies outside [0.5, 1)";
    throw InvalidArgument(msg.str());
  }
  r.h_eta = h_eta;
  r.eta = temperature_from_h(h_eta);
  return r;
}

// Fills every derivable field from whichever of the temperature or
// probability fields are set.
inline ElicitationResult complete(ElicitationResult r, std::optional<int> P) {
  if (r.lambda && !r.h_lambda) r.h_lambda = h_from_temperature(*r.lambda);
  if (r.h_lambda && !r.lambda && *r.h_lambda < 1.0) r.lambda = temperature_from_h(*r.h_lambda);
  if (r.eta && !r.h_eta) r.h_eta = h_from_temperature(*r.eta);
  if (r.h_eta && !r.eta && *r.h_eta < 1.0) r.eta = temperature_from_h(*r.h_eta);
  if (P) {
    if (r.h_lambda) r.expected_shd_individual = expected_shd(*P, *r.h_lambda);
    if (r.h_eta) r.expected_shd_latent = expected_shd(*P, *r.h_eta);
  }
  return r;
}

}  // namespace jointnet
