#include "hrc/belief.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <vector>

namespace hrc {

std::string_view to_string(ObservationKind k) {
  switch (k) {
    case ObservationKind::complied_with_assignment: return "complied_with_assignment";
    case ObservationKind::self_selected_task: return "self_selected_task";
    case ObservationKind::assigned_task_to_robot: return "assigned_task_to_robot";
    case ObservationKind::canceled_robot_assignment: return "canceled_robot_assignment";
    case ObservationKind::placement_correct: return "placement_correct";
    case ObservationKind::placement_wrong: return "placement_wrong";
  }
  return "?";
}

bool is_performance_observation(ObservationKind k) {
  return k == ObservationKind::placement_correct || k == ObservationKind::placement_wrong;
}

double default_likelihood(ObservationKind kind, double value) {
  switch (kind) {
    case ObservationKind::complied_with_assignment: return value;
    case ObservationKind::self_selected_task:
    case ObservationKind::assigned_task_to_robot:
    case ObservationKind::canceled_robot_assignment: return 1.0 - value;
    case ObservationKind::placement_wrong: return value;
    case ObservationKind::placement_correct: return 1.0 - value;
  }
  return 0.0;
}

void EstimatorParams::validate() const {
  if (!(likelihood_floor > 0.0 && likelihood_floor <= 0.1))
    throw ContractViolation(
        fmt::format("likelihood floor {} outside (0, 0.1]", likelihood_floor));
  if (!(stay_probability > 0.5 && stay_probability <= 1.0))
    throw ContractViolation(
        fmt::format("stay probability {} outside (0.5, 1]", stay_probability));
}

double EstimatorParams::floored_likelihood(ObservationKind kind, double value) const {
  const double raw = likelihood ? likelihood(kind, value) : default_likelihood(kind, value);
  return std::max(raw, likelihood_floor);
}

namespace {

template <std::size_t N>
std::array<double, N> binomial_pmf(double p) {
  const int n = static_cast<int>(N) - 1;
  std::array<double, N> out{};
  double coeff = 1.0;
  for (int i = 0; i <= n; ++i) {
    out[i] = coeff * std::pow(p, i) * std::pow(1.0 - p, n - i);
    coeff = coeff * (n - i) / (i + 1);
  }
  return out;
}

template <typename Belief>
Belief forward_step(const Belief& belief, BeliefObservation obs, const EstimatorParams& params) {
  params.validate();
  const auto predicted = predict(belief.pmf, params.stay_probability);
  Belief out;
  double total = 0.0;
  for (std::size_t i = 0; i < Belief::size(); ++i) {
    out.pmf[i] = params.floored_likelihood(obs.kind, Belief::support()[i]) * predicted[i];
    total += out.pmf[i];
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw InvariantViolation(
        fmt::format("unnormalizable posterior after {}", to_string(obs.kind)));
  for (double& p : out.pmf) p /= total;
  return out;
}

}  // namespace

PreferenceBelief init_preference_belief() { return {binomial_pmf<6>(0.8)}; }
PerformanceBelief init_performance_belief() { return {binomial_pmf<11>(0.1)}; }

std::vector<double> predict(std::span<const double> pmf, double stay_probability) {
  const std::size_t n = pmf.size();
  std::vector<double> out(n, 0.0);
  if (stay_probability >= 1.0 || n < 2) {
    out.assign(pmf.begin(), pmf.end());
    return out;
  }
  const double move = 0.5 * (1.0 - stay_probability);
  for (std::size_t j = 0; j < n; ++j) {
    out[j] += stay_probability * pmf[j];
    // Moves off either end are rejected and stay in place.
    if (j > 0) out[j - 1] += move * pmf[j]; else out[j] += move * pmf[j];
    if (j + 1 < n) out[j + 1] += move * pmf[j]; else out[j] += move * pmf[j];
  }
  return out;
}

PreferenceBelief update_belief(const PreferenceBelief& belief, BeliefObservation obs,
                               const EstimatorParams& params) {
  if (is_performance_observation(obs.kind))
    throw ContractViolation(
        fmt::format("{} does not inform the following preference", to_string(obs.kind)));
  return forward_step(belief, obs, params);
}

PerformanceBelief update_belief(const PerformanceBelief& belief, BeliefObservation obs,
                                const EstimatorParams& params) {
  if (!is_performance_observation(obs.kind))
    throw ContractViolation(
        fmt::format("{} does not inform error-proneness", to_string(obs.kind)));
  return forward_step(belief, obs, params);
}

void BeliefState::apply(BeliefObservation obs, const EstimatorParams& params) {
  if (is_performance_observation(obs.kind))
    performance = update_belief(performance, obs, params);
  else
    preference = update_belief(preference, obs, params);
}

}  // namespace hrc
