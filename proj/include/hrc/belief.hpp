#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace hrc {

// Support of the following-preference variable: 0 = prefers to lead,
// 1 = prefers to follow.
inline constexpr std::array<double, 6> kPreferenceSupport{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
// Support of the error-proneness variable: 0 = accurate, 1 = error-prone.
inline constexpr std::array<double, 11> kPerformanceSupport{0.0, 0.1, 0.2, 0.3, 0.4, 0.5,
                                                            0.6, 0.7, 0.8, 0.9, 1.0};

class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Probability mass function over a fixed discrete support.
template <std::size_t N, const std::array<double, N>& Support>
struct DiscreteBelief {
  std::array<double, N> pmf{};

  static constexpr const std::array<double, N>& support() { return Support; }
  static constexpr std::size_t size() { return N; }

  double expectation() const {
    double e = 0.0;
    for (std::size_t i = 0; i < N; ++i) e += pmf[i] * Support[i];
    return e;
  }
  bool operator==(const DiscreteBelief&) const = default;
};

using PreferenceBelief = DiscreteBelief<6, kPreferenceSupport>;
using PerformanceBelief = DiscreteBelief<11, kPerformanceSupport>;

enum class ObservationKind {
  complied_with_assignment,
  self_selected_task,
  assigned_task_to_robot,
  canceled_robot_assignment,
  placement_correct,
  placement_wrong,
};

std::string_view to_string(ObservationKind k);
bool is_performance_observation(ObservationKind k);

struct BeliefObservation {
  ObservationKind kind;
  bool operator==(const BeliefObservation&) const = default;
};

// Raw (unfloored) likelihood of `kind` given the support value.
double default_likelihood(ObservationKind kind, double value);

struct EstimatorParams {
  double likelihood_floor = 0.01;
  // Probability of staying on the same support level in the predict step;
  // the rest moves to the two neighbours in equal parts. 1.0 is the identity.
  double stay_probability = 0.8;
  // Empty means default_likelihood.
  std::function<double(ObservationKind, double)> likelihood;

  // Throws ContractViolation when out of range.
  void validate() const;
  double floored_likelihood(ObservationKind kind, double value) const;
};

PreferenceBelief init_preference_belief();
PerformanceBelief init_performance_belief();

// Lazy random walk over neighbouring support levels; mass that would leave
// the support stays put, so the matrix is symmetric.
std::vector<double> predict(std::span<const double> pmf, double stay_probability);

// One forward step: predict, weight by the likelihood, renormalize.
PreferenceBelief update_belief(const PreferenceBelief& belief, BeliefObservation obs,
                               const EstimatorParams& params);
PerformanceBelief update_belief(const PerformanceBelief& belief, BeliefObservation obs,
                                const EstimatorParams& params);

inline double expectation(const PreferenceBelief& b) { return b.expectation(); }
inline double expectation(const PerformanceBelief& b) { return b.expectation(); }

struct BeliefState {
  PreferenceBelief preference = init_preference_belief();
  PerformanceBelief performance = init_performance_belief();

  double expected_follow() const { return preference.expectation(); }
  double expected_error() const { return performance.expectation(); }
  // Routes the observation to the variable it informs.
  void apply(BeliefObservation obs, const EstimatorParams& params);
};

}  // namespace hrc
