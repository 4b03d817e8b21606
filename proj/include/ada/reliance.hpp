#pragma once

// Operator reliance dynamics (decision field theory with agreement bias),
// parameter priors and the synthetic initial-selection policy.

#include <span>

#include "ada/game.hpp"

namespace ada {

enum class InfoMode : std::uint8_t { CapabilityVisible, CapabilityHidden };

enum class Agreement : int { Disagree = -1, Agree = 1 };

constexpr double to_double(Agreement a) { return static_cast<double>(static_cast<int>(a)); }

struct OperatorParams {
  double b0 = 0.03;
  double b1 = 0.03;
  double b2 = 0.03;
  double s = 0.5;
  double theta = 0.6;
  double noise_sigma = 0.02;
  double belief_initial = 0.5;
  double preference_initial = 0.5;
  InfoMode info_mode = InfoMode::CapabilityVisible;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  friend bool operator==(const OperatorParams&, const OperatorParams&) = default;
};

struct RelianceState {
  double preference = 0.5;
  double belief = 0.5;
  int reliance = 0;
  long step_index = 0;

  static RelianceState initial(const OperatorParams& params);
};

// Scalar kernels shared by every stepping path (operator, indicator, batched
// ABC simulation). Kept inline so the batched loop vectorizes.
namespace kernel {

inline double belief_visible(double belief, double b1, double b2, double capability, double agreement) {
  return belief + b1 * (capability - belief) + agreement * b2 * (1.0 - belief);
}

inline double belief_hidden(double belief, double b0, double belief_initial) {
  return belief + b0 * (belief_initial - belief);
}

inline double preference(double previous, double s, double belief, double noise) {
  return (1.0 - s) * previous + s * belief + noise;
}

inline int decision(double preference, double theta) { return preference >= theta ? 1 : 0; }

}  // namespace kernel

double step_belief(const RelianceState& state, const OperatorParams& params, double capability,
                   Agreement agreement);

// Steps with an explicit noise realization.
RelianceState step_preference(const RelianceState& state, const OperatorParams& params,
                              double new_belief, double noise);
// Draws exactly one standard normal from rng and scales it by noise_sigma.
RelianceState step_preference(const RelianceState& state, const OperatorParams& params,
                              double new_belief, Rng& rng);

inline int reliance_decision(double preference, double theta) { return kernel::decision(preference, theta); }

// Uniform prior given as (lower bound, width).
struct UniformPrior {
  double lower = 0.0;
  double width = 0.0;

  double upper() const { return lower + width; }
  double mean() const { return lower + 0.5 * width; }
  double stddev() const;
  double sample(Rng& rng) const;
};

struct PriorSpec {
  UniformPrior b0{0.01, 0.04};
  UniformPrior b1{0.01, 0.04};
  UniformPrior b2{0.01, 0.04};
  UniformPrior s{0.10, 0.80};
  UniformPrior theta{0.50, 0.20};

  static PriorSpec table_defaults() { return {}; }
  // Narrow priors centered on (theta, s, b2); b0 and b1 keep their defaults.
  static PriorSpec centered(double theta, double s, double b2, double width);

  void validate() const;
};

// Draws b0, b1, b2, s, theta (in that order) from priors; every other field
// is copied from base.
OperatorParams sample_operator_params(const PriorSpec& priors, Rng& rng, const OperatorParams& base = {});

struct ChoicePolicyParams {
  double temperature = 0.5;
  double recency_weight = 0.3;

  void validate() const;
};

// What the operator saw after one trial of the current game.
struct ChoiceFeedback {
  Option selection = Option::A;
  double payoff = 0.0;
  double foregone = 0.0;

  double payoff_of(Option o) const { return o == selection ? payoff : foregone; }
};

struct ValueEstimates {
  double a = 0.0;
  double b = 0.0;
};

// Described expected values, then exponential-recency updates from every
// observed payoff of both options.
ValueEstimates recency_values(std::span<const ChoiceFeedback> history, const Gamble& a, const Gamble& b,
                              double recency_weight);

// Softmax probability of picking A.
double choice_probability_a(std::span<const ChoiceFeedback> history, const Game& game,
                            const ChoicePolicyParams& policy);

// Consumes exactly one uniform draw.
Option initial_selection(std::span<const ChoiceFeedback> history, const Game& game,
                         const ChoicePolicyParams& policy, Rng& rng);

}  // namespace ada
