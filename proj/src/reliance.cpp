#include "ada/reliance.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ada {

namespace {

void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0,1]");
}

}  // namespace

void OperatorParams::validate() const {
  check_unit(b0, "b0");
  check_unit(b1, "b1");
  check_unit(b2, "b2");
  check_unit(s, "s");
  if (!(theta >= 0.0) || !std::isfinite(theta)) throw std::invalid_argument("theta must be a non-negative real");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw std::invalid_argument("noise_sigma must be >= 0");
  if (!std::isfinite(belief_initial)) throw std::invalid_argument("belief_initial must be finite");
  if (!std::isfinite(preference_initial)) throw std::invalid_argument("preference_initial must be finite");
}

RelianceState RelianceState::initial(const OperatorParams& params) {
  return RelianceState{params.preference_initial, params.belief_initial,
                       kernel::decision(params.preference_initial, params.theta), 0};
}

double step_belief(const RelianceState& state, const OperatorParams& params, double capability, Agreement agreement) {
  if (params.info_mode == InfoMode::CapabilityHidden)
    return kernel::belief_hidden(state.belief, params.b0, params.belief_initial);
  return kernel::belief_visible(state.belief, params.b1, params.b2, capability, to_double(agreement));
}

RelianceState step_preference(const RelianceState& state, const OperatorParams& params, double new_belief,
                              double noise) {
  RelianceState next;
  next.preference = kernel::preference(state.preference, params.s, new_belief, noise);
  next.belief = new_belief;
  next.reliance = kernel::decision(next.preference, params.theta);
  next.step_index = state.step_index + 1;
  return next;
}

RelianceState step_preference(const RelianceState& state, const OperatorParams& params, double new_belief, Rng& rng) {
  std::normal_distribution<double> standard(0.0, 1.0);
  const double z = standard(rng);
  return step_preference(state, params, new_belief, params.noise_sigma * z);
}

double UniformPrior::stddev() const { return width / std::sqrt(12.0); }

double UniformPrior::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return lower + width * unit(rng);
}

PriorSpec PriorSpec::centered(double theta, double s, double b2, double width) {
  PriorSpec p;
  p.theta = {theta - width / 2.0, width};
  p.s = {s - width / 2.0, width};
  p.b2 = {b2 - width / 2.0, width};
  return p;
}

void PriorSpec::validate() const {
  const auto check = [](const UniformPrior& u, const char* name, bool unit_range) {
    if (!std::isfinite(u.lower) || !std::isfinite(u.width) || u.width < 0.0)
      throw std::invalid_argument(std::string("prior ") + name + ": width must be >= 0");
    if (u.lower < 0.0) throw std::invalid_argument(std::string("prior ") + name + ": support below 0");
    if (unit_range && u.upper() > 1.0) throw std::invalid_argument(std::string("prior ") + name + ": support above 1");
  };
  check(b0, "b0", true);
  check(b1, "b1", true);
  check(b2, "b2", true);
  check(s, "s", true);
  check(theta, "theta", false);
}

OperatorParams sample_operator_params(const PriorSpec& priors, Rng& rng, const OperatorParams& base) {
  priors.validate();
  OperatorParams p = base;
  p.b0 = priors.b0.sample(rng);
  p.b1 = priors.b1.sample(rng);
  p.b2 = priors.b2.sample(rng);
  p.s = priors.s.sample(rng);
  p.theta = priors.theta.sample(rng);
  return p;
}

void ChoicePolicyParams::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw std::invalid_argument("temperature must be > 0");
  check_unit(recency_weight, "recency_weight");
}

ValueEstimates recency_values(std::span<const ChoiceFeedback> history, const Gamble& a, const Gamble& b,
                              double recency_weight) {
  ValueEstimates v{a.expected_value(), b.expected_value()};
  for (const auto& h : history) {
    v.a += recency_weight * (h.payoff_of(Option::A) - v.a);
    v.b += recency_weight * (h.payoff_of(Option::B) - v.b);
  }
  return v;
}

double choice_probability_a(std::span<const ChoiceFeedback> history, const Game& game,
                            const ChoicePolicyParams& policy) {
  const auto v = recency_values(history, game.option_a, game.option_b, policy.recency_weight);
  const double x = (v.a - v.b) / policy.temperature;
  // Numerically stable logistic.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Option initial_selection(std::span<const ChoiceFeedback> history, const Game& game, const ChoicePolicyParams& policy,
                         Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  return u < choice_probability_a(history, game, policy) ? Option::A : Option::B;
}

}  // namespace ada
