#pragma once

#include <vector>

#include "ada/game.hpp"

namespace ada {

// Probability that each option's cumulative reward over the remaining n_c
// trials strictly exceeds the other's, and the resulting optimal option.
struct CapabilityResult {
  double capability = 0.0;
  Option optimal_option = Option::A;
  double win_prob_a = 0.0;
  double win_prob_b = 0.0;
  double tie_prob = 0.0;
};

double binomial_pmf(int n, double p, int k);
// Full pmf over k = 0..n.
std::vector<double> binomial_pmf_table(int n, double p);

// Exact double sum over the (n_c+1)^2 joint high-outcome counts.
CapabilityResult capability(const Game& game, int n_c);

// Brute-force enumeration of all 2^(2 n_c) joint high/low sequences.
inline constexpr int kOracleMaxTrials = 12;
CapabilityResult capability_oracle(const Game& game, int n_c);

// Remaining trials at zero-based trial n of a game.
inline int remaining_trials(const Game& game, int trial) { return game.trials - trial; }

}  // namespace ada
