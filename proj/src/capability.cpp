#include "ada/capability.hpp"

#include <cmath>
#include <stdexcept>

namespace ada {

namespace {

// Relative tolerance used to recognize exact reward ties computed in floating point.
constexpr double kTieTolerance = 1e-9;
constexpr double kProbEqualTolerance = 1e-12;

bool nearly_equal(double x, double y) {
  return std::abs(x - y) <= kTieTolerance * std::max({1.0, std::abs(x), std::abs(y)});
}

// Comparison of cumulative rewards: +1 if A strictly ahead, -1 if B, 0 on a tie.
int compare_rewards(double reward_a, double reward_b) {
  if (nearly_equal(reward_a, reward_b)) return 0;
  return reward_a > reward_b ? 1 : -1;
}

CapabilityResult finish(const Game& game, double win_a, double win_b, double tie) {
  CapabilityResult r;
  r.win_prob_a = win_a;
  r.win_prob_b = win_b;
  r.tie_prob = tie;
  if (std::abs(win_a - win_b) <= kProbEqualTolerance) {
    const double ev_a = game.option_a.expected_value();
    const double ev_b = game.option_b.expected_value();
    r.optimal_option = (ev_b > ev_a && !nearly_equal(ev_a, ev_b)) ? Option::B : Option::A;
  } else {
    r.optimal_option = win_a > win_b ? Option::A : Option::B;
  }
  r.capability = r.optimal_option == Option::A ? win_a : win_b;
  return r;
}

}  // namespace

double binomial_pmf(int n, double p, int k) {
  if (n < 0) throw std::invalid_argument("binomial_pmf: n must be >= 0");
  if (k < 0 || k > n) throw std::invalid_argument("binomial_pmf: k out of range");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binomial_pmf: p out of [0,1]");
  if (p == 0.0) return k == 0 ? 1.0 : 0.0;
  if (p == 1.0) return k == n ? 1.0 : 0.0;
  const double log_choose = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  return std::exp(log_choose + k * std::log(p) + (n - k) * std::log1p(-p));
}

std::vector<double> binomial_pmf_table(int n, double p) {
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) pmf[static_cast<std::size_t>(k)] = binomial_pmf(n, p, k);
  return pmf;
}

CapabilityResult capability(const Game& game, int n_c) {
  if (n_c < 1) throw std::invalid_argument("capability: n_c must be >= 1");
  const Gamble& a = game.option_a;
  const Gamble& b = game.option_b;
  const auto pmf_a = binomial_pmf_table(n_c, a.p_high);
  const auto pmf_b = binomial_pmf_table(n_c, b.p_high);
  const double spread_a = a.spread();
  const double spread_b = b.spread();

  double win_a = 0.0, win_b = 0.0, tie = 0.0;
  for (int gb = 0; gb <= n_c; ++gb) {
    const double pb = pmf_b[static_cast<std::size_t>(gb)];
    if (pb == 0.0) continue;
    // r_A > r_B  <=>  g_A > (n_c (L_B - L_A) + g_B (H_B - L_B)) / (H_A - L_A)
    const double offset = n_c * (b.low_payoff - a.low_payoff) + gb * spread_b;
    for (int ga = 0; ga <= n_c; ++ga) {
      const double pa = pmf_a[static_cast<std::size_t>(ga)];
      if (pa == 0.0) continue;
      int cmp;
      if (spread_a > 0.0) {
        const double threshold = offset / spread_a;
        if (nearly_equal(ga, threshold)) cmp = 0;
        else cmp = ga > threshold ? 1 : -1;
      } else {
        // Zero-spread A: deterministic reward, compare directly.
        cmp = compare_rewards(0.0, offset);
      }
      if (cmp > 0) win_a += pa * pb;
      else if (cmp < 0) win_b += pa * pb;
      else tie += pa * pb;
    }
  }
  return finish(game, win_a, win_b, tie);
}

namespace {

struct SequenceTable {
  std::vector<double> reward;
  std::vector<double> prob;
};

// Cumulative reward and probability of every high/low sequence of length n.
SequenceTable enumerate_sequences(const Gamble& g, int n) {
  const std::size_t count = std::size_t{1} << n;
  SequenceTable t{std::vector<double>(count), std::vector<double>(count)};
  for (std::size_t mask = 0; mask < count; ++mask) {
    double reward = 0.0, prob = 1.0;
    for (int i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) {
        reward += g.high_payoff;
        prob *= g.p_high;
      } else {
        reward += g.low_payoff;
        prob *= 1.0 - g.p_high;
      }
    }
    t.reward[mask] = reward;
    t.prob[mask] = prob;
  }
  return t;
}

}  // namespace

CapabilityResult capability_oracle(const Game& game, int n_c) {
  if (n_c < 1) throw std::invalid_argument("capability_oracle: n_c must be >= 1");
  if (n_c > kOracleMaxTrials) throw std::invalid_argument("capability_oracle: n_c too large for enumeration");
  const auto seq_a = enumerate_sequences(game.option_a, n_c);
  const auto seq_b = enumerate_sequences(game.option_b, n_c);
  double win_a = 0.0, win_b = 0.0, tie = 0.0;
  for (std::size_t i = 0; i < seq_a.reward.size(); ++i) {
    for (std::size_t j = 0; j < seq_b.reward.size(); ++j) {
      const double p = seq_a.prob[i] * seq_b.prob[j];
      switch (compare_rewards(seq_a.reward[i], seq_b.reward[j])) {
        case 1: win_a += p; break;
        case -1: win_b += p; break;
        default: tie += p; break;
      }
    }
  }
  return finish(game, win_a, win_b, tie);
}

}  // namespace ada
