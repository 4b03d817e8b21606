#include <doctest.h>

#include <cmath>

#include "ada/capability.hpp"

using namespace ada;

namespace {

// Hand enumeration of the four joint outcomes for one trial.
struct Triple {
  double a, b, tie;
};
Triple one_trial(const Gamble& A, const Gamble& B) {
  Triple t{0, 0, 0};
  const double pa[2] = {A.p_high, 1 - A.p_high}, va[2] = {A.high_payoff, A.low_payoff};
  const double pb[2] = {B.p_high, 1 - B.p_high}, vb[2] = {B.high_payoff, B.low_payoff};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double p = pa[i] * pb[j];
      if (va[i] > vb[j]) t.a += p;
      else if (vb[j] > va[i]) t.b += p;
      else t.tie += p;
    }
  return t;
}

double choose(int n, int k) {
  double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

TEST_CASE("binomial pmf") {
  CHECK(binomial_pmf(2, 0.5, 1) == doctest::Approx(0.5));
  CHECK(binomial_pmf(25, 0.0, 0) == 1.0);
  CHECK(binomial_pmf(25, 1.0, 25) == 1.0);
  CHECK(binomial_pmf(25, 0.0, 3) == 0.0);
  const double direct = choose(25, 5) * std::pow(0.2, 5) * std::pow(0.8, 20);
  CHECK(binomial_pmf(25, 0.2, 5) == doctest::Approx(direct).epsilon(1e-13));
  for (double p : {0.01, 0.3, 0.77}) {
    double sum = 0;
    for (int k = 0; k <= 25; ++k) sum += binomial_pmf(25, p, k);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-13));
  }
  CHECK_THROWS(binomial_pmf(3, 0.5, 4));
  CHECK_THROWS(binomial_pmf(3, 0.5, -1));
}

TEST_CASE("worked one-trial cell matches hand enumeration") {
  const Game g{"g", Gamble::make(3, 0, 0.25), Gamble::make(4, 0, 0.20), 25};
  const Triple t = one_trial(g.option_a, g.option_b);
  CHECK(t.a == doctest::Approx(0.20));
  CHECK(t.b == doctest::Approx(0.20));
  CHECK(t.tie == doctest::Approx(0.60));
  const auto r = capability(g, 1);
  CHECK(r.win_prob_a == doctest::Approx(t.a).epsilon(1e-15));
  CHECK(r.win_prob_b == doctest::Approx(t.b).epsilon(1e-15));
  CHECK(r.tie_prob == doctest::Approx(t.tie).epsilon(1e-15));
  // Equal win probabilities: the higher expected value (B: 0.8 vs 0.75) wins.
  CHECK(r.optimal_option == Option::B);
  CHECK(r.capability == doctest::Approx(0.20));
}

TEST_CASE("dominance and symmetry") {
  const Game dom{"d", Gamble::make(1, 1, 0.5), Gamble::make(0, 0, 0.5), 25};
  for (int n = 1; n <= 25; ++n) {
    const auto r = capability(dom, n);
    CHECK(r.capability == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.optimal_option == Option::A);
  }
  const Game same{"s", Gamble::make(4, 1, 0.3), Gamble::make(4, 1, 0.3), 25};
  for (int n : {1, 5, 25}) {
    const auto r = capability(same, n);
    CHECK(r.win_prob_a == doctest::Approx(r.win_prob_b).epsilon(1e-12));
    CHECK(r.capability <= 0.5);
    CHECK(r.optimal_option == Option::A);
  }
}

TEST_CASE("probability closure, argmax and oracle agreement on random games") {
  Rng rng(2024);
  std::uniform_real_distribution<double> pay(-2, 5), prob(0, 1);
  for (int i = 0; i < 30; ++i) {
    const Game g{"r", Gamble::make(pay(rng), pay(rng), prob(rng)), Gamble::make(pay(rng), pay(rng), prob(rng)), 25};
    for (int n = 1; n <= 25; ++n) {
      const auto r = capability(g, n);
      CHECK(r.win_prob_a + r.win_prob_b + r.tie_prob == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(r.capability == std::max(r.win_prob_a, r.win_prob_b));
      const double chosen = r.optimal_option == Option::A ? r.win_prob_a : r.win_prob_b;
      const double other_p = r.optimal_option == Option::A ? r.win_prob_b : r.win_prob_a;
      CHECK(chosen >= other_p);
      if (n <= 6) {
        const auto o = capability_oracle(g, n);
        CHECK(std::abs(o.win_prob_a - r.win_prob_a) < 1e-12);
        CHECK(std::abs(o.win_prob_b - r.win_prob_b) < 1e-12);
        CHECK(std::abs(o.tie_prob - r.tie_prob) < 1e-12);
        CHECK(o.optimal_option == r.optimal_option);
      }
    }
  }
}

TEST_CASE("integer payoffs classify exact ties") {
  // 2 x g_A (spread 2) vs 1 x g_B + 1: ties on the lattice must be exact.
  const Game g{"t", Gamble::make(2, 0, 0.5), Gamble::make(2, 1, 0.5), 25};
  for (int n = 1; n <= 8; ++n) {
    const auto r = capability(g, n);
    const auto o = capability_oracle(g, n);
    CHECK(std::abs(r.tie_prob - o.tie_prob) < 1e-12);
    CHECK(r.tie_prob > 0.0);
  }
}

TEST_CASE("raising the optimal option's p never lowers its win probability") {
  Rng rng(77);
  std::uniform_real_distribution<double> pay(0, 4), prob(0.05, 0.9);
  for (int i = 0; i < 40; ++i) {
    Game g{"m", Gamble::make(pay(rng), pay(rng), prob(rng)), Gamble::make(pay(rng), pay(rng), prob(rng)), 25};
    const int n = 1 + i % 10;
    const auto base = capability(g, n);
    Game up = g;
    Gamble& opt = base.optimal_option == Option::A ? up.option_a : up.option_b;
    opt.p_high = std::min(1.0, opt.p_high + 0.1);
    const auto after = capability(up, n);
    const double before_w = base.optimal_option == Option::A ? base.win_prob_a : base.win_prob_b;
    const double after_w = base.optimal_option == Option::A ? after.win_prob_a : after.win_prob_b;
    CHECK(after_w >= before_w - 1e-12);
  }
}

TEST_CASE("remaining trials and oracle limits") {
  const Game g{"g", Gamble::make(3, 0, 0.25), Gamble::make(4, 0, 0.20), 25};
  CHECK(remaining_trials(g, 0) == 25);
  CHECK(remaining_trials(g, 24) == 1);
  CHECK_THROWS(capability_oracle(g, kOracleMaxTrials + 1));
  CHECK_THROWS(capability(g, 0));
  const Game det{"d", Gamble::make(2, 2, 0.3), Gamble::make(1, 1, 0.9), 25};
  CHECK(capability_oracle(det, 3).capability == doctest::Approx(1.0).epsilon(1e-12));
}
