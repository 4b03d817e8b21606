#include <doctest.h>

#include <cmath>

#include "ada/reliance.hpp"

using namespace ada;

namespace {

RelianceState at(double preference, double belief) {
  RelianceState s;
  s.preference = preference;
  s.belief = belief;
  return s;
}

OperatorParams visible(double b1, double b2, double s = 0.5) {
  OperatorParams p;
  p.b1 = b1;
  p.b2 = b2;
  p.s = s;
  p.noise_sigma = 0.0;
  return p;
}

}  // namespace

TEST_CASE("belief update, capability visible") {
  const auto p = visible(0.1, 0.05);
  CHECK(step_belief(at(0.5, 0.5), p, 1.0, Agreement::Agree) == doctest::Approx(0.575));
  CHECK(step_belief(at(0.5, 0.5), p, 1.0, Agreement::Disagree) == doctest::Approx(0.525));
  for (double b1 : {0.0, 0.3, 1.0})
    for (double b2 : {0.0, 0.2, 1.0}) CHECK(step_belief(at(0.5, 1.0), visible(b1, b2), 1.0, Agreement::Agree) == 1.0);
}

TEST_CASE("belief update, capability hidden ignores agreement") {
  OperatorParams p;
  p.b0 = 0.2;
  p.belief_initial = 0.7;
  p.info_mode = InfoMode::CapabilityHidden;
  CHECK(step_belief(at(0.5, 0.5), p, 0.1, Agreement::Agree) == doctest::Approx(0.54));
  CHECK(step_belief(at(0.5, 0.5), p, 0.9, Agreement::Disagree) == doctest::Approx(0.54));
}

TEST_CASE("preference limits") {
  Rng rng(1);
  auto p = visible(0.1, 0.1, 0.0);
  auto next = step_preference(at(0.37, 0.5), p, 0.9, rng);
  CHECK(next.preference == 0.37);
  CHECK(next.belief == 0.9);
  CHECK(next.step_index == 1);
  p.s = 1.0;
  CHECK(step_preference(at(0.37, 0.5), p, 0.81, rng).preference == 0.81);
  p.s = 0.5;
  const auto mid = step_preference(at(0.4, 0.5), p, 0.8, rng);
  CHECK(mid.preference == doctest::Approx(0.6));
  CHECK(mid.reliance == 1);
}

TEST_CASE("threshold rule") {
  CHECK(reliance_decision(0.60, 0.60) == 1);
  CHECK(reliance_decision(0.59, 0.60) == 0);
  CHECK(reliance_decision(-1.0, 0.0) == 0);
  CHECK(reliance_decision(0.2, 0.0) == 1);
}

TEST_CASE("belief converges monotonically to the fixed point") {
  for (int a : {1, -1}) {
    const auto p = visible(0.04, 0.02);
    const double c = 0.7;
    const double ac = a;
    const double fixed = (p.b1 * c + ac * p.b2) / (p.b1 + ac * p.b2);
    RelianceState s = at(0.5, 0.1);
    double gap = std::abs(s.belief - fixed);
    for (int n = 0; n < 1000; ++n) {
      s.belief = step_belief(s, p, c, static_cast<Agreement>(a));
      const double g = std::abs(s.belief - fixed);
      CHECK(g <= gap);
      gap = g;
    }
    CHECK(gap < 1e-6);
  }
}

TEST_CASE("belief stays within [min(B0, C), 1] under agreement") {
  Rng rng(8);
  std::uniform_real_distribution<double> u(0, 1), w(0, 0.5);
  for (int k = 0; k < 200; ++k) {
    const auto p = visible(w(rng), w(rng));
    RelianceState s = at(0.5, u(rng));
    const double lo = s.belief;
    for (int n = 0; n < 50; ++n) {
      const double c = u(rng);
      s.belief = step_belief(s, p, c, Agreement::Agree);
      CHECK(s.belief <= 1.0 + 1e-15);
      CHECK(s.belief >= std::min(lo, 0.0) - 1e-15);
    }
  }
}

TEST_CASE("zero noise trajectories are deterministic") {
  const auto p = visible(0.03, 0.03, 0.5);
  Rng r1(1), r2(999);
  RelianceState a = RelianceState::initial(p), b = a;
  for (int n = 0; n < 100; ++n) {
    const auto ag = n % 3 ? Agreement::Agree : Agreement::Disagree;
    a = step_preference(a, p, step_belief(a, p, 0.6, ag), r1);
    b = step_preference(b, p, step_belief(b, p, 0.6, ag), r2);
    CHECK(a.preference == b.preference);
    CHECK(a.reliance == b.reliance);
  }
}

TEST_CASE("prior sampling") {
  PriorSpec zero;
  zero.b0 = {0.02, 0};
  zero.b1 = {0.03, 0};
  zero.b2 = {0.04, 0};
  zero.s = {0.5, 0};
  zero.theta = {0.6, 0};
  Rng rng(3);
  const auto p = sample_operator_params(zero, rng);
  CHECK(p.b0 == 0.02);
  CHECK(p.b1 == 0.03);
  CHECK(p.b2 == 0.04);
  CHECK(p.s == 0.5);
  CHECK(p.theta == 0.6);

  const PriorSpec table = PriorSpec::table_defaults();
  double sum = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto q = sample_operator_params(table, rng);
    CHECK_NOTHROW(q.validate());
    CHECK((q.theta >= 0.5 && q.theta <= 0.7));
    sum += q.theta;
  }
  CHECK(std::abs(sum / n - 0.60) < 0.01);

  PriorSpec bad;
  bad.s = {0.5, 0.8};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(sample_operator_params(bad, rng), std::invalid_argument);
  bad = PriorSpec{};
  bad.b1 = {0.1, -0.01};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("uniform prior moments") {
  const UniformPrior u{0.5, 0.2};
  CHECK(u.mean() == doctest::Approx(0.6));
  CHECK(u.stddev() == doctest::Approx(0.2 / std::sqrt(12.0)));
  CHECK(u.upper() == doctest::Approx(0.7));
}

TEST_CASE("initial selection policy") {
  const Game equal{"e", Gamble::make(2, 0, 0.5), Gamble::make(1, 1, 0.5), 25};
  for (double t : {0.01, 0.5, 5.0}) CHECK(choice_probability_a({}, equal, {t, 0.3}) == doctest::Approx(0.5));

  const Game better_a{"a", Gamble::make(3, 1, 0.5), Gamble::make(1, 1, 0.5), 25};
  CHECK(choice_probability_a({}, better_a, {1e-4, 0.3}) > 0.999999);

  std::vector<ChoiceFeedback> hist{{Option::A, 1.0, 100.0}};
  const auto v = recency_values(hist, better_a.option_a, better_a.option_b, 1.0);
  CHECK(v.b == 100.0);
  CHECK(v.a == 1.0);
  CHECK(choice_probability_a(hist, better_a, {0.5, 1.0}) < 1e-9);

  Rng rng(12);
  int a_count = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) a_count += initial_selection({}, equal, {0.5, 0.3}, rng) == Option::A;
  CHECK(std::abs(a_count / double(n) - 0.5) < 0.015);

  ChoicePolicyParams bad{0.0, 0.3};
  CHECK_THROWS(bad.validate());
}
