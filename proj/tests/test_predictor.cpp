#include <doctest.h>

#include <chrono>

#include <json.hpp>

#include "ada/predictor.hpp"

using namespace ada;

namespace {

PredictionInput with_history(std::initializer_list<Option> sels) {
  PredictionInput in;
  for (Option o : sels) in.history.push_back({o, 0.5, 0.5});
  return in;
}

std::vector<TrialRecordRow> rows_for(const std::vector<Option>& sels, const std::string& pid = "p",
                                     const std::string& gid = "g") {
  std::vector<TrialRecordRow> rows;
  for (std::size_t t = 0; t < sels.size(); ++t) {
    TrialRecordRow r;
    r.participant_id = pid;
    r.game_id = gid;
    r.trial_index = static_cast<int>(t);
    r.option_a = Gamble::make(3, 0, 0.25);
    r.option_b = Gamble::make(4, 0, 0.2);
    r.selection = sels[t];
    r.payoff = 1;
    r.foregone = 0;
    rows.push_back(r);
  }
  return rows;
}

// Records what it was shown.
class Recorder final : public Predictor {
 public:
  std::vector<PredictionInput> seen;
  Prediction predict(const PredictionInput& input) override {
    seen.push_back(input);
    return Prediction::from_prob_a(0.5);
  }
  std::string name() const override { return "recorder"; }
};

}  // namespace

TEST_CASE("baseline predictors") {
  StickyPredictor sticky;
  const auto p = predict(with_history({Option::B, Option::A}), sticky);
  CHECK(p.point == Option::A);
  CHECK(p.prob_a == 1.0);

  FrequencyPredictor freq(1.0);
  const auto f = predict(with_history({Option::A, Option::A, Option::B, Option::A, Option::A}), freq);
  CHECK(f.prob_a == doctest::Approx(0.8));
  CHECK(f.point == Option::A);

  RecencyValuePredictor recency;
  for (Predictor* b : std::initializer_list<Predictor*>{&sticky, &freq}) {
    const auto u = predict(PredictionInput{}, *b);
    CHECK(u.prob_a == 0.5);
    CHECK(u.prob_b == 0.5);
    CHECK(u.point == Option::A);
  }
  // Recency falls back on the described values: equal here.
  PredictionInput ctx;
  ctx.context = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  CHECK(predict(ctx, recency).prob_a == doctest::Approx(0.5));
  ctx.context = {1.0, 0.0, 0.9, 0.5, 0.5, 0.5};
  CHECK(predict(ctx, recency).point == Option::A);
}

TEST_CASE("prediction invariants") {
  CHECK_NOTHROW(validate_prediction(Prediction::from_prob_a(0.3)));
  CHECK(Prediction::from_prob_a(0.3).point == Option::B);
  CHECK_THROWS(validate_prediction(Prediction{0.6, 0.3, Option::A}));
  CHECK_THROWS(validate_prediction(Prediction{0.4, 0.6, Option::A}));
  CHECK_THROWS(validate_prediction(Prediction{1.2, -0.2, Option::A}));
}

TEST_CASE("predictor evaluation") {
  const std::vector<Option> sels{Option::B, Option::A, Option::A, Option::B, Option::B, Option::A};
  ReplayPredictor replay(sels);
  CHECK(evaluate_predictor(replay, rows_for(sels)) == 1.0);

  StickyPredictor sticky;
  const std::vector<Option> constant(20, Option::B);
  // The first trial has no history (tie-break A); every later one is right.
  CHECK(evaluate_predictor(sticky, rows_for(constant)) == doctest::Approx(19.0 / 20.0));

  auto unsorted = rows_for(sels);
  std::swap(unsorted[1], unsorted[2]);
  CHECK_THROWS_AS(evaluate_predictor(sticky, unsorted), std::invalid_argument);

  auto split = rows_for({Option::A, Option::B}, "p", "g1");
  const auto other = rows_for({Option::A}, "p", "g2");
  split.insert(split.begin() + 1, other.begin(), other.end());
  CHECK_THROWS_AS(evaluate_predictor(sticky, split), std::invalid_argument);
}

TEST_CASE("evaluation is causal") {
  std::vector<Option> sels;
  for (int i = 0; i < 12; ++i) sels.push_back(i % 3 ? Option::A : Option::B);
  auto rows = rows_for(sels, "p", "g1");
  const auto more = rows_for(sels, "p", "g2");
  rows.insert(rows.end(), more.begin(), more.end());
  Recorder rec;
  evaluate_predictor(rec, rows, 5);
  REQUIRE(rec.seen.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t t = i % sels.size();
    const auto& hist = rec.seen[i].history;
    CHECK(hist.size() == std::min<std::size_t>(t, 5));
    for (std::size_t k = 0; k < hist.size(); ++k) CHECK(hist[k].selection == sels[t - hist.size() + k]);
  }
}

TEST_CASE("sticky beats chance on synthetic choosers") {
  Rng rng(31);
  const auto bank = generate_ev_matched_bank(60, {0, 4}, {0, 1}, 0.05, rng);
  const ChoicePolicyParams policy{0.3, 0.3};
  std::vector<TrialRecordRow> rows;
  for (int pid = 0; pid < 14; ++pid)
    for (int g = 0; g < 30; ++g) {
      const Game& game = bank[static_cast<std::size_t>((pid * 7 + g) % bank.size())];
      std::vector<ChoiceFeedback> hist;
      for (int t = 0; t < 25; ++t) {
        const Option sel = initial_selection(hist, game, policy, rng);
        const auto o = sample_trial_outcome(game, rng);
        hist.push_back({sel, o.payoff(sel), o.payoff(other(sel))});
        TrialRecordRow r;
        r.participant_id = "p" + std::to_string(pid);
        r.game_id = "g" + std::to_string(g);
        r.trial_index = t;
        r.option_a = game.option_a;
        r.option_b = game.option_b;
        r.selection = sel;
        r.payoff = o.payoff(sel);
        r.foregone = o.payoff(other(sel));
        rows.push_back(r);
      }
    }
  REQUIRE(rows.size() >= 10000);
  StickyPredictor sticky;
  CHECK(evaluate_predictor(sticky, rows) > 0.5);
}

TEST_CASE("bridge protocol encoding") {
  PredictionInput in = with_history({Option::A});
  in.context = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  const auto j = nlohmann::json::parse(encode_bridge_request(in));
  CHECK(j["history"][0]["sel"] == "A");
  CHECK(j["context"].size() == 6);
  CHECK(decode_bridge_response(R"({"prob_a":0.25,"prob_b":0.75})").point == Option::B);
  try {
    decode_bridge_response(R"({"prob_a":0.6,"prob_b":0.3})");
    FAIL("expected schema error");
  } catch (const BridgeError& e) {
    CHECK(e.kind() == BridgeError::Kind::Schema);
    CHECK(e.raw().find("0.6") != std::string::npos);
  }
}

TEST_CASE("external bridge process") {
  const std::string helper = ADA_BRIDGE_HELPER;
  SUBCASE("echo") {
    ExternalPredictor p({helper, "echo"});
    const auto r = predict(PredictionInput{}, p);
    CHECK(r.prob_a == 0.5);
    CHECK(r.point == Option::A);
  }
  SUBCASE("stateless helper repeats last selection") {
    ExternalPredictor p({helper, "last"});
    CHECK(predict(with_history({Option::A, Option::B}), p).point == Option::B);
    CHECK(predict(with_history({Option::B, Option::A}), p).point == Option::A);
  }
  SUBCASE("bad sum is a schema error carrying the payload") {
    ExternalPredictor p({helper, "bad-sum"});
    try {
      p.predict(PredictionInput{});
      FAIL("expected schema error");
    } catch (const BridgeError& e) {
      CHECK(e.kind() == BridgeError::Kind::Schema);
      CHECK(e.raw().find("prob_a") != std::string::npos);
    }
  }
  SUBCASE("garbage is a schema error") {
    ExternalPredictor p({helper, "garbage"});
    try {
      p.predict(PredictionInput{});
      FAIL("expected schema error");
    } catch (const BridgeError& e) {
      CHECK(e.kind() == BridgeError::Kind::Schema);
      CHECK(e.raw() == "not json");
    }
  }
  SUBCASE("silent child times out") {
    ExternalPredictor p({helper, "silent"}, std::chrono::milliseconds(200));
    const auto t0 = std::chrono::steady_clock::now();
    try {
      p.predict(PredictionInput{});
      FAIL("expected timeout");
    } catch (const BridgeError& e) {
      CHECK(e.kind() == BridgeError::Kind::Timeout);
    }
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(3));
  }
  SUBCASE("missing handshake times out") {
    try {
      ExternalPredictor p({helper, "no-hello"}, std::chrono::milliseconds(200));
      FAIL("expected timeout");
    } catch (const BridgeError& e) {
      CHECK(e.kind() == BridgeError::Kind::Timeout);
    }
  }
  SUBCASE("unstartable command is a transport error") {
    try {
      ExternalPredictor p({"/nonexistent/predictor"}, std::chrono::milliseconds(500));
      FAIL("expected transport error");
    } catch (const BridgeError& e) {
      CHECK(e.kind() == BridgeError::Kind::Transport);
    }
  }
}

TEST_CASE("predictor factory") {
  PredictorSpec spec;
  for (const char* id : {"sticky", "frequency", "recency"}) {
    spec.id = id;
    CHECK(make_predictor(spec)->name() == id);
  }
  spec.id = "lstm";
  CHECK_THROWS_AS(make_predictor(spec), std::invalid_argument);
}
