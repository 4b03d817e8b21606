#pragma once

// Next-selection predictors. Baselines are deterministic functions of the
// input; ExternalPredictor talks line-delimited JSON to a child process so an
// externally trained model can be plugged in.

#include <chrono>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ada/game.hpp"
#include "ada/reliance.hpp"

namespace ada {

struct PredictionInput {
  // Oldest first; at most the predictor's window length. Payoffs are
  // normalized with the same bounds as the context.
  std::vector<ChoiceFeedback> history;
  ContextVector context{};
};

struct Prediction {
  double prob_a = 0.5;
  double prob_b = 0.5;
  Option point = Option::A;

  // Point is the argmax, A on ties.
  static Prediction from_prob_a(double prob_a);
};

// Throws std::invalid_argument if the prediction violates its invariants.
void validate_prediction(const Prediction& p, double tolerance = 1e-9);

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Prediction predict(const PredictionInput& input) = 0;
  virtual std::string name() const = 0;
};

// Repeats the most recent selection.
class StickyPredictor final : public Predictor {
 public:
  Prediction predict(const PredictionInput& input) override;
  std::string name() const override { return "sticky"; }
};

// Exponentially decayed selection frequency (decay 1 = plain counting).
class FrequencyPredictor final : public Predictor {
 public:
  explicit FrequencyPredictor(double decay = 1.0);
  Prediction predict(const PredictionInput& input) override;
  std::string name() const override { return "frequency"; }

 private:
  double decay_;
};

// Recency-weighted observed payoffs seeded by the described expected values
// from the context vector; probability via a logistic of the value gap.
class RecencyValuePredictor final : public Predictor {
 public:
  explicit RecencyValuePredictor(double recency_weight = 0.3, double temperature = 0.1);
  Prediction predict(const PredictionInput& input) override;
  std::string name() const override { return "recency"; }

 private:
  double recency_weight_;
  double temperature_;
};

// Returns a fixed sequence of answers in order; for evaluation tests.
class ReplayPredictor final : public Predictor {
 public:
  explicit ReplayPredictor(std::vector<Option> answers);
  Prediction predict(const PredictionInput& input) override;
  std::string name() const override { return "replay"; }

 private:
  std::vector<Option> answers_;
  std::size_t next_ = 0;
};

class BridgeError : public std::runtime_error {
 public:
  enum class Kind { Transport, Timeout, Schema };

  BridgeError(Kind kind, const std::string& what, std::string raw = {});
  Kind kind() const { return kind_; }
  const std::string& raw() const { return raw_; }

 private:
  Kind kind_;
  std::string raw_;
};

// Child process speaking the pred-v1 protocol on stdin/stdout.
class ExternalPredictor final : public Predictor {
 public:
  explicit ExternalPredictor(std::vector<std::string> argv,
                             std::chrono::milliseconds timeout = std::chrono::milliseconds(1000));
  ~ExternalPredictor() override;
  ExternalPredictor(const ExternalPredictor&) = delete;
  ExternalPredictor& operator=(const ExternalPredictor&) = delete;

  Prediction predict(const PredictionInput& input) override;
  std::string name() const override { return "external"; }

 private:
  std::string read_line();
  void write_line(const std::string& line);
  void shutdown();

  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

// Request line for the bridge protocol (no trailing newline).
std::string encode_bridge_request(const PredictionInput& input);
// Parses and validates a response line; throws BridgeError(Schema) with the raw payload.
Prediction decode_bridge_response(const std::string& line);

// Calls the backend and validates its output.
Prediction predict(const PredictionInput& input, Predictor& backend);

struct PredictorSpec {
  std::string id = "recency";
  std::size_t window = 5;
  double frequency_decay = 1.0;
  double recency_weight = 0.3;
  double temperature = 0.1;
  std::vector<std::string> external_command;
  int timeout_ms = 1000;
};

std::unique_ptr<Predictor> make_predictor(const PredictorSpec& spec);

// Fraction of rows whose recorded selection equals the point prediction made
// from strictly earlier rows of the same participant and game. Payoffs are
// normalized with bounds over all rows' gambles. Throws std::invalid_argument if a group's
// trial_index is not strictly increasing or a group reappears later.
double evaluate_predictor(Predictor& backend, std::span<const TrialRecordRow> rows, std::size_t window = 5);

}  // namespace ada
