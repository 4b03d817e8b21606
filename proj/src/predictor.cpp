#include "ada/predictor.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

namespace ada {

Prediction Prediction::from_prob_a(double prob_a) {
  Prediction p;
  p.prob_a = prob_a;
  p.prob_b = 1.0 - prob_a;
  p.point = p.prob_a >= p.prob_b ? Option::A : Option::B;
  return p;
}

void validate_prediction(const Prediction& p, double tolerance) {
  if (!std::isfinite(p.prob_a) || !std::isfinite(p.prob_b)) throw std::invalid_argument("prediction not finite");
  if (p.prob_a < 0.0 || p.prob_a > 1.0 || p.prob_b < 0.0 || p.prob_b > 1.0)
    throw std::invalid_argument("prediction probabilities outside [0,1]");
  if (std::abs(p.prob_a + p.prob_b - 1.0) > tolerance) throw std::invalid_argument("prediction does not sum to 1");
  const Option argmax = p.prob_a >= p.prob_b ? Option::A : Option::B;
  if (p.point != argmax) throw std::invalid_argument("prediction point is not the argmax");
}

Prediction StickyPredictor::predict(const PredictionInput& input) {
  if (input.history.empty()) return Prediction::from_prob_a(0.5);
  return Prediction::from_prob_a(input.history.back().selection == Option::A ? 1.0 : 0.0);
}

FrequencyPredictor::FrequencyPredictor(double decay) : decay_(decay) {
  if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("frequency decay must lie in (0,1]");
}

Prediction FrequencyPredictor::predict(const PredictionInput& input) {
  if (input.history.empty()) return Prediction::from_prob_a(0.5);
  double weight = 1.0, total = 0.0, on_a = 0.0;
  for (auto it = input.history.rbegin(); it != input.history.rend(); ++it) {
    total += weight;
    if (it->selection == Option::A) on_a += weight;
    weight *= decay_;
  }
  return Prediction::from_prob_a(on_a / total);
}

RecencyValuePredictor::RecencyValuePredictor(double recency_weight, double temperature)
    : recency_weight_(recency_weight), temperature_(temperature) {
  if (!(recency_weight >= 0.0 && recency_weight <= 1.0)) throw std::invalid_argument("recency_weight must lie in [0,1]");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
}

Prediction RecencyValuePredictor::predict(const PredictionInput& input) {
  const auto& c = input.context;
  // Described expected values, then recency updates from observed payoffs of
  // both options (history payoffs are in the context's normalized units).
  double value_a = c[2] * c[0] + (1.0 - c[2]) * c[1];
  double value_b = c[5] * c[3] + (1.0 - c[5]) * c[4];
  for (const auto& h : input.history) {
    value_a += recency_weight_ * (h.payoff_of(Option::A) - value_a);
    value_b += recency_weight_ * (h.payoff_of(Option::B) - value_b);
  }
  const double x = (value_a - value_b) / temperature_;
  const double prob_a = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return Prediction::from_prob_a(prob_a);
}

ReplayPredictor::ReplayPredictor(std::vector<Option> answers) : answers_(std::move(answers)) {}

Prediction ReplayPredictor::predict(const PredictionInput&) {
  if (next_ >= answers_.size()) throw std::out_of_range("replay predictor exhausted");
  return Prediction::from_prob_a(answers_[next_++] == Option::A ? 1.0 : 0.0);
}

BridgeError::BridgeError(Kind kind, const std::string& what, std::string raw)
    : std::runtime_error(what), kind_(kind), raw_(std::move(raw)) {}

std::string encode_bridge_request(const PredictionInput& input) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : input.history)
    history.push_back({{"sel", to_string(h.selection)}, {"payoff", h.payoff}, {"foregone", h.foregone}});
  nlohmann::json context = nlohmann::json::array();
  for (double v : input.context) context.push_back(v);
  return nlohmann::json{{"history", history}, {"context", context}}.dump();
}

Prediction decode_bridge_response(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw BridgeError(BridgeError::Kind::Schema, std::string("bridge response is not JSON: ") + e.what(), line);
  }
  if (!j.is_object() || !j.contains("prob_a") || !j.contains("prob_b") || !j["prob_a"].is_number() ||
      !j["prob_b"].is_number())
    throw BridgeError(BridgeError::Kind::Schema, "bridge response lacks numeric prob_a/prob_b", line);
  Prediction p;
  p.prob_a = j["prob_a"].get<double>();
  p.prob_b = j["prob_b"].get<double>();
  p.point = p.prob_a >= p.prob_b ? Option::A : Option::B;
  try {
    validate_prediction(p);
  } catch (const std::invalid_argument& e) {
    throw BridgeError(BridgeError::Kind::Schema, std::string("bridge response invalid: ") + e.what(), line);
  }
  return p;
}

ExternalPredictor::ExternalPredictor(std::vector<std::string> argv, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  if (argv.empty()) throw BridgeError(BridgeError::Kind::Transport, "external predictor command is empty");
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0) throw BridgeError(BridgeError::Kind::Transport, std::strerror(errno));
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw BridgeError(BridgeError::Kind::Transport, std::strerror(errno));
  }
  std::vector<char*> cargv;
  for (auto& a : argv) cargv.push_back(a.data());
  cargv.push_back(nullptr);

  pid_ = fork();
  if (pid_ < 0) throw BridgeError(BridgeError::Kind::Transport, std::strerror(errno));
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execvp(cargv[0], cargv.data());
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  // A dead child must surface as EPIPE, not kill the host.
  signal(SIGPIPE, SIG_IGN);

  try {
    const std::string hello = read_line();
    nlohmann::json j = nlohmann::json::parse(hello, nullptr, false);
    if (j.is_discarded() || !j.is_object() || j.value("proto", "") != "pred-v1")
      throw BridgeError(BridgeError::Kind::Schema, "bad bridge handshake", hello);
  } catch (...) {
    shutdown();
    throw;
  }
}

ExternalPredictor::~ExternalPredictor() { shutdown(); }

void ExternalPredictor::shutdown() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    kill(pid_, SIGTERM);
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

std::string ExternalPredictor::read_line() {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (true) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw BridgeError(BridgeError::Kind::Timeout, "external predictor timed out", buffer_);
    pollfd pfd{from_child_, POLLIN, 0};
    const int rc = poll(&pfd, 1, static_cast<int>(left.count()));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw BridgeError(BridgeError::Kind::Transport, std::strerror(errno));
    }
    if (rc == 0) throw BridgeError(BridgeError::Kind::Timeout, "external predictor timed out", buffer_);
    char chunk[4096];
    const ssize_t n = read(from_child_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw BridgeError(BridgeError::Kind::Transport, std::strerror(errno));
    }
    if (n == 0) throw BridgeError(BridgeError::Kind::Transport, "external predictor closed its output", buffer_);
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

void ExternalPredictor::write_line(const std::string& line) {
  std::string data = line + '\n';
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = write(to_child_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw BridgeError(BridgeError::Kind::Transport, std::string("write to external predictor failed: ") +
                                                          std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

Prediction ExternalPredictor::predict(const PredictionInput& input) {
  write_line(encode_bridge_request(input));
  return decode_bridge_response(read_line());
}

Prediction predict(const PredictionInput& input, Predictor& backend) {
  Prediction p = backend.predict(input);
  validate_prediction(p);
  return p;
}

std::unique_ptr<Predictor> make_predictor(const PredictorSpec& spec) {
  if (spec.id == "sticky") return std::make_unique<StickyPredictor>();
  if (spec.id == "frequency") return std::make_unique<FrequencyPredictor>(spec.frequency_decay);
  if (spec.id == "recency") return std::make_unique<RecencyValuePredictor>(spec.recency_weight, spec.temperature);
  if (spec.id == "external") return std::make_unique<ExternalPredictor>(spec.external_command, std::chrono::milliseconds(spec.timeout_ms));
  throw std::invalid_argument("unknown predictor '" + spec.id + "'");
}

double evaluate_predictor(Predictor& backend, std::span<const TrialRecordRow> rows, std::size_t window) {
  if (rows.empty()) return 0.0;
  std::vector<Game> games;
  games.reserve(rows.size());
  for (const auto& r : rows) games.push_back(Game{r.game_id, r.option_a, r.option_b, 1});
  const PayoffBounds bounds = PayoffBounds::of(games);

  std::set<std::pair<std::string, std::string>> finished;
  std::pair<std::string, std::string> current;
  std::vector<ChoiceFeedback> history;
  int last_trial = -1;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto key = std::make_pair(r.participant_id, r.game_id);
    if (i == 0 || key != current) {
      if (i != 0) finished.insert(current);
      if (finished.contains(key)) throw std::invalid_argument("evaluate_predictor: rows not grouped by participant/game");
      current = key;
      history.clear();
      last_trial = -1;
    }
    if (r.trial_index <= last_trial) throw std::invalid_argument("evaluate_predictor: trials not chronological");
    last_trial = r.trial_index;

    PredictionInput input;
    input.context = make_context_vector(games[i], bounds);
    const std::size_t from = history.size() > window ? history.size() - window : 0;
    input.history.assign(history.begin() + static_cast<std::ptrdiff_t>(from), history.end());
    if (predict(input, backend).point == r.selection) ++hits;
    history.push_back(ChoiceFeedback{r.selection, bounds.normalize(r.payoff), bounds.normalize(r.foregone)});
  }
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

}  // namespace ada
