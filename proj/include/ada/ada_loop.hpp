#pragma once

// The decision-aid interaction loop: suggestion policy, simulated operator
// response, model stepping, periodic ABC refits, Monte Carlo populations and
// predictive-vs-myopic comparison.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ada/capability.hpp"
#include "ada/game.hpp"
#include "ada/indicator_abc.hpp"
#include "ada/predictor.hpp"
#include "ada/reliance.hpp"

namespace ada {

enum class AidMode : std::uint8_t { Predictive, Myopic };

std::string to_string(AidMode mode);
std::optional<AidMode> parse_aid_mode(std::string_view text);

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message);
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct SessionConfig {
  AidMode aid_mode = AidMode::Predictive;
  int games_per_operator = 30;
  int trials_per_game = 25;
  // Refit every this many games; a value >= games_per_operator disables refits.
  int abc_update_interval_games = 10;
  PriorSpec priors;
  // Non-sampled operator fields (noise, initial belief/preference, info mode).
  OperatorParams operator_base;
  ChoicePolicyParams choice;
  PredictorSpec predictor;
  IndicatorInit indicator_init = IndicatorInit::Perturb;
  double perturb_sigma = 0.05;
  AbcConfig abc;
  GameBankSpec bank;
  std::uint64_t seed = 1;

  // Throws ConfigError naming the field.
  void validate() const;
};

struct InteractionRecord {
  std::size_t operator_index = 0;
  int game_index = 0;
  std::string game_id;
  int trial = 0;
  ContextVector context{};
  Option initial = Option::A;     // h_i
  Option predicted = Option::A;   // predictor point
  Option suggestion = Option::A;  // a_i
  Option optimal = Option::A;     // a_opt
  Agreement agreement = Agreement::Agree;
  int d = 0;
  int d_ind = 0;
  Option final_selection = Option::A;  // h*_i
  double payoff = 0.0;
  double foregone = 0.0;
  double capability = 0.0;
  int rho = 0;
  // Preferences that produced d and d_ind.
  double preference = 0.0;
  double preference_ind = 0.0;
  // Live sessions only: reliance could not be observed (final = a_i = h_i).
  bool ambiguous = false;
};

// 1 when the indicator and the prediction were both right about this trial.
int performance_metric(int d_ind, int d, Option suggestion, Option initial);

Option choose_suggestion(AidMode mode, int d_ind, Option predicted, Option optimal);

inline Option final_selection(int d, Option suggestion, Option initial) { return d == 1 ? suggestion : initial; }

// Independent RNG streams for one simulated operator. Every stream except
// `abc` is consumed identically by both aid modes.
struct OperatorStreams {
  Rng params;
  Rng games;
  Rng payoff;
  Rng choice;
  Rng noise;
  Rng indicator;
  Rng abc;

  static OperatorStreams derive(std::uint64_t master_seed, std::uint64_t operator_index);
};

struct SimulatedOperator {
  OperatorParams params;
  RelianceState state;
  ChoicePolicyParams policy;
};

// Per-game memory of the operator (final choices, for its own value
// estimates) and of the aid (initial choices, predictor input).
struct GameMemory {
  std::vector<ChoiceFeedback> operator_feedback;
  std::vector<ChoiceFeedback> initial_history;
};

struct TrialEnv {
  const Game& game;
  const PayoffBounds& bounds;
  int game_index = 0;
  int trial = 0;
  std::size_t operator_index = 0;
};

// Dataset replay: the recorded selection is h_i and the recorded payoffs are
// the trial outcome, so neither the choice nor the payoff stream is consumed.
struct ReplayInputs {
  Option initial = Option::A;
  TrialOutcome outcome;
};

InteractionRecord run_trial(SimulatedOperator& op, IndicatorState& indicator, const TrialEnv& env, GameMemory& memory,
                            Predictor& predictor, std::size_t window, AidMode mode, OperatorStreams& streams,
                            const ReplayInputs* replay = nullptr);

struct OperatorTrace {
  std::size_t operator_index = 0;
  OperatorParams truth;
  OperatorParams indicator_initial;
  std::vector<InteractionRecord> records;
  // Game counts after which indicator parameters were refit.
  std::vector<int> abc_updates;
  std::vector<OperatorParams> indicator_history;
  double cumulative_reward = 0.0;
};

// Game boundaries (number of completed games) at which a refit runs.
std::vector<int> abc_schedule(int games_per_operator, int interval);

OperatorTrace run_operator_session(const SessionConfig& config, const OperatorParams& truth,
                                   std::span<const Game> games, const PayoffBounds& bounds, OperatorStreams& streams,
                                   std::size_t operator_index = 0);

// Dataset replay: rows of one participant (grouped by game, trial order) fix
// h_i; the reliance model still decides whether to switch.
OperatorTrace run_replay_session(const SessionConfig& config, const OperatorParams& truth,
                                 std::span<const TrialRecordRow> rows, const PayoffBounds& bounds,
                                 OperatorStreams& streams, std::size_t operator_index = 0);

std::vector<Game> make_game_bank(const SessionConfig& config);
// Games for one operator: without replacement while the bank lasts.
std::vector<Game> pick_games(std::span<const Game> bank, int count, Rng& rng);

struct GameSeries {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct PopulationAggregate {
  std::size_t n_operators = 0;
  // Across operators of each operator's per-game trial mean (population std).
  GameSeries reliance;
  GameSeries performance;
  double overall_mean_d = 0.0;
  double overall_mean_rho = 0.0;
  double mean_cumulative_reward = 0.0;
};

// Per-game trial means of d and rho for one operator; NaN for games with no records.
std::pair<std::vector<double>, std::vector<double>> per_game_means(std::span<const InteractionRecord> records,
                                                                   int games);

PopulationAggregate aggregate(std::span<const OperatorTrace> traces, int games);

struct MonteCarloResult {
  std::vector<OperatorTrace> traces;
  PopulationAggregate aggregate;
};

// threads = 0 uses hardware concurrency; results do not depend on it.
MonteCarloResult run_monte_carlo(const SessionConfig& config, std::size_t n_operators, unsigned threads = 0);

// Dataset replay population: one operator per participant (first-appearance
// order), truth sampled from the priors, bounds over every recorded game.
MonteCarloResult run_replay_population(const SessionConfig& config, std::span<const TrialRecordRow> rows);

struct CompareGrid {
  std::vector<double> theta{0.5, 0.6, 0.7};
  std::vector<double> s{0.1, 0.5, 0.9};
  std::vector<double> b2{0.01, 0.03, 0.05};
  double width = 0.005;
  AidMode mode_a = AidMode::Predictive;
  AidMode mode_b = AidMode::Myopic;
};

struct CompareCell {
  double theta = 0.0;
  double s = 0.0;
  double b2 = 0.0;
  PopulationAggregate a;
  PopulationAggregate b;
  // 100 (mean_d_a - mean_d_b) / mean_d_b; empty when mean_d_b = 0.
  std::optional<double> percent_difference;
};

std::optional<double> percent_difference(double value, double baseline);

// Cells in theta-major, then s, then b2 order. Both modes share the config
// seed, so operators, games and payoff draws match across modes.
std::vector<CompareCell> compare_methods(const SessionConfig& base, const CompareGrid& grid, std::size_t n_operators,
                                         unsigned threads = 0);

}  // namespace ada
