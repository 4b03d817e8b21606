#include "ada/ada_loop.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace ada {

std::string to_string(AidMode mode) { return mode == AidMode::Predictive ? "predictive" : "myopic"; }

std::optional<AidMode> parse_aid_mode(std::string_view text) {
  if (text == "predictive") return AidMode::Predictive;
  if (text == "myopic") return AidMode::Myopic;
  return std::nullopt;
}

ConfigError::ConfigError(std::string field, const std::string& message)
    : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

void SessionConfig::validate() const {
  if (games_per_operator < 1) throw ConfigError("session.games_per_operator", "must be >= 1");
  if (trials_per_game < 1) throw ConfigError("session.trials_per_game", "must be >= 1");
  if (abc_update_interval_games < 1) throw ConfigError("session.abc_update_interval_games", "must be >= 1");
  if (predictor.window < 1) throw ConfigError("predictor.window", "must be >= 1");
  if (!(perturb_sigma >= 0.0)) throw ConfigError("indicator.perturb_sigma", "must be >= 0");
  if (bank.count < 1) throw ConfigError("bank.count", "must be >= 1");
  if (!(bank.payoff.upper > bank.payoff.lower)) throw ConfigError("bank.payoff_range", "must be a non-empty interval");
  if (!(bank.probability.lower >= 0.0 && bank.probability.upper <= 1.0 &&
        bank.probability.upper >= bank.probability.lower))
    throw ConfigError("bank.probability_range", "must be a sub-interval of [0,1]");
  const auto wrap = [](const char* field, auto&& check) {
    try {
      check();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(field, e.what());
    }
  };
  wrap("priors", [&] { priors.validate(); });
  wrap("operator", [&] { operator_base.validate(); });
  wrap("choice", [&] { choice.validate(); });
  wrap("abc", [&] { abc.validate(); });
}

int performance_metric(int d_ind, int d, Option suggestion, Option initial) {
  if (d_ind == 1 && d == 1) return 1;
  if (d_ind == 0 && d == 0 && suggestion == initial) return 1;
  return 0;
}

Option choose_suggestion(AidMode mode, int d_ind, Option predicted, Option optimal) {
  if (mode == AidMode::Myopic || d_ind == 1) return optimal;
  return predicted;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kBankTag = 0x62616e6b5f747267ull;

}  // namespace

OperatorStreams OperatorStreams::derive(std::uint64_t master_seed, std::uint64_t operator_index) {
  std::uint64_t state = master_seed;
  splitmix64(state);
  state ^= 0xD1B54A32D192ED03ull * (operator_index + 1);
  const auto next = [&] { return Rng(splitmix64(state)); };
  OperatorStreams s{next(), next(), next(), next(), next(), next(), next()};
  return s;
}

InteractionRecord run_trial(SimulatedOperator& op, IndicatorState& indicator, const TrialEnv& env, GameMemory& memory,
                            Predictor& predictor, std::size_t window, AidMode mode, OperatorStreams& streams,
                            const ReplayInputs* replay) {
  InteractionRecord r;
  r.operator_index = env.operator_index;
  r.game_index = env.game_index;
  r.game_id = env.game.id;
  r.trial = env.trial;
  r.context = make_context_vector(env.game, env.bounds);

  const CapabilityResult cap = capability(env.game, remaining_trials(env.game, env.trial));
  r.capability = cap.capability;
  r.optimal = cap.optimal_option;

  r.initial = replay ? replay->initial : initial_selection(memory.operator_feedback, env.game, op.policy, streams.choice);

  PredictionInput input;
  input.context = r.context;
  const auto& hist = memory.initial_history;
  const std::size_t from = hist.size() > window ? hist.size() - window : 0;
  input.history.assign(hist.begin() + static_cast<std::ptrdiff_t>(from), hist.end());
  r.predicted = predict(input, predictor).point;

  r.d = op.state.reliance;
  r.d_ind = indicator.state.reliance;
  r.preference = op.state.preference;
  r.preference_ind = indicator.state.preference;
  r.suggestion = choose_suggestion(mode, r.d_ind, r.predicted, r.optimal);
  r.agreement = r.initial == r.suggestion ? Agreement::Agree : Agreement::Disagree;
  r.final_selection = final_selection(r.d, r.suggestion, r.initial);

  const TrialOutcome outcome = replay ? replay->outcome : sample_trial_outcome(env.game, streams.payoff);
  r.payoff = outcome.payoff(r.final_selection);
  r.foregone = outcome.payoff(other(r.final_selection));
  r.rho = performance_metric(r.d_ind, r.d, r.suggestion, r.initial);

  const double belief = step_belief(op.state, op.params, r.capability, r.agreement);
  op.state = step_preference(op.state, op.params, belief, streams.noise);
  step_indicator(indicator, r.capability, r.agreement);

  memory.operator_feedback.push_back(ChoiceFeedback{r.final_selection, r.payoff, r.foregone});
  memory.initial_history.push_back(ChoiceFeedback{r.initial, env.bounds.normalize(outcome.payoff(r.initial)),
                                                  env.bounds.normalize(outcome.payoff(other(r.initial)))});
  return r;
}

std::vector<int> abc_schedule(int games_per_operator, int interval) {
  std::vector<int> out;
  if (interval < 1) return out;
  for (int g = interval; g < games_per_operator; g += interval) out.push_back(g);
  return out;
}

namespace {

class SessionRunner {
 public:
  SessionRunner(const SessionConfig& config, const OperatorParams& truth, OperatorStreams& streams,
                std::size_t operator_index)
      : config_(config), streams_(streams), predictor_(make_predictor(config.predictor)) {
    trace_.operator_index = operator_index;
    trace_.truth = truth;
    op_ = SimulatedOperator{truth, RelianceState::initial(truth), config.choice};
    indicator_ = init_indicator(&truth, config.indicator_init, config.perturb_sigma, config.priors,
                                config.operator_base, streams.indicator);
    trace_.indicator_initial = indicator_.params;
  }

  void play_game(const Game& game, int game_index, const PayoffBounds& bounds,
                 std::span<const TrialRecordRow> replay_rows = {}) {
    GameMemory memory;
    for (int n = 0; n < game.trials; ++n) {
      const TrialEnv env{game, bounds, game_index, n, trace_.operator_index};
      ReplayInputs replay;
      if (!replay_rows.empty()) {
        const auto& row = replay_rows[static_cast<std::size_t>(n)];
        replay.initial = row.selection;
        replay.outcome = row.selection == Option::A ? TrialOutcome{row.payoff, row.foregone}
                                                    : TrialOutcome{row.foregone, row.payoff};
      }
      auto rec = run_trial(op_, indicator_, env, memory, *predictor_, config_.predictor.window, config_.aid_mode,
                           streams_, replay_rows.empty() ? nullptr : &replay);
      log_.append(Observation{rec.d, rec.agreement, rec.capability, false});
      trace_.cumulative_reward += rec.payoff;
      trace_.records.push_back(std::move(rec));
    }
  }

  void refit(int completed_games) {
    const AbcResult res = abc_rejection(log_.entries(), config_.priors, indicator_.params, config_.abc, streams_.abc);
    indicator_.params = point_estimate(res.samples, indicator_.params);
    trace_.abc_updates.push_back(completed_games);
    trace_.indicator_history.push_back(indicator_.params);
  }

  OperatorTrace finish() { return std::move(trace_); }

 private:
  const SessionConfig& config_;
  OperatorStreams& streams_;
  std::unique_ptr<Predictor> predictor_;
  SimulatedOperator op_;
  IndicatorState indicator_;
  ObservationLog log_;
  OperatorTrace trace_;
};

}  // namespace

OperatorTrace run_operator_session(const SessionConfig& config, const OperatorParams& truth,
                                   std::span<const Game> games, const PayoffBounds& bounds, OperatorStreams& streams,
                                   std::size_t operator_index) {
  config.validate();
  SessionRunner runner(config, truth, streams, operator_index);
  const auto schedule = abc_schedule(static_cast<int>(games.size()), config.abc_update_interval_games);
  for (std::size_t g = 0; g < games.size(); ++g) {
    runner.play_game(games[g], static_cast<int>(g), bounds);
    const int completed = static_cast<int>(g) + 1;
    if (std::find(schedule.begin(), schedule.end(), completed) != schedule.end()) runner.refit(completed);
  }
  return runner.finish();
}

OperatorTrace run_replay_session(const SessionConfig& config, const OperatorParams& truth,
                                 std::span<const TrialRecordRow> rows, const PayoffBounds& bounds,
                                 OperatorStreams& streams, std::size_t operator_index) {
  config.validate();
  // Split rows into games (consecutive runs of the same game id).
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    while (j < rows.size() && rows[j].game_id == rows[i].game_id && rows[j].participant_id == rows[i].participant_id)
      ++j;
    spans.emplace_back(i, j);
    i = j;
  }
  SessionRunner runner(config, truth, streams, operator_index);
  const auto schedule = abc_schedule(static_cast<int>(spans.size()), config.abc_update_interval_games);
  for (std::size_t g = 0; g < spans.size(); ++g) {
    const auto [from, to] = spans[g];
    Game game{rows[from].game_id, rows[from].option_a, rows[from].option_b, static_cast<int>(to - from)};
    runner.play_game(game, static_cast<int>(g), bounds, rows.subspan(from, to - from));
    const int completed = static_cast<int>(g) + 1;
    if (std::find(schedule.begin(), schedule.end(), completed) != schedule.end()) runner.refit(completed);
  }
  return runner.finish();
}

std::vector<Game> make_game_bank(const SessionConfig& config) {
  std::uint64_t state = config.seed ^ kBankTag;
  Rng rng(splitmix64(state));
  auto bank = config.bank.style == BankStyle::Independent
                  ? generate_game_bank(config.bank.count, config.bank.payoff, config.bank.probability, rng)
                  : generate_ev_matched_bank(config.bank.count, config.bank.payoff, config.bank.probability,
                                             config.bank.max_ev_gap, rng);
  for (auto& g : bank) g.trials = config.trials_per_game;
  return bank;
}

std::vector<Game> pick_games(std::span<const Game> bank, int count, Rng& rng) {
  if (bank.empty()) throw std::invalid_argument("pick_games: empty bank");
  std::vector<std::size_t> idx(bank.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<Game> out;
  out.reserve(static_cast<std::size_t>(count));
  std::size_t left = 0;
  for (int k = 0; k < count; ++k) {
    if (left == 0) left = idx.size();
    // Partial Fisher-Yates over the not-yet-used prefix.
    std::uniform_int_distribution<std::size_t> pick(0, left - 1);
    const std::size_t j = pick(rng);
    std::swap(idx[j], idx[left - 1]);
    out.push_back(bank[idx[left - 1]]);
    --left;
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> per_game_means(std::span<const InteractionRecord> records,
                                                                   int games) {
  std::vector<double> d(static_cast<std::size_t>(games), 0.0), rho(static_cast<std::size_t>(games), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(games), 0);
  for (const auto& r : records) {
    if (r.game_index < 0 || r.game_index >= games) throw std::out_of_range("record game index out of range");
    const auto g = static_cast<std::size_t>(r.game_index);
    d[g] += r.d;
    rho[g] += r.rho;
    ++count[g];
  }
  for (std::size_t g = 0; g < d.size(); ++g) {
    if (count[g] == 0) {
      d[g] = rho[g] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    d[g] /= static_cast<double>(count[g]);
    rho[g] /= static_cast<double>(count[g]);
  }
  return {d, rho};
}

namespace {

GameSeries series_of(const std::vector<std::vector<double>>& per_operator, std::size_t games) {
  GameSeries s{std::vector<double>(games, 0.0), std::vector<double>(games, 0.0)};
  if (per_operator.empty()) return s;
  for (std::size_t g = 0; g < games; ++g) {
    // Operators that never played game g (short replay files) are left out.
    double sum = 0.0, n = 0.0;
    for (const auto& v : per_operator)
      if (!std::isnan(v[g])) sum += v[g], n += 1.0;
    if (n == 0.0) continue;
    const double mean = sum / n;
    double sq = 0.0;
    for (const auto& v : per_operator)
      if (!std::isnan(v[g])) sq += (v[g] - mean) * (v[g] - mean);
    s.mean[g] = mean;
    s.stddev[g] = std::sqrt(sq / n);
  }
  return s;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

}  // namespace

PopulationAggregate aggregate(std::span<const OperatorTrace> traces, int games) {
  PopulationAggregate agg;
  agg.n_operators = traces.size();
  std::vector<std::vector<double>> d, rho;
  double reward = 0.0;
  for (const auto& t : traces) {
    auto [dg, rg] = per_game_means(t.records, games);
    d.push_back(std::move(dg));
    rho.push_back(std::move(rg));
    reward += t.cumulative_reward;
  }
  agg.reliance = series_of(d, static_cast<std::size_t>(games));
  agg.performance = series_of(rho, static_cast<std::size_t>(games));
  agg.overall_mean_d = mean_of(agg.reliance.mean);
  agg.overall_mean_rho = mean_of(agg.performance.mean);
  agg.mean_cumulative_reward = traces.empty() ? 0.0 : reward / static_cast<double>(traces.size());
  return agg;
}

MonteCarloResult run_monte_carlo(const SessionConfig& config, std::size_t n_operators, unsigned threads) {
  config.validate();
  if (n_operators < 1) throw std::invalid_argument("run_monte_carlo: n_operators must be >= 1");
  const auto bank = make_game_bank(config);
  const PayoffBounds bounds = PayoffBounds::of(bank);

  MonteCarloResult result;
  result.traces.resize(n_operators);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_operators) return;
      try {
        OperatorStreams streams = OperatorStreams::derive(config.seed, i);
        const OperatorParams truth = sample_operator_params(config.priors, streams.params, config.operator_base);
        const auto games = pick_games(bank, config.games_per_operator, streams.games);
        result.traces[i] = run_operator_session(config, truth, games, bounds, streams, i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n_operators);
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_operators));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  result.aggregate = aggregate(result.traces, config.games_per_operator);
  return result;
}

MonteCarloResult run_replay_population(const SessionConfig& config, std::span<const TrialRecordRow> rows) {
  config.validate();
  if (rows.empty()) throw std::invalid_argument("replay: no trial rows");
  std::vector<Game> games;
  games.reserve(rows.size());
  for (const auto& r : rows) games.push_back(Game{r.game_id, r.option_a, r.option_b, 1});
  const PayoffBounds bounds = PayoffBounds::of(games);

  // load_trials groups by (participant, game); participants may still interleave.
  std::vector<std::string> order;
  std::vector<std::vector<TrialRecordRow>> by_participant;
  for (const auto& r : rows) {
    auto it = std::find(order.begin(), order.end(), r.participant_id);
    if (it == order.end()) {
      order.push_back(r.participant_id);
      by_participant.emplace_back();
      it = order.end() - 1;
    }
    by_participant[static_cast<std::size_t>(it - order.begin())].push_back(r);
  }

  MonteCarloResult result;
  int max_games = 0;
  for (std::size_t i = 0; i < by_participant.size(); ++i) {
    OperatorStreams streams = OperatorStreams::derive(config.seed, i);
    const OperatorParams truth = sample_operator_params(config.priors, streams.params, config.operator_base);
    result.traces.push_back(run_replay_session(config, truth, by_participant[i], bounds, streams, i));
    for (const auto& rec : result.traces.back().records) max_games = std::max(max_games, rec.game_index + 1);
  }
  result.aggregate = aggregate(result.traces, max_games);
  return result;
}

std::optional<double> percent_difference(double value, double baseline) {
  if (baseline == 0.0) return std::nullopt;
  return 100.0 * (value - baseline) / baseline;
}

std::vector<CompareCell> compare_methods(const SessionConfig& base, const CompareGrid& grid, std::size_t n_operators,
                                         unsigned threads) {
  std::vector<CompareCell> cells;
  for (double theta : grid.theta) {
    for (double s : grid.s) {
      for (double b2 : grid.b2) {
        SessionConfig cfg = base;
        cfg.priors.theta = {theta - grid.width / 2.0, grid.width};
        cfg.priors.s = {s - grid.width / 2.0, grid.width};
        cfg.priors.b2 = {b2 - grid.width / 2.0, grid.width};
        CompareCell cell{theta, s, b2, {}, {}, std::nullopt};
        cfg.aid_mode = grid.mode_a;
        cell.a = run_monte_carlo(cfg, n_operators, threads).aggregate;
        cfg.aid_mode = grid.mode_b;
        cell.b = run_monte_carlo(cfg, n_operators, threads).aggregate;
        cell.percent_difference = percent_difference(cell.a.overall_mean_d, cell.b.overall_mean_d);
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

}  // namespace ada
