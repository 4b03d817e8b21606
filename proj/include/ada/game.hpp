#pragma once

// Paired two-outcome gambles, trial outcome sampling, context vectors and
// the trial-record CSV used for dataset replay.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ada {

using Rng = std::mt19937_64;

enum class Option : std::uint8_t { A = 0, B = 1 };

constexpr Option other(Option o) { return o == Option::A ? Option::B : Option::A; }
constexpr char to_char(Option o) { return o == Option::A ? 'A' : 'B'; }
std::string to_string(Option o);
std::optional<Option> parse_option(std::string_view label);

// Two-outcome lottery: high_payoff with probability p_high, else low_payoff.
// Construction canonicalizes so that high_payoff >= low_payoff.
struct Gamble {
  double high_payoff = 0.0;
  double low_payoff = 0.0;
  double p_high = 0.0;

  static Gamble make(double payoff_x, double payoff_y, double p_x);

  double expected_value() const { return p_high * high_payoff + (1.0 - p_high) * low_payoff; }
  double spread() const { return high_payoff - low_payoff; }

  friend bool operator==(const Gamble&, const Gamble&) = default;
};

struct Game {
  std::string id;
  Gamble option_a;
  Gamble option_b;
  int trials = 25;

  const Gamble& option(Option o) const { return o == Option::A ? option_a : option_b; }
  void validate() const;
};

struct TrialOutcome {
  double payoff_a = 0.0;
  double payoff_b = 0.0;

  double payoff(Option o) const { return o == Option::A ? payoff_a : payoff_b; }
};

// Both options are realized, one uniform draw each (A first). Degenerate
// gambles still consume their draw so streams stay aligned across games.
TrialOutcome sample_trial_outcome(const Game& game, Rng& rng);

// Affine payoff normalization shared by a whole game bank.
struct PayoffBounds {
  double lower = 0.0;
  double upper = 1.0;

  static PayoffBounds of(std::span<const Game> bank);
  double normalize(double payoff) const;
  double denormalize(double value) const;
};

// (H_A, L_A, p_A, H_B, L_B, p_B) with payoffs mapped to [0,1].
using ContextVector = std::array<double, 6>;

ContextVector make_context_vector(const Game& game, const PayoffBounds& bounds);
// Inverse of make_context_vector on the payoff entries.
std::pair<Gamble, Gamble> restore_gambles(const ContextVector& context, const PayoffBounds& bounds);

struct Range {
  double lower = 0.0;
  double upper = 1.0;
};

enum class BankStyle : std::uint8_t {
  // Both gambles drawn independently.
  Independent,
  // Option B is a second gamble whose expected value lies within
  // max_ev_gap (fraction of the payoff span) of option A's.
  EvMatched,
};

struct GameBankSpec {
  std::size_t count = 270;
  Range payoff{0.0, 4.0};
  Range probability{0.0, 1.0};
  BankStyle style = BankStyle::EvMatched;
  double max_ev_gap = 0.05;
};

std::vector<Game> generate_game_bank(std::size_t count, Range payoff, Range probability, Rng& rng);
std::vector<Game> generate_ev_matched_bank(std::size_t count, Range payoff, Range probability, double max_ev_gap,
                                           Rng& rng);

// One row of the simplified trial-record CSV.
struct TrialRecordRow {
  std::string participant_id;
  std::string game_id;
  int trial_index = 0;
  Gamble option_a;
  Gamble option_b;
  Option selection = Option::A;
  double payoff = 0.0;
  double foregone = 0.0;
};

inline constexpr std::string_view kTrialCsvHeader =
    "participant_id,game_id,trial_index,ha,la,pha,hb,lb,phb,selection,payoff,foregone";

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Rows grouped by (participant, game) in order of first appearance; rows
// inside a group keep file order.
std::vector<TrialRecordRow> load_trials(const std::filesystem::path& path);
std::vector<TrialRecordRow> parse_trials(std::string_view text);

// Inverse of load_trials, used to export synthetic datasets.
std::string format_trials(std::span<const TrialRecordRow> rows);

}  // namespace ada
