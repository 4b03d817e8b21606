#include "ada/game.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace ada {

std::string to_string(Option o) { return std::string(1, to_char(o)); }

std::optional<Option> parse_option(std::string_view label) {
  if (label == "A") return Option::A;
  if (label == "B") return Option::B;
  return std::nullopt;
}

Gamble Gamble::make(double payoff_x, double payoff_y, double p_x) {
  if (!std::isfinite(payoff_x) || !std::isfinite(payoff_y)) throw std::invalid_argument("gamble payoffs must be finite");
  if (!(p_x >= 0.0 && p_x <= 1.0)) throw std::invalid_argument("gamble probability must lie in [0,1]");
  if (payoff_x >= payoff_y) return Gamble{payoff_x, payoff_y, p_x};
  return Gamble{payoff_y, payoff_x, 1.0 - p_x};
}

void Game::validate() const {
  if (trials < 1) throw std::invalid_argument("game " + id + ": trials must be >= 1");
  for (const Gamble* g : {&option_a, &option_b}) {
    if (!std::isfinite(g->high_payoff) || !std::isfinite(g->low_payoff))
      throw std::invalid_argument("game " + id + ": payoffs must be finite");
    if (g->high_payoff < g->low_payoff) throw std::invalid_argument("game " + id + ": gamble not canonical");
    if (!(g->p_high >= 0.0 && g->p_high <= 1.0)) throw std::invalid_argument("game " + id + ": probability out of range");
  }
}

TrialOutcome sample_trial_outcome(const Game& game, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double ua = unit(rng);
  const double ub = unit(rng);
  return TrialOutcome{ua < game.option_a.p_high ? game.option_a.high_payoff : game.option_a.low_payoff,
                      ub < game.option_b.p_high ? game.option_b.high_payoff : game.option_b.low_payoff};
}

PayoffBounds PayoffBounds::of(std::span<const Game> bank) {
  if (bank.empty()) throw std::invalid_argument("cannot derive payoff bounds from an empty game bank");
  double lo = bank.front().option_a.low_payoff;
  double hi = bank.front().option_a.high_payoff;
  for (const Game& g : bank) {
    lo = std::min({lo, g.option_a.low_payoff, g.option_b.low_payoff});
    hi = std::max({hi, g.option_a.high_payoff, g.option_b.high_payoff});
  }
  return PayoffBounds{lo, hi};
}

double PayoffBounds::normalize(double payoff) const {
  if (!(upper > lower)) throw std::invalid_argument("degenerate payoff bounds: game bank has a single payoff value");
  return (payoff - lower) / (upper - lower);
}

double PayoffBounds::denormalize(double value) const { return lower + value * (upper - lower); }

ContextVector make_context_vector(const Game& game, const PayoffBounds& bounds) {
  return ContextVector{bounds.normalize(game.option_a.high_payoff), bounds.normalize(game.option_a.low_payoff),
                       game.option_a.p_high,
                       bounds.normalize(game.option_b.high_payoff), bounds.normalize(game.option_b.low_payoff),
                       game.option_b.p_high};
}

std::pair<Gamble, Gamble> restore_gambles(const ContextVector& c, const PayoffBounds& bounds) {
  return {Gamble{bounds.denormalize(c[0]), bounds.denormalize(c[1]), c[2]},
          Gamble{bounds.denormalize(c[3]), bounds.denormalize(c[4]), c[5]}};
}

std::vector<Game> generate_game_bank(std::size_t count, Range payoff, Range probability, Rng& rng) {
  if (!(payoff.upper > payoff.lower)) throw std::invalid_argument("payoff range is empty");
  if (!(probability.upper >= probability.lower) || probability.lower < 0.0 || probability.upper > 1.0)
    throw std::invalid_argument("probability range must be a non-empty subset of [0,1]");

  std::uniform_real_distribution<double> pay(payoff.lower, payoff.upper);
  std::uniform_real_distribution<double> prob(probability.lower, probability.upper);
  std::vector<Game> bank;
  bank.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Game g;
    g.id = "G" + std::to_string(i);
    const double xa = pay(rng), ya = pay(rng), pa = prob(rng);
    const double xb = pay(rng), yb = pay(rng), pb = prob(rng);
    g.option_a = Gamble::make(xa, ya, pa);
    g.option_b = Gamble::make(xb, yb, pb);
    bank.push_back(std::move(g));
  }
  return bank;
}

std::vector<Game> generate_ev_matched_bank(std::size_t count, Range payoff, Range probability, double max_ev_gap,
                                           Rng& rng) {
  if (!(payoff.upper > payoff.lower)) throw std::invalid_argument("payoff range is empty");
  if (!(probability.upper >= probability.lower) || probability.lower < 0.0 || probability.upper > 1.0)
    throw std::invalid_argument("probability range must be a non-empty subset of [0,1]");
  if (!(max_ev_gap >= 0.0)) throw std::invalid_argument("max_ev_gap must be >= 0");

  const double span = payoff.upper - payoff.lower;
  std::uniform_real_distribution<double> pay(payoff.lower, payoff.upper);
  std::uniform_real_distribution<double> prob(probability.lower, probability.upper);
  std::uniform_real_distribution<double> gap(-max_ev_gap, max_ev_gap);
  std::vector<Game> bank;
  bank.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Game g;
    g.id = "G" + std::to_string(i);
    const double xa = pay(rng), ya = pay(rng), pa = prob(rng);
    g.option_a = Gamble::make(xa, ya, pa);
    const double target = std::clamp(g.option_a.expected_value() + gap(rng) * span, payoff.lower, payoff.upper);
    const double low = std::uniform_real_distribution<double>(payoff.lower, target)(rng);
    const double high = std::uniform_real_distribution<double>(target, payoff.upper)(rng);
    const double p_high = high > low ? std::clamp((target - low) / (high - low), 0.0, 1.0) : 1.0;
    g.option_b = Gamble::make(high, low, p_high);
    bank.push_back(std::move(g));
  }
  return bank;
}

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_real(std::string_view field, std::size_t line, const char* name) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v))
    throw ParseError(line, std::string("bad ") + name + " '" + std::string(field) + "'");
  return v;
}

int parse_int(std::string_view field, std::size_t line, const char* name) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError(line, std::string("bad ") + name + " '" + std::string(field) + "'");
  return v;
}

}  // namespace

std::vector<TrialRecordRow> parse_trials(std::string_view text) {
  std::vector<TrialRecordRow> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!header_seen) {
      if (line != kTrialCsvHeader) throw ParseError(line_no, "header does not match trial-record schema");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 12) throw ParseError(line_no, "expected 12 fields, got " + std::to_string(f.size()));

    TrialRecordRow r;
    r.participant_id = std::string(f[0]);
    r.game_id = std::string(f[1]);
    if (r.participant_id.empty() || r.game_id.empty()) throw ParseError(line_no, "empty identifier");
    r.trial_index = parse_int(f[2], line_no, "trial_index");
    if (r.trial_index < 0) throw ParseError(line_no, "negative trial_index");
    try {
      r.option_a = Gamble::make(parse_real(f[3], line_no, "ha"), parse_real(f[4], line_no, "la"),
                                parse_real(f[5], line_no, "pha"));
      r.option_b = Gamble::make(parse_real(f[6], line_no, "hb"), parse_real(f[7], line_no, "lb"),
                                parse_real(f[8], line_no, "phb"));
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    }
    const auto sel = parse_option(f[9]);
    if (!sel) throw ParseError(line_no, "unknown selection '" + std::string(f[9]) + "'");
    r.selection = *sel;
    r.payoff = parse_real(f[10], line_no, "payoff");
    r.foregone = parse_real(f[11], line_no, "foregone");
    rows.push_back(std::move(r));
  }
  if (!header_seen) throw ParseError(1, "missing header");

  // Stable grouping by (participant, game) in order of first appearance.
  std::map<std::pair<std::string, std::string>, std::size_t> group_of;
  std::vector<std::size_t> group(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto key = std::make_pair(rows[i].participant_id, rows[i].game_id);
    group[i] = group_of.try_emplace(key, group_of.size()).first->second;
  }
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return group[a] < group[b]; });
  std::vector<TrialRecordRow> grouped;
  grouped.reserve(rows.size());
  for (std::size_t i : order) grouped.push_back(std::move(rows[i]));
  return grouped;
}

std::vector<TrialRecordRow> load_trials(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trial file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trials(ss.str());
}

namespace {

std::string real_to_string(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::string format_trials(std::span<const TrialRecordRow> rows) {
  std::string out(kTrialCsvHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.participant_id + ',' + r.game_id + ',' + std::to_string(r.trial_index) + ',' +
           real_to_string(r.option_a.high_payoff) + ',' + real_to_string(r.option_a.low_payoff) + ',' +
           real_to_string(r.option_a.p_high) + ',' + real_to_string(r.option_b.high_payoff) + ',' +
           real_to_string(r.option_b.low_payoff) + ',' + real_to_string(r.option_b.p_high) + ',' +
           to_char(r.selection) + ',' + real_to_string(r.payoff) + ',' + real_to_string(r.foregone) + '\n';
  }
  return out;
}

}  // namespace ada
