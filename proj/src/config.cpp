#include "ada/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace ada {

std::string to_string(BankStyle style) { return style == BankStyle::Independent ? "independent" : "ev_matched"; }
std::string to_string(IndicatorInit mode) { return mode == IndicatorInit::Perturb ? "perturb" : "prior"; }
std::string to_string(InfoMode mode) { return mode == InfoMode::CapabilityVisible ? "visible" : "hidden"; }

namespace {

// Reads typed keys from one table and remembers which keys were consumed.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  bool present() const { return table_ != nullptr; }

  std::string field(std::string_view key) const {
    return name_.empty() ? std::string(key) : name_ + "." + std::string(key);
  }

  const toml::node* get(std::string_view key) {
    if (!table_) return nullptr;
    seen_.insert(std::string(key));
    return table_->get(key);
  }

  void read(std::string_view key, double& out) {
    if (const auto* n = get(key)) out = as_real(*n, field(key));
  }

  template <typename Int>
  void read_int(std::string_view key, Int& out, long long min_value) {
    const auto* n = get(key);
    if (!n) return;
    const auto v = n->value_exact<std::int64_t>();
    if (!v) throw ConfigError(field(key), "expected an integer");
    if (*v < min_value) throw ConfigError(field(key), "must be >= " + std::to_string(min_value));
    if (static_cast<unsigned long long>(*v) > static_cast<unsigned long long>(std::numeric_limits<Int>::max()))
      throw ConfigError(field(key), "out of range");
    out = static_cast<Int>(*v);
  }

  void read(std::string_view key, bool& out) {
    if (const auto* n = get(key)) {
      const auto v = n->value_exact<bool>();
      if (!v) throw ConfigError(field(key), "expected a boolean");
      out = *v;
    }
  }

  std::optional<std::string> read_string(std::string_view key) {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    const auto v = n->value_exact<std::string>();
    if (!v) throw ConfigError(field(key), "expected a string");
    return *v;
  }

  std::optional<std::vector<double>> read_reals(std::string_view key) {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    const auto* arr = n->as_array();
    if (!arr) throw ConfigError(field(key), "expected an array of numbers");
    std::vector<double> out;
    for (const auto& el : *arr) out.push_back(as_real(el, field(key)));
    return out;
  }

  std::optional<std::vector<std::string>> read_strings(std::string_view key) {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    const auto* arr = n->as_array();
    if (!arr) throw ConfigError(field(key), "expected an array of strings");
    std::vector<std::string> out;
    for (const auto& el : *arr) {
      const auto v = el.value_exact<std::string>();
      if (!v) throw ConfigError(field(key), "expected an array of strings");
      out.push_back(*v);
    }
    return out;
  }

  void read_pair(std::string_view key, double& first, double& second) {
    const auto v = read_reals(key);
    if (!v) return;
    if (v->size() != 2) throw ConfigError(field(key), "expected [lower, width/upper] pair");
    first = (*v)[0];
    second = (*v)[1];
  }

  void reject_unknown() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!seen_.contains(std::string(k.str()))) throw ConfigError(field(k.str()), "unknown key");
    }
  }

 private:
  static double as_real(const toml::node& n, const std::string& field) {
    if (const auto f = n.value_exact<double>()) return *f;
    if (const auto i = n.value_exact<std::int64_t>()) return static_cast<double>(*i);
    throw ConfigError(field, "expected a number");
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

Section section(const toml::table& root, std::string_view name, std::set<std::string>& seen) {
  seen.insert(std::string(name));
  const auto* node = root.get(name);
  if (node && !node->is_table()) throw ConfigError(std::string(name), "expected a table");
  return Section(node ? node->as_table() : nullptr, std::string(name));
}

AidMode aid_mode_from(const std::string& text, const std::string& field) {
  const auto m = parse_aid_mode(text);
  if (!m) throw ConfigError(field, "expected \"predictive\" or \"myopic\"");
  return *m;
}

void read_prior(Section& sec, std::string_view key, UniformPrior& prior) {
  sec.read_pair(key, prior.lower, prior.width);
}

}  // namespace

RunConfig parse_config(std::string_view toml_text, const std::filesystem::path& source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << e.description() << " at line " << e.source().begin.line;
    throw ConfigError("config", msg.str());
  }

  RunConfig rc;
  SessionConfig& sc = rc.session;
  std::set<std::string> top_seen;

  {
    top_seen.insert("seed");
    if (const auto* n = root.get("seed")) {
      const auto v = n->value_exact<std::int64_t>();
      if (!v || *v < 0) throw ConfigError("seed", "expected a non-negative integer");
      sc.seed = static_cast<std::uint64_t>(*v);
    }
  }

  auto s = section(root, "session", top_seen);
  if (auto m = s.read_string("aid_mode")) sc.aid_mode = aid_mode_from(*m, s.field("aid_mode"));
  s.read_int("games_per_operator", sc.games_per_operator, 1);
  s.read_int("trials_per_game", sc.trials_per_game, 1);
  s.read_int("abc_update_interval_games", sc.abc_update_interval_games, 1);
  s.read_int("n_operators", rc.n_operators, 1);
  s.read_int("threads", rc.threads, 0);
  s.reject_unknown();

  auto pr = section(root, "priors", top_seen);
  read_prior(pr, "b0", sc.priors.b0);
  read_prior(pr, "b1", sc.priors.b1);
  read_prior(pr, "b2", sc.priors.b2);
  read_prior(pr, "s", sc.priors.s);
  read_prior(pr, "theta", sc.priors.theta);
  pr.reject_unknown();

  auto op = section(root, "operator", top_seen);
  op.read("noise_sigma", sc.operator_base.noise_sigma);
  op.read("belief_initial", sc.operator_base.belief_initial);
  op.read("preference_initial", sc.operator_base.preference_initial);
  if (auto m = op.read_string("info_mode")) {
    if (*m == "visible") sc.operator_base.info_mode = InfoMode::CapabilityVisible;
    else if (*m == "hidden") sc.operator_base.info_mode = InfoMode::CapabilityHidden;
    else throw ConfigError(op.field("info_mode"), "expected \"visible\" or \"hidden\"");
  }
  op.reject_unknown();

  auto ch = section(root, "choice", top_seen);
  ch.read("temperature", sc.choice.temperature);
  ch.read("recency_weight", sc.choice.recency_weight);
  ch.reject_unknown();

  auto pd = section(root, "predictor", top_seen);
  if (auto id = pd.read_string("id")) {
    if (*id != "sticky" && *id != "frequency" && *id != "recency" && *id != "external")
      throw ConfigError(pd.field("id"), "expected one of sticky, frequency, recency, external");
    sc.predictor.id = *id;
  }
  pd.read_int("window", sc.predictor.window, 1);
  pd.read("frequency_decay", sc.predictor.frequency_decay);
  pd.read("recency_weight", sc.predictor.recency_weight);
  pd.read("temperature", sc.predictor.temperature);
  if (auto cmd = pd.read_strings("command")) sc.predictor.external_command = *cmd;
  pd.read_int("timeout_ms", sc.predictor.timeout_ms, 1);
  if (sc.predictor.id == "external" && sc.predictor.external_command.empty())
    throw ConfigError(pd.field("command"), "required when id = \"external\"");
  pd.reject_unknown();

  auto ind = section(root, "indicator", top_seen);
  if (auto m = ind.read_string("init")) {
    if (*m == "perturb") sc.indicator_init = IndicatorInit::Perturb;
    else if (*m == "prior") sc.indicator_init = IndicatorInit::PriorDraw;
    else throw ConfigError(ind.field("init"), "expected \"perturb\" or \"prior\"");
  }
  ind.read("perturb_sigma", sc.perturb_sigma);
  ind.reject_unknown();

  auto abc = section(root, "abc", top_seen);
  abc.read_int("accepted_target", sc.abc.accepted_target, 1);
  abc.read_int("batch_size", sc.abc.batch_size, 1);
  abc.read("threshold", sc.abc.threshold);
  abc.read_int("max_batches", sc.abc.max_batches, 1);
  abc.read("simulate_noise", sc.abc.simulate_noise);
  abc.read("extended_stats", sc.abc.extended_stats);
  abc.read("exclude_ambiguous", sc.abc.exclude_ambiguous);
  abc.read_int("diagnose_operator", rc.diagnose_operator, 0);
  abc.reject_unknown();

  auto bank = section(root, "bank", top_seen);
  bank.read_int("count", sc.bank.count, 1);
  bank.read_pair("payoff_range", sc.bank.payoff.lower, sc.bank.payoff.upper);
  bank.read_pair("probability_range", sc.bank.probability.lower, sc.bank.probability.upper);
  if (auto st = bank.read_string("style")) {
    if (*st == "independent") sc.bank.style = BankStyle::Independent;
    else if (*st == "ev_matched") sc.bank.style = BankStyle::EvMatched;
    else throw ConfigError(bank.field("style"), "expected \"independent\" or \"ev_matched\"");
  }
  bank.read("max_ev_gap", sc.bank.max_ev_gap);
  bank.reject_unknown();

  auto cmp = section(root, "compare", top_seen);
  if (auto v = cmp.read_reals("theta")) rc.compare.theta = *v;
  if (auto v = cmp.read_reals("s")) rc.compare.s = *v;
  if (auto v = cmp.read_reals("b2")) rc.compare.b2 = *v;
  cmp.read("width", rc.compare.width);
  if (auto m = cmp.read_string("mode_a")) rc.compare.mode_a = aid_mode_from(*m, cmp.field("mode_a"));
  if (auto m = cmp.read_string("mode_b")) rc.compare.mode_b = aid_mode_from(*m, cmp.field("mode_b"));
  if (rc.compare.theta.empty() || rc.compare.s.empty() || rc.compare.b2.empty())
    throw ConfigError("compare", "grid axes must be non-empty");
  if (!(rc.compare.width >= 0.0)) throw ConfigError(cmp.field("width"), "must be >= 0");
  cmp.reject_unknown();

  auto rp = section(root, "replay", top_seen);
  if (auto path = rp.read_string("trials")) {
    std::filesystem::path p(*path);
    if (p.is_relative()) p = source.parent_path() / p;
    rc.replay_trials = p;
  }
  rp.reject_unknown();

  auto sv = section(root, "serve", top_seen);
  if (auto h = sv.read_string("host")) rc.serve.host = *h;
  sv.read_int("port", rc.serve.port, 0);
  if (auto d = sv.read_string("data_dir")) rc.serve.data_dir = *d;
  sv.reject_unknown();

  for (const auto& [k, v] : root) {
    if (!top_seen.contains(std::string(k.str()))) throw ConfigError(std::string(k.str()), "unknown key");
  }

  if (!(sc.bank.max_ev_gap >= 0.0)) throw ConfigError("bank.max_ev_gap", "must be >= 0");
  sc.validate();
  for (double theta : rc.compare.theta)
    for (double sv_ : rc.compare.s)
      for (double b2 : rc.compare.b2) {
        try {
          PriorSpec::centered(theta, sv_, b2, rc.compare.width).validate();
        } catch (const std::invalid_argument& e) {
          throw ConfigError("compare", e.what());
        }
      }
  return rc;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

namespace {

nlohmann::ordered_json prior_json(const UniformPrior& p) { return nlohmann::ordered_json::array({p.lower, p.width}); }

}  // namespace

nlohmann::ordered_json config_to_json(const RunConfig& rc) {
  const SessionConfig& sc = rc.session;
  nlohmann::ordered_json j;
  j["seed"] = sc.seed;
  j["session"] = {{"aid_mode", to_string(sc.aid_mode)},
                  {"games_per_operator", sc.games_per_operator},
                  {"trials_per_game", sc.trials_per_game},
                  {"abc_update_interval_games", sc.abc_update_interval_games},
                  {"n_operators", rc.n_operators}};
  j["priors"] = {{"b0", prior_json(sc.priors.b0)},
                 {"b1", prior_json(sc.priors.b1)},
                 {"b2", prior_json(sc.priors.b2)},
                 {"s", prior_json(sc.priors.s)},
                 {"theta", prior_json(sc.priors.theta)}};
  j["operator"] = {{"noise_sigma", sc.operator_base.noise_sigma},
                   {"belief_initial", sc.operator_base.belief_initial},
                   {"preference_initial", sc.operator_base.preference_initial},
                   {"info_mode", to_string(sc.operator_base.info_mode)}};
  j["choice"] = {{"temperature", sc.choice.temperature}, {"recency_weight", sc.choice.recency_weight}};
  j["predictor"] = {{"id", sc.predictor.id},
                    {"window", sc.predictor.window},
                    {"frequency_decay", sc.predictor.frequency_decay},
                    {"recency_weight", sc.predictor.recency_weight},
                    {"temperature", sc.predictor.temperature},
                    {"command", sc.predictor.external_command},
                    {"timeout_ms", sc.predictor.timeout_ms}};
  j["indicator"] = {{"init", to_string(sc.indicator_init)}, {"perturb_sigma", sc.perturb_sigma}};
  j["abc"] = {{"accepted_target", sc.abc.accepted_target},
              {"batch_size", sc.abc.batch_size},
              {"threshold", sc.abc.threshold},
              {"max_batches", sc.abc.max_batches},
              {"simulate_noise", sc.abc.simulate_noise},
              {"extended_stats", sc.abc.extended_stats},
              {"exclude_ambiguous", sc.abc.exclude_ambiguous},
              {"diagnose_operator", rc.diagnose_operator}};
  j["bank"] = {{"count", sc.bank.count},
               {"payoff_range", {sc.bank.payoff.lower, sc.bank.payoff.upper}},
               {"probability_range", {sc.bank.probability.lower, sc.bank.probability.upper}},
               {"style", to_string(sc.bank.style)},
               {"max_ev_gap", sc.bank.max_ev_gap}};
  j["compare"] = {{"theta", rc.compare.theta},
                  {"s", rc.compare.s},
                  {"b2", rc.compare.b2},
                  {"width", rc.compare.width},
                  {"mode_a", to_string(rc.compare.mode_a)},
                  {"mode_b", to_string(rc.compare.mode_b)}};
  if (rc.replay_trials) j["replay"] = {{"trials", rc.replay_trials->string()}};
  return j;
}

std::string config_hash(const RunConfig& config) {
  const std::string text = config_to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SessionConfig session_from_json(const nlohmann::json& body, const SessionConfig& base) {
  if (!body.is_object()) throw ConfigError("body", "expected a JSON object");
  SessionConfig sc = base;
  const auto int_field = [&](const std::string& key, auto& out, long long min_value) {
    const auto& v = body.at(key);
    if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
    const auto x = v.get<long long>();
    if (x < min_value) throw ConfigError(key, "must be >= " + std::to_string(min_value));
    out = static_cast<std::remove_reference_t<decltype(out)>>(x);
  };
  for (const auto& [key, value] : body.items()) {
    if (key == "aid_mode") {
      if (!value.is_string()) throw ConfigError(key, "expected a string");
      sc.aid_mode = aid_mode_from(value.get<std::string>(), key);
    } else if (key == "games_per_operator") {
      int_field(key, sc.games_per_operator, 1);
    } else if (key == "trials_per_game") {
      int_field(key, sc.trials_per_game, 1);
    } else if (key == "abc_update_interval_games") {
      int_field(key, sc.abc_update_interval_games, 1);
    } else if (key == "seed") {
      if (!value.is_number_integer() || (!value.is_number_unsigned() && value.get<std::int64_t>() < 0))
        throw ConfigError(key, "expected a non-negative integer");
      sc.seed = value.get<std::uint64_t>();
    } else if (key == "window") {
      int_field(key, sc.predictor.window, 1);
    } else if (key == "predictor") {
      if (!value.is_string()) throw ConfigError(key, "expected a string");
      const auto id = value.get<std::string>();
      if (id != "sticky" && id != "frequency" && id != "recency")
        throw ConfigError(key, "expected one of sticky, frequency, recency");
      sc.predictor.id = id;
    } else {
      throw ConfigError(key, "unknown key");
    }
  }
  sc.validate();
  return sc;
}

}  // namespace ada
