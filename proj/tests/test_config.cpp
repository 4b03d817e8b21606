#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ada/config.hpp"

using namespace ada;

namespace {

std::string field_of(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_CASE("empty config gives defaults") {
  const auto rc = parse_config("");
  CHECK(rc.n_operators == 200);
  CHECK(rc.session.games_per_operator == 30);
  CHECK(rc.session.trials_per_game == 25);
  CHECK(rc.session.abc_update_interval_games == 10);
  CHECK(rc.session.priors.theta.lower == 0.5);
  CHECK(rc.session.priors.theta.width == 0.2);
  CHECK(rc.serve.port == 8080);
  CHECK_FALSE(rc.replay_trials.has_value());
}

TEST_CASE("sections are read") {
  const auto rc = parse_config(R"(
seed = 99
[session]
aid_mode = "myopic"
games_per_operator = 12
n_operators = 7
[priors]
theta = [0.4, 0.1]
[operator]
noise_sigma = 0.0
info_mode = "hidden"
[predictor]
id = "frequency"
window = 3
[abc]
threshold = 0.25
[bank]
style = "independent"
count = 40
[compare]
theta = [0.55, 0.65]
width = 0.01
[serve]
port = 9000
)");
  CHECK(rc.session.seed == 99);
  CHECK(rc.session.aid_mode == AidMode::Myopic);
  CHECK(rc.session.games_per_operator == 12);
  CHECK(rc.n_operators == 7);
  CHECK(rc.session.priors.theta.lower == 0.4);
  CHECK(rc.session.operator_base.noise_sigma == 0.0);
  CHECK(rc.session.operator_base.info_mode == InfoMode::CapabilityHidden);
  CHECK(rc.session.predictor.id == "frequency");
  CHECK(rc.session.predictor.window == 3);
  CHECK(rc.session.abc.threshold == 0.25);
  CHECK(rc.session.bank.style == BankStyle::Independent);
  CHECK(rc.session.bank.count == 40);
  CHECK(rc.compare.theta == std::vector<double>{0.55, 0.65});
  CHECK(rc.compare.width == 0.01);
  CHECK(rc.serve.port == 9000);
}

TEST_CASE("errors name the field") {
  CHECK(field_of("[session]\ngames = 3\n") == "session.games");
  CHECK(field_of("[nonsense]\n") == "nonsense");
  CHECK(field_of("[session]\ntrials_per_game = 0\n") == "session.trials_per_game");
  CHECK(field_of("[session]\ntrials_per_game = \"x\"\n") == "session.trials_per_game");
  CHECK(field_of("[priors]\ns = [0.5, 0.8]\n").rfind("priors", 0) == 0);
  CHECK(field_of("[session]\naid_mode = \"clever\"\n") == "session.aid_mode");
  CHECK_FALSE(field_of("this is not toml [").empty());
}

TEST_CASE("missing file") {
  try {
    load_config("/no/such/dir/run.toml");
    FAIL("expected error");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "config");
    CHECK(std::string(e.what()).find("/no/such/dir/run.toml") != std::string::npos);
  }
}

TEST_CASE("replay path is relative to the config file") {
  const auto dir = std::filesystem::temp_directory_path() / "ada_cfg_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "r.toml") << "[replay]\ntrials = \"data/t.csv\"\n";
  const auto rc = load_config(dir / "r.toml");
  REQUIRE(rc.replay_trials.has_value());
  CHECK(*rc.replay_trials == dir / "data/t.csv");
  std::filesystem::remove_all(dir);
}

TEST_CASE("config hash tracks the resolved values") {
  const auto a = parse_config("seed = 1\n");
  const auto b = parse_config("# comment\nseed = 1\n");
  const auto c = parse_config("seed = 2\n");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a).size() == 16);
  CHECK(config_to_json(a)["seed"] == 1);
}

TEST_CASE("session overrides") {
  const SessionConfig base;
  const auto s = session_from_json({{"aid_mode", "myopic"}, {"games_per_operator", 4}, {"seed", 5}}, base);
  CHECK(s.aid_mode == AidMode::Myopic);
  CHECK(s.games_per_operator == 4);
  CHECK(s.seed == 5);
  CHECK(s.trials_per_game == base.trials_per_game);
  CHECK_THROWS_AS(session_from_json({{"trials_per_game", 0}}, base), ConfigError);
  CHECK_THROWS_AS(session_from_json({{"bogus", 1}}, base), ConfigError);
  CHECK_THROWS_AS(session_from_json({{"aid_mode", 3}}, base), ConfigError);
}
