#pragma once

// TOML run configuration. Every section and key is optional; unknown keys are
// rejected so typos surface as field errors.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ada/ada_loop.hpp"

namespace ada {

struct ServeConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8080;
  std::filesystem::path data_dir = "sessions";
};

struct RunConfig {
  SessionConfig session;
  std::size_t n_operators = 200;
  // 0 = hardware concurrency.
  unsigned threads = 0;
  CompareGrid compare;
  // Dataset replay for `simulate`: recorded selections become h_i.
  std::optional<std::filesystem::path> replay_trials;
  // abc-diagnose: which operator of a multi-operator trace to fit.
  std::size_t diagnose_operator = 0;
  ServeConfig serve;
};

// Throws ConfigError naming the offending key ("section.key").
RunConfig parse_config(std::string_view toml_text, const std::filesystem::path& source = "<config>");
// ConfigError with field "config" and the path in the message when unreadable.
RunConfig load_config(const std::filesystem::path& path);

// Fully resolved configuration, used in manifests and for hashing.
nlohmann::ordered_json config_to_json(const RunConfig& config);
// FNV-1a over the compact JSON form, as 16 hex digits.
std::string config_hash(const RunConfig& config);

// Live-session overrides posted to the service: flat keys aid_mode,
// games_per_operator, trials_per_game, abc_update_interval_games, seed,
// predictor, window. Applied on top of base; throws ConfigError.
SessionConfig session_from_json(const nlohmann::json& body, const SessionConfig& base);

std::string to_string(BankStyle style);
std::string to_string(IndicatorInit mode);
std::string to_string(InfoMode mode);

}  // namespace ada
