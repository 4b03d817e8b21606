#pragma once

// Live sessions in which a human plays the operator, plus the HTTP+JSON API
// and JSON-lines persistence around them.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ada/ada_loop.hpp"

namespace httplib {
class Server;
}

namespace ada {

inline constexpr int kSessionSchemaVersion = 1;

enum class SessionPhase : std::uint8_t { AwaitingInitial, AwaitingFinal, Finished };

std::string to_string(SessionPhase phase);

class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message, std::string field = {})
      : std::runtime_error(message), status_(status), code_(std::move(code)), field_(std::move(field)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  const std::string& field() const { return field_; }

 private:
  int status_;
  std::string code_;
  std::string field_;
};

// Inferred reliance for a human final decision. When the suggestion differs
// from the initial pick, switching reveals d = 1 and keeping reveals d = 0.
// When they coincide, following both reveals nothing: d falls back to d_ind
// and the trial is flagged ambiguous; picking the other option is d = 0.
struct InferredReliance {
  int d = 0;
  bool ambiguous = false;
};
InferredReliance infer_reliance(Option initial, Option suggestion, Option final_choice, int d_ind);

// One human session. Not thread-safe; SessionStore serializes access.
class LiveSession {
 public:
  // `overrides` are the flat keys accepted by session_from_json; the seed
  // actually used is written back into them.
  LiveSession(std::string id, const SessionConfig& base, nlohmann::json overrides);

  const std::string& id() const { return id_; }
  const SessionConfig& config() const { return config_; }
  const nlohmann::json& overrides() const { return overrides_; }
  SessionPhase phase() const { return phase_; }
  const std::vector<InteractionRecord>& records() const { return records_; }
  const IndicatorState& indicator() const { return indicator_; }
  const std::vector<int>& abc_updates() const { return abc_updates_; }

  nlohmann::ordered_json view() const;
  nlohmann::ordered_json post_initial(Option selection);

  struct FinalOutcome {
    nlohmann::ordered_json response;
    // Lines to persist before the response is released.
    std::vector<nlohmann::ordered_json> log_lines;
  };
  FinalOutcome post_final(Option final_choice);

  nlohmann::ordered_json trace_json() const;

 private:
  const Game& current_game() const { return games_[static_cast<std::size_t>(game_index_)]; }
  nlohmann::ordered_json summary() const;

  std::string id_;
  SessionConfig config_;
  nlohmann::json overrides_;
  OperatorStreams streams_;
  std::vector<Game> games_;
  PayoffBounds bounds_;
  std::unique_ptr<Predictor> predictor_;
  IndicatorState indicator_;
  ObservationLog log_;
  GameMemory memory_;
  std::vector<InteractionRecord> records_;
  std::vector<int> abc_updates_;
  std::vector<int> schedule_;
  int game_index_ = 0;
  int trial_ = 0;
  SessionPhase phase_ = SessionPhase::AwaitingInitial;
  std::optional<InteractionRecord> pending_;
  double cumulative_reward_ = 0.0;
};

// Owns sessions and their JSON-lines files (one per session: a header line,
// then one line per completed trial and per refit).
class SessionStore {
 public:
  SessionStore(SessionConfig base, std::filesystem::path data_dir);
  ~SessionStore();

  // Reloads sessions persisted by an earlier run by replaying their inputs.
  // Returns the number restored; unreadable files are reported to `warn`.
  std::size_t restore(const std::function<void(const std::string&)>& warn = {});

  nlohmann::ordered_json create(const nlohmann::json& body);
  nlohmann::ordered_json get(const std::string& id);
  nlohmann::ordered_json initial(const std::string& id, const nlohmann::json& body);
  nlohmann::ordered_json final(const std::string& id, const nlohmann::json& body);
  nlohmann::ordered_json trace(const std::string& id);

  // Flushes and closes every session file.
  void close_all();
  std::size_t size() const;

 private:
  struct Entry {
    std::mutex mutex;
    std::unique_ptr<LiveSession> session;
    std::ofstream file;
  };
  std::shared_ptr<Entry> find(const std::string& id) const;
  std::string new_id();
  void persist(Entry& e, const nlohmann::ordered_json& line);

  SessionConfig base_;
  std::filesystem::path data_dir_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::mutex id_mutex_;
};

// HTTP front end for a SessionStore.
class SessionServer {
 public:
  explicit SessionServer(SessionStore& store);
  ~SessionServer();

  // Binds (port 0 picks a free port) and returns the bound port. Throws
  // std::runtime_error when the port cannot be bound.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  SessionStore& store_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace ada
