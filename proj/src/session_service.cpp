#include "ada/session_service.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include <httplib.h>

#include "ada/config.hpp"
#include "ada/trace_io.hpp"

namespace ada {

std::string to_string(SessionPhase phase) {
  switch (phase) {
    case SessionPhase::AwaitingInitial: return "awaiting-initial";
    case SessionPhase::AwaitingFinal: return "awaiting-final";
    case SessionPhase::Finished: return "finished";
  }
  return "unknown";
}

InferredReliance infer_reliance(Option initial, Option suggestion, Option final_choice, int d_ind) {
  if (suggestion != initial) return {final_choice == suggestion ? 1 : 0, false};
  if (final_choice == suggestion) return {d_ind, true};
  return {0, false};
}

namespace {

nlohmann::ordered_json gamble_json(const Gamble& g) {
  return {{"high", g.high_payoff}, {"low", g.low_payoff}, {"p_high", g.p_high}};
}

nlohmann::ordered_json params_json(const OperatorParams& p) {
  return {{"b1", p.b1}, {"b2", p.b2}, {"s", p.s}, {"theta", p.theta}};
}

SessionConfig resolve(const SessionConfig& base, nlohmann::json& overrides) {
  if (overrides.is_null()) overrides = nlohmann::json::object();
  if (!overrides.is_object()) throw ConfigError("body", "expected a JSON object");
  if (!overrides.contains("seed")) overrides["seed"] = std::random_device{}() | (std::uint64_t{std::random_device{}()} << 32);
  return session_from_json(overrides, base);
}

}  // namespace

LiveSession::LiveSession(std::string id, const SessionConfig& base, nlohmann::json overrides)
    : id_(std::move(id)), config_(resolve(base, overrides)), overrides_(std::move(overrides)),
      streams_(OperatorStreams::derive(config_.seed, 0)) {
  const auto bank = make_game_bank(config_);
  bounds_ = PayoffBounds::of(bank);
  games_ = pick_games(bank, config_.games_per_operator, streams_.games);
  predictor_ = make_predictor(config_.predictor);
  // No operator truth exists for a human; the indicator starts from the priors.
  indicator_ = init_indicator(nullptr, IndicatorInit::PriorDraw, 0.0, config_.priors, config_.operator_base,
                              streams_.indicator);
  schedule_ = abc_schedule(config_.games_per_operator, config_.abc_update_interval_games);
}

nlohmann::ordered_json LiveSession::summary() const {
  double rho = 0.0;
  for (const auto& r : records_) rho += r.rho;
  nlohmann::ordered_json j;
  j["trials"] = records_.size();
  j["cumulative_reward"] = cumulative_reward_;
  j["mean_rho"] = records_.empty() ? 0.0 : rho / static_cast<double>(records_.size());
  return j;
}

nlohmann::ordered_json LiveSession::view() const {
  nlohmann::ordered_json j;
  j["id"] = id_;
  j["state"] = to_string(phase_);
  j["aid_mode"] = to_string(config_.aid_mode);
  j["games_per_operator"] = config_.games_per_operator;
  j["trials_per_game"] = config_.trials_per_game;
  j["abc_update_interval_games"] = config_.abc_update_interval_games;
  j["game_index"] = game_index_;
  j["trial"] = trial_;
  if (phase_ != SessionPhase::Finished) {
    const Game& g = current_game();
    j["game"] = {{"id", g.id}, {"A", gamble_json(g.option_a)}, {"B", gamble_json(g.option_b)}};
  } else {
    j["game"] = nullptr;
  }
  if (pending_) {
    j["pending"] = {{"initial", to_string(pending_->initial)},
                    {"suggestion", to_string(pending_->suggestion)},
                    {"agrees", pending_->agreement == Agreement::Agree}};
  } else {
    j["pending"] = nullptr;
  }
  j["abc_updates"] = abc_updates_;
  j["summary"] = summary();
  return j;
}

nlohmann::ordered_json LiveSession::post_initial(Option selection) {
  if (phase_ != SessionPhase::AwaitingInitial)
    throw ServiceError(409, "conflict", "session is " + to_string(phase_) + ", not awaiting-initial");
  const Game& game = current_game();
  InteractionRecord r;
  r.game_index = game_index_;
  r.game_id = game.id;
  r.trial = trial_;
  r.context = make_context_vector(game, bounds_);
  const CapabilityResult cap = capability(game, remaining_trials(game, trial_));
  r.capability = cap.capability;
  r.optimal = cap.optimal_option;
  r.initial = selection;

  PredictionInput input;
  input.context = r.context;
  const auto& hist = memory_.initial_history;
  const std::size_t window = config_.predictor.window;
  const std::size_t from = hist.size() > window ? hist.size() - window : 0;
  input.history.assign(hist.begin() + static_cast<std::ptrdiff_t>(from), hist.end());
  r.predicted = predict(input, *predictor_).point;

  r.d_ind = indicator_.state.reliance;
  r.preference_ind = indicator_.state.preference;
  r.preference = std::nan("");
  r.suggestion = choose_suggestion(config_.aid_mode, r.d_ind, r.predicted, r.optimal);
  r.agreement = r.initial == r.suggestion ? Agreement::Agree : Agreement::Disagree;
  pending_ = r;
  phase_ = SessionPhase::AwaitingFinal;

  nlohmann::ordered_json j;
  j["id"] = id_;
  j["game_index"] = r.game_index;
  j["trial"] = r.trial;
  j["initial"] = to_string(r.initial);
  j["suggestion"] = to_string(r.suggestion);
  j["agrees"] = r.agreement == Agreement::Agree;
  j["state"] = to_string(phase_);
  return j;
}

LiveSession::FinalOutcome LiveSession::post_final(Option final_choice) {
  if (phase_ != SessionPhase::AwaitingFinal)
    throw ServiceError(409, "conflict", "session is " + to_string(phase_) + ", not awaiting-final");
  InteractionRecord r = *pending_;
  const Game& game = current_game();
  const InferredReliance inferred = infer_reliance(r.initial, r.suggestion, final_choice, r.d_ind);
  r.d = inferred.d;
  r.ambiguous = inferred.ambiguous;
  r.final_selection = final_choice;
  const TrialOutcome outcome = sample_trial_outcome(game, streams_.payoff);
  r.payoff = outcome.payoff(final_choice);
  r.foregone = outcome.payoff(other(final_choice));
  r.rho = performance_metric(r.d_ind, r.d, r.suggestion, r.initial);

  step_indicator(indicator_, r.capability, r.agreement);
  log_.append(Observation{r.d, r.agreement, r.capability, r.ambiguous});
  memory_.initial_history.push_back(ChoiceFeedback{r.initial, bounds_.normalize(outcome.payoff(r.initial)),
                                                   bounds_.normalize(outcome.payoff(other(r.initial)))});
  cumulative_reward_ += r.payoff;
  records_.push_back(r);
  pending_.reset();

  FinalOutcome out;
  nlohmann::ordered_json line;
  line["schema"] = kSessionSchemaVersion;
  line["kind"] = "trial";
  line["record"] = record_to_json(r);
  out.log_lines.push_back(std::move(line));

  bool game_over = false;
  std::optional<nlohmann::ordered_json> refit;
  if (++trial_ == game.trials) {
    game_over = true;
    trial_ = 0;
    ++game_index_;
    memory_ = GameMemory{};
    if (std::find(schedule_.begin(), schedule_.end(), game_index_) != schedule_.end()) {
      nlohmann::ordered_json fit;
      fit["schema"] = kSessionSchemaVersion;
      fit["kind"] = "abc_update";
      fit["after_games"] = game_index_;
      const bool usable = std::any_of(log_.entries().begin(), log_.entries().end(), [&](const Observation& o) {
        return !(config_.abc.exclude_ambiguous && o.ambiguous);
      });
      if (usable) {
        const AbcResult res =
            abc_rejection(log_.entries(), config_.priors, indicator_.params, config_.abc, streams_.abc);
        indicator_.params = point_estimate(res.samples, indicator_.params);
        abc_updates_.push_back(game_index_);
        fit["skipped"] = false;
        fit["acceptance_rate"] = res.acceptance_rate();
        fit["fallback"] = res.fallback;
        fit["params"] = params_json(indicator_.params);
      } else {
        fit["skipped"] = true;
      }
      refit = fit;
      out.log_lines.push_back(fit);
    }
    if (game_index_ == config_.games_per_operator) phase_ = SessionPhase::Finished;
  }
  if (phase_ != SessionPhase::Finished) phase_ = SessionPhase::AwaitingInitial;

  nlohmann::ordered_json j;
  j["id"] = id_;
  j["payoff"] = r.payoff;
  j["foregone"] = r.foregone;
  j["trial"] = {{"game_index", r.game_index},
                {"trial", r.trial},
                {"initial", to_string(r.initial)},
                {"suggestion", to_string(r.suggestion)},
                {"final", to_string(r.final_selection)},
                {"d", r.d},
                {"ambiguous", r.ambiguous},
                {"rho", r.rho}};
  j["game_over"] = game_over;
  j["abc_update"] = refit ? *refit : nlohmann::ordered_json(nullptr);
  j["state"] = to_string(phase_);
  if (phase_ == SessionPhase::Finished) {
    j["next"] = nullptr;
  } else {
    const Game& next = current_game();
    j["next"] = {{"game_index", game_index_},
                 {"trial", trial_},
                 {"game", {{"id", next.id}, {"A", gamble_json(next.option_a)}, {"B", gamble_json(next.option_b)}}}};
  }
  j["summary"] = summary();
  out.response = std::move(j);
  return out;
}

nlohmann::ordered_json LiveSession::trace_json() const {
  nlohmann::ordered_json j;
  j["id"] = id_;
  j["schema"] = kSessionSchemaVersion;
  j["state"] = to_string(phase_);
  auto recs = nlohmann::ordered_json::array();
  for (const auto& r : records_) recs.push_back(record_to_json(r));
  j["records"] = std::move(recs);
  const int games = std::max(1, std::min(config_.games_per_operator, game_index_ + (trial_ > 0 ? 1 : 0)));
  if (records_.empty()) {
    j["per_game"] = {{"mean_d", nlohmann::ordered_json::array()}, {"mean_rho", nlohmann::ordered_json::array()}};
  } else {
    const auto [d, rho] = per_game_means(records_, games);
    j["per_game"] = {{"mean_d", d}, {"mean_rho", rho}};
  }
  j["abc_updates"] = abc_updates_;
  j["summary"] = summary();
  return j;
}

SessionStore::SessionStore(SessionConfig base, std::filesystem::path data_dir)
    : base_(std::move(base)), data_dir_(std::move(data_dir)) {
  base_.validate();
  std::filesystem::create_directories(data_dir_);
}

SessionStore::~SessionStore() { close_all(); }

std::size_t SessionStore::size() const {
  std::shared_lock lock(map_mutex_);
  return sessions_.size();
}

std::string SessionStore::new_id() {
  std::lock_guard lock(id_mutex_);
  static thread_local std::random_device rd;
  while (true) {
    const std::uint64_t v = (std::uint64_t{rd()} << 32) | rd();
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    std::string id(buf);
    std::shared_lock map_lock(map_mutex_);
    if (!sessions_.contains(id) && !std::filesystem::exists(data_dir_ / (id + ".jsonl"))) return id;
  }
}

void SessionStore::persist(Entry& e, const nlohmann::ordered_json& line) {
  e.file << line.dump() << '\n';
  e.file.flush();
  if (!e.file) throw ServiceError(500, "storage", "failed to persist session transcript");
}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "not_found", "unknown session " + id);
  return it->second;
}

nlohmann::ordered_json SessionStore::create(const nlohmann::json& body) {
  const std::string id = new_id();
  auto entry = std::make_shared<Entry>();
  try {
    entry->session = std::make_unique<LiveSession>(id, base_, body);
  } catch (const ConfigError& e) {
    throw ServiceError(422, "invalid_config", e.what(), e.field());
  }
  entry->file.open(data_dir_ / (id + ".jsonl"), std::ios::binary | std::ios::app);
  if (!entry->file) throw ServiceError(500, "storage", "cannot create session file");
  nlohmann::ordered_json header;
  header["schema"] = kSessionSchemaVersion;
  header["kind"] = "session";
  header["id"] = id;
  header["overrides"] = entry->session->overrides();
  persist(*entry, header);
  auto view = entry->session->view();
  std::unique_lock lock(map_mutex_);
  sessions_.emplace(id, std::move(entry));
  return view;
}

nlohmann::ordered_json SessionStore::get(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  return e->session->view();
}

namespace {

Option selection_field(const nlohmann::json& body, const char* key) {
  if (!body.is_object() || !body.contains(key)) throw ServiceError(422, "invalid_request", std::string("missing '") + key + "'", key);
  const auto& v = body.at(key);
  if (!v.is_string()) throw ServiceError(422, "invalid_request", std::string("'") + key + "' must be \"A\" or \"B\"", key);
  const auto o = parse_option(v.get<std::string>());
  if (!o) throw ServiceError(422, "invalid_request", std::string("'") + key + "' must be \"A\" or \"B\"", key);
  return *o;
}

}  // namespace

nlohmann::ordered_json SessionStore::initial(const std::string& id, const nlohmann::json& body) {
  const Option sel = selection_field(body, "selection");
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  return e->session->post_initial(sel);
}

nlohmann::ordered_json SessionStore::final(const std::string& id, const nlohmann::json& body) {
  const Option sel = selection_field(body, "final");
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  auto out = e->session->post_final(sel);
  for (const auto& line : out.log_lines) persist(*e, line);
  return out.response;
}

nlohmann::ordered_json SessionStore::trace(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  return e->session->trace_json();
}

void SessionStore::close_all() {
  std::shared_lock lock(map_mutex_);
  for (auto& [id, e] : sessions_) {
    std::lock_guard l(e->mutex);
    if (e->file.is_open()) {
      e->file.flush();
      e->file.close();
    }
  }
}

std::size_t SessionStore::restore(const std::function<void(const std::string&)>& warn) {
  const auto report = [&](const std::string& msg) {
    if (warn) warn(msg);
  };
  std::size_t restored = 0;
  std::vector<std::filesystem::path> files;
  for (const auto& de : std::filesystem::directory_iterator(data_dir_))
    if (de.path().extension() == ".jsonl") files.push_back(de.path());
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    try {
      std::ifstream in(path, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      const std::string text = ss.str();
      // A trailing line without newline was cut off mid-write; drop it.
      const std::size_t complete = text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1;
      std::istringstream lines(text.substr(0, complete));
      std::string line;
      std::unique_ptr<LiveSession> session;
      while (std::getline(lines, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        if (j.at("schema").get<int>() != kSessionSchemaVersion) throw std::runtime_error("unsupported schema");
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "session") {
          session = std::make_unique<LiveSession>(j.at("id").get<std::string>(), base_, j.at("overrides"));
        } else if (kind == "trial") {
          if (!session) throw std::runtime_error("trial before header");
          const auto& rec = j.at("record");
          session->post_initial(*parse_option(rec.at("initial").get<std::string>()));
          const auto out = session->post_final(*parse_option(rec.at("final").get<std::string>()));
          if (out.response.at("payoff").get<double>() != rec.at("payoff").get<double>())
            throw std::runtime_error("replay diverged (server configuration changed?)");
        }
      }
      if (!session) throw std::runtime_error("missing header");
      if (complete != text.size()) std::filesystem::resize_file(path, complete);
      auto entry = std::make_shared<Entry>();
      entry->session = std::move(session);
      entry->file.open(path, std::ios::binary | std::ios::app);
      std::unique_lock lock(map_mutex_);
      sessions_.emplace(entry->session->id(), std::move(entry));
      ++restored;
    } catch (const std::exception& e) {
      report("skipping " + path.string() + ": " + e.what());
    }
  }
  return restored;
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                const std::string& field = {}) {
  nlohmann::ordered_json err{{"code", code}, {"message", message}};
  if (!field.empty()) err["field"] = field;
  send_json(res, status, {{"error", err}});
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ServiceError(400, "bad_json", e.what());
  }
}

}  // namespace

SessionServer::SessionServer(SessionStore& store) : store_(store), server_(std::make_unique<httplib::Server>()) {
  using Handler = std::function<nlohmann::ordered_json(const httplib::Request&)>;
  const auto wrap = [](int ok_status, Handler h) {
    return [ok_status, h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        send_json(res, ok_status, h(req));
      } catch (const ServiceError& e) {
        send_error(res, e.status(), e.code(), e.what(), e.field());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  };
  server_->Get("/healthz", wrap(200, [](const httplib::Request&) { return nlohmann::ordered_json{{"status", "ok"}}; }));
  server_->Post("/api/sessions", wrap(201, [this](const httplib::Request& req) { return store_.create(parse_body(req)); }));
  server_->Get("/api/sessions/:id",
               wrap(200, [this](const httplib::Request& req) { return store_.get(req.path_params.at("id")); }));
  server_->Post("/api/sessions/:id/initial", wrap(200, [this](const httplib::Request& req) {
                  return store_.initial(req.path_params.at("id"), parse_body(req));
                }));
  server_->Post("/api/sessions/:id/final", wrap(200, [this](const httplib::Request& req) {
                  return store_.final(req.path_params.at("id"), parse_body(req));
                }));
  server_->Get("/api/sessions/:id/trace",
               wrap(200, [this](const httplib::Request& req) { return store_.trace(req.path_params.at("id")); }));
}

SessionServer::~SessionServer() = default;

int SessionServer::bind(const std::string& host, int port) {
  // httplib sets SO_REUSEPORT by default, which lets a second server share an
  // occupied port silently.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound <= 0) throw std::runtime_error("cannot bind " + host + " to a free port");
    return bound;
  }
  if (!server_->bind_to_port(host, port))
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port) + " (port in use or not permitted)");
  return port;
}

void SessionServer::listen() { server_->listen_after_bind(); }

void SessionServer::stop() { server_->stop(); }

}  // namespace ada
