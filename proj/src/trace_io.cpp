#include "ada/trace_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace ada {

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

void append_record(std::string& out, const InteractionRecord& r) {
  const auto opt = [](Option o) { return std::string(1, to_char(o)); };
  out += std::to_string(r.operator_index);
  out += ',' + std::to_string(r.game_index);
  out += ',' + r.game_id;
  out += ',' + std::to_string(r.trial);
  for (double c : r.context) out += ',' + format_real(c);
  out += ',' + opt(r.initial);
  out += ',' + opt(r.predicted);
  out += ',' + opt(r.suggestion);
  out += ',' + opt(r.optimal);
  out += ',' + std::to_string(static_cast<int>(r.agreement));
  out += ',' + std::to_string(r.d);
  out += ',' + std::to_string(r.d_ind);
  out += ',' + opt(r.final_selection);
  out += ',' + format_real(r.payoff);
  out += ',' + format_real(r.foregone);
  out += ',' + format_real(r.capability);
  out += ',' + std::to_string(r.rho);
  out += ',' + format_real(r.preference);
  out += ',' + format_real(r.preference_ind);
  out += r.ambiguous ? ",1\n" : ",0\n";
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double to_real(std::string_view f, std::size_t line, std::string_view col) {
  if (f == "nan") return std::nan("");
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || ptr != f.data() + f.size())
    throw ParseError(line, "bad " + std::string(col) + " '" + std::string(f) + "'");
  return v;
}

long long to_int(std::string_view f, std::size_t line, std::string_view col) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || ptr != f.data() + f.size())
    throw ParseError(line, "bad " + std::string(col) + " '" + std::string(f) + "'");
  return v;
}

int to_binary(std::string_view f, std::size_t line, std::string_view col) {
  const auto v = to_int(f, line, col);
  if (v != 0 && v != 1) throw ParseError(line, std::string(col) + " must be 0 or 1");
  return static_cast<int>(v);
}

Option to_option(std::string_view f, std::size_t line, std::string_view col) {
  const auto o = parse_option(f);
  if (!o) throw ParseError(line, "bad " + std::string(col) + " '" + std::string(f) + "'");
  return *o;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string format_trace_csv(std::span<const OperatorTrace> traces) {
  std::string out(kTraceCsvHeader);
  out += '\n';
  for (const auto& t : traces)
    for (const auto& r : t.records) append_record(out, r);
  return out;
}

void write_trace_csv(const std::filesystem::path& path, std::span<const OperatorTrace> traces) {
  write_text(path, format_trace_csv(traces));
}

std::vector<InteractionRecord> parse_trace_csv(std::string_view text, std::span<const std::string_view> required) {
  const auto eol = text.find('\n');
  std::string_view header = text.substr(0, eol);
  if (!header.empty() && header.back() == '\r') header.remove_suffix(1);
  const auto names = split(header, ',');
  std::map<std::string, std::size_t, std::less<>> col;
  for (std::size_t i = 0; i < names.size(); ++i) col.emplace(std::string(names[i]), i);
  std::string missing;
  for (auto name : required)
    if (!col.contains(name)) missing += (missing.empty() ? "" : ", ") + std::string(name);
  if (!missing.empty()) throw ParseError(1, "trace is missing columns: " + missing);

  std::vector<InteractionRecord> out;
  if (eol == std::string_view::npos) return out;
  std::size_t pos = eol + 1;
  std::size_t line_no = 1;
  static constexpr std::string_view kCtx[] = {"ctx_ha", "ctx_la", "ctx_pa", "ctx_hb", "ctx_lb", "ctx_pb"};
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != names.size())
      throw ParseError(line_no, "expected " + std::to_string(names.size()) + " fields, got " + std::to_string(f.size()));
    const auto get = [&](std::string_view name) -> const std::string_view* {
      const auto it = col.find(name);
      return it == col.end() ? nullptr : &f[it->second];
    };

    InteractionRecord r;
    if (auto v = get("operator")) {
      const auto x = to_int(*v, line_no, "operator");
      if (x < 0) throw ParseError(line_no, "negative operator");
      r.operator_index = static_cast<std::size_t>(x);
    }
    if (auto v = get("game_index")) r.game_index = static_cast<int>(to_int(*v, line_no, "game_index"));
    if (auto v = get("game_id")) r.game_id = std::string(*v);
    if (auto v = get("trial")) r.trial = static_cast<int>(to_int(*v, line_no, "trial"));
    for (std::size_t k = 0; k < 6; ++k)
      if (auto v = get(kCtx[k])) r.context[k] = to_real(*v, line_no, kCtx[k]);
    if (auto v = get("initial")) r.initial = to_option(*v, line_no, "initial");
    if (auto v = get("predicted")) r.predicted = to_option(*v, line_no, "predicted");
    if (auto v = get("suggestion")) r.suggestion = to_option(*v, line_no, "suggestion");
    if (auto v = get("optimal")) r.optimal = to_option(*v, line_no, "optimal");
    if (auto v = get("agreement")) {
      const auto a = to_int(*v, line_no, "agreement");
      if (a != 1 && a != -1) throw ParseError(line_no, "agreement must be 1 or -1");
      r.agreement = a == 1 ? Agreement::Agree : Agreement::Disagree;
    }
    if (auto v = get("d")) r.d = to_binary(*v, line_no, "d");
    if (auto v = get("d_ind")) r.d_ind = to_binary(*v, line_no, "d_ind");
    if (auto v = get("final")) r.final_selection = to_option(*v, line_no, "final");
    if (auto v = get("payoff")) r.payoff = to_real(*v, line_no, "payoff");
    if (auto v = get("foregone")) r.foregone = to_real(*v, line_no, "foregone");
    if (auto v = get("capability")) r.capability = to_real(*v, line_no, "capability");
    if (auto v = get("rho")) r.rho = to_binary(*v, line_no, "rho");
    if (auto v = get("preference")) r.preference = to_real(*v, line_no, "preference");
    if (auto v = get("preference_ind")) r.preference_ind = to_real(*v, line_no, "preference_ind");
    if (auto v = get("ambiguous")) r.ambiguous = to_binary(*v, line_no, "ambiguous") == 1;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<InteractionRecord> read_trace_csv(const std::filesystem::path& path,
                                              std::span<const std::string_view> required) {
  return parse_trace_csv(read_file(path), required);
}

nlohmann::ordered_json record_to_json(const InteractionRecord& r) {
  const auto opt = [](Option o) { return std::string(1, to_char(o)); };
  const auto real = [](double v) -> nlohmann::ordered_json {
    if (std::isnan(v)) return nullptr;
    return v;
  };
  nlohmann::ordered_json j;
  j["operator"] = r.operator_index;
  j["game_index"] = r.game_index;
  j["game_id"] = r.game_id;
  j["trial"] = r.trial;
  j["context"] = r.context;
  j["initial"] = opt(r.initial);
  j["predicted"] = opt(r.predicted);
  j["suggestion"] = opt(r.suggestion);
  j["optimal"] = opt(r.optimal);
  j["agreement"] = static_cast<int>(r.agreement);
  j["d"] = r.d;
  j["d_ind"] = r.d_ind;
  j["final"] = opt(r.final_selection);
  j["payoff"] = r.payoff;
  j["foregone"] = r.foregone;
  j["capability"] = r.capability;
  j["rho"] = r.rho;
  j["preference"] = real(r.preference);
  j["preference_ind"] = real(r.preference_ind);
  j["ambiguous"] = r.ambiguous;
  return j;
}

nlohmann::ordered_json aggregate_to_json(const PopulationAggregate& agg) {
  nlohmann::ordered_json j;
  j["n_operators"] = agg.n_operators;
  j["games"] = agg.reliance.mean.size();
  j["reliance"] = {{"mean", agg.reliance.mean}, {"std", agg.reliance.stddev}};
  j["performance"] = {{"mean", agg.performance.mean}, {"std", agg.performance.stddev}};
  j["overall_mean_d"] = agg.overall_mean_d;
  j["overall_mean_rho"] = agg.overall_mean_rho;
  j["mean_cumulative_reward"] = agg.mean_cumulative_reward;
  return j;
}

nlohmann::ordered_json abc_updates_to_json(std::span<const OperatorTrace> traces) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& t : traces) {
    nlohmann::ordered_json op;
    op["operator"] = t.operator_index;
    op["truth"] = {{"b1", t.truth.b1}, {"b2", t.truth.b2}, {"s", t.truth.s}, {"theta", t.truth.theta}};
    op["cumulative_reward"] = t.cumulative_reward;
    auto fits = nlohmann::ordered_json::array();
    fits.push_back({{"after_games", 0},
                    {"b1", t.indicator_initial.b1},
                    {"b2", t.indicator_initial.b2},
                    {"s", t.indicator_initial.s},
                    {"theta", t.indicator_initial.theta}});
    for (std::size_t k = 0; k < t.abc_updates.size(); ++k) {
      const auto& p = t.indicator_history[k];
      fits.push_back({{"after_games", t.abc_updates[k]}, {"b1", p.b1}, {"b2", p.b2}, {"s", p.s}, {"theta", p.theta}});
    }
    op["indicator"] = std::move(fits);
    arr.push_back(std::move(op));
  }
  return arr;
}

std::string format_series_csv(const PopulationAggregate& agg) {
  std::string out = "game,mean_d,std_d,mean_rho,std_rho\n";
  for (std::size_t g = 0; g < agg.reliance.mean.size(); ++g) {
    out += std::to_string(g + 1) + ',' + format_real(agg.reliance.mean[g]) + ',' + format_real(agg.reliance.stddev[g]) +
           ',' + format_real(agg.performance.mean[g]) + ',' + format_real(agg.performance.stddev[g]) + '\n';
  }
  return out;
}

std::string format_compare_csv(std::span<const CompareCell> cells) {
  std::string out = "theta,s,b2,mean_d_a,mean_d_b,percent_difference,mean_rho_a,mean_rho_b,reward_a,reward_b\n";
  for (const auto& c : cells) {
    out += format_real(c.theta) + ',' + format_real(c.s) + ',' + format_real(c.b2) + ',' +
           format_real(c.a.overall_mean_d) + ',' + format_real(c.b.overall_mean_d) + ',' +
           (c.percent_difference ? format_real(*c.percent_difference) : std::string()) + ',' +
           format_real(c.a.overall_mean_rho) + ',' + format_real(c.b.overall_mean_rho) + ',' +
           format_real(c.a.mean_cumulative_reward) + ',' + format_real(c.b.mean_cumulative_reward) + '\n';
  }
  return out;
}

nlohmann::ordered_json compare_to_json(std::span<const CompareCell> cells, const CompareGrid& grid) {
  nlohmann::ordered_json j;
  j["mode_a"] = to_string(grid.mode_a);
  j["mode_b"] = to_string(grid.mode_b);
  j["axes"] = {{"theta", grid.theta}, {"s", grid.s}, {"b2", grid.b2}};
  j["width"] = grid.width;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    nlohmann::ordered_json cell;
    cell["theta"] = c.theta;
    cell["s"] = c.s;
    cell["b2"] = c.b2;
    cell["percent_difference"] = c.percent_difference ? nlohmann::ordered_json(*c.percent_difference) : nullptr;
    cell["a"] = aggregate_to_json(c.a);
    cell["b"] = aggregate_to_json(c.b);
    arr.push_back(std::move(cell));
  }
  j["cells"] = std::move(arr);
  return j;
}

std::string format_posterior_csv(std::span<const PosteriorSample> samples) {
  std::string out = "b1,b2,s,theta,distance\n";
  for (const auto& p : samples) {
    out += format_real(p.b1) + ',' + format_real(p.b2) + ',' + format_real(p.s) + ',' + format_real(p.theta) + ',' +
           format_real(p.distance) + '\n';
  }
  return out;
}

nlohmann::ordered_json make_manifest(const std::string& command, const RunConfig& config,
                                     const std::vector<std::string>& outputs) {
  nlohmann::ordered_json j;
  j["format_version"] = kFormatVersion;
  j["program"] = "ada";
  j["program_version"] = kProgramVersion;
  j["command"] = command;
  j["seed"] = config.session.seed;
  j["config_hash"] = config_hash(config);
  j["config"] = config_to_json(config);
  j["outputs"] = outputs;
  return j;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace ada
