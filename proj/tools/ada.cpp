// Command-line front end: simulate, compare, abc-diagnose, serve.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <thread>

#include <pthread.h>
#include <unistd.h>

#include <CLI11.hpp>

#include "ada/config.hpp"
#include "ada/session_service.hpp"
#include "ada/trace_io.hpp"

namespace fs = std::filesystem;
using namespace ada;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonArgs {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  fs::path out = "out";
  std::optional<unsigned> threads;
};

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig rc = args.config ? load_config(*args.config) : parse_config("");
  if (args.seed) rc.session.seed = *args.seed;
  if (args.threads) rc.threads = *args.threads;
  return rc;
}

// Copies the source config next to the outputs; the manifest holds the
// resolved values and the seed actually used.
void prepare_out(const CommonArgs& args) {
  fs::create_directories(args.out);
  if (args.config) fs::copy_file(*args.config, args.out / "config.toml", fs::copy_options::overwrite_existing);
}

int cmd_simulate(const CommonArgs& args) {
  const RunConfig rc = resolve_config(args);
  prepare_out(args);
  MonteCarloResult mc;
  if (rc.replay_trials) {
    const auto rows = load_trials(*rc.replay_trials);
    mc = run_replay_population(rc.session, rows);
  } else {
    mc = run_monte_carlo(rc.session, rc.n_operators, rc.threads);
  }
  write_trace_csv(args.out / "trace.csv", mc.traces);
  nlohmann::ordered_json agg;
  agg["format_version"] = kFormatVersion;
  agg["aid_mode"] = to_string(rc.session.aid_mode);
  agg["seed"] = rc.session.seed;
  const auto summary = aggregate_to_json(mc.aggregate);
  for (const auto& [k, v] : summary.items()) agg[k] = v;
  agg["operators"] = abc_updates_to_json(mc.traces);
  write_json(args.out / "aggregate.json", agg);
  write_text(args.out / "series.csv", format_series_csv(mc.aggregate));
  std::vector<std::string> outputs{"trace.csv", "aggregate.json", "series.csv"};
  if (args.config) outputs.push_back("config.toml");
  write_json(args.out / "manifest.json", make_manifest("simulate", rc, outputs));
  std::printf("operators=%zu mean_d=%.4f mean_rho=%.4f mean_reward=%.3f -> %s\n", mc.aggregate.n_operators,
              mc.aggregate.overall_mean_d, mc.aggregate.overall_mean_rho, mc.aggregate.mean_cumulative_reward,
              args.out.string().c_str());
  return kExitOk;
}

int cmd_compare(const CommonArgs& args) {
  const RunConfig rc = resolve_config(args);
  prepare_out(args);
  const auto cells = compare_methods(rc.session, rc.compare, rc.n_operators, rc.threads);
  write_text(args.out / "compare.csv", format_compare_csv(cells));
  write_json(args.out / "compare.json", compare_to_json(cells, rc.compare));
  std::vector<std::string> outputs{"compare.csv", "compare.json"};
  if (args.config) outputs.push_back("config.toml");
  write_json(args.out / "manifest.json", make_manifest("compare", rc, outputs));
  std::printf("%8s %6s %6s %10s %10s %9s\n", "theta", "s", "b2", to_string(rc.compare.mode_a).c_str(),
              to_string(rc.compare.mode_b).c_str(), "diff%");
  for (const auto& c : cells) {
    std::printf("%8.3f %6.3f %6.3f %10.4f %10.4f ", c.theta, c.s, c.b2, c.a.overall_mean_d, c.b.overall_mean_d);
    if (c.percent_difference)
      std::printf("%9.2f\n", *c.percent_difference);
    else
      std::printf("%9s\n", "undef");
  }
  return kExitOk;
}

int cmd_abc_diagnose(const CommonArgs& args, const fs::path& trace_path) {
  const RunConfig rc = resolve_config(args);
  std::vector<InteractionRecord> records;
  try {
    records = read_trace_csv(trace_path, kObservationColumns);
  } catch (const ParseError& e) {
    throw ConfigError("trace", trace_path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError("trace", e.what());
  }
  std::vector<Observation> log;
  for (const auto& r : records)
    if (r.operator_index == rc.diagnose_operator) log.push_back(Observation{r.d, r.agreement, r.capability, r.ambiguous});
  if (log.empty())
    throw ConfigError("abc.diagnose_operator",
                      "trace has no records for operator " + std::to_string(rc.diagnose_operator));
  prepare_out(args);

  const OperatorParams fixed = rc.session.operator_base;
  Rng rng(rc.session.seed);
  const AbcResult res = abc_rejection(log, rc.session.priors, fixed, rc.session.abc, rng);
  const OperatorParams est = point_estimate(res.samples, fixed);
  write_text(args.out / "posterior.csv", format_posterior_csv(res.samples));
  nlohmann::ordered_json summary;
  summary["format_version"] = kFormatVersion;
  summary["trace"] = trace_path.string();
  summary["operator"] = rc.diagnose_operator;
  summary["observations"] = log.size();
  summary["drawn"] = res.drawn;
  summary["accepted"] = res.accepted;
  summary["acceptance_rate"] = res.acceptance_rate();
  summary["batches"] = res.batches;
  summary["fallback"] = res.fallback;
  summary["posterior_size"] = res.samples.size();
  summary["point_estimate"] = {{"b1", est.b1}, {"b2", est.b2}, {"s", est.s}, {"theta", est.theta}};
  write_json(args.out / "summary.json", summary);
  std::vector<std::string> outputs{"posterior.csv", "summary.json"};
  if (args.config) outputs.push_back("config.toml");
  write_json(args.out / "manifest.json", make_manifest("abc-diagnose", rc, outputs));
  std::printf("observations=%zu drawn=%llu accepted=%llu rate=%.4f fallback=%s theta=%.4f\n", log.size(),
              static_cast<unsigned long long>(res.drawn), static_cast<unsigned long long>(res.accepted),
              res.acceptance_rate(), res.fallback ? "yes" : "no", est.theta);
  return kExitOk;
}

int cmd_serve(const CommonArgs& args, std::optional<int> port_flag, std::optional<std::string> host_flag,
              std::optional<fs::path> data_flag) {
  const RunConfig rc = resolve_config(args);
  const int port = port_flag ? *port_flag : rc.serve.port;
  const std::string host = host_flag ? *host_flag : rc.serve.host;
  const fs::path data_dir = data_flag ? *data_flag : rc.serve.data_dir;
  if (port < 0 || port > 65535) throw ConfigError("port", "must be in 0..65535");
  if (port > 0 && port < 1024 && ::geteuid() != 0)
    throw ConfigError("port", std::to_string(port) + " is a privileged port; pick one >= 1024");

  // Signals are taken synchronously by a watcher thread so shutdown can
  // stop the server and flush session files outside signal context.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  SessionStore store(rc.session, data_dir);
  const std::size_t restored = store.restore([](const std::string& msg) { std::fprintf(stderr, "warning: %s\n", msg.c_str()); });
  SessionServer server(store);
  const int bound = server.bind(host, port);
  std::printf("listening on http://%s:%d (data: %s, restored %zu sessions)\n", host.c_str(), bound,
              data_dir.string().c_str(), restored);
  std::fflush(stdout);

  std::thread([&server, set] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  }).detach();
  server.listen();
  store.close_all();
  std::printf("shutdown complete\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reliance-aware decision aid simulator and session server"};
  app.require_subcommand(1);

  CommonArgs common;
  const auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", common.config, "TOML configuration file");
    if (config_required) opt->required();
    sub->add_option("--seed", common.seed, "Master seed (overrides the config)");
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
    sub->add_option("--threads", common.threads, "Worker threads (0 = all cores)");
  };

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo population of simulated operators");
  add_common(simulate, true);
  auto* compare = app.add_subcommand("compare", "Predictive vs myopic comparison over a prior grid");
  add_common(compare, true);
  auto* diagnose = app.add_subcommand("abc-diagnose", "Fit reliance parameters to a trace and dump the posterior");
  add_common(diagnose, false);
  fs::path trace_path;
  diagnose->add_option("--trace", trace_path, "Trace CSV produced by simulate")->required();
  auto* serve = app.add_subcommand("serve", "Run the live-session HTTP service");
  add_common(serve, false);
  std::optional<int> port;
  std::optional<std::string> host;
  std::optional<fs::path> data_dir;
  serve->add_option("--port", port, "TCP port (0 picks a free one)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--data-dir", data_dir, "Directory for session transcripts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*simulate) return cmd_simulate(common);
    if (*compare) return cmd_compare(common);
    if (*diagnose) return cmd_abc_diagnose(common, trace_path);
    if (*serve) return cmd_serve(common, port, host, data_dir);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}
