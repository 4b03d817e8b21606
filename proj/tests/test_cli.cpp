#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>
#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kCli = ADA_CLI_PATH;
const std::string kConfigs = ADA_CONFIG_DIR;

int run(const std::string& args, const fs::path& log) {
  const int status = std::system((kCli + " " + args + " >" + log.string() + " 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ada_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int free_port() {
  const int fd = socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
  socklen_t len = sizeof(addr);
  getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  close(fd);
  return ntohs(addr.sin_port);
}

}  // namespace

TEST_CASE("missing config exits 2 and names the path") {
  const auto dir = scratch("missing");
  CHECK(run("simulate --config /no/such/file.toml --out " + (dir / "o").string(), dir / "log") == 2);
  CHECK(slurp(dir / "log").find("/no/such/file.toml") != std::string::npos);
  CHECK(run("simulate", dir / "log") == 2);
  std::ofstream(dir / "bad.toml") << "[session]\ntrials_per_game = 0\n";
  CHECK(run("simulate --config " + (dir / "bad.toml").string(), dir / "log") == 2);
  CHECK(slurp(dir / "log").find("session.trials_per_game") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("simulate writes parseable, reproducible outputs") {
  const auto dir = scratch("sim");
  const std::string cfg = kConfigs + "/tiny.toml";
  REQUIRE(run("simulate --config " + cfg + " --out " + (dir / "a").string(), dir / "log") == 0);
  REQUIRE(run("simulate --config " + cfg + " --out " + (dir / "b").string(), dir / "log") == 0);
  for (const char* f : {"trace.csv", "aggregate.json", "series.csv", "manifest.json", "config.toml"})
    CHECK(fs::exists(dir / "a" / f));
  CHECK(slurp(dir / "a/trace.csv") == slurp(dir / "b/trace.csv"));
  const auto agg = nlohmann::json::parse(slurp(dir / "a/aggregate.json"));
  CHECK(agg["n_operators"] == 2);
  const auto manifest = nlohmann::json::parse(slurp(dir / "a/manifest.json"));
  CHECK(manifest["seed"] == 7);

  REQUIRE(run("simulate --config " + cfg + " --seed 8 --out " + (dir / "c").string(), dir / "log") == 0);
  CHECK(slurp(dir / "a/trace.csv") != slurp(dir / "c/trace.csv"));
  CHECK(nlohmann::json::parse(slurp(dir / "c/manifest.json"))["seed"] == 8);

  // Posterior fitting on the exported trace.
  std::ofstream(dir / "vac.toml") << "[abc]\naccepted_target = 100\nbatch_size = 100\nthreshold = 1e6\nmax_batches = 1\n";
  REQUIRE(run("abc-diagnose --config " + (dir / "vac.toml").string() + " --trace " + (dir / "a/trace.csv").string() +
                  " --out " + (dir / "d").string(),
              dir / "log") == 0);
  auto summary = nlohmann::json::parse(slurp(dir / "d/summary.json"));
  CHECK(summary["acceptance_rate"] == 1.0);
  CHECK(summary["fallback"] == false);

  std::ofstream(dir / "strict.toml") << "[abc]\naccepted_target = 10\nbatch_size = 100\nthreshold = 0.0\nmax_batches = 1\n"
                                        "[operator]\nnoise_sigma = 0.0\n";
  REQUIRE(run("abc-diagnose --config " + (dir / "strict.toml").string() + " --trace " + (dir / "a/trace.csv").string() +
                  " --out " + (dir / "e").string(),
              dir / "log") == 0);
  summary = nlohmann::json::parse(slurp(dir / "e/summary.json"));
  CHECK(summary["fallback"] == true);
  CHECK(summary["posterior_size"] == 10);

  std::ofstream(dir / "cut.csv") << "operator,d\n0,1\n";
  CHECK(run("abc-diagnose --trace " + (dir / "cut.csv").string() + " --out " + (dir / "f").string(), dir / "log") == 2);
  CHECK(slurp(dir / "log").find("capability") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("compare writes the grid") {
  const auto dir = scratch("cmp");
  REQUIRE(run("compare --config " + kConfigs + "/tiny.toml --out " + dir.string(), dir / "log") == 0);
  const auto csv = slurp(dir / "compare.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(nlohmann::json::parse(slurp(dir / "compare.json"))["cells"].size() == 1);
  fs::remove_all(dir);
}

TEST_CASE("serve shuts down cleanly on SIGTERM") {
  const auto dir = scratch("serve");
  const int port = free_port();
  const pid_t pid = fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    const std::string p = std::to_string(port), data = (dir / "data").string(), log = (dir / "log").string();
    if (!freopen(log.c_str(), "w", stdout)) _exit(126);
    execl(kCli.c_str(), kCli.c_str(), "serve", "--port", p.c_str(), "--data-dir", data.c_str(), nullptr);
    _exit(127);
  }
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(5);
  httplib::Result health;
  for (int k = 0; k < 100 && !health; ++k) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    health = cli.Get("/healthz");
  }
  REQUIRE(health);
  CHECK(health->status == 200);
  auto res = cli.Post("/api/sessions", R"({"games_per_operator":1,"trials_per_game":2})", "application/json");
  REQUIRE(res);
  const std::string id = nlohmann::json::parse(res->body)["id"];
  cli.Post("/api/sessions/" + id + "/initial", R"({"selection":"A"})", "application/json");
  cli.Post("/api/sessions/" + id + "/final", R"({"final":"A"})", "application/json");

  kill(pid, SIGTERM);
  int status = 0;
  waitpid(pid, &status, 0);
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
  const auto transcript = slurp(dir / "data" / (id + ".jsonl"));
  CHECK(!transcript.empty());
  CHECK(transcript.back() == '\n');
  CHECK(std::count(transcript.begin(), transcript.end(), '\n') == 2);

  // Port already taken by another listener.
  httplib::Server blocker;
  const int taken = blocker.bind_to_any_port("127.0.0.1");
  CHECK(run("serve --port " + std::to_string(taken) + " --data-dir " + (dir / "data").string(), dir / "log2") == 3);
  fs::remove_all(dir);
}
