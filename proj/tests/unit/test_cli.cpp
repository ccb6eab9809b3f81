#include "doctest.h"

#include <csignal>
#include <fstream>
#include <pthread.h>
#include <sstream>
#include <thread>

#include "httplib.h"

#include "cli.hpp"
#include "slv/json_io.hpp"
#include "slv/pinning.hpp"
#include "test_support.hpp"

using namespace slv;
using namespace std::chrono_literals;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// HTTP stub answering /verify with whatever body is currently set.
class FakeManager {
public:
  FakeManager() {
    server_.Get("/verify", [this](const httplib::Request &req, httplib::Response &res) {
      std::lock_guard lock(mutex_);
      ++hits_;
      last_ip_ = req.get_param_value("ip");
      res.status = status_;
      res.set_content(body_, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeManager() {
    server_.stop();
    thread_.join();
  }
  void respond(int status, std::string body) {
    std::lock_guard lock(mutex_);
    status_ = status;
    body_ = std::move(body);
  }
  [[nodiscard]] std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  [[nodiscard]] std::string last_ip() {
    std::lock_guard lock(mutex_);
    return last_ip_;
  }

private:
  httplib::Server server_;
  std::thread thread_;
  std::mutex mutex_;
  int port_{0};
  int status_{200};
  int hits_{0};
  std::string body_;
  std::string last_ip_;
};

std::string result_body(const std::string &ip, bool passed) {
  VerificationResult r;
  r.ip = make_ip_info(ip, {45.42, -75.69});
  r.veri_passed = passed;
  if (passed) {
    r.region = geo::Circle({45.0, -75.0}, 400);
  } else {
    r.reason = FailureReason::AllTrianglesRejected;
  }
  r.when_veri = Timestamp{std::chrono::seconds{1'700'000'000}};
  return encode(r).dump();
}

std::string slurp(const std::filesystem::path &p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST_CASE("exit codes are a function of the outcome") {
  CHECK(cli::exit_code_for(pinning::Outcome::Unsuspicious) == 0);
  CHECK(cli::exit_code_for(pinning::Outcome::Suspicious) == 2);
  CHECK(cli::exit_code_for(pinning::Outcome::Critical) == 3);
}

TEST_CASE("manager URL validation") {
  CHECK(cli::is_valid_manager_url("http://127.0.0.1:8080"));
  CHECK(cli::is_valid_manager_url("http://manager.example.org/"));
  CHECK(cli::is_valid_manager_url("http://[::1]:8080"));
  CHECK_FALSE(cli::is_valid_manager_url("ftp://x"));
  CHECK_FALSE(cli::is_valid_manager_url("127.0.0.1:8080"));
  CHECK_FALSE(cli::is_valid_manager_url("http://host:port"));
}

TEST_CASE("literal IPs resolve to themselves") {
  CHECK(cli::resolve_host("192.0.2.9") == "192.0.2.9");
  CHECK(cli::resolve_host("localhost").has_value());
  CHECK_FALSE(cli::resolve_host("no-such-host.invalid"));
}

TEST_CASE("verify: unpinned and verified, then pinned and rejected") {
  testing::TempDir dir;
  const auto pins = (dir / "pins.json").string();
  FakeManager manager;

  manager.respond(200, result_body("192.0.2.9", true));
  auto r = run_cli({"verify", "192.0.2.9", "--manager", manager.url(), "--pins", pins});
  CHECK(r.code == 0);
  CHECK(r.out.find("Unsuspicious") != std::string::npos);
  CHECK(manager.last_ip() == "192.0.2.9");
  auto store = pinning::load_store(pins);
  CHECK(store.find("192.0.2.9"));

  manager.respond(200, result_body("192.0.2.9", false));
  r = run_cli({"verify", "192.0.2.9", "--manager", manager.url(), "--pins", pins, "--json"});
  CHECK(r.code == 3);
  const auto j = Json::parse(r.out);
  CHECK(j.at("outcome") == "Critical");
  CHECK(j.at("result").at("veri_passed") == false);
}

TEST_CASE("verify: unpinned and rejected is suspicious") {
  testing::TempDir dir;
  FakeManager manager;
  manager.respond(200, result_body("192.0.2.9", false));
  const auto r = run_cli({"verify", "192.0.2.9", "--manager", manager.url(), "--pins",
                          (dir / "pins.json").string()});
  CHECK(r.code == 2);
  CHECK_FALSE(std::filesystem::exists(dir / "pins.json"));
}

TEST_CASE("verify: manager down or failing leaves pins untouched") {
  testing::TempDir dir;
  const auto pins = dir / "pins.json";
  {
    FakeManager manager;
    manager.respond(200, result_body("192.0.2.9", true));
    REQUIRE(run_cli({"verify", "192.0.2.9", "--manager", manager.url(), "--pins", pins.string()})
                .code == 0);
  }
  const auto before = slurp(pins);

  const auto down = "http://127.0.0.1:" + std::to_string(testing::closed_port());
  auto r = run_cli({"verify", "192.0.2.9", "--manager", down, "--pins", pins.string()});
  CHECK(r.code == 1);
  CHECK_FALSE(r.err.empty());
  CHECK(slurp(pins) == before);

  FakeManager failing;
  failing.respond(502, R"({"error":"locator offline","kind":"ProviderUnavailable"})");
  r = run_cli({"verify", "192.0.2.9", "--manager", failing.url(), "--pins", pins.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("locator offline") != std::string::npos);
  CHECK(slurp(pins) == before);
}

TEST_CASE("verify: unresolvable host and bad URL") {
  CHECK(run_cli({"verify", "no-such-host.invalid", "--manager", "http://127.0.0.1:1"}).code == 1);
  CHECK(run_cli({"verify", "192.0.2.9", "--manager", "not a url"}).code == 1);
}

TEST_CASE("verify: corrupt pin store is an error and is not overwritten") {
  testing::TempDir dir;
  const auto pins = dir / "pins.json";
  std::ofstream(pins) << "[{\"name\": \"trunc";
  FakeManager manager;
  manager.respond(200, result_body("192.0.2.9", true));
  CHECK(run_cli({"verify", "192.0.2.9", "--manager", manager.url(), "--pins", pins.string()}).code ==
        1);
  CHECK(slurp(pins) == "[{\"name\": \"trunc");
}

TEST_CASE("pin subcommands") {
  testing::TempDir dir;
  const auto pins = (dir / "pins.json").string();
  FakeManager manager;
  manager.respond(200, result_body("192.0.2.9", true));
  REQUIRE(run_cli({"verify", "192.0.2.9", "--manager", manager.url(), "--pins", pins, "--rmax", "2"})
              .code == 0);

  auto r = run_cli({"pin", "--pins", pins, "list"});
  CHECK(r.code == 0);
  CHECK(r.out.find("192.0.2.9") != std::string::npos);
  CHECK(r.out.find("rmax=2") != std::string::npos);

  r = run_cli({"pin", "show", "192.0.2.9", "--pins", pins});
  CHECK(r.code == 0);
  CHECK(Json::parse(r.out).at("rmax") == 2);

  CHECK(run_cli({"pin", "--pins", pins, "set-rmax", "192.0.2.9", "4"}).code == 0);
  CHECK(pinning::load_store(pins).find("192.0.2.9")->rmax == 4);
  CHECK(run_cli({"pin", "--pins", pins, "set-rmax", "192.0.2.9", "0"}).code == 1);

  CHECK(run_cli({"pin", "--pins", pins, "clear", "192.0.2.9"}).code == 0);
  CHECK(pinning::load_store(pins).empty());
  CHECK(run_cli({"pin", "--pins", pins, "show", "192.0.2.9"}).code == 1);
}

TEST_CASE("gen-scenario and simulate") {
  testing::TempDir dir;
  const auto scenario = (dir / "s.json").string();
  const auto report = (dir / "r.json").string();
  REQUIRE(run_cli({"gen-scenario", "--out", scenario, "--honest", "20", "--false", "10"}).code == 0);
  const auto r = run_cli({"simulate", "--scenario", scenario, "--seed", "3", "--out", report});
  CHECK(r.code == 0);
  CHECK(r.out.find("False assertions") != std::string::npos);
  const auto j = Json::parse(slurp(report));
  CHECK(j.at("total_true") == 20);
  CHECK(j.at("total_false") == 10);
  CHECK(run_cli({"simulate", "--scenario", (dir / "missing.json").string()}).code == 1);
}

TEST_CASE("serve manager refuses a two-row registry") {
  testing::TempDir dir;
  std::ofstream(dir / "verifiers.csv") << "127.0.0.1,0,0\n127.0.0.2,1,1\n";
  std::ofstream(dir / "geo.csv") << "0.0.0.0/0,0,0\n";
  std::ofstream(dir / "manager.json")
      << R"({"registry_path":"verifiers.csv","locator":{"type":"static_table","path":"geo.csv"}})";
  const auto r = run_cli({"serve", "manager", "--config", (dir / "manager.json").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("verifier") != std::string::npos);
}

TEST_CASE("serve manager answers /health until signalled") {
  testing::TempDir dir;
  std::ofstream(dir / "verifiers.csv") << "127.0.0.1,0,0\n127.0.0.2,1,1\n127.0.0.3,1,0\n";
  std::ofstream(dir / "geo.csv") << "0.0.0.0/0,0,0\n";
  std::ofstream(dir / "manager.json")
      << R"({"registry_path":"verifiers.csv","listen_host":"127.0.0.1",)"
      << R"("locator":{"type":"static_table","path":"geo.csv"}})";
  const auto port = testing::closed_port();

  int code = -1;
  std::thread daemon([&] {
    code = run_cli({"serve", "manager", "--config", (dir / "manager.json").string(), "--port",
                    std::to_string(port)})
               .code;
  });
  httplib::Client client("127.0.0.1", port);
  httplib::Result res;
  for (int i = 0; i < 100 && !res; ++i) {
    std::this_thread::sleep_for(50ms);
    res = client.Get("/health");
  }
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(Json::parse(res->body).at("verifiers") == 3);
  pthread_kill(daemon.native_handle(), SIGTERM);
  daemon.join();
  CHECK(code == 0);
}

TEST_CASE("usage errors") {
  CHECK(run_cli({}).code == 1);
  CHECK(run_cli({"frobnicate"}).code == 1);
  CHECK(run_cli({"--help"}).code == 0);
}
