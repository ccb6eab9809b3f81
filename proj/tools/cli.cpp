#include "cli.hpp"

#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <regex>

#include "CLI11.hpp"
#include "httplib.h"

#include "slv/agent.hpp"
#include "slv/error.hpp"
#include "slv/ip.hpp"
#include "slv/json_io.hpp"
#include "slv/manager.hpp"
#include "slv/sim.hpp"

namespace slv::cli {
namespace {

constexpr const char *kManagerUrlEnv = "SLV_MANAGER_URL";
constexpr const char *kPinStoreEnv = "SLV_PIN_STORE";

std::filesystem::path default_pin_store() {
  if (const char *home = std::getenv("HOME"); home && *home) {
    return std::filesystem::path(home) / ".slv" / "pins.json";
  }
  return ".slv-pins.json";
}

CliConfig load_client_config(const std::optional<std::string> &path) {
  CliConfig cfg;
  cfg.pin_store_path = default_pin_store();
  if (!path) {
    return cfg;
  }
  std::ifstream in(*path);
  if (!in) {
    throw Error("cannot open client config '" + *path + "'");
  }
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception &e) {
    throw InvalidArgument("client config is not valid JSON: " + std::string(e.what()));
  }
  cfg.manager_url = doc.value("manager_url", cfg.manager_url);
  if (doc.contains("pin_store_path")) {
    cfg.pin_store_path = doc.at("pin_store_path").get<std::string>();
  }
  const std::string format = doc.value("output", std::string("table"));
  if (format == "json") {
    cfg.format = OutputFormat::Json;
  } else if (format != "table") {
    throw InvalidArgument("client config 'output' must be json or table");
  }
  return cfg;
}

// Blocks SIGINT/SIGTERM for this thread and every thread it spawns later.
sigset_t block_termination_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

void print_result_table(std::ostream &out, const std::string &domain, const VerificationResult &r,
                        std::optional<pinning::Outcome> outcome) {
  const auto row = [&out](const char *key, const std::string &value) {
    out << std::left << std::setw(12) << key << value << '\n';
  };
  row("domain", domain);
  row("ip", r.ip.value);
  row("asserted", geo::to_string(r.ip.loc));
  row("verified", r.veri_passed ? "yes" : "no");
  if (r.region) {
    std::ostringstream region;
    region << "centre " << geo::to_string(r.region->centre()) << ", radius " << std::fixed
           << std::setprecision(1) << r.region->radius() << " km";
    row("region", region.str());
  }
  if (r.reason) {
    row("reason", std::string(to_string(*r.reason)));
  }
  row("when_veri", format_rfc3339(r.when_veri));
  if (outcome) {
    row("outcome", std::string(pinning::to_string(*outcome)));
  }
}

void print_pin(std::ostream &out, const pinning::PinEntry &pin) {
  out << pin.name << "  rmax=" << pin.rmax << "  regions=" << pin.ver_regs.size()
      << "  ips=" << pin.ips.size() << "  pinned=" << format_rfc3339(pin.when_pin)
      << "  verified=" << format_rfc3339(pin.when_veri) << '\n';
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
  std::string host;
  std::optional<std::string> manager;
  std::optional<std::string> pins;
  bool json{false};
  int rmax{pinning::kDefaultRmax};
  int timeout_s{120};
};

int cmd_verify(const VerifyArgs &a, const CliConfig &base, std::ostream &out, std::ostream &err) {
  CliConfig cfg = base;
  if (const char *env = std::getenv(kManagerUrlEnv); env && *env) {
    cfg.manager_url = env;
  }
  if (a.manager) {
    cfg.manager_url = *a.manager;
  }
  if (const char *env = std::getenv(kPinStoreEnv); env && *env) {
    cfg.pin_store_path = env;
  }
  if (a.pins) {
    cfg.pin_store_path = *a.pins;
  }
  if (a.json) {
    cfg.format = OutputFormat::Json;
  }
  if (!is_valid_manager_url(cfg.manager_url)) {
    err << "error: malformed manager URL '" << cfg.manager_url << "'\n";
    return kExitError;
  }

  const auto address = resolve_host(a.host);
  if (!address) {
    err << "error: cannot resolve '" << a.host << "'\n";
    return kExitError;
  }

  std::string base_url = cfg.manager_url;
  if (base_url.back() == '/') {
    base_url.pop_back();
  }
  httplib::Client client(base_url);
  client.set_connection_timeout(5, 0);
  client.set_read_timeout(a.timeout_s, 0);
  const auto res = client.Get("/verify", httplib::Params{{"ip", *address}}, httplib::Headers{});
  if (!res) {
    err << "error: manager " << cfg.manager_url
        << " unreachable: " << httplib::to_string(res.error()) << '\n';
    return kExitError;
  }
  Json body;
  try {
    body = Json::parse(res->body);
  } catch (const Json::exception &) {
    err << "error: manager answered HTTP " << res->status << " with a non-JSON body\n";
    return kExitError;
  }
  if (res->status != 200) {
    err << "error: manager answered HTTP " << res->status << ": "
        << body.value("error", std::string("unknown error")) << '\n';
    return kExitError;
  }

  VerificationResult result;
  try {
    result = decode_verification_result(body);
  } catch (const ProtocolError &e) {
    err << "error: malformed verification result: " << e.what() << '\n';
    return kExitError;
  }

  pinning::PinStore store;
  try {
    store = pinning::load_store(cfg.pin_store_path);
  } catch (const CorruptStore &e) {
    err << "error: " << e.what() << " (left untouched)\n";
    return kExitError;
  }
  const pinning::PinStore before = store;
  const std::string domain = pinning::normalize_domain(a.host);
  const auto outcome = pinning::evaluate_pin(store, domain, result, now_utc(), {a.rmax, {}});
  if (!(store == before)) {
    pinning::persist_store(store, cfg.pin_store_path);
  }

  if (cfg.format == OutputFormat::Json) {
    out << Json{{"domain", domain},
                {"result", encode(result)},
                {"outcome", std::string(pinning::to_string(outcome))}}
               .dump(2)
        << '\n';
  } else {
    print_result_table(out, domain, result, outcome);
  }
  return exit_code_for(outcome);
}

// ---------------------------------------------------------------------------
// pin

std::filesystem::path pin_store_path(const std::optional<std::string> &flag, const CliConfig &cfg) {
  if (flag) {
    return *flag;
  }
  if (const char *env = std::getenv(kPinStoreEnv); env && *env) {
    return env;
  }
  return cfg.pin_store_path;
}

// ---------------------------------------------------------------------------
// serve

int serve_verifier(const agent::AgentOptions &opts, std::ostream &out, std::ostream &err) {
  const sigset_t signals = block_termination_signals();
  agent::AgentServer server(opts);
  try {
    server.start();
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  out << "verifier agent listening on " << opts.host << ':' << server.port() << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  return kExitOk;
}

int serve_manager(const std::string &config_path, std::optional<int> port_override,
                  std::ostream &out, std::ostream &err) {
  ManagerConfig cfg;
  std::unique_ptr<Manager> manager;
  try {
    cfg = load_manager_config(config_path);
    if (port_override) {
      cfg.listen_port = static_cast<std::uint16_t>(*port_override);
    }
    auto registry = load_verifier_registry(cfg.registry_path, cfg.agent_port);
    std::shared_ptr<Locator> locator = make_locator(cfg.locator);
    auto delays =
        std::make_shared<LiveDelayProvider>(registry, cfg.target_port, cfg.target_fallback_port);
    std::unique_ptr<CacheStore> store;
    if (cfg.cache_path) {
      store = std::make_unique<SqliteCacheStore>(*cfg.cache_path);
    }
    manager = std::make_unique<Manager>(std::move(registry), std::move(locator), std::move(delays),
                                        cfg.verify, cfg.cache_ttl, std::move(store));
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }

  const sigset_t signals = block_termination_signals();
  ManagerHttpServer server(*manager);
  std::uint16_t port = 0;
  try {
    port = server.start(cfg.listen_host, cfg.listen_port);
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  out << "manager listening on " << cfg.listen_host << ':' << port << " ("
      << manager->registry().size() << " verifiers)" << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool json{false};
};

int cmd_simulate(const SimulateArgs &a, std::ostream &out, std::ostream &err) {
  try {
    std::ifstream in(a.scenario);
    if (!in) {
      throw Error("cannot open scenario '" + a.scenario + "'");
    }
    sim::SimScenario sc = sim::decode_scenario(Json::parse(in));
    if (a.seed) {
      sc.model.seed = *a.seed;
    }
    const auto report = sim::run_experiment(sc);
    const Json doc = sim::encode(report);
    if (a.out) {
      std::ofstream file(*a.out, std::ios::trunc);
      if (!file) {
        throw Error("cannot write report '" + *a.out + "'");
      }
      file << doc.dump(2) << '\n';
    }
    if (a.json) {
      out << doc.dump(2) << '\n';
    } else {
      sim::write_report_table(out, report);
    }
    return kExitOk;
  } catch (const Json::exception &e) {
    err << "error: scenario is not valid JSON: " << e.what() << '\n';
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
  }
  return kExitError;
}

} // namespace

int exit_code_for(pinning::Outcome outcome) {
  switch (outcome) {
  case pinning::Outcome::Unsuspicious:
    return kExitOk;
  case pinning::Outcome::Suspicious:
    return kExitSuspicious;
  case pinning::Outcome::Critical:
    return kExitCritical;
  }
  return kExitError;
}

bool is_valid_manager_url(const std::string &url) {
  static const std::regex pattern(R"(^http://(\[[0-9A-Fa-f:.]+\]|[A-Za-z0-9.-]+)(:[0-9]{1,5})?/?$)");
  return std::regex_match(url, pattern);
}

std::optional<std::string> resolve_host(const std::string &host) {
  if (ip::is_valid_address(host)) {
    return host;
  }
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo *found = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &found) != 0 || !found) {
    return std::nullopt;
  }
  std::optional<std::string> v4;
  std::optional<std::string> v6;
  for (const addrinfo *ai = found; ai; ai = ai->ai_next) {
    char buf[NI_MAXHOST];
    if (getnameinfo(ai->ai_addr, ai->ai_addrlen, buf, sizeof(buf), nullptr, 0, NI_NUMERICHOST) != 0) {
      continue;
    }
    if (ai->ai_family == AF_INET && !v4) {
      v4 = buf;
    } else if (ai->ai_family == AF_INET6 && !v6) {
      v6 = buf;
    }
  }
  freeaddrinfo(found);
  return v4 ? v4 : v6;
}

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"slv - server location verification"};
  app.require_subcommand(1);

  std::optional<std::string> client_config;
  app.add_option("--client-config", client_config, "JSON file with manager_url, pin_store_path, output");

  // verify
  VerifyArgs verify_args;
  auto *verify = app.add_subcommand("verify", "Verify a host's server location and check its pins");
  verify->add_option("host", verify_args.host, "Domain name or literal IP")->required();
  verify->add_option("--manager", verify_args.manager, "Manager base URL (overrides SLV_MANAGER_URL)");
  verify->add_option("--pins", verify_args.pins, "Pin store file");
  verify->add_flag("--json", verify_args.json, "Machine-readable output");
  verify->add_option("--rmax", verify_args.rmax, "rmax for a newly created pin")
      ->check(CLI::PositiveNumber);
  verify->add_option("--timeout", verify_args.timeout_s, "Seconds to wait for the manager")
      ->check(CLI::PositiveNumber);

  // pin
  std::optional<std::string> pins_flag;
  auto *pin = app.add_subcommand("pin", "Inspect and edit pinned server locations");
  pin->add_option("--pins", pins_flag, "Pin store file");
  pin->require_subcommand(1);
  auto *pin_list = pin->add_subcommand("list", "List pinned domains");
  std::string pin_domain;
  auto *pin_show = pin->add_subcommand("show", "Show one pinned domain as JSON");
  pin_show->add_option("domain", pin_domain)->required();
  auto *pin_clear = pin->add_subcommand("clear", "Remove a domain's pins");
  pin_clear->add_option("domain", pin_domain)->required();
  int rmax_value = 0;
  auto *pin_set_rmax = pin->add_subcommand("set-rmax", "Change a domain's region limit");
  pin_set_rmax->add_option("domain", pin_domain)->required();
  pin_set_rmax->add_option("n", rmax_value)->required()->check(CLI::PositiveNumber);
  for (auto *sub : {pin_list, pin_show, pin_clear, pin_set_rmax}) {
    sub->fallthrough();
  }

  // simulate
  SimulateArgs sim_args;
  auto *simulate = app.add_subcommand("simulate", "Run an FR/FA experiment on a scenario file");
  simulate->add_option("--scenario", sim_args.scenario, "Scenario JSON")->required();
  simulate->add_option("--seed", sim_args.seed, "Override the delay-model seed");
  simulate->add_option("--out", sim_args.out, "Write the JSON report here");
  simulate->add_flag("--json", sim_args.json, "Print the JSON report instead of the table");

  // gen-scenario
  sim::ScenarioParams gen;
  std::string gen_out;
  std::string placement = "cohorts";
  auto *gen_cmd = app.add_subcommand("gen-scenario", "Generate a synthetic scenario file");
  gen_cmd->add_option("--out", gen_out, "Scenario JSON to write")->required();
  gen_cmd->add_option("--verifiers", gen.verifiers, "Verifier count")->capture_default_str();
  gen_cmd->add_option("--honest", gen.honest, "Honest servers")->capture_default_str();
  gen_cmd->add_option("--false", gen.false_assertions, "False-assertion servers")->capture_default_str();
  gen_cmd->add_option("--relays", gen.relays, "Relay adversaries")->capture_default_str();
  gen_cmd->add_option("--relay-extra-ms", gen.relay_extra_ms, "Relay delays, cycled");
  gen_cmd->add_option("--placement", placement, "cohorts or displaced")
      ->check(CLI::IsMember({"cohorts", "displaced"}))
      ->capture_default_str();
  gen_cmd->add_option("--min-displacement-km", gen.min_displacement_km)->capture_default_str();
  gen_cmd->add_option("--circuitousness", gen.model.circuitousness)->capture_default_str();
  gen_cmd->add_option("--lastmile-ms", gen.model.lastmile_ms)->capture_default_str();
  gen_cmd->add_option("--jitter-ms", gen.model.jitter_ms)->capture_default_str();
  gen_cmd->add_option("--lambda-ms", gen.cfg.lambda_ms)->capture_default_str();
  gen_cmd->add_option("--max-triangles", gen.cfg.max_triangles)->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Placement seed (also the delay-model seed)")
      ->capture_default_str();

  // serve
  auto *serve = app.add_subcommand("serve", "Run a daemon");
  serve->require_subcommand(1);
  std::string manager_config;
  std::optional<int> manager_port;
  auto *serve_mgr = serve->add_subcommand("manager", "Run the verification manager");
  serve_mgr->add_option("--config", manager_config, "Manager config JSON")->required();
  serve_mgr->add_option("--port", manager_port, "Override listen_port")->check(CLI::Range(0, 65535));
  agent::AgentOptions agent_opts;
  int agent_timeout = static_cast<int>(agent_opts.default_timeout.count());
  auto *serve_ver = serve->add_subcommand("verifier", "Run a verifier agent");
  serve_ver->add_option("--host", agent_opts.host, "Listen address")->capture_default_str();
  serve_ver->add_option("--port", agent_opts.port, "Listen port")->capture_default_str();
  serve_ver->add_option("--probes", agent_opts.default_probes, "Default probes per endpoint")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  serve_ver->add_option("--timeout", agent_timeout, "Default per-probe timeout, seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError &e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitError;
  }

  try {
    const CliConfig cfg = load_client_config(client_config);

    if (*verify) {
      return cmd_verify(verify_args, cfg, out, err);
    }

    if (*pin) {
      const auto path = pin_store_path(pins_flag, cfg);
      pinning::PinStore store = pinning::load_store(path);
      if (*pin_list) {
        if (store.empty()) {
          out << "no pinned domains\n";
        }
        for (const auto &[name, entry] : store.entries()) {
          print_pin(out, entry);
        }
        return kExitOk;
      }
      if (*pin_show) {
        const auto *entry = store.find(pin_domain);
        if (!entry) {
          err << "error: '" << pin_domain << "' is not pinned\n";
          return kExitError;
        }
        pinning::PinStore single;
        single.upsert(*entry);
        out << pinning::encode(single).front().dump(2) << '\n';
        return kExitOk;
      }
      if (*pin_clear) {
        if (!store.erase(pin_domain)) {
          err << "error: '" << pin_domain << "' is not pinned\n";
          return kExitError;
        }
        pinning::persist_store(store, path);
        out << "cleared " << pinning::normalize_domain(pin_domain) << '\n';
        return kExitOk;
      }
      if (*pin_set_rmax) {
        store.set_rmax(pin_domain, rmax_value);
        pinning::persist_store(store, path);
        out << pinning::normalize_domain(pin_domain) << " rmax=" << rmax_value << '\n';
        return kExitOk;
      }
    }

    if (*simulate) {
      return cmd_simulate(sim_args, out, err);
    }

    if (*gen_cmd) {
      gen.placement = placement == "displaced" ? sim::FalsePlacement::Displaced
                                               : sim::FalsePlacement::DistantCohorts;
      gen.model.seed = gen.seed;
      const auto sc = sim::generate_scenario(gen);
      std::ofstream file(gen_out, std::ios::trunc);
      if (!file) {
        throw Error("cannot write scenario '" + gen_out + "'");
      }
      file << sim::encode(sc).dump(2) << '\n';
      out << "wrote " << sc.servers.size() << " servers and " << sc.verifiers.size()
          << " verifiers to " << gen_out << '\n';
      return kExitOk;
    }

    if (*serve_mgr) {
      return serve_manager(manager_config, manager_port, out, err);
    }
    if (*serve_ver) {
      agent_opts.default_timeout = std::chrono::seconds{agent_timeout};
      return serve_verifier(agent_opts, out, err);
    }
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}

} // namespace slv::cli
