#include "slv/manager.hpp"

#include <fstream>

#include "httplib.h"

#include "slv/error.hpp"

namespace slv {
namespace {

std::filesystem::path resolve(const std::filesystem::path &base, const std::string &p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T> T get_or(const Json &doc, const char *key, T fallback) {
  if (!doc.contains(key) || doc.at(key).is_null()) {
    return fallback;
  }
  try {
    return doc.at(key).get<T>();
  } catch (const Json::exception &) {
    throw InvalidArgument(std::string("config field '") + key + "' has the wrong type");
  }
}

std::uint16_t port_field(const Json &doc, const char *key, std::uint16_t fallback) {
  const long long v = get_or<long long>(doc, key, fallback);
  if (v < 0 || v > 65535) {
    throw InvalidArgument(std::string("config field '") + key + "' is not a TCP port");
  }
  return static_cast<std::uint16_t>(v);
}

} // namespace

void ManagerConfig::validate() const {
  if (cache_ttl.count() <= 0) {
    throw InvalidArgument("cache_ttl must be positive");
  }
  verify.validate();
  if (locator.kind == LocatorConfig::Kind::StaticTable && locator.table_path.empty()) {
    throw InvalidArgument("static_table locator needs a table path");
  }
  if (locator.kind == LocatorConfig::Kind::HttpService && locator.url_template.empty()) {
    throw InvalidArgument("http_service locator needs a url_template");
  }
}

ManagerConfig parse_manager_config(const Json &doc, const std::filesystem::path &base_dir) {
  if (!doc.is_object()) {
    throw InvalidArgument("manager config must be a JSON object");
  }
  ManagerConfig cfg;
  cfg.registry_path = resolve(base_dir, get_or<std::string>(doc, "registry_path", ""));
  if (!doc.contains("registry_path")) {
    throw InvalidArgument("manager config lacks 'registry_path'");
  }
  cfg.cache_ttl = std::chrono::seconds{get_or<long long>(doc, "cache_ttl_seconds", cfg.cache_ttl.count())};
  if (doc.contains("cache_path") && !doc.at("cache_path").is_null()) {
    cfg.cache_path = resolve(base_dir, get_or<std::string>(doc, "cache_path", ""));
  }
  cfg.verify.lambda_ms = get_or<double>(doc, "lambda_ms", cfg.verify.lambda_ms);
  cfg.verify.probes_per_measurement = get_or<int>(doc, "probes", cfg.verify.probes_per_measurement);
  cfg.verify.max_triangles = get_or<int>(doc, "max_triangles", cfg.verify.max_triangles);
  cfg.verify.measurement_timeout = std::chrono::seconds{
      get_or<long long>(doc, "measurement_timeout_seconds", cfg.verify.measurement_timeout.count())};
  cfg.listen_host = get_or<std::string>(doc, "listen_host", cfg.listen_host);
  cfg.listen_port = port_field(doc, "listen_port", cfg.listen_port);
  cfg.agent_port = port_field(doc, "agent_port", cfg.agent_port);
  cfg.target_port = port_field(doc, "target_port", cfg.target_port);
  if (doc.contains("target_fallback_port")) {
    if (doc.at("target_fallback_port").is_null()) {
      cfg.target_fallback_port.reset();
    } else {
      cfg.target_fallback_port = port_field(doc, "target_fallback_port", 0);
    }
  }

  if (doc.contains("locator")) {
    const Json &loc = doc.at("locator");
    const auto type = get_or<std::string>(loc, "type", "static_table");
    if (type == "static_table") {
      cfg.locator.kind = LocatorConfig::Kind::StaticTable;
      cfg.locator.table_path = resolve(base_dir, get_or<std::string>(loc, "path", ""));
    } else if (type == "http_service") {
      cfg.locator.kind = LocatorConfig::Kind::HttpService;
      cfg.locator.url_template = get_or<std::string>(loc, "url_template", "");
      cfg.locator.timeout =
          std::chrono::milliseconds{get_or<long long>(loc, "timeout_ms", cfg.locator.timeout.count())};
    } else {
      throw InvalidArgument("unknown locator type '" + type + "'");
    }
  } else {
    throw InvalidArgument("manager config lacks 'locator'");
  }
  cfg.validate();
  return cfg;
}

ManagerConfig load_manager_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open manager config '" + path.string() + "'");
  }
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception &e) {
    throw InvalidArgument("manager config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_manager_config(doc, path.parent_path());
}

std::unique_ptr<Locator> make_locator(const LocatorConfig &cfg) {
  switch (cfg.kind) {
  case LocatorConfig::Kind::StaticTable:
    return std::make_unique<StaticTableLocator>(StaticTableLocator::from_file(cfg.table_path));
  case LocatorConfig::Kind::HttpService:
    return std::make_unique<HttpLocator>(cfg.url_template, cfg.timeout);
  }
  throw InvalidArgument("unknown locator kind");
}

// ---------------------------------------------------------------------------
// LiveDelayProvider

LiveDelayProvider::LiveDelayProvider(const VerifierRegistry &registry, std::uint16_t target_port,
                                     std::optional<std::uint16_t> target_fallback_port)
    : target_port_(target_port), fallback_port_(target_fallback_port) {
  for (const auto &e : registry.entries()) {
    peers_.emplace(e.id, Peer{e.address, std::make_unique<agent::AgentClient>(e.address)});
  }
}

std::optional<Milliseconds> LiveDelayProvider::measure(const std::string &verifier_id,
                                                       const std::string &endpoint_id, int probes,
                                                       std::chrono::seconds timeout) {
  const std::string endpoints[] = {endpoint_id};
  return measure_row(verifier_id, endpoints, probes, timeout).front();
}

std::vector<std::optional<Milliseconds>>
LiveDelayProvider::measure_row(const std::string &verifier_id,
                               std::span<const std::string> endpoint_ids, int probes,
                               std::chrono::seconds timeout) {
  std::vector<std::optional<Milliseconds>> row(endpoint_ids.size());
  const auto self = peers_.find(verifier_id);
  if (self == peers_.end()) {
    return row;
  }

  // Every non-verifier endpoint is a target; each target needs its own
  // request, peers ride along with the first one.
  std::vector<std::size_t> targets;
  std::vector<std::size_t> peer_slots;
  for (std::size_t i = 0; i < endpoint_ids.size(); ++i) {
    (peers_.count(endpoint_ids[i]) ? peer_slots : targets).push_back(i);
  }
  if (targets.empty()) {
    return row;  // wire requests always carry a target
  }

  for (std::size_t t = 0; t < targets.size(); ++t) {
    agent::MeasureRequest req;
    req.request_id = verifier_id + "-" + std::to_string(next_request_.fetch_add(1));
    req.target = {endpoint_ids[targets[t]], target_port_};
    req.fallback_port = fallback_port_;
    req.probes = probes;
    req.timeout = timeout;
    if (t == 0) {
      for (const std::size_t slot : peer_slots) {
        req.peers.push_back({endpoint_ids[slot], peers_.at(endpoint_ids[slot]).address});
      }
    }

    // Worst case: every probe times out on both the target port and the
    // fallback, plus spacing and slack.
    const auto per_probe = std::chrono::duration_cast<std::chrono::milliseconds>(timeout) +
                           std::chrono::milliseconds{50};
    const auto deadline = 2 * probes * per_probe + std::chrono::seconds{2};
    try {
      const auto resp = self->second.client->exchange(req, deadline);
      if (const auto it = resp.rtts.find(agent::kTargetKey); it != resp.rtts.end()) {
        row[targets[t]] = it->second;
      }
      if (t == 0) {
        for (const std::size_t slot : peer_slots) {
          if (const auto it = resp.rtts.find(endpoint_ids[slot]); it != resp.rtts.end()) {
            row[slot] = it->second;
          }
        }
      }
    } catch (const Error &) {
      // unreachable or misbehaving agent: leave the row entries empty
    }
  }
  return row;
}

// ---------------------------------------------------------------------------
// Manager

Manager::Manager(VerifierRegistry registry, std::shared_ptr<Locator> locator,
                 std::shared_ptr<DelayProvider> delays, VerifyConfig verify,
                 std::chrono::seconds cache_ttl, std::unique_ptr<CacheStore> store)
    : registry_(std::move(registry)), sites_(registry_.sites()), locator_(std::move(locator)),
      delays_(std::move(delays)), verify_(verify), cache_(cache_ttl, std::move(store)) {
  verify_.validate();
  if (registry_.size() < 3) {
    throw InsufficientVerifiers("need at least 3 verifiers");
  }
}

std::optional<VerificationResult> Manager::cached_for(const std::string &ip,
                                                      const geo::Location &asserted,
                                                      Timestamp now) const {
  const auto entry = cache_.find(ip, now);
  if (!entry || geo::great_circle_distance(entry->asserted_loc, asserted) > kAssertionMatchKm) {
    return std::nullopt;
  }
  return entry->to_result();
}

VerificationResult Manager::handle_verify_request(const std::string &ip, Timestamp now) {
  if (!ip::is_valid_address(ip)) {
    throw InvalidArgument("not an IP address: '" + ip + "'");
  }
  const geo::Location asserted = locator_->locate(ip);
  if (auto hit = cached_for(ip, asserted, now)) {
    return *hit;
  }

  std::promise<VerificationResult> promise;
  {
    std::unique_lock lock(inflight_mutex_);
    if (const auto it = inflight_.find(ip); it != inflight_.end()) {
      auto shared = it->second;
      lock.unlock();
      return shared.get();
    }
    inflight_.emplace(ip, promise.get_future().share());
  }

  try {
    VerificationResult res;
    if (auto hit = cached_for(ip, asserted, now)) {
      res = *hit;
    } else {
      res = verify_location(IpInfo{ip, asserted}, sites_, *delays_, verify_, now);
      cache_.put(res);
    }
    promise.set_value(res);
    std::lock_guard lock(inflight_mutex_);
    inflight_.erase(ip);
    return res;
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(inflight_mutex_);
    inflight_.erase(ip);
    throw;
  }
}

// ---------------------------------------------------------------------------
// ManagerHttpServer

struct ManagerHttpServer::Impl {
  Manager &manager;
  Clock clock;
  std::chrono::seconds eviction_interval;
  httplib::Server server;
  std::thread listen_thread;
  std::thread janitor;
  std::mutex mutex;
  std::condition_variable cv;
  bool stopping{false};
  bool started{false};

  Impl(Manager &m, Clock c, std::chrono::seconds interval)
      : manager(m), clock(std::move(c)), eviction_interval(interval) {}
};

namespace {

void reply_json(httplib::Response &res, int status, const Json &body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

Json error_body(const std::string &kind, const std::string &message) {
  return {{"error", message}, {"kind", kind}};
}

} // namespace

ManagerHttpServer::ManagerHttpServer(Manager &manager, Clock clock,
                                     std::chrono::seconds eviction_interval)
    : impl_(std::make_unique<Impl>(manager, std::move(clock), eviction_interval)) {
  Impl &impl = *impl_;

  impl.server.Get("/verify", [&impl](const httplib::Request &req, httplib::Response &res) {
    if (!req.has_param("ip")) {
      reply_json(res, 400, error_body("BadRequest", "missing 'ip' query parameter"));
      return;
    }
    const std::string ip = req.get_param_value("ip");
    try {
      reply_json(res, 200, encode(impl.manager.handle_verify_request(ip, impl.clock())));
    } catch (const InvalidArgument &e) {
      reply_json(res, 400, error_body("BadRequest", e.what()));
    } catch (const UnknownAddress &e) {
      reply_json(res, 404, error_body("UnknownAddress", e.what()));
    } catch (const ProviderUnavailable &e) {
      reply_json(res, 502, error_body("ProviderUnavailable", e.what()));
    } catch (const std::exception &e) {
      reply_json(res, 500, error_body("Internal", e.what()));
    }
  });

  impl.server.Get("/health", [&impl](const httplib::Request &, httplib::Response &res) {
    reply_json(res, 200,
               {{"status", "ok"},
                {"verifiers", impl.manager.registry().size()},
                {"cached", impl.manager.cache().size()}});
  });
}

ManagerHttpServer::~ManagerHttpServer() { stop(); }

std::uint16_t ManagerHttpServer::start(const std::string &host, std::uint16_t port) {
  Impl &impl = *impl_;
  int bound = port;
  if (port == 0) {
    bound = impl.server.bind_to_any_port(host);
  } else if (!impl.server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) {
    throw Error("cannot bind manager API on " + host + ":" + std::to_string(port));
  }
  impl.started = true;
  impl.listen_thread = std::thread([&impl] { impl.server.listen_after_bind(); });
  impl.janitor = std::thread([&impl] {
    std::unique_lock lock(impl.mutex);
    while (!impl.cv.wait_for(lock, impl.eviction_interval, [&impl] { return impl.stopping; })) {
      lock.unlock();
      impl.manager.cache_evict_expired(impl.clock());
      lock.lock();
    }
  });
  impl.server.wait_until_ready();
  return static_cast<std::uint16_t>(bound);
}

void ManagerHttpServer::stop() {
  Impl &impl = *impl_;
  {
    std::lock_guard lock(impl.mutex);
    if (impl.stopping) {
      return;
    }
    impl.stopping = true;
  }
  impl.cv.notify_all();
  impl.server.stop();
  if (impl.listen_thread.joinable()) {
    impl.listen_thread.join();
  }
  if (impl.janitor.joinable()) {
    impl.janitor.join();
  }
}

void ManagerHttpServer::wait() {
  if (impl_->listen_thread.joinable()) {
    impl_->listen_thread.join();
  }
}

} // namespace slv
