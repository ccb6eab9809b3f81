#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>

#include "slv/agent.hpp"
#include "slv/cache.hpp"
#include "slv/json_io.hpp"
#include "slv/locator.hpp"
#include "slv/registry.hpp"
#include "slv/verify.hpp"

namespace slv {

// Two assertions within this distance are treated as the same location
// when deciding whether a cached result still applies.
inline constexpr Kilometers kAssertionMatchKm = 1.0;

struct LocatorConfig {
  enum class Kind { StaticTable, HttpService };
  Kind kind{Kind::StaticTable};
  std::filesystem::path table_path;
  std::string url_template;
  std::chrono::milliseconds timeout{5000};
};

struct ManagerConfig {
  std::chrono::seconds cache_ttl{std::chrono::hours{4}};
  VerifyConfig verify;
  std::filesystem::path registry_path;
  // SQLite file backing the cache; in-memory only when unset.
  std::optional<std::filesystem::path> cache_path;
  LocatorConfig locator;
  std::string listen_host{"0.0.0.0"};
  std::uint16_t listen_port{8080};
  std::uint16_t agent_port{agent::kDefaultAgentPort};
  std::uint16_t target_port{agent::kDefaultTargetPort};
  std::optional<std::uint16_t> target_fallback_port{agent::kFallbackTargetPort};

  void validate() const;
};

// Relative paths in the document resolve against `base_dir`.
ManagerConfig parse_manager_config(const Json &doc, const std::filesystem::path &base_dir);
ManagerConfig load_manager_config(const std::filesystem::path &path);

std::unique_ptr<Locator> make_locator(const LocatorConfig &cfg);

// DelayProvider backed by verifier agents over the wire protocol. One
// measure_row() becomes one MeasureRequest to that verifier.
class LiveDelayProvider final : public DelayProvider {
public:
  LiveDelayProvider(const VerifierRegistry &registry, std::uint16_t target_port,
                    std::optional<std::uint16_t> target_fallback_port);

  std::optional<Milliseconds> measure(const std::string &verifier_id,
                                      const std::string &endpoint_id, int probes,
                                      std::chrono::seconds timeout) override;
  std::vector<std::optional<Milliseconds>>
  measure_row(const std::string &verifier_id, std::span<const std::string> endpoint_ids,
              int probes, std::chrono::seconds timeout) override;

private:
  struct Peer {
    ip::HostPort address;
    std::unique_ptr<agent::AgentClient> client;
  };
  std::map<std::string, Peer> peers_;
  std::uint16_t target_port_;
  std::optional<std::uint16_t> fallback_port_;
  std::atomic<std::uint64_t> next_request_{0};
};

// The location-verification service: assertion lookup, result cache and
// orchestration of measurements.
class Manager {
public:
  Manager(VerifierRegistry registry, std::shared_ptr<Locator> locator,
          std::shared_ptr<DelayProvider> delays, VerifyConfig verify,
          std::chrono::seconds cache_ttl, std::unique_ptr<CacheStore> store = nullptr);

  // Serves from the cache when an unexpired entry exists and its asserted
  // location is within kAssertionMatchKm of the fresh assertion; otherwise
  // verifies and caches the outcome, positive or negative. Concurrent
  // misses for one address share a single verification.
  //
  // Throws InvalidArgument for a malformed address and lets UnknownAddress
  // / ProviderUnavailable from the locator through.
  VerificationResult handle_verify_request(const std::string &ip, Timestamp now);

  std::size_t cache_evict_expired(Timestamp now) { return cache_.evict_expired(now); }

  [[nodiscard]] const VerifierRegistry &registry() const noexcept { return registry_; }
  [[nodiscard]] const VerificationCache &cache() const noexcept { return cache_; }

private:
  std::optional<VerificationResult> cached_for(const std::string &ip, const geo::Location &asserted,
                                               Timestamp now) const;

  VerifierRegistry registry_;
  std::vector<VerifierSite> sites_;
  std::shared_ptr<Locator> locator_;
  std::shared_ptr<DelayProvider> delays_;
  VerifyConfig verify_;
  VerificationCache cache_;

  std::mutex inflight_mutex_;
  std::unordered_map<std::string, std::shared_future<VerificationResult>> inflight_;
};

// HTTP front end: GET /verify?ip=<addr> and GET /health.
class ManagerHttpServer {
public:
  using Clock = std::function<Timestamp()>;

  explicit ManagerHttpServer(Manager &manager, Clock clock = now_utc,
                             std::chrono::seconds eviction_interval = std::chrono::seconds{60});
  ~ManagerHttpServer();
  ManagerHttpServer(const ManagerHttpServer &) = delete;
  ManagerHttpServer &operator=(const ManagerHttpServer &) = delete;

  // Binds (port 0 picks one), starts serving in the background and returns
  // the bound port. Throws slv::Error if binding fails.
  std::uint16_t start(const std::string &host, std::uint16_t port);
  void stop();
  void wait();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace slv
