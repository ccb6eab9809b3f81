#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "slv/geo.hpp"
#include "slv/ip.hpp"
#include "slv/time.hpp"

namespace slv::agent {

using geo::Milliseconds;

inline constexpr std::uint16_t kDefaultAgentPort = 7707;
inline constexpr std::uint16_t kDefaultTargetPort = 80;
inline constexpr std::uint16_t kFallbackTargetPort = 443;
// Key of the target's entry in MeasureResponse::rtts.
inline constexpr const char *kTargetKey = "target";

struct PeerSpec {
  std::string verifier_id;
  ip::HostPort addr;
};

struct MeasureRequest {
  std::string request_id;
  ip::HostPort target;
  // Tried when every probe on target.port was refused.
  std::optional<std::uint16_t> fallback_port;
  std::vector<PeerSpec> peers;
  int probes{5};
  std::chrono::seconds timeout{10};

  // Throws ProtocolError: bad counts, invalid addresses, duplicate ids.
  void validate() const;
};

struct MeasureResponse {
  std::string request_id;
  // nullopt marks a FAILED endpoint.
  std::map<std::string, std::optional<Milliseconds>> rtts;
  Timestamp verifier_clock{};
};

// Monotonic time source; swappable in tests.
class MonotonicClock {
public:
  virtual ~MonotonicClock() = default;
  virtual std::chrono::nanoseconds now() = 0;
};

class SteadyClock final : public MonotonicClock {
public:
  std::chrono::nanoseconds now() override {
    return std::chrono::steady_clock::now().time_since_epoch();
  }
};

enum class ProbeStatus { Ok, Refused, TimedOut, Error };

struct ProbeResult {
  ProbeStatus status{ProbeStatus::Error};
  std::chrono::nanoseconds elapsed{0};
};

// Times one connection establishment to an address.
class Prober {
public:
  virtual ~Prober() = default;
  virtual ProbeResult probe(const ip::HostPort &addr, std::chrono::milliseconds timeout) = 0;
};

// SYN to SYN-ACK proxied by a non-blocking TCP connect: the clock runs from
// connect() until the socket turns writable. The connection is closed
// without sending payload.
class TcpProber final : public Prober {
public:
  TcpProber();
  explicit TcpProber(std::shared_ptr<MonotonicClock> clock) : clock_(std::move(clock)) {}

  ProbeResult probe(const ip::HostPort &addr, std::chrono::milliseconds timeout) override;

private:
  std::shared_ptr<MonotonicClock> clock_;
};

struct RttSample {
  std::optional<Milliseconds> rtt;
  // true when at least one probe ran and every probe was refused
  bool all_refused{false};
};

// Runs `probes` sequential probes with `spacing` between them and keeps the
// minimum successful sample.
RttSample sample_min_rtt(Prober &prober, const ip::HostPort &addr, int probes,
                         std::chrono::milliseconds timeout,
                         std::chrono::milliseconds spacing = std::chrono::milliseconds{50});

// Minimum connect RTT over `probes` attempts with a fresh TcpProber;
// nullopt if no probe succeeded.
std::optional<Milliseconds> measure_rtt(const ip::HostPort &addr, int probes,
                                        std::chrono::seconds timeout);

struct HandlerOptions {
  std::chrono::milliseconds probe_spacing{50};
};

// Measures the target and every peer concurrently, one sequential probe
// series per endpoint. Values are never last-mile corrected here.
MeasureResponse handle_measure_request(const MeasureRequest &req, Prober &prober,
                                       const HandlerOptions &opts = {});

struct AgentOptions {
  std::string host{"0.0.0.0"};
  std::uint16_t port{kDefaultAgentPort};
  int default_probes{5};
  std::chrono::seconds default_timeout{10};
  std::chrono::milliseconds probe_spacing{50};
};

// Handles one wire line and returns the reply line. Never throws.
std::string handle_wire_line(const std::string &line, Prober &prober, const AgentOptions &opts);

// Verifier daemon: accepts manager connections and answers newline-
// delimited JSON MeasureRequests, one thread per connection.
class AgentServer {
public:
  explicit AgentServer(AgentOptions opts, std::shared_ptr<Prober> prober = nullptr);
  AgentServer(const AgentServer &) = delete;
  AgentServer &operator=(const AgentServer &) = delete;
  ~AgentServer();

  // Binds the listener and starts serving in the background.
  void start();
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();
  [[nodiscard]] std::uint16_t port() const noexcept { return bound_port_; }

private:
  struct Impl;
  AgentOptions opts_;
  std::shared_ptr<Prober> prober_;
  std::unique_ptr<Impl> impl_;
  std::uint16_t bound_port_{0};
};

// Manager-side connection to one agent. Keeps a persistent connection and
// reconnects once if it went stale. Calls are serialized.
class AgentClient {
public:
  explicit AgentClient(ip::HostPort addr);
  ~AgentClient();

  // Throws ProtocolError on a malformed or mismatched reply and
  // slv::Error if the agent cannot be reached before `deadline`.
  MeasureResponse exchange(const MeasureRequest &req, std::chrono::milliseconds deadline);

  [[nodiscard]] const ip::HostPort &address() const noexcept { return addr_; }

private:
  struct Impl;
  ip::HostPort addr_;
  std::mutex mutex_;
  std::unique_ptr<Impl> impl_;
};

} // namespace slv::agent
