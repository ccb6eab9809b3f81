#include "slv/agent.hpp"

#include <algorithm>
#include <future>
#include <list>
#include <set>

#include <poll.h>
#include <sys/socket.h>

#include <condition_variable>

#include "slv/error.hpp"
#include "slv/json_io.hpp"
#include "socket.hpp"

namespace slv::agent {
namespace {

Milliseconds to_ms(std::chrono::nanoseconds d) {
  return std::chrono::duration<double, std::milli>(d).count();
}

std::chrono::milliseconds probe_timeout(std::chrono::seconds timeout) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(timeout);
}

Json error_reply(const std::optional<std::string> &request_id, const std::string &message) {
  return {{"request_id", request_id ? Json(*request_id) : Json(nullptr)}, {"error", message}};
}

} // namespace

void MeasureRequest::validate() const {
  if (probes < 1) {
    throw ProtocolError("probes must be >= 1");
  }
  if (timeout.count() <= 0) {
    throw ProtocolError("timeout must be positive");
  }
  if (!ip::is_valid_address(target.host) || target.port == 0) {
    throw ProtocolError("invalid target address '" + target.host + "'");
  }
  std::set<std::string> seen{kTargetKey};
  for (const auto &peer : peers) {
    if (peer.verifier_id.empty()) {
      throw ProtocolError("peer verifier_id must not be empty");
    }
    if (!seen.insert(peer.verifier_id).second) {
      throw ProtocolError("duplicate endpoint id '" + peer.verifier_id + "'");
    }
    if (!ip::is_valid_address(peer.addr.host) || peer.addr.port == 0) {
      throw ProtocolError("invalid address for peer '" + peer.verifier_id + "'");
    }
  }
}

TcpProber::TcpProber() : clock_(std::make_shared<SteadyClock>()) {}

ProbeResult TcpProber::probe(const ip::HostPort &addr, std::chrono::milliseconds timeout) {
  const auto start = clock_->now();
  auto outcome = net::connect_tcp(addr, timeout);
  const auto stop = clock_->now();

  ProbeResult result;
  result.elapsed = std::max(stop - start, std::chrono::nanoseconds{0});
  switch (outcome.status) {
  case net::ConnectStatus::Connected:
    result.status = ProbeStatus::Ok;
    break;
  case net::ConnectStatus::Refused:
    result.status = ProbeStatus::Refused;
    break;
  case net::ConnectStatus::TimedOut:
    result.status = ProbeStatus::TimedOut;
    break;
  case net::ConnectStatus::Error:
    result.status = ProbeStatus::Error;
    break;
  }
  return result;
}

RttSample sample_min_rtt(Prober &prober, const ip::HostPort &addr, int probes,
                         std::chrono::milliseconds timeout, std::chrono::milliseconds spacing) {
  RttSample sample;
  bool all_refused = probes > 0;
  for (int i = 0; i < probes; ++i) {
    if (i > 0 && spacing.count() > 0) {
      std::this_thread::sleep_for(spacing);
    }
    const ProbeResult r = prober.probe(addr, timeout);
    if (r.status != ProbeStatus::Refused) {
      all_refused = false;
    }
    if (r.status != ProbeStatus::Ok) {
      continue;
    }
    const Milliseconds ms = to_ms(r.elapsed);
    sample.rtt = sample.rtt ? std::min(*sample.rtt, ms) : ms;
  }
  sample.all_refused = !sample.rtt && all_refused;
  return sample;
}

std::optional<Milliseconds> measure_rtt(const ip::HostPort &addr, int probes,
                                        std::chrono::seconds timeout) {
  if (probes < 1) {
    throw InvalidArgument("probes must be >= 1");
  }
  TcpProber prober;
  return sample_min_rtt(prober, addr, probes, probe_timeout(timeout)).rtt;
}

MeasureResponse handle_measure_request(const MeasureRequest &req, Prober &prober,
                                       const HandlerOptions &opts) {
  req.validate();
  const auto timeout = probe_timeout(req.timeout);

  auto target = std::async(std::launch::async, [&] {
    RttSample s = sample_min_rtt(prober, req.target, req.probes, timeout, opts.probe_spacing);
    if (!s.rtt && s.all_refused && req.fallback_port && *req.fallback_port != req.target.port) {
      const ip::HostPort alt{req.target.host, *req.fallback_port};
      s = sample_min_rtt(prober, alt, req.probes, timeout, opts.probe_spacing);
    }
    return s.rtt;
  });

  std::vector<std::future<std::optional<Milliseconds>>> peers;
  peers.reserve(req.peers.size());
  for (const auto &peer : req.peers) {
    peers.push_back(std::async(std::launch::async, [&] {
      return sample_min_rtt(prober, peer.addr, req.probes, timeout, opts.probe_spacing).rtt;
    }));
  }

  MeasureResponse resp;
  resp.request_id = req.request_id;
  resp.rtts[kTargetKey] = target.get();
  for (std::size_t i = 0; i < peers.size(); ++i) {
    resp.rtts[req.peers[i].verifier_id] = peers[i].get();
  }
  resp.verifier_clock = now_utc();
  return resp;
}

std::string handle_wire_line(const std::string &line, Prober &prober, const AgentOptions &opts) {
  std::optional<std::string> request_id;
  try {
    Json j = Json::parse(line);
    if (j.is_object() && j.contains("request_id") && j["request_id"].is_string()) {
      request_id = j["request_id"].get<std::string>();
    }
    if (j.is_object()) {
      if (!j.contains("probes")) {
        j["probes"] = opts.default_probes;
      }
      if (!j.contains("timeout")) {
        j["timeout"] = opts.default_timeout.count();
      }
    }
    const MeasureRequest req = decode_measure_request(j);
    return encode(handle_measure_request(req, prober, {opts.probe_spacing})).dump();
  } catch (const Json::exception &e) {
    return error_reply(request_id, std::string("malformed JSON: ") + e.what()).dump();
  } catch (const std::exception &e) {
    return error_reply(request_id, e.what()).dump();
  }
}

// ---------------------------------------------------------------------------
// AgentServer

struct AgentServer::Impl {
  struct Connection {
    std::thread thread;
    int fd{-1};
    std::atomic<bool> done{false};
  };

  std::optional<net::Listener> listener;
  std::thread accept_thread;
  std::atomic<bool> stopping{false};
  std::mutex mutex;
  std::condition_variable stopped_cv;
  bool stopped{false};
  std::list<Connection> connections;

  void reap_finished() {
    std::lock_guard lock(mutex);
    for (auto it = connections.begin(); it != connections.end();) {
      if (it->done.load()) {
        it->thread.join();
        it = connections.erase(it);
      } else {
        ++it;
      }
    }
  }
};

AgentServer::AgentServer(AgentOptions opts, std::shared_ptr<Prober> prober)
    : opts_(std::move(opts)), prober_(prober ? std::move(prober) : std::make_shared<TcpProber>()),
      impl_(std::make_unique<Impl>()) {}

AgentServer::~AgentServer() { stop(); }

void AgentServer::start() {
  if (impl_->listener) {
    return;
  }
  impl_->listener.emplace(opts_.host, opts_.port);
  bound_port_ = impl_->listener->port();

  impl_->accept_thread = std::thread([this] {
    Impl &impl = *impl_;
    while (!impl.stopping.load()) {
      net::Socket conn = impl.listener->accept(std::chrono::milliseconds{100});
      impl.reap_finished();
      if (!conn.valid()) {
        continue;
      }
      std::lock_guard lock(impl.mutex);
      auto &c = impl.connections.emplace_back();
      c.fd = conn.fd();
      c.thread = std::thread([this, &c, sock = std::move(conn)]() mutable {
        net::LineChannel channel(std::move(sock));
        while (!impl_->stopping.load()) {
          std::optional<std::string> line;
          try {
            line = channel.read_line(std::chrono::steady_clock::now() +
                                     std::chrono::milliseconds{200});
          } catch (const ProtocolError &e) {
            channel.write_line(error_reply(std::nullopt, e.what()).dump());
            break;
          }
          if (!line) {
            // idle tick or peer gone; a closed socket makes poll report
            // readable with recv() == 0, which also lands here
            pollfd probe{channel.socket().fd(), POLLIN, 0};
            if (::poll(&probe, 1, 0) > 0) {
              char byte;
              if (::recv(channel.socket().fd(), &byte, 1, MSG_PEEK) <= 0) {
                break;
              }
            }
            continue;
          }
          if (line->empty()) {
            continue;
          }
          if (!channel.write_line(handle_wire_line(*line, *prober_, opts_))) {
            break;
          }
        }
        c.done.store(true);
      });
    }
  });
}

void AgentServer::stop() {
  if (!impl_ || !impl_->listener) {
    return;
  }
  if (impl_->stopping.exchange(true)) {
    return;
  }
  if (impl_->accept_thread.joinable()) {
    impl_->accept_thread.join();
  }
  {
    std::lock_guard lock(impl_->mutex);
    for (auto &c : impl_->connections) {
      if (!c.done.load()) {
        ::shutdown(c.fd, SHUT_RDWR);
      }
    }
  }
  for (auto &c : impl_->connections) {
    c.thread.join();
  }
  impl_->connections.clear();
  impl_->listener->close();
  {
    std::lock_guard lock(impl_->mutex);
    impl_->stopped = true;
  }
  impl_->stopped_cv.notify_all();
}

void AgentServer::wait() {
  std::unique_lock lock(impl_->mutex);
  impl_->stopped_cv.wait(lock, [this] { return impl_->stopped; });
}

// ---------------------------------------------------------------------------
// AgentClient

struct AgentClient::Impl {
  std::optional<net::LineChannel> channel;
};

AgentClient::AgentClient(ip::HostPort addr)
    : addr_(std::move(addr)), impl_(std::make_unique<Impl>()) {}

AgentClient::~AgentClient() = default;

MeasureResponse AgentClient::exchange(const MeasureRequest &req,
                                      std::chrono::milliseconds deadline) {
  std::lock_guard lock(mutex_);
  const auto until = std::chrono::steady_clock::now() + deadline;
  const std::string line = encode(req).dump();

  for (int attempt = 0; attempt < 2; ++attempt) {
    const bool fresh = !impl_->channel.has_value();
    if (fresh) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          until - std::chrono::steady_clock::now());
      auto outcome = net::connect_tcp(addr_, std::max(left, std::chrono::milliseconds{1}));
      if (outcome.status != net::ConnectStatus::Connected) {
        throw Error("verifier agent " + addr_.host + ":" + std::to_string(addr_.port) +
                    " unreachable");
      }
      impl_->channel.emplace(std::move(outcome.socket));
    }
    if (!impl_->channel->write_line(line)) {
      impl_->channel.reset();
      if (fresh) {
        break;
      }
      continue;
    }
    const auto reply = impl_->channel->read_line(until);
    if (!reply) {
      impl_->channel.reset();
      // a stale pooled connection fails fast; a timeout does not
      if (fresh || std::chrono::steady_clock::now() >= until) {
        break;
      }
      continue;
    }
    Json j;
    try {
      j = Json::parse(*reply);
    } catch (const Json::exception &e) {
      impl_->channel.reset();
      throw ProtocolError(std::string("agent sent malformed JSON: ") + e.what());
    }
    if (j.is_object() && j.contains("error")) {
      throw ProtocolError("agent rejected request: " + j["error"].dump());
    }
    MeasureResponse resp = decode_measure_response(j);
    if (resp.request_id != req.request_id) {
      impl_->channel.reset();
      throw ProtocolError("agent answered request '" + resp.request_id + "', expected '" +
                          req.request_id + "'");
    }
    return resp;
  }
  throw Error("no reply from verifier agent " + addr_.host + ":" + std::to_string(addr_.port));
}

} // namespace slv::agent
