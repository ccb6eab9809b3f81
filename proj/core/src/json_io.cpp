#include "slv/json_io.hpp"

#include "slv/error.hpp"

namespace slv {
namespace {

const Json &field(const Json &j, const char *name) {
  if (!j.is_object()) {
    throw ProtocolError(std::string("expected an object holding '") + name + "'");
  }
  const auto it = j.find(name);
  if (it == j.end()) {
    throw ProtocolError(std::string("missing field '") + name + "'");
  }
  return *it;
}

double number(const Json &j, const char *name) {
  const Json &v = field(j, name);
  if (!v.is_number()) {
    throw ProtocolError(std::string("field '") + name + "' must be a number");
  }
  return v.get<double>();
}

std::string text(const Json &j, const char *name) {
  const Json &v = field(j, name);
  if (!v.is_string()) {
    throw ProtocolError(std::string("field '") + name + "' must be a string");
  }
  return v.get<std::string>();
}

template <typename Fn> auto rethrow_as_protocol(const char *what, Fn &&fn) {
  try {
    return fn();
  } catch (const ProtocolError &) {
    throw;
  } catch (const std::exception &e) {
    throw ProtocolError(std::string(what) + ": " + e.what());
  }
}

std::uint16_t port_value(const Json &j, const char *name) {
  const double p = number(j, name);
  if (p < 1 || p > 65535 || p != static_cast<int>(p)) {
    throw ProtocolError(std::string("field '") + name + "' is not a TCP port");
  }
  return static_cast<std::uint16_t>(p);
}

ip::HostPort host_port(const Json &j, std::uint16_t default_port) {
  ip::HostPort hp;
  hp.host = text(j, "ip");
  hp.port = j.contains("port") ? port_value(j, "port") : default_port;
  return hp;
}

} // namespace

Json encode(const geo::Location &loc) { return {{"lat", loc.lat()}, {"lon", loc.lon()}}; }

Json encode(const geo::Circle &c) {
  return {{"centre", encode(c.centre())}, {"radius", c.radius()}};
}

Json encode(const IpInfo &ip) { return {{"value", ip.value}, {"loc", encode(ip.loc)}}; }

Json encode(const VerificationResult &r) {
  Json j;
  j["ip"] = encode(r.ip);
  j["veri_passed"] = r.veri_passed;
  j["region"] = r.region ? encode(*r.region) : Json(nullptr);
  j["when_veri"] = format_rfc3339(r.when_veri);
  j["reason"] = r.reason ? Json(std::string(to_string(*r.reason))) : Json(nullptr);
  return j;
}

Json encode(const agent::MeasureRequest &req) {
  Json target{{"ip", req.target.host}, {"port", req.target.port}};
  if (req.fallback_port) {
    target["fallback_port"] = *req.fallback_port;
  }
  Json peers = Json::array();
  for (const auto &p : req.peers) {
    peers.push_back({{"verifier_id", p.verifier_id}, {"ip", p.addr.host}, {"port", p.addr.port}});
  }
  return {{"request_id", req.request_id},
          {"target", std::move(target)},
          {"peers", std::move(peers)},
          {"probes", req.probes},
          {"timeout", req.timeout.count()}};
}

Json encode(const agent::MeasureResponse &resp) {
  Json rtts = Json::object();
  for (const auto &[endpoint, value] : resp.rtts) {
    rtts[endpoint] = value ? Json(*value) : Json("FAILED");
  }
  return {{"request_id", resp.request_id},
          {"rtts", std::move(rtts)},
          {"verifier_clock", format_rfc3339(resp.verifier_clock)}};
}

geo::Location decode_location(const Json &j) {
  const double lat = number(j, "lat");
  const double lon = number(j, "lon");
  return rethrow_as_protocol("location", [&] { return geo::Location(lat, lon); });
}

geo::Circle decode_circle(const Json &j) {
  const geo::Location centre = decode_location(field(j, "centre"));
  const double radius = number(j, "radius");
  return rethrow_as_protocol("circle", [&] { return geo::Circle(centre, radius); });
}

IpInfo decode_ip_info(const Json &j) {
  std::string value = text(j, "value");
  const geo::Location loc = decode_location(field(j, "loc"));
  return rethrow_as_protocol("ip", [&] { return make_ip_info(std::move(value), loc); });
}

VerificationResult decode_verification_result(const Json &j) {
  VerificationResult r;
  r.ip = decode_ip_info(field(j, "ip"));
  const Json &passed = field(j, "veri_passed");
  if (!passed.is_boolean()) {
    throw ProtocolError("field 'veri_passed' must be a boolean");
  }
  r.veri_passed = passed.get<bool>();
  const Json &region = field(j, "region");
  if (!region.is_null()) {
    r.region = decode_circle(region);
  }
  r.when_veri = rethrow_as_protocol("when_veri", [&] { return parse_rfc3339(text(j, "when_veri")); });
  if (j.contains("reason") && !j.at("reason").is_null()) {
    const auto reason = failure_reason_from_string(text(j, "reason"));
    if (!reason) {
      throw ProtocolError("unknown reason '" + j.at("reason").get<std::string>() + "'");
    }
    r.reason = reason;
  }
  if (r.veri_passed != r.region.has_value()) {
    throw ProtocolError("'region' must be present exactly when 'veri_passed' is true");
  }
  return r;
}

agent::MeasureRequest decode_measure_request(const Json &j) {
  agent::MeasureRequest req;
  req.request_id = text(j, "request_id");
  const Json &target = field(j, "target");
  req.target = host_port(target, agent::kDefaultTargetPort);
  if (target.contains("fallback_port")) {
    req.fallback_port = port_value(target, "fallback_port");
  } else if (req.target.port == agent::kDefaultTargetPort) {
    req.fallback_port = agent::kFallbackTargetPort;
  }
  if (j.contains("peers")) {
    const Json &peers = j.at("peers");
    if (!peers.is_array()) {
      throw ProtocolError("field 'peers' must be an array");
    }
    for (const auto &p : peers) {
      req.peers.push_back({text(p, "verifier_id"), host_port(p, agent::kDefaultAgentPort)});
    }
  }
  if (j.contains("probes")) {
    const double probes = number(j, "probes");
    if (probes != static_cast<int>(probes)) {
      throw ProtocolError("field 'probes' must be an integer");
    }
    req.probes = static_cast<int>(probes);
  }
  if (j.contains("timeout")) {
    req.timeout = std::chrono::seconds{static_cast<long long>(number(j, "timeout"))};
  }
  req.validate();
  return req;
}

agent::MeasureResponse decode_measure_response(const Json &j) {
  agent::MeasureResponse resp;
  resp.request_id = text(j, "request_id");
  const Json &rtts = field(j, "rtts");
  if (!rtts.is_object()) {
    throw ProtocolError("field 'rtts' must be an object");
  }
  for (const auto &[endpoint, value] : rtts.items()) {
    if (value.is_string() && value.get<std::string>() == "FAILED") {
      resp.rtts[endpoint] = std::nullopt;
    } else if (value.is_number() && value.get<double>() >= 0.0) {
      resp.rtts[endpoint] = value.get<double>();
    } else {
      throw ProtocolError("rtt for '" + endpoint + "' must be a non-negative number or FAILED");
    }
  }
  resp.verifier_clock = rethrow_as_protocol(
      "verifier_clock", [&] { return parse_rfc3339(text(j, "verifier_clock")); });
  return resp;
}

} // namespace slv
