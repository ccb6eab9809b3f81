#pragma once

// JSON encodings for the wire and file formats. Decoders throw
// ProtocolError with a field path on malformed input.

#include "json.hpp"

#include "slv/agent.hpp"
#include "slv/geo.hpp"
#include "slv/verify.hpp"

namespace slv {

using Json = nlohmann::json;

Json encode(const geo::Location &loc);
Json encode(const geo::Circle &c);
Json encode(const IpInfo &ip);
// {"ip", "veri_passed", "region" | null, "when_veri", "reason" | null}
Json encode(const VerificationResult &r);
Json encode(const agent::MeasureRequest &req);
Json encode(const agent::MeasureResponse &resp);

geo::Location decode_location(const Json &j);
geo::Circle decode_circle(const Json &j);
IpInfo decode_ip_info(const Json &j);
VerificationResult decode_verification_result(const Json &j);
agent::MeasureRequest decode_measure_request(const Json &j);
agent::MeasureResponse decode_measure_response(const Json &j);

} // namespace slv
