#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "slv/geo.hpp"
#include "slv/time.hpp"

namespace slv {

using geo::Kilometers;
using geo::Milliseconds;

// An IP address together with the location asserted for it.
struct IpInfo {
  std::string value;
  geo::Location loc;

  friend bool operator==(const IpInfo &, const IpInfo &) = default;
};

// Throws InvalidArgument if `value` is not an IPv4/IPv6 literal.
IpInfo make_ip_info(std::string value, geo::Location loc);

enum class FailureReason { NoCoverage, AllTrianglesRejected, MeasurementFailure };

std::string_view to_string(FailureReason reason);
std::optional<FailureReason> failure_reason_from_string(std::string_view text);

struct VerificationResult {
  IpInfo ip;
  bool veri_passed{false};
  // Verification granularity; present iff veri_passed.
  std::optional<geo::Circle> region;
  Timestamp when_veri{};
  std::optional<FailureReason> reason;

  friend bool operator==(const VerificationResult &, const VerificationResult &) = default;
};

struct VerifierSite {
  std::string id;
  geo::Location loc;
};

struct VerifyConfig {
  Milliseconds lambda_ms{5.0};
  int probes_per_measurement{5};
  int max_triangles{4};
  std::chrono::seconds measurement_timeout{10};

  // Throws InvalidArgument on a negative lambda or non-positive counts.
  void validate() const;
};

// RTTs between verifiers and endpoints, one measurement per ordered pair.
// Target entries are stored after last-mile correction.
class DelayMatrix {
public:
  // Negative values are clamped to zero.
  void set(const std::string &verifier_id, const std::string &endpoint_id, Milliseconds rtt);
  [[nodiscard]] std::optional<Milliseconds> get(const std::string &verifier_id,
                                                const std::string &endpoint_id) const;
  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }

private:
  std::map<std::pair<std::string, std::string>, Milliseconds> entries_;
};

// Source of raw (uncorrected) minimum RTTs. Endpoint ids are either a
// verifier id or the target's IP string.
//
// Implementations must tolerate concurrent calls: the engine measures the
// three verifiers of one triangle in parallel.
class DelayProvider {
public:
  virtual ~DelayProvider() = default;

  virtual std::optional<Milliseconds> measure(const std::string &verifier_id,
                                              const std::string &endpoint_id, int probes,
                                              std::chrono::seconds timeout) = 0;

  // One verifier measuring several endpoints. The default issues one
  // measure() per endpoint; remote providers batch this into a single
  // request. Result order follows `endpoint_ids`.
  virtual std::vector<std::optional<Milliseconds>>
  measure_row(const std::string &verifier_id, std::span<const std::string> endpoint_ids,
              int probes, std::chrono::seconds timeout);
};

Milliseconds apply_lastmile_correction(Milliseconds rtt, Milliseconds lambda);

// d1^2 + d2^2 <= ((d12 + d21) / 2)^2
bool thales_accept(Milliseconds d1, Milliseconds d2, Milliseconds d12, Milliseconds d21);

// Circle whose diameter joins v1 and v2.
geo::Circle circle_of_pair(const geo::Location &v1, const geo::Location &v2);

// Every verifier triangle containing `asserted`, smallest perimeter first,
// ties by verifier-id triple. Degenerate combinations are skipped.
std::vector<geo::Triangle> enumerate_triangles(std::span<const VerifierSite> verifiers,
                                               const geo::Location &asserted);

// Measures one triangle against the target. Returns nullopt if any of the
// nine edges failed to measure.
std::optional<DelayMatrix> measure_triangle(const geo::Triangle &triangle,
                                            const std::string &target_endpoint,
                                            DelayProvider &delays, const VerifyConfig &cfg);

VerificationResult verify_location(const IpInfo &asserted_ip,
                                   std::span<const VerifierSite> verifiers,
                                   DelayProvider &delays, const VerifyConfig &cfg, Timestamp now);

} // namespace slv
