#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "slv/geo.hpp"
#include "slv/json_io.hpp"
#include "slv/verify.hpp"

namespace slv::sim {

// Every random draw goes through mt19937_64 and the conversions below, so
// results are reproducible bit for bit across standard libraries.
using Rng = std::mt19937_64;

// Uniform in [0, 1) from the top 53 bits of one draw.
double uniform01(Rng &rng);
double uniform(Rng &rng, double lo, double hi);
std::uint64_t mix64(std::uint64_t x);

struct DelayModel {
  double circuitousness{1.5};
  Milliseconds lastmile_ms{5.0};
  Milliseconds jitter_ms{2.0};
  std::uint64_t seed{1};

  void validate() const;
};

// Fibre lower bound times circuitousness, plus last-mile inflation on
// target edges, plus uniform [0, jitter) noise.
Milliseconds simulated_rtt(const geo::Location &a, const geo::Location &b, const DelayModel &model,
                           Rng &rng, bool is_target_edge);

enum class AdversaryKind { None, FalseAssertion, Relay };

std::string_view to_string(AdversaryKind kind);

struct Adversary {
  AdversaryKind kind{AdversaryKind::None};
  // Relay only: forwarding delay added to every verifier-to-target RTT.
  Milliseconds extra_ms{0.0};

  static Adversary none() { return {}; }
  static Adversary false_assertion() { return {AdversaryKind::FalseAssertion, 0.0}; }
  static Adversary relay(Milliseconds extra) { return {AdversaryKind::Relay, extra}; }
};

struct SimServer {
  geo::Location true_loc;
  geo::Location asserted_loc;
  Adversary adversary;
};

struct SimScenario {
  std::vector<VerifierSite> verifiers;
  std::vector<SimServer> servers;
  DelayModel model;
  VerifyConfig cfg;

  // Throws ScenarioError.
  void validate() const;
};

// Synthetic delays derived from geography. Stateless per call: the noise
// of one (verifier, endpoint) measurement is a function of the stream
// seed and the two ids only, so concurrent calls stay deterministic.
class SimDelayProvider final : public DelayProvider {
public:
  SimDelayProvider(std::vector<VerifierSite> verifiers, std::string target_endpoint,
                   geo::Location target_true_loc, Milliseconds target_extra_ms, DelayModel model,
                   std::uint64_t stream_seed);

  std::optional<Milliseconds> measure(const std::string &verifier_id,
                                      const std::string &endpoint_id, int probes,
                                      std::chrono::seconds timeout) override;

private:
  const VerifierSite *site(const std::string &id) const;

  std::vector<VerifierSite> verifiers_;
  std::string target_endpoint_;
  geo::Location target_loc_;
  Milliseconds target_extra_ms_;
  DelayModel model_;
  std::uint64_t stream_seed_;
};

struct ServerOutcome {
  std::size_t index{0};
  AdversaryKind adversary{AdversaryKind::None};
  bool veri_passed{false};
  std::optional<FailureReason> reason;
  std::optional<geo::Circle> region;
  Kilometers displacement_km{0.0};
};

struct ExperimentReport {
  std::size_t total_true{0};
  std::size_t accepted_true{0};
  std::size_t total_false{0};
  std::size_t accepted_false{0};
  // 0 when the corresponding arm is empty
  double fr_rate{0.0};
  double fa_rate{0.0};
  std::vector<ServerOutcome> outcomes;
};

// Verifies every server against its asserted location with delays drawn
// from its true location. Throws ScenarioError for an honest server that
// no verifier triangle covers.
ExperimentReport run_experiment(const SimScenario &scenario);

// Synthetic target address for server `index` (198.18.0.0/15).
std::string server_address(std::size_t index);

struct Bounds {
  double lat_min{22.0};
  double lat_max{49.0};
  double lon_min{-120.0};
  double lon_max{-74.0};
};

enum class FalsePlacement {
  // Europe, East Asia, Latin America and Oceania in 40/20/20/20 shares.
  DistantCohorts,
  // Exactly min_displacement_km away along a random bearing.
  Displaced,
};

struct ScenarioParams {
  std::size_t verifiers{20};
  std::size_t honest{50};
  std::size_t false_assertions{0};
  std::size_t relays{0};
  // Cycled over the relay servers.
  std::vector<Milliseconds> relay_extra_ms{30.0};
  Bounds region;
  FalsePlacement placement{FalsePlacement::DistantCohorts};
  Kilometers min_displacement_km{3000.0};
  DelayModel model;
  VerifyConfig cfg;
  std::uint64_t seed{1};
};

// Uniform placement inside `region`; asserted locations are resampled until
// some verifier triangle covers them. Deterministic per seed. Throws
// ScenarioError for fewer than 3 verifiers.
SimScenario generate_scenario(const ScenarioParams &params);

Json encode(const SimScenario &scenario);
SimScenario decode_scenario(const Json &doc);
Json encode(const ExperimentReport &report);
void write_report_table(std::ostream &out, const ExperimentReport &report);

} // namespace slv::sim
