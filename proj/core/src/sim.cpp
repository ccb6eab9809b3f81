#include "slv/sim.hpp"

#include <algorithm>
#include <array>
#include <iomanip>
#include <thread>

#include "slv/error.hpp"

namespace slv::sim {
namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t server_stream(std::uint64_t seed, std::size_t index) {
  return mix64(seed ^ mix64(static_cast<std::uint64_t>(index) + 0x9e3779b97f4a7c15ULL));
}

bool covered(const std::vector<VerifierSite> &verifiers, const geo::Location &loc) {
  return !enumerate_triangles(verifiers, loc).empty();
}

geo::Location random_in(Rng &rng, const Bounds &b) {
  return {uniform(rng, b.lat_min, b.lat_max), uniform(rng, b.lon_min, b.lon_max)};
}

struct Cohort {
  Bounds box;
  double share;
};

// Continents far from the default North-American verifier region.
constexpr std::array<Cohort, 4> kCohorts{{
    {{40.0, 55.0, -5.0, 25.0}, 0.4},    // Europe
    {{25.0, 40.0, 105.0, 140.0}, 0.2},  // East Asia
    {{-35.0, -5.0, -70.0, -40.0}, 0.2}, // Latin America
    {{-40.0, -25.0, 140.0, 155.0}, 0.2}, // Oceania
}};

const Bounds &cohort_for(std::size_t i, std::size_t total) {
  const double position = (static_cast<double>(i) + 0.5) / static_cast<double>(total);
  double acc = 0.0;
  for (const auto &c : kCohorts) {
    acc += c.share;
    if (position < acc) {
      return c.box;
    }
  }
  return kCohorts.back().box;
}

constexpr int kMaxPlacementAttempts = 100000;

geo::Location covered_point(Rng &rng, const Bounds &region,
                            const std::vector<VerifierSite> &verifiers) {
  for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
    const geo::Location p = random_in(rng, region);
    if (covered(verifiers, p)) {
      return p;
    }
  }
  throw ScenarioError("could not place a server inside verifier coverage");
}

} // namespace

double uniform01(Rng &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(Rng &rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void DelayModel::validate() const {
  if (!(circuitousness >= 1.0)) {
    throw ScenarioError("circuitousness must be >= 1");
  }
  if (!(lastmile_ms >= 0.0) || !(jitter_ms >= 0.0)) {
    throw ScenarioError("lastmile_ms and jitter_ms must be >= 0");
  }
}

Milliseconds simulated_rtt(const geo::Location &a, const geo::Location &b, const DelayModel &model,
                           Rng &rng, bool is_target_edge) {
  Milliseconds rtt = geo::min_rtt_for_distance(geo::great_circle_distance(a, b)) * model.circuitousness;
  if (is_target_edge) {
    rtt += model.lastmile_ms;
  }
  return rtt + model.jitter_ms * uniform01(rng);
}

std::string_view to_string(AdversaryKind kind) {
  switch (kind) {
  case AdversaryKind::None:
    return "None";
  case AdversaryKind::FalseAssertion:
    return "FalseAssertion";
  case AdversaryKind::Relay:
    return "Relay";
  }
  return "Unknown";
}

void SimScenario::validate() const {
  if (verifiers.size() < 3) {
    throw ScenarioError("a scenario needs at least 3 verifiers");
  }
  if (servers.empty()) {
    throw ScenarioError("a scenario needs at least one server");
  }
  model.validate();
  try {
    cfg.validate();
  } catch (const InvalidArgument &e) {
    throw ScenarioError(e.what());
  }
  for (std::size_t i = 0; i < servers.size(); ++i) {
    const auto &s = servers[i];
    if (s.adversary.kind == AdversaryKind::None && !(s.true_loc == s.asserted_loc)) {
      throw ScenarioError("honest server " + std::to_string(i) +
                          " must have true_loc == asserted_loc");
    }
    if (s.adversary.extra_ms < 0.0) {
      throw ScenarioError("relay delay must be >= 0");
    }
  }
}

SimDelayProvider::SimDelayProvider(std::vector<VerifierSite> verifiers, std::string target_endpoint,
                                   geo::Location target_true_loc, Milliseconds target_extra_ms,
                                   DelayModel model, std::uint64_t stream_seed)
    : verifiers_(std::move(verifiers)), target_endpoint_(std::move(target_endpoint)),
      target_loc_(target_true_loc), target_extra_ms_(target_extra_ms), model_(model),
      stream_seed_(stream_seed) {}

const VerifierSite *SimDelayProvider::site(const std::string &id) const {
  const auto it = std::find_if(verifiers_.begin(), verifiers_.end(),
                               [&](const VerifierSite &v) { return v.id == id; });
  return it == verifiers_.end() ? nullptr : &*it;
}

std::optional<Milliseconds> SimDelayProvider::measure(const std::string &verifier_id,
                                                      const std::string &endpoint_id, int probes,
                                                      std::chrono::seconds) {
  const VerifierSite *from = site(verifier_id);
  if (!from || probes < 1) {
    return std::nullopt;
  }
  const bool to_target = endpoint_id == target_endpoint_;
  geo::Location to;
  if (to_target) {
    to = target_loc_;
  } else if (const VerifierSite *peer = site(endpoint_id)) {
    to = peer->loc;
  } else {
    return std::nullopt;
  }

  Rng rng(mix64(stream_seed_ ^ fnv1a(verifier_id)) ^ mix64(fnv1a(endpoint_id) + 1));
  Milliseconds best = 0.0;
  for (int i = 0; i < probes; ++i) {
    Milliseconds rtt = simulated_rtt(from->loc, to, model_, rng, to_target);
    if (to_target) {
      rtt += target_extra_ms_;
    }
    best = i == 0 ? rtt : std::min(best, rtt);
  }
  return best;
}

std::string server_address(std::size_t index) {
  if (index >= 2 * 65536) {
    throw ScenarioError("too many simulated servers");
  }
  return "198." + std::to_string(18 + index / 65536) + "." + std::to_string((index / 256) % 256) +
         "." + std::to_string(index % 256);
}

ExperimentReport run_experiment(const SimScenario &scenario) {
  scenario.validate();
  const auto &servers = scenario.servers;
  for (std::size_t i = 0; i < servers.size(); ++i) {
    if (servers[i].adversary.kind == AdversaryKind::None &&
        !covered(scenario.verifiers, servers[i].asserted_loc)) {
      throw ScenarioError("honest server " + std::to_string(i) + " at " +
                          geo::to_string(servers[i].asserted_loc) +
                          " lies outside every verifier triangle (coverage hole)");
    }
  }

  std::vector<ServerOutcome> outcomes(servers.size());
  const auto run_one = [&](std::size_t i) {
    const SimServer &s = servers[i];
    const std::string address = server_address(i);
    SimDelayProvider delays(scenario.verifiers, address, s.true_loc, s.adversary.extra_ms,
                            scenario.model, server_stream(scenario.model.seed, i));
    const VerificationResult r = verify_location(IpInfo{address, s.asserted_loc},
                                                 scenario.verifiers, delays, scenario.cfg,
                                                 Timestamp{});
    outcomes[i] = {i,
                   s.adversary.kind,
                   r.veri_passed,
                   r.reason,
                   r.region,
                   geo::great_circle_distance(s.true_loc, s.asserted_loc)};
  };

  const std::size_t workers =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, servers.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < servers.size(); i += workers) {
        run_one(i);
      }
    });
  }
  for (auto &t : pool) {
    t.join();
  }

  ExperimentReport report;
  for (const auto &o : outcomes) {
    if (o.adversary == AdversaryKind::None) {
      ++report.total_true;
      report.accepted_true += o.veri_passed ? 1 : 0;
    } else {
      ++report.total_false;
      report.accepted_false += o.veri_passed ? 1 : 0;
    }
  }
  if (report.total_true > 0) {
    report.fr_rate = static_cast<double>(report.total_true - report.accepted_true) /
                     static_cast<double>(report.total_true);
  }
  if (report.total_false > 0) {
    report.fa_rate =
        static_cast<double>(report.accepted_false) / static_cast<double>(report.total_false);
  }
  report.outcomes = std::move(outcomes);
  return report;
}

SimScenario generate_scenario(const ScenarioParams &params) {
  if (params.verifiers < 3) {
    throw ScenarioError("a scenario needs at least 3 verifiers");
  }
  if (params.relays > 0 && params.relay_extra_ms.empty()) {
    throw ScenarioError("relay servers need at least one relay delay");
  }
  Rng rng(params.seed);
  SimScenario sc;
  sc.model = params.model;
  sc.cfg = params.cfg;

  for (std::size_t i = 0; i < params.verifiers; ++i) {
    sc.verifiers.push_back({"v" + std::to_string(i + 1), random_in(rng, params.region)});
  }

  for (std::size_t i = 0; i < params.honest; ++i) {
    const geo::Location p = covered_point(rng, params.region, sc.verifiers);
    sc.servers.push_back({p, p, Adversary::none()});
  }

  const auto displaced_from = [&](const geo::Location &asserted, std::size_t i,
                                  std::size_t total) -> geo::Location {
    if (params.placement == FalsePlacement::Displaced) {
      return geo::destination_point(asserted, uniform(rng, 0.0, 360.0),
                                    params.min_displacement_km);
    }
    const Bounds &box = cohort_for(i, total);
    for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
      const geo::Location p = random_in(rng, box);
      if (geo::great_circle_distance(p, asserted) >= params.min_displacement_km) {
        return p;
      }
    }
    throw ScenarioError("could not place a false location far enough from its assertion");
  };

  for (std::size_t i = 0; i < params.false_assertions; ++i) {
    const geo::Location asserted = covered_point(rng, params.region, sc.verifiers);
    sc.servers.push_back(
        {displaced_from(asserted, i, params.false_assertions), asserted, Adversary::false_assertion()});
  }
  for (std::size_t i = 0; i < params.relays; ++i) {
    const geo::Location asserted = covered_point(rng, params.region, sc.verifiers);
    const Milliseconds extra = params.relay_extra_ms[i % params.relay_extra_ms.size()];
    sc.servers.push_back({displaced_from(asserted, i, params.relays), asserted, Adversary::relay(extra)});
  }
  return sc;
}

// ---------------------------------------------------------------------------
// JSON

Json encode(const SimScenario &sc) {
  Json verifiers = Json::array();
  for (const auto &v : sc.verifiers) {
    verifiers.push_back({{"id", v.id}, {"lat", v.loc.lat()}, {"lon", v.loc.lon()}});
  }
  Json servers = Json::array();
  for (const auto &s : sc.servers) {
    Json adv{{"kind", std::string(to_string(s.adversary.kind))}};
    if (s.adversary.kind == AdversaryKind::Relay) {
      adv["extra_ms"] = s.adversary.extra_ms;
    }
    servers.push_back({{"true_loc", slv::encode(s.true_loc)},
                       {"asserted_loc", slv::encode(s.asserted_loc)},
                       {"adversary", std::move(adv)}});
  }
  return {{"verifiers", std::move(verifiers)},
          {"servers", std::move(servers)},
          {"model",
           {{"circuitousness", sc.model.circuitousness},
            {"lastmile_ms", sc.model.lastmile_ms},
            {"jitter_ms", sc.model.jitter_ms},
            {"seed", sc.model.seed}}},
          {"cfg",
           {{"lambda_ms", sc.cfg.lambda_ms},
            {"probes_per_measurement", sc.cfg.probes_per_measurement},
            {"max_triangles", sc.cfg.max_triangles},
            {"measurement_timeout", sc.cfg.measurement_timeout.count()}}}};
}

SimScenario decode_scenario(const Json &doc) {
  SimScenario sc;
  try {
    for (const auto &v : doc.at("verifiers")) {
      sc.verifiers.push_back({v.at("id").get<std::string>(),
                              geo::Location(v.at("lat").get<double>(), v.at("lon").get<double>())});
    }
    for (const auto &s : doc.at("servers")) {
      SimServer server{decode_location(s.at("true_loc")), decode_location(s.at("asserted_loc")), {}};
      const Json &adv = s.at("adversary");
      const auto kind = adv.at("kind").get<std::string>();
      if (kind == "None") {
        server.adversary = Adversary::none();
      } else if (kind == "FalseAssertion") {
        server.adversary = Adversary::false_assertion();
      } else if (kind == "Relay") {
        server.adversary = Adversary::relay(adv.at("extra_ms").get<double>());
      } else {
        throw ScenarioError("unknown adversary kind '" + kind + "'");
      }
      sc.servers.push_back(server);
    }
    if (doc.contains("model")) {
      const Json &m = doc.at("model");
      sc.model.circuitousness = m.value("circuitousness", sc.model.circuitousness);
      sc.model.lastmile_ms = m.value("lastmile_ms", sc.model.lastmile_ms);
      sc.model.jitter_ms = m.value("jitter_ms", sc.model.jitter_ms);
      sc.model.seed = m.value("seed", sc.model.seed);
    }
    if (doc.contains("cfg")) {
      const Json &c = doc.at("cfg");
      sc.cfg.lambda_ms = c.value("lambda_ms", sc.cfg.lambda_ms);
      sc.cfg.probes_per_measurement = c.value("probes_per_measurement", sc.cfg.probes_per_measurement);
      sc.cfg.max_triangles = c.value("max_triangles", sc.cfg.max_triangles);
      sc.cfg.measurement_timeout =
          std::chrono::seconds{c.value("measurement_timeout", sc.cfg.measurement_timeout.count())};
    }
  } catch (const ScenarioError &) {
    throw;
  } catch (const std::exception &e) {
    throw ScenarioError(std::string("malformed scenario: ") + e.what());
  }
  sc.validate();
  return sc;
}

Json encode(const ExperimentReport &report) {
  Json outcomes = Json::array();
  for (const auto &o : report.outcomes) {
    outcomes.push_back({{"index", o.index},
                        {"adversary", std::string(to_string(o.adversary))},
                        {"veri_passed", o.veri_passed},
                        {"reason", o.reason ? Json(std::string(to_string(*o.reason))) : Json(nullptr)},
                        {"region", o.region ? slv::encode(*o.region) : Json(nullptr)},
                        {"displacement_km", o.displacement_km}});
  }
  return {{"total_true", report.total_true},
          {"accepted_true", report.accepted_true},
          {"total_false", report.total_false},
          {"accepted_false", report.accepted_false},
          {"fr_rate", report.fr_rate},
          {"fa_rate", report.fa_rate},
          {"outcomes", std::move(outcomes)}};
}

void write_report_table(std::ostream &out, const ExperimentReport &report) {
  const auto flags = out.flags();
  out << std::left << std::setw(18) << "" << std::right << std::setw(8) << "Total" << std::setw(10)
      << "Accepted" << std::setw(10) << "Rejected" << std::setw(10) << "Rate" << '\n';
  out << std::fixed << std::setprecision(1);
  out << std::left << std::setw(18) << "True assertions" << std::right << std::setw(8)
      << report.total_true << std::setw(10) << report.accepted_true << std::setw(10)
      << report.total_true - report.accepted_true << std::setw(7) << report.fr_rate * 100.0
      << "% FR\n";
  out << std::left << std::setw(18) << "False assertions" << std::right << std::setw(8)
      << report.total_false << std::setw(10) << report.accepted_false << std::setw(10)
      << report.total_false - report.accepted_false << std::setw(7) << report.fa_rate * 100.0
      << "% FA\n";
  out.flags(flags);
}

} // namespace slv::sim
