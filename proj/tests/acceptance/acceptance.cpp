// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "httplib.h"

#include "slv/agent.hpp"
#include "slv/error.hpp"
#include "slv/json_io.hpp"
#include "slv/manager.hpp"
#include "slv/pinning.hpp"
#include "slv/sim.hpp"
#include "test_support.hpp"

using namespace slv;
using namespace std::chrono_literals;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass{true};
  std::ostringstream detail;

  void expect(bool ok, const std::string &what) {
    if (!ok) {
      if (pass) {
        detail << "failed: ";
      } else {
        detail << "; ";
      }
      detail << what;
      pass = false;
    }
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// 1 -----------------------------------------------------------------------

void thales_oracle(Verdict &v) {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240501);
  std::uniform_real_distribution<double> coord(-1000.0, 1000.0);
  int mismatches = 0;
  int boundary = 0;
  int inside = 0;
  constexpr int kInstances = 100000;
  for (int i = 0; i < kInstances; ++i) {
    const double ax = coord(rng), ay = coord(rng), bx = coord(rng), by = coord(rng);
    const double px = coord(rng), py = coord(rng);
    const double d1 = std::hypot(px - ax, py - ay);
    const double d2 = std::hypot(px - bx, py - by);
    const double d12 = std::hypot(ax - bx, ay - by);
    const double r = d12 / 2.0;
    const double to_centre = std::hypot(px - (ax + bx) / 2.0, py - (ay + by) / 2.0);
    if (std::abs(to_centre - r) <= 1e-9 * r) {
      ++boundary;
      continue;
    }
    const bool in_circle = to_centre < r;
    inside += in_circle ? 1 : 0;
    const bool accepted =
        thales_accept(apply_lastmile_correction(d1, 0.0), apply_lastmile_correction(d2, 0.0), d12, d12);
    mismatches += accepted != in_circle ? 1 : 0;
  }
  const double took = seconds_since(start);
  v.expect(mismatches == 0, std::to_string(mismatches) + " mismatches");
  v.expect(took < 5.0, "runtime " + std::to_string(took) + " s");
  v.detail << kInstances << " instances, " << inside << " inside, " << boundary
           << " on boundary, " << mismatches << " mismatches, " << std::fixed
           << std::setprecision(2) << took << " s";
}

// 2 -----------------------------------------------------------------------

void fa_reproduction(Verdict &v) {
  const auto start = Clock::now();
  std::ostringstream rates;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    sim::ScenarioParams p;
    p.verifiers = 20;
    p.honest = 0;
    p.false_assertions = 100;
    p.placement = sim::FalsePlacement::DistantCohorts;
    p.min_displacement_km = 3000.0;
    p.cfg.max_triangles = 4;
    p.seed = seed;
    p.model.seed = seed;
    const auto sc = sim::generate_scenario(p);
    double nearest = 1e9;
    for (const auto &s : sc.servers) {
      nearest = std::min(nearest, geo::great_circle_distance(s.true_loc, s.asserted_loc));
    }
    v.expect(nearest >= 3000.0, "seed " + std::to_string(seed) + " placed a server too close");
    const auto report = sim::run_experiment(sc);
    v.expect(report.total_false == 100, "wrong false count");
    v.expect(report.fa_rate == 0.0, "seed " + std::to_string(seed) + " fa_rate " +
                                         std::to_string(report.fa_rate));
    rates << (seed > 1 ? " " : "") << report.accepted_false << "/" << report.total_false;
  }
  const double took = seconds_since(start);
  v.expect(took < 30.0, "runtime " + std::to_string(took) + " s");
  v.detail << "accepted false per seed: " << rates.str() << ", " << std::fixed
           << std::setprecision(2) << took << " s";
}

// 3 -----------------------------------------------------------------------

void fr_property(Verdict &v) {
  std::ostringstream noisy, exact;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    sim::ScenarioParams p;
    p.honest = 100;
    p.model = {1.5, 5.0, 2.0, seed};
    p.cfg.lambda_ms = 5.0;
    p.seed = seed;
    auto report = sim::run_experiment(sim::generate_scenario(p));
    v.expect(report.total_true == 100, "wrong honest count");
    v.expect(report.fr_rate <= 0.05, "noisy seed " + std::to_string(seed) + " fr_rate " +
                                         std::to_string(report.fr_rate));
    noisy << (seed > 1 ? " " : "") << report.total_true - report.accepted_true;

    p.model = {1.0, 5.0, 0.0, seed};
    report = sim::run_experiment(sim::generate_scenario(p));
    v.expect(report.fr_rate == 0.0, "exact seed " + std::to_string(seed) + " fr_rate " +
                                         std::to_string(report.fr_rate));
    exact << (seed > 1 ? " " : "") << report.total_true - report.accepted_true;
  }
  v.detail << "rejected honest per seed (jitter 2, x1.5): " << noisy.str()
           << "; (jitter 0, x1, exact lambda): " << exact.str();
}

// 4 -----------------------------------------------------------------------

void relay_adversary(Verdict &v) {
  std::ostringstream counts;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    sim::ScenarioParams p;
    p.honest = 0;
    p.relays = 50;
    p.relay_extra_ms = {10.0, 30.0, 100.0};
    p.placement = sim::FalsePlacement::Displaced;
    p.min_displacement_km = 3000.0;
    p.seed = seed;
    p.model.seed = seed;
    const auto report = sim::run_experiment(sim::generate_scenario(p));
    v.expect(report.total_false == 50, "wrong relay count");
    v.expect(report.fa_rate == 0.0, "seed " + std::to_string(seed) + " fa_rate " +
                                         std::to_string(report.fa_rate));
    counts << (seed > 1 ? " " : "") << report.accepted_false << "/" << report.total_false;
  }
  v.detail << "accepted relays per seed: " << counts.str();
}

// 5 -----------------------------------------------------------------------

VerificationResult pin_result(const std::string &ip, geo::Location at, bool passed) {
  VerificationResult r;
  r.ip = make_ip_info(ip, at);
  r.veri_passed = passed;
  if (passed) {
    r.region = geo::Circle(at, 300);
  } else {
    r.reason = FailureReason::AllTrianglesRejected;
  }
  r.when_veri = Timestamp{std::chrono::seconds{1'700'000'000}};
  return r;
}

void pin_matrix(Verdict &v) {
  using pinning::Outcome;
  const Timestamp now{std::chrono::seconds{1'700'000'000}};
  const geo::Location a(45.42, -75.69);
  const geo::Location b(49.28, -123.12);
  int covered = 0;
  const auto branch = [&](const char *name, bool ok) {
    v.expect(ok, std::string("branch ") + name);
    covered += ok ? 1 : 0;
  };

  pinning::PinStore s;
  branch("(f)", pinning::evaluate_pin(s, "x.test", pin_result("192.0.2.1", a, false), now) ==
                        Outcome::Suspicious &&
                    s.empty());
  branch("(e)", pinning::evaluate_pin(s, "x.test", pin_result("192.0.2.1", a, true), now) ==
                        Outcome::Unsuspicious &&
                    s.find("x.test") && s.find("x.test")->ver_regs.size() == 1);
  auto snap = s;
  branch("(a)", pinning::evaluate_pin(s, "x.test", pin_result("192.0.2.1", a, false), now) ==
                        Outcome::Critical &&
                    s == snap);
  branch("(b)",
         pinning::evaluate_pin(s, "x.test",
                               pin_result("192.0.2.2", geo::destination_point(a, 0, 40), true),
                               now) == Outcome::Unsuspicious &&
             s.find("x.test")->ips.size() == 2 && s.find("x.test")->ver_regs.size() == 1);
  branch("(c)", pinning::evaluate_pin(s, "x.test", pin_result("192.0.2.3", b, true), now) ==
                        Outcome::Unsuspicious &&
                    s.find("x.test")->ver_regs.size() == 2);

  // rmax=1: a successfully verified result in a second city is Critical
  pinning::PinStore one;
  (void)pinning::evaluate_pin(one, "y.test", pin_result("192.0.2.1", a, true), now, {1, {}});
  snap = one;
  branch("(d)", pinning::evaluate_pin(one, "y.test", pin_result("192.0.2.9", b, true), now) ==
                        Outcome::Critical &&
                    one == snap);

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> lat(-60, 60), lon(-180, 180);
  std::uniform_int_distribution<int> dom(0, 3), rmax(1, 4), coin(0, 2);
  pinning::PinStore store;
  std::size_t worst = 0;
  bool bounded = true;
  for (int i = 0; i < 10000; ++i) {
    auto r = pin_result("192.0.2." + std::to_string(i % 200 + 1), {lat(rng), lon(rng)},
                        coin(rng) != 0);
    (void)pinning::evaluate_pin(store, "d" + std::to_string(dom(rng)), r, now, {rmax(rng), {}});
    for (const auto &[name, pin] : store.entries()) {
      bounded = bounded && pin.ver_regs.size() <= static_cast<std::size_t>(pin.rmax);
      worst = std::max(worst, pin.ver_regs.size());
    }
  }
  v.expect(bounded, "|ver_regs| exceeded rmax");
  v.detail << covered << "/6 branches, rmax bound held over 10000 results (max regions " << worst
           << ")";
}

// 6 -----------------------------------------------------------------------

void cache_behaviour(Verdict &v) {
  const Timestamp t0{std::chrono::seconds{1'700'000'000}};
  const auto sites = testing::nested_sites();
  std::vector<VerifierEntry> entries;
  for (const auto &s : sites) {
    entries.push_back({s.id, {"127.0.0.1", 7707}, s.loc});
  }
  auto locator = std::make_shared<testing::MapLocator>();
  locator->set("192.0.2.50", {0, 0});
  auto counting =
      std::make_shared<testing::GeometricProvider>(sites, "192.0.2.50", geo::Location(0, 0), 5.0);
  Manager manager(VerifierRegistry(entries), locator, counting, VerifyConfig{}, 4h);

  const auto first = manager.handle_verify_request("192.0.2.50", t0);
  const int miss = counting->calls();
  const auto hit = manager.handle_verify_request("192.0.2.50", t0 + 1h);
  const int on_hit = counting->calls() - miss;
  v.expect(first.veri_passed, "first verification failed");
  v.expect(miss > 0, "miss issued no measurements");
  v.expect(on_hit == 0 && hit == first, "cache hit issued " + std::to_string(on_hit) + " measurements");

  locator->set("192.0.2.50", geo::destination_point({0, 0}, 90, 1.5));
  (void)manager.handle_verify_request("192.0.2.50", t0 + 2h);
  const int on_move = counting->calls() - miss;
  v.expect(on_move > 0, "1.5 km assertion change served from cache");

  const int before_ttl = counting->calls();
  (void)manager.handle_verify_request("192.0.2.50", t0 + 2h + 4h);
  const int on_expiry = counting->calls() - before_ttl;
  v.expect(on_expiry > 0, "expired entry served from cache");

  v.detail << "measurements: miss " << miss << ", hit " << on_hit << ", moved 1.5 km " << on_move
           << ", after TTL " << on_expiry;
}

// 7 -----------------------------------------------------------------------

// Real TCP connects, with the propagation delay of a synthetic geography
// added on top. Endpoints are told apart by port.
class InjectingProber final : public agent::Prober {
public:
  InjectingProber(geo::Location self, std::map<std::uint16_t, geo::Location> sites,
                  std::uint16_t target_port, Milliseconds lastmile)
      : self_(self), sites_(std::move(sites)), target_port_(target_port), lastmile_(lastmile) {}

  agent::ProbeResult probe(const ip::HostPort &addr, std::chrono::milliseconds timeout) override {
    auto r = real_.probe(addr, timeout);
    const auto it = sites_.find(addr.port);
    if (r.status == agent::ProbeStatus::Ok && it != sites_.end()) {
      Milliseconds extra = geo::min_rtt_for_distance(geo::great_circle_distance(self_, it->second));
      if (addr.port == target_port_) {
        extra += lastmile_;
      }
      r.elapsed += std::chrono::duration_cast<std::chrono::nanoseconds>(
          std::chrono::duration<double, std::milli>(extra));
    }
    return r;
  }

private:
  agent::TcpProber real_;
  geo::Location self_;
  std::map<std::uint16_t, geo::Location> sites_;
  std::uint16_t target_port_;
  Milliseconds lastmile_;
};

bool schema_valid(const Json &j, std::string &why) {
  const auto has = [&](const Json &obj, const char *key, Json::value_t type) {
    if (!obj.is_object() || !obj.contains(key)) {
      why = std::string("missing ") + key;
      return false;
    }
    const auto t = obj.at(key).type();
    const bool number = type == Json::value_t::number_float &&
                        (t == Json::value_t::number_float || t == Json::value_t::number_integer ||
                         t == Json::value_t::number_unsigned);
    if (t != type && !number) {
      why = std::string("wrong type for ") + key;
      return false;
    }
    return true;
  };
  using T = Json::value_t;
  if (!has(j, "ip", T::object) || !has(j["ip"], "value", T::string) ||
      !has(j["ip"], "loc", T::object) || !has(j["ip"]["loc"], "lat", T::number_float) ||
      !has(j["ip"]["loc"], "lon", T::number_float) || !has(j, "veri_passed", T::boolean) ||
      !has(j, "when_veri", T::string) || !j.contains("region") || !j.contains("reason")) {
    if (why.empty()) {
      why = "missing region/reason";
    }
    return false;
  }
  if (j["veri_passed"].get<bool>()) {
    if (!has(j, "region", T::object) || !has(j["region"], "centre", T::object) ||
        !has(j["region"], "radius", T::number_float) || !j["reason"].is_null()) {
      if (why.empty()) {
        why = "positive result without region";
      }
      return false;
    }
  } else if (!j["region"].is_null() || !j["reason"].is_string()) {
    why = "negative result shape";
    return false;
  }
  try {
    (void)parse_rfc3339(j["when_veri"].get<std::string>());
    (void)decode_verification_result(j);
  } catch (const std::exception &e) {
    why = e.what();
    return false;
  }
  return true;
}

void live_smoke(Verdict &v) {
  const auto start = Clock::now();
  testing::LoopbackListener target;
  const geo::Location target_loc(0, 0);
  const std::vector<geo::Location> verifier_locs{{10, 0}, {-10, 10}, {-10, -10}};
  constexpr Milliseconds kLastmile = 5.0;

  // Agents bind first so every prober can map ports to sites.
  std::vector<std::unique_ptr<agent::AgentServer>> agents;
  std::vector<std::shared_ptr<agent::Prober>> probers(3);
  std::vector<std::uint16_t> ports;
  std::map<std::uint16_t, geo::Location> sites{{target.port(), target_loc}};
  std::vector<std::uint16_t> reserved;
  for (int i = 0; i < 3; ++i) {
    reserved.push_back(testing::closed_port());
    sites[reserved.back()] = verifier_locs[i];
  }
  for (int i = 0; i < 3; ++i) {
    agent::AgentOptions opts;
    opts.host = "127.0.0.1";
    opts.port = reserved[i];
    auto prober = std::make_shared<InjectingProber>(verifier_locs[i], sites, target.port(), kLastmile);
    agents.push_back(std::make_unique<agent::AgentServer>(opts, prober));
    agents.back()->start();
    ports.push_back(agents.back()->port());
  }

  std::vector<VerifierEntry> entries;
  for (int i = 0; i < 3; ++i) {
    entries.push_back({"v" + std::to_string(i + 1), {"127.0.0.1", ports[i]}, verifier_locs[i]});
  }
  VerifierRegistry registry(entries);
  std::istringstream table("127.0.0.1/32,0,0\n");
  auto locator = std::make_shared<StaticTableLocator>(parse_prefix_table(table));
  auto delays = std::make_shared<LiveDelayProvider>(registry, target.port(), std::nullopt);
  VerifyConfig cfg;
  cfg.lambda_ms = kLastmile;
  cfg.probes_per_measurement = 3;
  cfg.measurement_timeout = 2s;
  Manager manager(registry, locator, delays, cfg, 4h);
  ManagerHttpServer http(manager);
  const auto port = http.start("127.0.0.1", 0);

  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(10, 0);
  const auto res = client.Get("/verify?ip=127.0.0.1");
  const double took = seconds_since(start);
  http.stop();
  for (auto &a : agents) {
    a->stop();
  }

  v.expect(static_cast<bool>(res), "no HTTP response");
  if (!res) {
    return;
  }
  v.expect(res->status == 200, "HTTP " + std::to_string(res->status));
  Json body;
  try {
    body = Json::parse(res->body);
  } catch (const std::exception &) {
    v.expect(false, "body is not JSON");
    return;
  }
  std::string why;
  v.expect(schema_valid(body, why), "schema: " + why);
  v.expect(took < 10.0, "took " + std::to_string(took) + " s");
  v.detail << "veri_passed=" << body.value("veri_passed", false);
  if (body.contains("region") && body["region"].is_object()) {
    v.detail << ", radius " << std::fixed << std::setprecision(1)
             << body["region"].value("radius", 0.0) << " km";
  }
  v.detail << ", " << std::fixed << std::setprecision(2) << took << " s end to end";
}

// 8 -----------------------------------------------------------------------

void geodesy(Verdict &v) {
  using namespace geo;
  int checks = 0;
  const auto near = [&](double got, double want, double tol, const std::string &what) {
    ++checks;
    v.expect(std::abs(got - want) <= tol, what + " = " + std::to_string(got));
  };
  near(great_circle_distance({0, 0}, {0, 0}), 0.0, 0.0, "d(0,0;0,0)");
  near(great_circle_distance({0, 0}, {0, 90}), 10007.54, 0.01, "d(0,0;0,90)");
  near(great_circle_distance({90, 0}, {-90, 0}), 20015.09, 0.01, "d(90,0;-90,0)");

  auto m = geodesic_midpoint({0, 0}, {0, 90});
  near(m.lat(), 0, 1e-9, "mid lat");
  near(m.lon(), 45, 1e-9, "mid lon");
  m = geodesic_midpoint({10, 20}, {10, 20});
  near(m.lat(), 10, 1e-9, "identity mid lat");
  near(m.lon(), 20, 1e-9, "identity mid lon");
  m = geodesic_midpoint({45, 0}, {-45, 0});
  near(m.lat(), 0, 1e-9, "meridian mid lat");
  near(m.lon(), 0, 1e-9, "meridian mid lon");

  const Circle c({0, 0}, 500);
  ++checks;
  v.expect(point_in_circle({0, 1}, c) && point_in_circle({0, 0}, c) &&
               !point_in_circle({0, 10}, c),
           "point_in_circle examples");
  const Triangle t({Location{10, 0}, Location{-10, 10}, Location{-10, -10}}, {"a", "b", "c"});
  ++checks;
  v.expect(point_in_spherical_triangle(t.centroid(), t) &&
               !point_in_spherical_triangle(Location::from_unit(-t.centroid().to_unit()), t) &&
               point_in_spherical_triangle(t.vertices()[0], t),
           "point_in_spherical_triangle examples");
  near(min_rtt_for_distance(0), 0.0, 0.0, "min_rtt(0)");
  near(min_rtt_for_distance(1000), 10.007, 0.001, "min_rtt(1000)");
  near(min_rtt_for_distance(100), 1.0007, 0.0005, "min_rtt(100)");

  std::mt19937_64 rng(8);
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = testing::random_location(rng);
    const auto b = testing::random_location(rng);
    const auto x = testing::random_location(rng);
    if (great_circle_distance(a, x) >
        great_circle_distance(a, b) + great_circle_distance(b, x) + 1e-6) {
      ++violations;
    }
  }
  v.expect(violations == 0, std::to_string(violations) + " triangle-inequality violations");
  v.detail << checks << " examples, 10000 triples, " << violations << " violations";
}

} // namespace

int main() {
  struct Criterion {
    int id;
    const char *name;
    std::function<void(Verdict &)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "Thales oracle equivalence", thales_oracle},
      {2, "FA reproduction", fa_reproduction},
      {3, "FR property", fr_property},
      {4, "Relay adversary", relay_adversary},
      {5, "Pinning outcome matrix", pin_matrix},
      {6, "Cache behaviour", cache_behaviour},
      {7, "Live loopback smoke test", live_smoke},
      {8, "Geodesy suite", geodesy},
  };
  int failed = 0;
  for (const auto &c : criteria) {
    Verdict v;
    try {
      c.run(v);
    } catch (const std::exception &e) {
      v.expect(false, std::string("exception: ") + e.what());
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << c.id << ": " << c.name << " -- "
              << v.detail.str() << std::endl;
    failed += v.pass ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
