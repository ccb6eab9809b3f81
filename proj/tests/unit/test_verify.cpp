#include "doctest.h"

#include <random>

#include "slv/error.hpp"
#include "slv/verify.hpp"
#include "test_support.hpp"

using namespace slv;
using doctest::Approx;

namespace {

const Timestamp kNow{std::chrono::seconds{1'700'000'000}};

} // namespace

TEST_CASE("apply_lastmile_correction examples") {
  CHECK(apply_lastmile_correction(12.0, 5.0) == 7.0);
  CHECK(apply_lastmile_correction(3.0, 5.0) == 0.0);
  CHECK(apply_lastmile_correction(8.0, 0.0) == 8.0);
}

TEST_CASE("thales_accept examples") {
  CHECK(thales_accept(3, 4, 10, 10));
  CHECK_FALSE(thales_accept(8, 9, 10, 10));
  CHECK(thales_accept(6, 8, 10, 10));
}

TEST_CASE("thales_accept averages asymmetric pair delays") {
  CHECK(thales_accept(6, 8, 8, 12));
  CHECK_FALSE(thales_accept(6, 8, 8, 11.9));
}

TEST_CASE("property: thales monotone in d1 and d2") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  for (int i = 0; i < 10000; ++i) {
    const double d12 = u(rng);
    const double d21 = u(rng);
    const double d1 = u(rng);
    const double d2 = u(rng);
    const double bump = u(rng);
    if (thales_accept(d1 + bump, d2, d12, d21)) {
      REQUIRE(thales_accept(d1, d2, d12, d21));
    }
    if (thales_accept(d1, d2 + bump, d12, d21)) {
      REQUIRE(thales_accept(d1, d2, d12, d21));
    }
  }
}

TEST_CASE("property: thales invariant under common scaling") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  // powers of two keep the arithmetic exact
  for (int i = 0; i < 10000; ++i) {
    const double d1 = u(rng), d2 = u(rng), d12 = u(rng), d21 = u(rng);
    for (double k : {0.25, 2.0, 1024.0}) {
      REQUIRE(thales_accept(d1, d2, d12, d21) == thales_accept(k * d1, k * d2, k * d12, k * d21));
    }
  }
}

TEST_CASE("circle_of_pair examples") {
  const auto a = circle_of_pair({0, 0}, {0, 90});
  CHECK(a.centre().lat() == Approx(0).epsilon(1e-9));
  CHECK(a.centre().lon() == Approx(45));
  CHECK(a.radius() == Approx(5003.77169900514).epsilon(1e-12));

  const auto b = circle_of_pair({10, 10}, {10, 10.0002});
  CHECK(b.radius() == Approx(0.0109505625855184).epsilon(1e-6));

  const auto c = circle_of_pair({0, -10}, {0, 10});
  CHECK(std::abs(c.centre().lon()) < 1e-9);
  CHECK(c.radius() == Approx(1111.94926644559).epsilon(1e-12));

  CHECK_THROWS_AS(circle_of_pair({0, 0}, {0, 0}), InvalidArgument);
}

TEST_CASE("enumerate_triangles examples") {
  const auto three = testing::triangle_sites();
  const auto found = enumerate_triangles(three, {0, 0});
  REQUIRE(found.size() == 1);
  CHECK(found[0].verifier_ids() == std::array<std::string, 3>{"v1", "v2", "v3"});

  CHECK(enumerate_triangles(three, {50, 50}).empty());

  // perimeters 5599.83 (v1,v3,v4) and 7157.50 (v1,v2,v3)
  const auto four = testing::nested_sites();
  const auto nested = enumerate_triangles(four, {0, 0});
  REQUIRE(nested.size() == 2);
  CHECK(nested[0].verifier_ids() == std::array<std::string, 3>{"v1", "v3", "v4"});
  CHECK(nested[0].perimeter() == Approx(5599.83097297).epsilon(1e-9));
  CHECK(nested[1].verifier_ids() == std::array<std::string, 3>{"v1", "v2", "v3"});
  CHECK(nested[1].perimeter() == Approx(7157.49679597).epsilon(1e-9));
}

TEST_CASE("verify_location accepts an honest server inside a triangle") {
  const auto sites = testing::triangle_sites();
  const auto ip = make_ip_info("192.0.2.10", {0, 0});
  testing::GeometricProvider delays(sites, ip.value, ip.loc, 5.0);
  const auto r = verify_location(ip, sites, delays, VerifyConfig{}, kNow);
  CHECK(r.veri_passed);
  REQUIRE(r.region);
  CHECK(point_in_circle(ip.loc, *r.region));
  CHECK_FALSE(r.reason);
  CHECK(r.when_veri == kNow);
  CHECK(r.ip == ip);
}

TEST_CASE("verify_location picks the first accepting pair of the smallest triangle") {
  const auto sites = testing::nested_sites();
  const auto ip = make_ip_info("192.0.2.11", {0, 0});
  testing::GeometricProvider delays(sites, ip.value, ip.loc, 5.0);
  const auto r = verify_location(ip, sites, delays, VerifyConfig{}, kNow);
  REQUIRE(r.veri_passed);
  // Smallest triangle is (v1,v3,v4); pairs are tried as (v1,v3), (v1,v4), (v3,v4).
  const auto rtt = [](geo::Location a, geo::Location b) {
    return geo::min_rtt_for_distance(geo::great_circle_distance(a, b));
  };
  const geo::Location p(0, 0);
  const std::array<std::pair<geo::Location, geo::Location>, 3> pairs{{
      {{10, 0}, {-10, -10}}, {{10, 0}, {-3, 3}}, {{-10, -10}, {-3, 3}}}};
  std::optional<geo::Circle> expected;
  for (const auto &[a, b] : pairs) {
    const double d1 = rtt(a, p);
    const double d2 = rtt(b, p);
    const double d12 = rtt(a, b);
    if (d1 * d1 + d2 * d2 <= d12 * d12 && point_in_circle(p, circle_of_pair(a, b))) {
      expected = circle_of_pair(a, b);
      break;
    }
  }
  REQUIRE(expected);
  CHECK(*r.region == *expected);
  CHECK(delays.calls() == 9);
}

TEST_CASE("verify_location rejects a server 3000 km away after four triangles") {
  const auto sites = testing::continental_sites();
  const geo::Location asserted(38.0, -95.0);
  const auto ip = make_ip_info("192.0.2.12", asserted);
  const auto truth = geo::destination_point(asserted, 60.0, 3000.0);
  testing::GeometricProvider delays(sites, ip.value, truth, 5.0);
  VerifyConfig cfg;
  REQUIRE(enumerate_triangles(sites, asserted).size() >= 4);
  const auto r = verify_location(ip, sites, delays, cfg, kNow);
  CHECK_FALSE(r.veri_passed);
  CHECK_FALSE(r.region);
  CHECK(r.reason == FailureReason::AllTrianglesRejected);
  CHECK(delays.calls() == 4 * 9);
}

TEST_CASE("verify_location without coverage") {
  const auto sites = testing::triangle_sites();
  const auto ip = make_ip_info("192.0.2.13", {50, 50});
  testing::GeometricProvider delays(sites, ip.value, ip.loc);
  const auto r = verify_location(ip, sites, delays, VerifyConfig{}, kNow);
  CHECK_FALSE(r.veri_passed);
  CHECK(r.reason == FailureReason::NoCoverage);
  CHECK(delays.calls() == 0);
}

TEST_CASE("verify_location when every measurement fails") {
  const auto sites = testing::nested_sites();
  const auto ip = make_ip_info("192.0.2.14", {0, 0});
  testing::FailingProvider delays;
  const auto r = verify_location(ip, sites, delays, VerifyConfig{}, kNow);
  CHECK_FALSE(r.veri_passed);
  CHECK(r.reason == FailureReason::MeasurementFailure);
}

TEST_CASE("VerifyConfig validation") {
  VerifyConfig cfg;
  cfg.lambda_ms = -1;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.max_triangles = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.probes_per_measurement = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("property: positive results always contain the asserted location") {
  const auto sites = testing::continental_sites();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> lat(24, 48), lon(-118, -76), off(0, 800),
      bearing(0, 360), lastmile(0, 10);
  int positives = 0;
  for (int i = 0; i < 300; ++i) {
    const geo::Location asserted(lat(rng), lon(rng));
    const auto truth = geo::destination_point(asserted, bearing(rng), off(rng));
    const auto ip = make_ip_info("192.0.2.20", asserted);
    testing::GeometricProvider delays(sites, ip.value, truth, lastmile(rng));
    const auto r = verify_location(ip, sites, delays, VerifyConfig{}, kNow);
    REQUIRE(r.veri_passed == r.region.has_value());
    if (r.veri_passed) {
      ++positives;
      REQUIRE(point_in_circle(asserted, *r.region));
    }
  }
  CHECK(positives > 0);
}
