#include <benchmark/benchmark.h>

#include <random>
#include <sstream>

#include "slv/geo.hpp"
#include "slv/ip.hpp"
#include "slv/locator.hpp"
#include "slv/sim.hpp"
#include "slv/verify.hpp"

using namespace slv;

namespace {

std::vector<VerifierSite> grid_sites(int n) {
  std::vector<VerifierSite> out;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lat(22, 49), lon(-120, -74);
  for (int i = 0; i < n; ++i) {
    out.push_back({"v" + std::to_string(i + 1), geo::Location(lat(rng), lon(rng))});
  }
  return out;
}

} // namespace

static void BM_GreatCircleDistance(benchmark::State &state) {
  const geo::Location a(45.42, -75.69), b(49.28, -123.12);
  for (auto _ : state) {
    benchmark::DoNotOptimize(geo::great_circle_distance(a, b));
  }
}
BENCHMARK(BM_GreatCircleDistance);

static void BM_PointInTriangle(benchmark::State &state) {
  const geo::Triangle t({geo::Location{10, 0}, geo::Location{-10, 10}, geo::Location{-10, -10}},
                        {"a", "b", "c"});
  const geo::Location p(1, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(geo::point_in_spherical_triangle(p, t));
  }
}
BENCHMARK(BM_PointInTriangle);

static void BM_EnumerateTriangles(benchmark::State &state) {
  const auto sites = grid_sites(static_cast<int>(state.range(0)));
  const geo::Location asserted(38, -95);
  for (auto _ : state) {
    benchmark::DoNotOptimize(enumerate_triangles(sites, asserted));
  }
}
BENCHMARK(BM_EnumerateTriangles)->Arg(10)->Arg(20)->Arg(40);

static void BM_VerifyLocationSimulated(benchmark::State &state) {
  sim::ScenarioParams p;
  p.honest = 1;
  const auto sc = sim::generate_scenario(p);
  const auto &server = sc.servers.front();
  const auto ip = make_ip_info(sim::server_address(0), server.asserted_loc);
  const Timestamp now{std::chrono::seconds{1'700'000'000}};
  for (auto _ : state) {
    sim::SimDelayProvider delays(sc.verifiers, ip.value, server.true_loc, 0.0, sc.model, 1);
    benchmark::DoNotOptimize(verify_location(ip, sc.verifiers, delays, sc.cfg, now));
  }
}
BENCHMARK(BM_VerifyLocationSimulated);

static void BM_PrefixLookup(benchmark::State &state) {
  std::ostringstream rows;
  for (int a = 1; a < 224; ++a) {
    rows << a << ".0.0.0/8,10,10\n";
    for (int b = 0; b < 256; b += 16) {
      rows << a << "." << b << ".0.0/16,20,20\n";
    }
  }
  std::istringstream in(rows.str());
  const auto table = parse_prefix_table(in);
  const auto addr = *ip::parse_address("100.32.7.9");
  for (auto _ : state) {
    benchmark::DoNotOptimize(table.lookup(addr));
  }
}
BENCHMARK(BM_PrefixLookup);
BENCHMARK_MAIN();
