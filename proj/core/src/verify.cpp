#include "slv/verify.hpp"

#include <algorithm>
#include <array>
#include <future>

#include "slv/error.hpp"
#include "slv/ip.hpp"

namespace slv {

IpInfo make_ip_info(std::string value, geo::Location loc) {
  if (!ip::is_valid_address(value)) {
    throw InvalidArgument("not an IP address: '" + value + "'");
  }
  return {std::move(value), loc};
}

std::string_view to_string(FailureReason reason) {
  switch (reason) {
  case FailureReason::NoCoverage:
    return "NoCoverage";
  case FailureReason::AllTrianglesRejected:
    return "AllTrianglesRejected";
  case FailureReason::MeasurementFailure:
    return "MeasurementFailure";
  }
  return "Unknown";
}

std::optional<FailureReason> failure_reason_from_string(std::string_view text) {
  for (auto r : {FailureReason::NoCoverage, FailureReason::AllTrianglesRejected,
                 FailureReason::MeasurementFailure}) {
    if (to_string(r) == text) {
      return r;
    }
  }
  return std::nullopt;
}

void VerifyConfig::validate() const {
  if (!(lambda_ms >= 0.0)) {
    throw InvalidArgument("lambda_ms must be >= 0");
  }
  if (probes_per_measurement < 1) {
    throw InvalidArgument("probes_per_measurement must be >= 1");
  }
  if (max_triangles < 1) {
    throw InvalidArgument("max_triangles must be >= 1");
  }
  if (measurement_timeout.count() <= 0) {
    throw InvalidArgument("measurement_timeout must be positive");
  }
}

void DelayMatrix::set(const std::string &verifier_id, const std::string &endpoint_id,
                      Milliseconds rtt) {
  entries_[{verifier_id, endpoint_id}] = std::max(rtt, 0.0);
}

std::optional<Milliseconds> DelayMatrix::get(const std::string &verifier_id,
                                             const std::string &endpoint_id) const {
  const auto it = entries_.find({verifier_id, endpoint_id});
  if (it == entries_.end()) {
    return std::nullopt;
  }
  return it->second;
}

std::vector<std::optional<Milliseconds>>
DelayProvider::measure_row(const std::string &verifier_id, std::span<const std::string> endpoint_ids,
                           int probes, std::chrono::seconds timeout) {
  std::vector<std::optional<Milliseconds>> row;
  row.reserve(endpoint_ids.size());
  for (const auto &endpoint : endpoint_ids) {
    row.push_back(measure(verifier_id, endpoint, probes, timeout));
  }
  return row;
}

Milliseconds apply_lastmile_correction(Milliseconds rtt, Milliseconds lambda) {
  return std::max(rtt - lambda, 0.0);
}

bool thales_accept(Milliseconds d1, Milliseconds d2, Milliseconds d12, Milliseconds d21) {
  const double pair = (d12 + d21) / 2.0;
  return d1 * d1 + d2 * d2 <= pair * pair;
}

geo::Circle circle_of_pair(const geo::Location &v1, const geo::Location &v2) {
  const geo::Location centre = geo::geodesic_midpoint(v1, v2);
  return {centre, geo::great_circle_distance(v1, v2) / 2.0};
}

std::vector<geo::Triangle> enumerate_triangles(std::span<const VerifierSite> verifiers,
                                               const geo::Location &asserted) {
  struct Candidate {
    geo::Triangle triangle;
    Kilometers perimeter;
  };
  std::vector<Candidate> found;
  const std::size_t n = verifiers.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      for (std::size_t k = j + 1; k < n; ++k) {
        const auto &a = verifiers[i];
        const auto &b = verifiers[j];
        const auto &c = verifiers[k];
        try {
          geo::Triangle t({a.loc, b.loc, c.loc}, {a.id, b.id, c.id});
          if (geo::point_in_spherical_triangle(asserted, t)) {
            const Kilometers p = t.perimeter();
            found.push_back({std::move(t), p});
          }
        } catch (const DegenerateTriangle &) {
          // collinear or co-located verifiers never encompass anything
        }
      }
    }
  }
  std::sort(found.begin(), found.end(), [](const Candidate &lhs, const Candidate &rhs) {
    if (lhs.perimeter != rhs.perimeter) {
      return lhs.perimeter < rhs.perimeter;
    }
    return lhs.triangle.verifier_ids() < rhs.triangle.verifier_ids();
  });

  std::vector<geo::Triangle> out;
  out.reserve(found.size());
  for (auto &c : found) {
    out.push_back(std::move(c.triangle));
  }
  return out;
}

std::optional<DelayMatrix> measure_triangle(const geo::Triangle &triangle,
                                            const std::string &target_endpoint,
                                            DelayProvider &delays, const VerifyConfig &cfg) {
  const auto &ids = triangle.verifier_ids();
  using Row = std::vector<std::optional<Milliseconds>>;

  std::array<std::vector<std::string>, 3> endpoints;
  std::array<std::future<Row>, 3> rows;
  for (std::size_t v = 0; v < 3; ++v) {
    endpoints[v] = {target_endpoint, ids[(v + 1) % 3], ids[(v + 2) % 3]};
    rows[v] = std::async(std::launch::async, [&, v] {
      return delays.measure_row(ids[v], endpoints[v], cfg.probes_per_measurement,
                                cfg.measurement_timeout);
    });
  }

  DelayMatrix matrix;
  bool complete = true;
  for (std::size_t v = 0; v < 3; ++v) {
    Row row;
    try {
      row = rows[v].get();
    } catch (const std::exception &) {
      complete = false;
      continue;
    }
    if (row.size() != endpoints[v].size()) {
      complete = false;
      continue;
    }
    for (std::size_t e = 0; e < row.size(); ++e) {
      if (!row[e]) {
        complete = false;
        continue;
      }
      // only verifier-to-target edges carry the extra last-mile hops
      const Milliseconds rtt =
          e == 0 ? apply_lastmile_correction(*row[e], cfg.lambda_ms) : *row[e];
      matrix.set(ids[v], endpoints[v][e], rtt);
    }
  }
  if (!complete) {
    return std::nullopt;
  }
  return matrix;
}

VerificationResult verify_location(const IpInfo &asserted_ip,
                                   std::span<const VerifierSite> verifiers,
                                   DelayProvider &delays, const VerifyConfig &cfg, Timestamp now) {
  cfg.validate();

  VerificationResult res;
  res.ip = asserted_ip;
  res.when_veri = now;

  const auto triangles = enumerate_triangles(verifiers, asserted_ip.loc);
  if (triangles.empty()) {
    res.reason = FailureReason::NoCoverage;
    return res;
  }

  std::map<std::string, geo::Location> site_of;
  for (const auto &v : verifiers) {
    site_of.emplace(v.id, v.loc);
  }

  static constexpr std::array<std::pair<std::size_t, std::size_t>, 3> kPairs{
      {{0, 1}, {0, 2}, {1, 2}}};

  bool any_measured = false;
  const std::size_t limit =
      std::min(triangles.size(), static_cast<std::size_t>(cfg.max_triangles));
  for (std::size_t t = 0; t < limit; ++t) {
    const auto &triangle = triangles[t];
    const auto matrix = measure_triangle(triangle, asserted_ip.value, delays, cfg);
    if (!matrix) {
      continue;
    }
    any_measured = true;

    const auto &ids = triangle.verifier_ids();
    for (const auto &[i, j] : kPairs) {
      const auto &v1 = ids[i];
      const auto &v2 = ids[j];
      const bool accepted =
          thales_accept(*matrix->get(v1, asserted_ip.value), *matrix->get(v2, asserted_ip.value),
                        *matrix->get(v1, v2), *matrix->get(v2, v1));
      if (!accepted) {
        continue;
      }
      std::optional<geo::Circle> circle;
      try {
        circle = circle_of_pair(site_of.at(v1), site_of.at(v2));
      } catch (const AntipodalPoints &) {
        continue;
      }
      // a granularity circle that excludes the asserted point would be
      // self-contradictory
      if (geo::point_in_circle(asserted_ip.loc, *circle)) {
        res.veri_passed = true;
        res.region = circle;
        return res;
      }
    }
  }

  res.reason = any_measured ? FailureReason::AllTrianglesRejected
                            : FailureReason::MeasurementFailure;
  return res;
}

} // namespace slv
