#include "slv/geo.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "slv/error.hpp"

namespace slv::geo {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

// Tolerance on unit-vector triple products; about 6 mm on the surface.
constexpr double kEdgeEpsilon = 1e-12;

double wrap_longitude(double lon) {
  double wrapped = std::fmod(lon + 180.0, 360.0);
  if (wrapped < 0.0) {
    wrapped += 360.0;
  }
  return wrapped - 180.0;
}

} // namespace

double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

double norm(Vec3 v) { return std::sqrt(dot(v, v)); }

Vec3 normalized(Vec3 v) {
  const double n = norm(v);
  return (1.0 / n) * v;
}

Location::Location(double lat, double lon) {
  if (!std::isfinite(lat) || !std::isfinite(lon)) {
    throw InvalidArgument("location coordinates must be finite");
  }
  if (lat < -90.0 || lat > 90.0) {
    throw InvalidArgument("latitude out of range [-90, 90]: " + std::to_string(lat));
  }
  lat_ = lat;
  lon_ = wrap_longitude(lon);
}

Vec3 Location::to_unit() const {
  const double la = lat_ * kDegToRad;
  const double lo = lon_ * kDegToRad;
  return {std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo), std::sin(la)};
}

Location Location::from_unit(Vec3 v) {
  const Vec3 u = normalized(v);
  const double lat = std::atan2(u.z, std::hypot(u.x, u.y)) * kRadToDeg;
  const double lon = std::atan2(u.y, u.x) * kRadToDeg;
  return {std::clamp(lat, -90.0, 90.0), lon};
}

std::string to_string(const Location &loc) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << '(' << loc.lat() << ", " << loc.lon() << ')';
  return os.str();
}

Circle::Circle(Location centre, Kilometers radius) : centre_(centre), radius_(radius) {
  if (!(radius > 0.0) || radius > kMaxCircleRadiusKm) {
    throw InvalidArgument("circle radius out of range (0, " + std::to_string(kMaxCircleRadiusKm) +
                          "]: " + std::to_string(radius));
  }
}

Triangle::Triangle(std::array<Location, 3> vertices, std::array<std::string, 3> verifier_ids)
    : vertices_(vertices), ids_(std::move(verifier_ids)) {
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) {
      if (vertices_[i] == vertices_[j]) {
        throw DegenerateTriangle("triangle has coincident vertices");
      }
    }
  }
  const Vec3 a = vertices_[0].to_unit();
  const Vec3 b = vertices_[1].to_unit();
  const Vec3 c = vertices_[2].to_unit();
  if (std::abs(dot(a, cross(b, c))) <= kEdgeEpsilon) {
    throw DegenerateTriangle("triangle vertices lie on one great circle");
  }
}

Kilometers Triangle::perimeter() const {
  return great_circle_distance(vertices_[0], vertices_[1]) +
         great_circle_distance(vertices_[1], vertices_[2]) +
         great_circle_distance(vertices_[2], vertices_[0]);
}

Location Triangle::centroid() const {
  return Location::from_unit(vertices_[0].to_unit() + vertices_[1].to_unit() +
                             vertices_[2].to_unit());
}

Kilometers great_circle_distance(const Location &a, const Location &b) {
  const double lat1 = a.lat() * kDegToRad;
  const double lat2 = b.lat() * kDegToRad;
  const double dlat = lat2 - lat1;
  const double dlon = (b.lon() - a.lon()) * kDegToRad;

  const double s_lat = std::sin(dlat * 0.5);
  const double s_lon = std::sin(dlon * 0.5);
  double h = s_lat * s_lat + std::cos(lat1) * std::cos(lat2) * s_lon * s_lon;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

Location geodesic_midpoint(const Location &a, const Location &b) {
  if (great_circle_distance(a, b) >= kMaxCircleRadiusKm - 1.0) {
    throw AntipodalPoints("midpoint undefined for antipodal points " + to_string(a) + " and " +
                          to_string(b));
  }
  if (a == b) {
    return a;
  }
  return Location::from_unit(a.to_unit() + b.to_unit());
}

bool point_in_circle(const Location &p, const Circle &c) {
  return great_circle_distance(p, c.centre()) <= c.radius();
}

bool point_in_spherical_triangle(const Location &p, const Triangle &t) {
  const auto &v = t.vertices();
  const Vec3 a = v[0].to_unit();
  const Vec3 b = v[1].to_unit();
  const Vec3 c = v[2].to_unit();
  const Vec3 q = p.to_unit();

  const double orientation = dot(a, cross(b, c)) > 0.0 ? 1.0 : -1.0;
  return orientation * dot(q, cross(a, b)) >= -kEdgeEpsilon &&
         orientation * dot(q, cross(b, c)) >= -kEdgeEpsilon &&
         orientation * dot(q, cross(c, a)) >= -kEdgeEpsilon;
}

Milliseconds min_rtt_for_distance(Kilometers d) {
  return 3.0 * d / kSpeedOfLightKmPerSec * 1000.0;
}

Location destination_point(const Location &start, double bearing_deg, Kilometers distance) {
  const double delta = distance / kEarthRadiusKm;
  const double theta = bearing_deg * kDegToRad;
  const double lat1 = start.lat() * kDegToRad;
  const double lon1 = start.lon() * kDegToRad;

  const double sin_lat2 =
      std::sin(lat1) * std::cos(delta) + std::cos(lat1) * std::sin(delta) * std::cos(theta);
  const double lat2 = std::asin(std::clamp(sin_lat2, -1.0, 1.0));
  const double lon2 =
      lon1 + std::atan2(std::sin(theta) * std::sin(delta) * std::cos(lat1),
                        std::cos(delta) - std::sin(lat1) * sin_lat2);
  return {lat2 * kRadToDeg, lon2 * kRadToDeg};
}

} // namespace slv::geo
