#pragma once

#include <array>
#include <numbers>
#include <string>

namespace slv::geo {

using Kilometers = double;
using Milliseconds = double;

inline constexpr Kilometers kEarthRadiusKm = 6371.0;
inline constexpr double kSpeedOfLightKmPerSec = 299792.458;
// Half the circumference of the model sphere.
inline constexpr Kilometers kMaxCircleRadiusKm = std::numbers::pi * kEarthRadiusKm;

struct Vec3 {
  double x{};
  double y{};
  double z{};

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
  friend Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
};

double dot(Vec3 a, Vec3 b);
Vec3 cross(Vec3 a, Vec3 b);
double norm(Vec3 v);
Vec3 normalized(Vec3 v);

// A point on the sphere in degrees. Latitude must lie in [-90, 90];
// longitude is wrapped into [-180, 180).
class Location {
public:
  Location() = default;
  // Throws InvalidArgument for non-finite input or latitude out of range.
  Location(double lat, double lon);

  [[nodiscard]] double lat() const noexcept { return lat_; }
  [[nodiscard]] double lon() const noexcept { return lon_; }

  [[nodiscard]] Vec3 to_unit() const;
  static Location from_unit(Vec3 v);

  friend bool operator==(const Location &, const Location &) = default;

private:
  double lat_{0.0};
  double lon_{0.0};
};

std::string to_string(const Location &loc);

class Circle {
public:
  // Throws InvalidArgument unless 0 < radius <= kMaxCircleRadiusKm.
  Circle(Location centre, Kilometers radius);

  [[nodiscard]] const Location &centre() const noexcept { return centre_; }
  [[nodiscard]] Kilometers radius() const noexcept { return radius_; }

  friend bool operator==(const Circle &, const Circle &) = default;

private:
  Location centre_;
  Kilometers radius_;
};

// Spherical triangle spanned by three verifier positions.
class Triangle {
public:
  // Throws DegenerateTriangle if two vertices coincide or all three lie
  // on one great circle.
  Triangle(std::array<Location, 3> vertices, std::array<std::string, 3> verifier_ids);

  [[nodiscard]] const std::array<Location, 3> &vertices() const noexcept { return vertices_; }
  [[nodiscard]] const std::array<std::string, 3> &verifier_ids() const noexcept { return ids_; }
  [[nodiscard]] Kilometers perimeter() const;
  // Normalized mean of the vertex unit vectors.
  [[nodiscard]] Location centroid() const;

private:
  std::array<Location, 3> vertices_;
  std::array<std::string, 3> ids_;
};

// Haversine distance on a sphere of radius kEarthRadiusKm.
Kilometers great_circle_distance(const Location &a, const Location &b);

// Throws AntipodalPoints if a and b are within 1 km of antipodal.
Location geodesic_midpoint(const Location &a, const Location &b);

// Boundary inclusive.
bool point_in_circle(const Location &p, const Circle &c);

// True iff p is on the interior side of all three edges. Points on an
// edge or at a vertex count as inside.
bool point_in_spherical_triangle(const Location &p, const Triangle &t);

// Round-trip time over a one-way fibre distance, propagating at 2c/3.
Milliseconds min_rtt_for_distance(Kilometers d);

// Point reached by travelling `distance` along the great circle leaving
// `start` at `bearing_deg` (clockwise from north).
Location destination_point(const Location &start, double bearing_deg, Kilometers distance);

} // namespace slv::geo
