#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tractloop {

/// Single-precision point as stored in tractograms (millimeters, world space).
struct Point3f {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;

  friend bool operator==(const Point3f&, const Point3f&) = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}
  constexpr explicit Vec3(const Point3f& p) : x(p.x), y(p.y), z(p.z) {}

  constexpr Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  constexpr Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return a * s; }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;

  Point3f to_float() const {
    return {static_cast<float>(x), static_cast<float>(y), static_cast<float>(z)};
  }
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }
inline Vec3 normalized(const Vec3& a) { return a * (1.0 / norm(a)); }

/// Non-owning view of one streamline inside a tractogram.
struct StreamlineView {
  std::size_t id = 0;
  std::span<const Point3f> points;
};

/// Container of streamlines backed by one contiguous point buffer.
/// Streamline ids are their positions, 0..size()-1.
class Tractogram {
 public:
  Tractogram() = default;

  /// Appends a streamline; returns its id. Requires >= 2 finite points.
  std::size_t add(std::span<const Point3f> points);
  std::size_t add(std::span<const Vec3> points);

  void reserve(std::size_t streamlines, std::size_t points);

  std::size_t size() const noexcept { return offsets_.size() - 1; }
  bool empty() const noexcept { return size() == 0; }
  std::size_t total_points() const noexcept { return points_.size(); }

  std::span<const Point3f> points(std::size_t id) const;
  StreamlineView operator[](std::size_t id) const { return {id, points(id)}; }

  /// New tractogram holding the listed streamlines in the given order.
  Tractogram subset(std::span<const std::size_t> ids) const;

  friend bool operator==(const Tractogram&, const Tractogram&) = default;

  /// Bulk construction from a flat buffer and streamline start offsets
  /// (offsets.front() == 0, offsets.back() == points.size()).
  static Tractogram from_buffers(std::vector<Point3f> points, std::vector<std::size_t> offsets);

 private:
  std::vector<Point3f> points_;
  std::vector<std::size_t> offsets_{0};
};

/// Streamline resampled to a fixed number of points equally spaced in arc length.
struct ResampledStreamline {
  std::vector<Vec3> points;

  std::size_t size() const noexcept { return points.size(); }
  ResampledStreamline reversed() const;
};

/// Resamples a polyline to `m` points uniformly spaced by arc length using
/// linear interpolation between the original vertices. Endpoints are kept.
ResampledStreamline resample(std::span<const Point3f> points, std::size_t m);
ResampledStreamline resample(std::span<const Vec3> points, std::size_t m);

struct RoiSphere {
  Vec3 center;
  double radius = 1.0;
};

/// True iff some point of the polyline (vertices and segment interiors) lies
/// within `roi.radius` of the center.
bool passes_through(std::span<const Point3f> points, const RoiSphere& roi);

/// Ids of all streamlines that pass through the ROI, ascending.
std::vector<std::size_t> streamlines_through(const Tractogram& t, const RoiSphere& roi);

/// k distinct ids drawn uniformly without replacement from [0, count).
std::vector<std::size_t> random_subsample(std::size_t count, std::size_t k, std::uint64_t seed);
inline std::vector<std::size_t> random_subsample(const Tractogram& t, std::size_t k, std::uint64_t seed) {
  return random_subsample(t.size(), k, seed);
}

}  // namespace tractloop
