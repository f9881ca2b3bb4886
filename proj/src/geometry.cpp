#include "tractloop/geometry.hpp"

#include <algorithm>
#include <string>

#include "tractloop/error.hpp"
#include "tractloop/rng.hpp"

namespace tractloop {

namespace {

bool finite(const Point3f& p) { return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z); }

template <typename P>
Vec3 as_vec(const P& p) {
  return Vec3(p.x, p.y, p.z);
}

template <typename P>
ResampledStreamline resample_impl(std::span<const P> points, std::size_t m) {
  if (points.size() < 2) throw InvalidArgument("resample: streamline needs at least 2 points");
  if (m < 2) throw InvalidArgument("resample: m must be at least 2");

  std::vector<double> arc(points.size(), 0.0);
  for (std::size_t i = 1; i < points.size(); ++i)
    arc[i] = arc[i - 1] + distance(as_vec(points[i - 1]), as_vec(points[i]));
  const double total = arc.back();
  if (!(total > 0.0)) throw InvalidArgument("zero-length streamline");

  ResampledStreamline out;
  out.points.reserve(m);
  out.points.push_back(as_vec(points.front()));
  std::size_t seg = 1;
  for (std::size_t j = 1; j + 1 < m; ++j) {
    const double target = total * static_cast<double>(j) / static_cast<double>(m - 1);
    while (seg + 1 < points.size() && arc[seg] < target) ++seg;
    const double len = arc[seg] - arc[seg - 1];
    const Vec3 a = as_vec(points[seg - 1]);
    const Vec3 b = as_vec(points[seg]);
    const double f = len > 0.0 ? std::clamp((target - arc[seg - 1]) / len, 0.0, 1.0) : 0.0;
    out.points.push_back(a + (b - a) * f);
  }
  out.points.push_back(as_vec(points.back()));
  return out;
}

double segment_distance_sq(const Vec3& a, const Vec3& b, const Vec3& p) {
  const Vec3 ab = b - a;
  const double len_sq = dot(ab, ab);
  double t = len_sq > 0.0 ? dot(p - a, ab) / len_sq : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec3 d = p - (a + ab * t);
  return dot(d, d);
}

}  // namespace

std::size_t Tractogram::add(std::span<const Point3f> points) {
  if (points.size() < 2)
    throw InvalidArgument("streamline " + std::to_string(size()) + " has fewer than 2 points");
  for (const auto& p : points)
    if (!finite(p)) throw InvalidArgument("streamline " + std::to_string(size()) + " has non-finite coordinates");
  points_.insert(points_.end(), points.begin(), points.end());
  offsets_.push_back(points_.size());
  return size() - 1;
}

std::size_t Tractogram::add(std::span<const Vec3> points) {
  std::vector<Point3f> converted;
  converted.reserve(points.size());
  for (const auto& p : points) converted.push_back(p.to_float());
  return add(std::span<const Point3f>(converted));
}

void Tractogram::reserve(std::size_t streamlines, std::size_t points) {
  offsets_.reserve(streamlines + 1);
  points_.reserve(points);
}

std::span<const Point3f> Tractogram::points(std::size_t id) const {
  if (id >= size()) throw InvalidArgument("streamline id " + std::to_string(id) + " out of range");
  return {points_.data() + offsets_[id], offsets_[id + 1] - offsets_[id]};
}

Tractogram Tractogram::subset(std::span<const std::size_t> ids) const {
  Tractogram out;
  std::size_t total = 0;
  for (auto id : ids) total += points(id).size();
  out.reserve(ids.size(), total);
  for (auto id : ids) {
    const auto p = points(id);
    out.points_.insert(out.points_.end(), p.begin(), p.end());
    out.offsets_.push_back(out.points_.size());
  }
  return out;
}

Tractogram Tractogram::from_buffers(std::vector<Point3f> points, std::vector<std::size_t> offsets) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != points.size())
    throw InvalidArgument("tractogram offsets do not cover the point buffer");
  for (std::size_t i = 1; i < offsets.size(); ++i)
    if (offsets[i] < offsets[i - 1] + 2)
      throw InvalidArgument("streamline " + std::to_string(i - 1) + " has fewer than 2 points");
  for (const auto& p : points)
    if (!finite(p)) throw InvalidArgument("tractogram has non-finite coordinates");
  Tractogram t;
  t.points_ = std::move(points);
  t.offsets_ = std::move(offsets);
  return t;
}

ResampledStreamline ResampledStreamline::reversed() const {
  return {std::vector<Vec3>(points.rbegin(), points.rend())};
}

ResampledStreamline resample(std::span<const Point3f> points, std::size_t m) { return resample_impl(points, m); }
ResampledStreamline resample(std::span<const Vec3> points, std::size_t m) { return resample_impl(points, m); }

bool passes_through(std::span<const Point3f> points, const RoiSphere& roi) {
  const double r2 = roi.radius * roi.radius;
  if (points.empty()) return false;
  Vec3 prev = as_vec(points[0]);
  Vec3 d = prev - roi.center;
  if (dot(d, d) <= r2) return true;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const Vec3 cur = as_vec(points[i]);
    if (segment_distance_sq(prev, cur, roi.center) <= r2) return true;
    prev = cur;
  }
  return false;
}

std::vector<std::size_t> streamlines_through(const Tractogram& t, const RoiSphere& roi) {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (passes_through(t.points(i), roi)) ids.push_back(i);
  return ids;
}

std::vector<std::size_t> random_subsample(std::size_t count, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw InvalidArgument("random_subsample: k must be positive");
  if (k > count)
    throw InvalidArgument("random_subsample: k=" + std::to_string(k) + " exceeds count " + std::to_string(count));
  Rng rng(seed);
  return sample_without_replacement(count, k, rng);
}

}  // namespace tractloop
