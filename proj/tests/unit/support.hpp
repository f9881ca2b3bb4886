#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "tractloop/geometry.hpp"
#include "tractloop/rng.hpp"

namespace support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tractloop-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<tractloop::Vec3> random_polyline(tractloop::Rng& rng, std::size_t n, double scale = 50.0) {
  std::vector<tractloop::Vec3> pts;
  tractloop::Vec3 p{rng.uniform(0, scale), rng.uniform(0, scale), rng.uniform(0, scale)};
  for (std::size_t i = 0; i < n; ++i) {
    pts.push_back(p);
    p = p + tractloop::Vec3{rng.uniform(0.2, 2.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  }
  return pts;
}

inline tractloop::Tractogram random_tractogram(std::uint64_t seed, std::size_t count, std::size_t min_pts = 2,
                                               std::size_t max_pts = 30) {
  tractloop::Rng rng(seed);
  tractloop::Tractogram t;
  for (std::size_t i = 0; i < count; ++i)
    t.add(std::span<const tractloop::Vec3>(random_polyline(rng, min_pts + rng.below(max_pts - min_pts + 1))));
  return t;
}

inline tractloop::Tractogram lines(std::initializer_list<std::vector<tractloop::Vec3>> polylines) {
  tractloop::Tractogram t;
  for (const auto& p : polylines) t.add(std::span<const tractloop::Vec3>(p));
  return t;
}

}  // namespace support
