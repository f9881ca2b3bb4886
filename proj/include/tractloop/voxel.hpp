#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "tractloop/geometry.hpp"

namespace tractloop {

/// Axis-aligned voxel grid. Voxel (i,j,k) covers
/// [origin + (i,j,k)*voxel_size, origin + (i+1,j+1,k+1)*voxel_size).
struct VoxelGrid {
  std::array<std::size_t, 3> dims{1, 1, 1};
  Vec3 voxel_size{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};

  std::size_t voxel_count() const noexcept { return dims[0] * dims[1] * dims[2]; }
  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;
};

/// Binary occupancy grid, x-fastest storage, one byte (0 or 1) per voxel.
struct VoxelMask {
  VoxelGrid grid;
  std::vector<std::uint8_t> data;

  VoxelMask() = default;
  explicit VoxelMask(const VoxelGrid& g) : grid(g), data(g.voxel_count(), 0) {}

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return i + grid.dims[0] * (j + grid.dims[1] * k);
  }
  bool at(std::size_t i, std::size_t j, std::size_t k) const { return data[index(i, j, k)] != 0; }
  std::size_t count() const noexcept;

  friend bool operator==(const VoxelMask&, const VoxelMask&) = default;
};

}  // namespace tractloop
