#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tractloop/active_loop.hpp"
#include "tractloop/voxel.hpp"

namespace tractloop {

/// Bounding box of all points padded by `padding_voxels` on each side.
VoxelGrid default_grid(const Tractogram& t, double voxel_size = 1.0, std::size_t padding_voxels = 2);

/// Sets every voxel hit by a point of a selected streamline, with segments
/// subsampled at steps of at most half a voxel. Throws InvalidArgument naming
/// the first point outside the grid.
VoxelMask voxelize(std::span<const std::size_t> ids, const Tractogram& t, const VoxelGrid& grid);

/// 2|A∩B| / (|A|+|B|); 1.0 when both are empty. Throws on grid mismatch.
double dice(const VoxelMask& a, const VoxelMask& b);

struct CurveRecord {
  std::size_t iteration = 0;
  std::size_t labeled = 0;
  double dice = 0.0;      // finalize-set mask (labels override the model)
  double raw_dice = 0.0;  // model prediction alone
  std::size_t tract_size = 0;

  friend bool operator==(const CurveRecord&, const CurveRecord&) = default;
};

struct LearningCurve {
  std::string tag;  // free-form, e.g. the target bundle
  QueryStrategy strategy = QueryStrategy::entropy;
  std::uint64_t seed = 0;
  std::vector<CurveRecord> records;

  const CurveRecord* at_iteration(std::size_t it) const;
  friend bool operator==(const LearningCurve&, const LearningCurve&) = default;
};

struct SimulationResult {
  LearningCurve curve;
  std::vector<std::size_t> final_tract;
  VoxelMask final_mask;
  std::string journal;
};

/// Full simulated session; dice against the reference mask after every round.
SimulationResult run_simulation_curve(std::shared_ptr<const Dataset> data, std::span<const Label> reference,
                                      SessionConfig cfg, QueryStrategy strategy, std::uint64_t seed,
                                      const VoxelGrid& grid,
                                      const std::function<void(const CurveRecord&)>& on_record = {});
LearningCurve run_curve(std::shared_ptr<const Dataset> data, std::span<const Label> reference,
                        const SessionConfig& cfg, QueryStrategy strategy, std::uint64_t seed);

struct ReportRow {
  std::string strategy;
  std::size_t iteration = 0;
  double mean_dice = 0.0;
  double std_dice = 0.0;
  std::size_t n_seeds = 0;
};

/// Mean and population std of dice at iterations 5, 10 and 20 per strategy.
std::vector<ReportRow> benchmark_report(std::span<const LearningCurve> curves,
                                        std::span<const std::size_t> iterations = {});
std::string report_csv(std::span<const ReportRow> rows);

/// One row per curve record: tag, strategy, seed, iteration, labeled, dice, raw_dice, tract_size.
std::string curves_csv(std::span<const LearningCurve> curves);

}  // namespace tractloop
