#include "tractloop/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "tractloop/error.hpp"
#include "tractloop/journal.hpp"
#include "tractloop/parallel.hpp"

namespace tractloop {

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::size_t VoxelMask::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

VoxelGrid default_grid(const Tractogram& t, double voxel_size, std::size_t padding_voxels) {
  if (!(voxel_size > 0.0)) throw InvalidArgument("voxel size must be positive");
  VoxelGrid g;
  g.voxel_size = {voxel_size, voxel_size, voxel_size};
  if (t.empty()) return g;
  Vec3 lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(), std::numeric_limits<double>::max()};
  Vec3 hi{std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest(),
          std::numeric_limits<double>::lowest()};
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (const auto& p : t.points(i)) {
      lo = {std::min(lo.x, double{p.x}), std::min(lo.y, double{p.y}), std::min(lo.z, double{p.z})};
      hi = {std::max(hi.x, double{p.x}), std::max(hi.y, double{p.y}), std::max(hi.z, double{p.z})};
    }
  }
  const double pad = static_cast<double>(padding_voxels) * voxel_size;
  g.origin = {lo.x - pad, lo.y - pad, lo.z - pad};
  const double extent[3] = {hi.x - lo.x, hi.y - lo.y, hi.z - lo.z};
  for (int a = 0; a < 3; ++a)
    g.dims[a] = static_cast<std::size_t>(std::floor(extent[a] / voxel_size)) + 1 + 2 * padding_voxels;
  return g;
}

VoxelMask voxelize(std::span<const std::size_t> ids, const Tractogram& t, const VoxelGrid& grid) {
  VoxelMask mask(grid);
  const double step = 0.5 * std::min({grid.voxel_size.x, grid.voxel_size.y, grid.voxel_size.z});
  std::uint8_t* data = mask.data.data();
  auto mark = [&](const Vec3& p, std::size_t id) {
    const double f[3] = {(p.x - grid.origin.x) / grid.voxel_size.x, (p.y - grid.origin.y) / grid.voxel_size.y,
                         (p.z - grid.origin.z) / grid.voxel_size.z};
    std::size_t idx[3];
    for (int a = 0; a < 3; ++a) {
      const double c = std::floor(f[a]);
      if (!(c >= 0.0 && c < static_cast<double>(grid.dims[a])))
        throw InvalidArgument("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " +
                              std::to_string(p.z) + ") of streamline " + std::to_string(id) +
                              " lies outside the voxel grid");
      idx[a] = static_cast<std::size_t>(c);
    }
    std::atomic_ref<std::uint8_t>(data[mask.index(idx[0], idx[1], idx[2])]).store(1, std::memory_order_relaxed);
  };
  parallel_for(ids.size(), 64, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const auto pts = t.points(ids[k]);
      Vec3 prev(pts[0]);
      mark(prev, ids[k]);
      for (std::size_t i = 1; i < pts.size(); ++i) {
        const Vec3 cur(pts[i]);
        const double len = distance(prev, cur);
        const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(len / step)));
        for (std::size_t s = 1; s <= steps; ++s)
          mark(prev + (cur - prev) * (static_cast<double>(s) / static_cast<double>(steps)), ids[k]);
        prev = cur;
      }
    }
  });
  return mask;
}

double dice(const VoxelMask& a, const VoxelMask& b) {
  if (!(a.grid == b.grid)) throw InvalidArgument("dice: masks are defined on different grids");
  if (a.data.size() != b.data.size()) throw InvalidArgument("dice: payload sizes differ");
  std::size_t na = 0;
  std::size_t nb = 0;
  std::size_t both = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool x = a.data[i] != 0;
    const bool y = b.data[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

const CurveRecord* LearningCurve::at_iteration(std::size_t it) const {
  for (const auto& r : records)
    if (r.iteration == it) return &r;
  return nullptr;
}

SimulationResult run_simulation_curve(std::shared_ptr<const Dataset> data, std::span<const Label> reference,
                                      SessionConfig cfg, QueryStrategy strategy, std::uint64_t seed,
                                      const VoxelGrid& grid,
                                      const std::function<void(const CurveRecord&)>& on_record) {
  cfg.strategy = strategy;
  cfg.seed = seed;
  const Tractogram& t = data->tractogram;
  const VoxelMask reference_mask = voxelize(positive_ids(reference), t, grid);

  SimulationResult result;
  result.curve.strategy = strategy;
  result.curve.seed = seed;

  Session session = Session::simulation(data, reference, cfg);
  OracleAnnotator oracle(reference, t.size());
  run_simulation(session, oracle, cfg.max_iterations, [&](const Session& s) {
    const auto tract = s.current_tract();
    CurveRecord r;
    r.iteration = s.iteration();
    r.labeled = s.labeled().size();
    r.dice = dice(voxelize(tract, t, grid), reference_mask);
    r.raw_dice = dice(voxelize(s.raw_prediction(), t, grid), reference_mask);
    r.tract_size = tract.size();
    result.curve.records.push_back(r);
    if (on_record) on_record(r);
  });
  result.final_tract = session.finalize();
  result.final_mask = voxelize(result.final_tract, t, grid);
  result.journal = session.journal().text();
  return result;
}

LearningCurve run_curve(std::shared_ptr<const Dataset> data, std::span<const Label> reference,
                        const SessionConfig& cfg, QueryStrategy strategy, std::uint64_t seed) {
  const VoxelGrid grid = default_grid(data->tractogram);
  return run_simulation_curve(std::move(data), reference, cfg, strategy, seed, grid).curve;
}

std::vector<ReportRow> benchmark_report(std::span<const LearningCurve> curves, std::span<const std::size_t> iterations) {
  if (curves.empty()) throw InvalidArgument("benchmark_report: no curves");
  static constexpr std::size_t kDefaultIterations[] = {5, 10, 20};
  if (iterations.empty()) iterations = kDefaultIterations;

  std::vector<QueryStrategy> order;
  for (const auto& c : curves)
    if (std::find(order.begin(), order.end(), c.strategy) == order.end()) order.push_back(c.strategy);

  std::vector<ReportRow> rows;
  for (auto strategy : order) {
    for (auto it : iterations) {
      std::vector<double> values;
      for (const auto& c : curves)
        if (c.strategy == strategy)
          if (const auto* r = c.at_iteration(it)) values.push_back(r->dice);
      if (values.empty()) continue;
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      double var = 0.0;
      for (double v : values) var += (v - mean) * (v - mean);
      var /= static_cast<double>(values.size());
      rows.push_back({to_string(strategy), it, mean, std::sqrt(var), values.size()});
    }
  }
  return rows;
}

std::string report_csv(std::span<const ReportRow> rows) {
  std::string out = "strategy,iteration,mean_dice,std_dice,n_seeds\n";
  for (const auto& r : rows)
    out += r.strategy + "," + std::to_string(r.iteration) + "," + fixed6(r.mean_dice) + "," + fixed6(r.std_dice) +
           "," + std::to_string(r.n_seeds) + "\n";
  return out;
}

std::string curves_csv(std::span<const LearningCurve> curves) {
  std::string out = "tag,strategy,seed,iteration,labeled,dice,raw_dice,tract_size\n";
  for (const auto& c : curves)
    for (const auto& r : c.records)
      out += c.tag + "," + to_string(c.strategy) + "," + std::to_string(c.seed) + "," + std::to_string(r.iteration) +
             "," + std::to_string(r.labeled) + "," + fixed6(r.dice) + "," + fixed6(r.raw_dice) + "," +
             std::to_string(r.tract_size) + "\n";
  return out;
}

}  // namespace tractloop
