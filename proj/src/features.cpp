#include "tractloop/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tractloop/error.hpp"
#include "tractloop/parallel.hpp"

namespace tractloop {

namespace {

void require_same_size(const ResampledStreamline& a, const ResampledStreamline& b) {
  if (a.size() != b.size())
    throw InvalidArgument("mismatched point counts: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  if (a.size() < 2) throw InvalidArgument("streamlines need at least 2 points");
}

constexpr std::size_t kRowGrain = 256;

}  // namespace

double mdf_distance(const ResampledStreamline& a, const ResampledStreamline& b) {
  require_same_size(a, b);
  const std::size_t m = a.size();
  double direct = 0.0;
  double flipped = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    direct += distance(a.points[i], b.points[i]);
    flipped += distance(a.points[i], b.points[m - 1 - i]);
  }
  return std::min(direct, flipped) / static_cast<double>(m);
}

double endpoint_distance(const ResampledStreamline& a, const ResampledStreamline& b) {
  require_same_size(a, b);
  const auto& a0 = a.points.front();
  const auto& a1 = a.points.back();
  const auto& b0 = b.points.front();
  const auto& b1 = b.points.back();
  const double direct = distance(a0, b0) + distance(a1, b1);
  const double flipped = distance(a0, b1) + distance(a1, b0);
  return 0.5 * std::min(direct, flipped);
}

// ---------------------------------------------------------------- cache

ResampledCache::ResampledCache(const Tractogram& t, std::size_t m) : m_(m), data_(t.size() * 3 * m) {
  if (m < 2) throw InvalidArgument("resampling needs m >= 2");
  parallel_for(t.size(), 1024, [&](std::size_t begin, std::size_t end) {
    for (std::size_t id = begin; id < end; ++id) {
      const ResampledStreamline r = resample(t.points(id), m);
      float* row = data_.data() + id * 3 * m;
      for (std::size_t i = 0; i < m; ++i) {
        row[i] = static_cast<float>(r.points[i].x);
        row[m + i] = static_cast<float>(r.points[i].y);
        row[2 * m + i] = static_cast<float>(r.points[i].z);
      }
    }
  });
}

ResampledStreamline ResampledCache::streamline(std::size_t id) const {
  if (id >= size()) throw InvalidArgument("streamline id " + std::to_string(id) + " out of range");
  const auto r = row(id);
  ResampledStreamline out;
  out.points.reserve(m_);
  for (std::size_t i = 0; i < m_; ++i) out.points.emplace_back(r[i], r[m_ + i], r[2 * m_ + i]);
  return out;
}

// ---------------------------------------------------------------- prototypes

Prototype Prototype::from_cache(const ResampledCache& cache, std::size_t id) {
  if (id >= cache.size()) throw InvalidArgument("prototype id " + std::to_string(id) + " out of range");
  const std::size_t m = cache.points_per_streamline();
  const auto row = cache.row(id);
  Prototype p;
  p.streamline_id = id;
  p.forward.assign(row.begin(), row.end());
  p.backward.resize(row.size());
  for (std::size_t axis = 0; axis < 3; ++axis)
    for (std::size_t i = 0; i < m; ++i) p.backward[axis * m + i] = row[axis * m + (m - 1 - i)];
  return p;
}

PrototypeSet::PrototypeSet(std::vector<Prototype> initial, std::size_t adaptive_cap)
    : all_(std::move(initial)), initial_count_(all_.size()), adaptive_cap_(adaptive_cap) {}

bool PrototypeSet::contains(std::size_t streamline_id) const {
  return std::any_of(all_.begin(), all_.end(), [&](const Prototype& p) { return p.streamline_id == streamline_id; });
}

std::vector<Prototype> PrototypeSet::add_adaptive(std::span<const std::size_t> ids, const ResampledCache& cache) {
  std::vector<Prototype> added;
  for (auto id : ids) {
    if (adaptive_room() == 0) break;
    all_.push_back(Prototype::from_cache(cache, id));
    added.push_back(all_.back());
  }
  return added;
}

PrototypeSet select_prototypes(const ResampledCache& cache, std::size_t n, std::uint64_t seed,
                               std::size_t adaptive_cap) {
  if (cache.size() < n)
    throw InvalidArgument("cannot select " + std::to_string(n) + " prototypes from " + std::to_string(cache.size()) +
                          " streamlines");
  std::vector<Prototype> protos;
  protos.reserve(n);
  for (auto id : random_subsample(cache.size(), n, seed)) protos.push_back(Prototype::from_cache(cache, id));
  return PrototypeSet(std::move(protos), adaptive_cap);
}

// ---------------------------------------------------------------- kernel

namespace kernel {

PairDistances distances(std::span<const float> row, const Prototype& proto, std::size_t m) {
  const float* ax = row.data();
  const float* ay = ax + m;
  const float* az = ay + m;
  const float* fx = proto.forward.data();
  const float* fy = fx + m;
  const float* fz = fy + m;
  const float* bx = proto.backward.data();
  const float* by = bx + m;
  const float* bz = by + m;

  constexpr std::size_t kChunk = 64;
  float direct_terms[kChunk];
  float flip_terms[kChunk];
  double direct = 0.0;
  double flipped = 0.0;
  for (std::size_t base = 0; base < m; base += kChunk) {
    const std::size_t n = std::min(kChunk, m - base);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = base + i;
      const float dx = ax[k] - fx[k];
      const float dy = ay[k] - fy[k];
      const float dz = az[k] - fz[k];
      direct_terms[i] = std::sqrt(dx * dx + dy * dy + dz * dz);
      const float ex = ax[k] - bx[k];
      const float ey = ay[k] - by[k];
      const float ez = az[k] - bz[k];
      flip_terms[i] = std::sqrt(ex * ex + ey * ey + ez * ez);
    }
    for (std::size_t i = 0; i < n; ++i) {
      direct += direct_terms[i];
      flipped += flip_terms[i];
    }
  }

  auto dist = [](float x0, float y0, float z0, float x1, float y1, float z1) {
    const float dx = x0 - x1;
    const float dy = y0 - y1;
    const float dz = z0 - z1;
    return static_cast<double>(std::sqrt(dx * dx + dy * dy + dz * dz));
  };
  const std::size_t last = m - 1;
  const double end_direct = dist(ax[0], ay[0], az[0], fx[0], fy[0], fz[0]) +
                            dist(ax[last], ay[last], az[last], fx[last], fy[last], fz[last]);
  const double end_flipped = dist(ax[0], ay[0], az[0], fx[last], fy[last], fz[last]) +
                             dist(ax[last], ay[last], az[last], fx[0], fy[0], fz[0]);

  return {std::min(direct, flipped) / static_cast<double>(m), 0.5 * std::min(end_direct, end_flipped)};
}

}  // namespace kernel

// ---------------------------------------------------------------- matrix

std::vector<float> FeatureMatrix::row(std::size_t r) const {
  std::vector<float> out;
  out.reserve(cols());
  for (const auto& c : mdf_) out.push_back(c[r]);
  for (const auto& c : end_) out.push_back(c[r]);
  return out;
}

FeatureMatrix FeatureMatrix::gather_rows(std::span<const std::size_t> positions) const {
  std::vector<std::size_t> ids;
  ids.reserve(positions.size());
  for (auto p : positions) {
    if (p >= rows()) throw InvalidArgument("row position " + std::to_string(p) + " out of range");
    ids.push_back(row_ids_[p]);
  }
  FeatureMatrix out(std::move(ids));
  auto gather = [&](const std::vector<float>& column) {
    std::vector<float> g;
    g.reserve(positions.size());
    for (auto p : positions) g.push_back(column[p]);
    return g;
  };
  for (std::size_t j = 0; j < mdf_.size(); ++j) out.append_prototype(gather(mdf_[j]), gather(end_[j]));
  return out;
}

void FeatureMatrix::append_prototype(std::vector<float> mdf_column, std::vector<float> end_column) {
  if (mdf_column.size() != rows() || end_column.size() != rows())
    throw InvalidArgument("feature column length does not match row count");
  mdf_.push_back(std::move(mdf_column));
  end_.push_back(std::move(end_column));
}

namespace {

void fill_columns(std::span<const std::size_t> ids, const ResampledCache& cache, std::span<const Prototype> protos,
                  std::vector<std::vector<float>>& mdf, std::vector<std::vector<float>>& end) {
  const std::size_t m = cache.points_per_streamline();
  for (const auto& p : protos)
    if (p.forward.size() != 3 * m) throw InvalidArgument("prototype resampled with a different point count");
  for (auto id : ids)
    if (id >= cache.size()) throw InvalidArgument("streamline id " + std::to_string(id) + " out of range");
  mdf.assign(protos.size(), std::vector<float>(ids.size()));
  end.assign(protos.size(), std::vector<float>(ids.size()));
  parallel_for(ids.size(), kRowGrain, [&](std::size_t begin, std::size_t stop) {
    for (std::size_t r = begin; r < stop; ++r) {
      const auto row = cache.row(ids[r]);
      for (std::size_t j = 0; j < protos.size(); ++j) {
        const auto d = kernel::distances(row, protos[j], m);
        mdf[j][r] = static_cast<float>(d.mdf);
        end[j][r] = static_cast<float>(d.end);
      }
    }
  });
}

}  // namespace

FeatureMatrix compute_features(std::span<const std::size_t> ids, const ResampledCache& cache,
                               std::span<const Prototype> prototypes) {
  FeatureMatrix fm(std::vector<std::size_t>(ids.begin(), ids.end()));
  append_prototype_columns(fm, prototypes, cache);
  return fm;
}

void append_prototype_columns(FeatureMatrix& fm, std::span<const Prototype> added, const ResampledCache& cache) {
  if (added.empty()) return;
  std::vector<std::vector<float>> mdf;
  std::vector<std::vector<float>> end;
  fill_columns(fm.row_ids(), cache, added, mdf, end);
  for (std::size_t j = 0; j < added.size(); ++j) fm.append_prototype(std::move(mdf[j]), std::move(end[j]));
}

FeatureMatrix with_prototype_columns(FeatureMatrix fm, std::span<const Prototype> added, const ResampledCache& cache) {
  append_prototype_columns(fm, added, cache);
  return fm;
}

}  // namespace tractloop
