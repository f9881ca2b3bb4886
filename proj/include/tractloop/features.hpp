#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tractloop/geometry.hpp"

namespace tractloop {

/// Minimum average direct-flip distance between two equally sampled streamlines.
double mdf_distance(const ResampledStreamline& a, const ResampledStreamline& b);

/// Same min-over-flip construction restricted to the two endpoint pairs.
double endpoint_distance(const ResampledStreamline& a, const ResampledStreamline& b);

/// Every streamline of a tractogram resampled to m points, stored once as
/// float32 structure-of-arrays rows: [x_0..x_{m-1}, y_0.., z_0..].
class ResampledCache {
 public:
  ResampledCache() = default;
  ResampledCache(const Tractogram& t, std::size_t m);

  std::size_t size() const noexcept { return m_ == 0 ? 0 : data_.size() / (3 * m_); }
  std::size_t points_per_streamline() const noexcept { return m_; }
  std::span<const float> row(std::size_t id) const { return {data_.data() + id * 3 * m_, 3 * m_}; }
  ResampledStreamline streamline(std::size_t id) const;

 private:
  std::size_t m_ = 0;
  std::vector<float> data_;
};

/// A prototype keeps its own copy of the float32 geometry in both orientations
/// so the batched kernel only ever reads contiguous memory.
struct Prototype {
  std::size_t streamline_id = 0;
  std::vector<float> forward;
  std::vector<float> backward;

  static Prototype from_cache(const ResampledCache& cache, std::size_t id);
};

class PrototypeSet {
 public:
  static constexpr std::size_t default_adaptive_cap = 100;

  PrototypeSet() = default;
  PrototypeSet(std::vector<Prototype> initial, std::size_t adaptive_cap = default_adaptive_cap);

  std::span<const Prototype> initial() const noexcept { return {all_.data(), initial_count_}; }
  std::span<const Prototype> adaptive() const noexcept {
    return {all_.data() + initial_count_, all_.size() - initial_count_};
  }
  /// Initial prototypes followed by adaptive ones; this is the column order.
  std::span<const Prototype> all() const noexcept { return all_; }
  std::size_t size() const noexcept { return all_.size(); }
  std::size_t adaptive_cap() const noexcept { return adaptive_cap_; }
  std::size_t adaptive_room() const noexcept { return adaptive_cap_ - adaptive().size(); }
  bool contains(std::size_t streamline_id) const;

  /// Appends adaptive prototypes in order until the cap is reached and
  /// returns the ones actually added.
  std::vector<Prototype> add_adaptive(std::span<const std::size_t> ids, const ResampledCache& cache);

 private:
  std::vector<Prototype> all_;
  std::size_t initial_count_ = 0;
  std::size_t adaptive_cap_ = default_adaptive_cap;
};

/// n prototypes drawn uniformly at random without replacement.
PrototypeSet select_prototypes(const ResampledCache& cache, std::size_t n, std::uint64_t seed,
                               std::size_t adaptive_cap = PrototypeSet::default_adaptive_cap);

/// Dissimilarity features: one row per streamline; columns are d_MDF to every
/// prototype followed by d_END to every prototype, both in prototype order.
///
/// Storage is per column so new prototypes can be appended without moving
/// existing data; column() always follows the logical layout above.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(std::vector<std::size_t> row_ids) : row_ids_(std::move(row_ids)) {}

  std::size_t rows() const noexcept { return row_ids_.size(); }
  std::size_t prototype_count() const noexcept { return mdf_.size(); }
  std::size_t cols() const noexcept { return 2 * mdf_.size(); }
  std::span<const std::size_t> row_ids() const noexcept { return row_ids_; }

  std::span<const float> column(std::size_t col) const {
    return col < mdf_.size() ? std::span<const float>(mdf_[col])
                             : std::span<const float>(end_[col - mdf_.size()]);
  }
  float operator()(std::size_t row, std::size_t col) const { return column(col)[row]; }

  /// Row-major copy of one row in logical column order.
  std::vector<float> row(std::size_t r) const;

  /// Sub-matrix holding the given row positions, in that order.
  FeatureMatrix gather_rows(std::span<const std::size_t> positions) const;

  void append_prototype(std::vector<float> mdf_column, std::vector<float> end_column);

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::vector<std::size_t> row_ids_;
  std::vector<std::vector<float>> mdf_;
  std::vector<std::vector<float>> end_;
};

FeatureMatrix compute_features(std::span<const std::size_t> ids, const ResampledCache& cache,
                               std::span<const Prototype> prototypes);
inline FeatureMatrix compute_features(std::span<const std::size_t> ids, const ResampledCache& cache,
                                      const PrototypeSet& prototypes) {
  return compute_features(ids, cache, prototypes.all());
}

/// Extends `fm` in place with columns for `added`; rows of fm must be `cache` ids.
void append_prototype_columns(FeatureMatrix& fm, std::span<const Prototype> added,
                              const ResampledCache& cache);

/// Value-returning variant.
FeatureMatrix with_prototype_columns(FeatureMatrix fm, std::span<const Prototype> added,
                                     const ResampledCache& cache);

namespace kernel {

struct PairDistances {
  double mdf = 0.0;
  double end = 0.0;
};

/// Both distances between a SoA row (3*m floats) and a prototype.
PairDistances distances(std::span<const float> row, const Prototype& proto, std::size_t m);

}  // namespace kernel

}  // namespace tractloop
