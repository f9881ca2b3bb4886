#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tractloop/features.hpp"
#include "tractloop/label.hpp"

namespace tractloop::forest {

struct ForestParams {
  std::size_t trees = 100;
  std::size_t max_features = 0;  // 0: ceil(sqrt(feature_dim))
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  std::size_t max_depth = 0;  // 0: unlimited
  bool bootstrap = true;
  bool balanced_class_weights = true;
  bool compute_oob = false;

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // value <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::array<double, 2> weight{0.0, 0.0};  // weighted class counts {negative, positive}

  bool is_leaf() const noexcept { return feature < 0; }
  double positive_fraction() const noexcept { return weight[1] / (weight[0] + weight[1]); }
};

/// Flat node array; node 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf_for(std::span<const float> sample) const;
  std::size_t depth() const;
};

struct Prediction {
  std::vector<double> probability;  // positive class, in [0,1]

  std::size_t size() const noexcept { return probability.size(); }
  bool positive(std::size_t i) const { return probability[i] >= 0.5; }
};

/// Row-major dense training matrix.
struct Samples {
  std::size_t dim = 0;
  std::vector<float> values;
  std::vector<std::size_t> ids;  // identity of each row, defines bootstrap order
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return ids.size(); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }

  static Samples from_features(const FeatureMatrix& fm, std::span<const Label> labels);
};

class ForestModel {
 public:
  /// Trains `params.trees` CART trees on bootstrap resamples.
  static ForestModel fit(const Samples& samples, const ForestParams& params, std::uint64_t seed);
  static ForestModel fit(const FeatureMatrix& fm, std::span<const Label> labels,
                         const ForestParams& params, std::uint64_t seed) {
    return fit(Samples::from_features(fm, labels), params, seed);
  }

  Prediction predict_proba(const FeatureMatrix& fm) const;
  double predict_proba(std::span<const float> sample) const;

  std::size_t feature_dim() const noexcept { return feature_dim_; }
  std::span<const Tree> trees() const noexcept { return trees_; }
  const std::array<double, 2>& class_weights() const noexcept { return class_weights_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t samples_used() const noexcept { return samples_used_; }
  /// Out-of-bag accuracy; NaN unless params.compute_oob was set.
  double oob_accuracy() const noexcept { return oob_accuracy_; }

 private:
  std::vector<Tree> trees_;
  std::size_t feature_dim_ = 0;
  std::array<double, 2> class_weights_{1.0, 1.0};
  std::uint64_t seed_ = 0;
  std::size_t samples_used_ = 0;
  double oob_accuracy_ = 0.0;
};

/// Balanced class weights N / (2 * N_c). Throws NeedBothClasses if a class is absent.
std::array<double, 2> balanced_class_weights(std::span<const std::uint8_t> labels);
void require_both_classes(std::span<const Label> labels);

/// Gini impurity 1 - sum_c (w_c / W)^2 of weighted class counts.
double gini(const std::array<double, 2>& weights);

/// Weighted impurity W_left * gini(left) + W_right * gini(right) of splitting
/// the samples at `threshold` (value <= threshold goes left).
double split_impurity(std::span<const float> values, std::span<const std::uint8_t> labels,
                      std::span<const double> weights, double threshold);

}  // namespace tractloop::forest
