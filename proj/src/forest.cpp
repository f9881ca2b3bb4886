#include "tractloop/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "tractloop/error.hpp"
#include "tractloop/parallel.hpp"
#include "tractloop/rng.hpp"

namespace tractloop::forest {

namespace {

// W * gini for weighted class counts; zero for an empty side.
double weighted_gini(double w0, double w1) {
  const double w = w0 + w1;
  return w > 0.0 ? w - (w0 * w0 + w1 * w1) / w : 0.0;
}

struct SplitCandidate {
  bool valid = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double impurity = std::numeric_limits<double>::infinity();
};

bool better(const SplitCandidate& c, const SplitCandidate& best) {
  if (!best.valid) return true;
  const double tol = 1e-12 * std::max(1.0, std::abs(best.impurity));
  if (c.impurity < best.impurity - tol) return true;
  if (c.impurity > best.impurity + tol) return false;
  if (c.feature != best.feature) return c.feature < best.feature;
  return c.threshold < best.threshold;
}

class TreeBuilder {
 public:
  TreeBuilder(const Samples& samples, std::span<const double> weights, const ForestParams& params,
              std::size_t max_features, Rng& rng)
      : samples_(samples), weights_(weights), params_(params), max_features_(max_features), rng_(rng) {}

  Tree build(std::vector<std::size_t> in_bag) {
    Tree tree;
    struct Pending {
      std::int32_t node;
      std::vector<std::size_t> members;
      std::size_t depth;
    };
    std::vector<Pending> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, std::move(in_bag), 0});
    while (!stack.empty()) {
      Pending job = std::move(stack.back());
      stack.pop_back();
      TreeNode& node = tree.nodes[static_cast<std::size_t>(job.node)];
      for (auto i : job.members) node.weight[samples_.labels[i]] += weights_[i];

      const bool pure = node.weight[0] == 0.0 || node.weight[1] == 0.0;
      const bool too_small = job.members.size() < std::max<std::size_t>(params_.min_samples_split, 2);
      const bool too_deep = params_.max_depth > 0 && job.depth >= params_.max_depth;
      if (pure || too_small || too_deep) continue;

      const SplitCandidate split = best_split(job.members);
      if (!split.valid) continue;

      std::vector<std::size_t> left;
      std::vector<std::size_t> right;
      for (auto i : job.members)
        (samples_.row(i)[split.feature] <= split.threshold ? left : right).push_back(i);

      const auto left_index = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      TreeNode& parent = tree.nodes[static_cast<std::size_t>(job.node)];
      parent.feature = static_cast<std::int32_t>(split.feature);
      parent.threshold = split.threshold;
      parent.left = left_index;
      parent.right = left_index + 1;
      stack.push_back({left_index + 1, std::move(right), job.depth + 1});
      stack.push_back({left_index, std::move(left), job.depth + 1});
    }
    return tree;
  }

 private:
  SplitCandidate best_split(const std::vector<std::size_t>& members) {
    const std::size_t dim = samples_.dim;
    std::vector<std::size_t> features(dim);
    std::iota(features.begin(), features.end(), 0);
    std::vector<std::pair<float, std::size_t>> sorted(members.size());
    SplitCandidate best;
    std::size_t evaluated = 0;
    // Partial Fisher-Yates: features are drawn one at a time until enough
    // non-constant ones have been evaluated.
    for (std::size_t k = 0; k < dim && evaluated < max_features_; ++k) {
      const std::size_t pick = k + rng_.below(dim - k);
      std::swap(features[k], features[pick]);
      const std::size_t f = features[k];

      for (std::size_t i = 0; i < members.size(); ++i) sorted[i] = {samples_.row(members[i])[f], members[i]};
      std::sort(sorted.begin(), sorted.end());
      if (sorted.front().first == sorted.back().first) continue;
      ++evaluated;

      double total[2] = {0.0, 0.0};
      for (const auto& [v, i] : sorted) total[samples_.labels[i]] += weights_[i];
      double left[2] = {0.0, 0.0};
      const std::size_t n = sorted.size();
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left[samples_.labels[sorted[i].second]] += weights_[sorted[i].second];
        if (sorted[i].first == sorted[i + 1].first) continue;
        if (i + 1 < params_.min_samples_leaf || n - i - 1 < params_.min_samples_leaf) continue;
        SplitCandidate c;
        c.valid = true;
        c.feature = f;
        c.threshold = 0.5 * (static_cast<double>(sorted[i].first) + static_cast<double>(sorted[i + 1].first));
        c.impurity = weighted_gini(left[0], left[1]) + weighted_gini(total[0] - left[0], total[1] - left[1]);
        if (better(c, best)) best = c;
      }
    }
    return best;
  }

  const Samples& samples_;
  std::span<const double> weights_;
  const ForestParams& params_;
  std::size_t max_features_;
  Rng& rng_;
};

}  // namespace

double gini(const std::array<double, 2>& weights) {
  const double w = weights[0] + weights[1];
  return w > 0.0 ? weighted_gini(weights[0], weights[1]) / w : 0.0;
}

double split_impurity(std::span<const float> values, std::span<const std::uint8_t> labels,
                      std::span<const double> weights, double threshold) {
  if (values.size() != labels.size() || values.size() != weights.size())
    throw InvalidArgument("split_impurity: length mismatch");
  double left[2] = {0.0, 0.0};
  double right[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < values.size(); ++i) (values[i] <= threshold ? left : right)[labels[i] ? 1 : 0] += weights[i];
  return weighted_gini(left[0], left[1]) + weighted_gini(right[0], right[1]);
}

std::array<double, 2> balanced_class_weights(std::span<const std::uint8_t> labels) {
  std::size_t positives = 0;
  for (auto l : labels) positives += l ? 1 : 0;
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw NeedBothClasses();
  const double n = static_cast<double>(labels.size());
  return {n / (2.0 * static_cast<double>(negatives)), n / (2.0 * static_cast<double>(positives))};
}

void require_both_classes(std::span<const Label> labels) {
  const std::size_t positives = count_positive(labels);
  if (positives == 0 || positives == labels.size()) throw NeedBothClasses();
}

const TreeNode& Tree::leaf_for(std::span<const float> sample) const {
  const TreeNode* node = &nodes.front();
  while (!node->is_leaf())
    node = &nodes[static_cast<std::size_t>(sample[static_cast<std::size_t>(node->feature)] <= node->threshold
                                                ? node->left
                                                : node->right)];
  return *node;
}

std::size_t Tree::depth() const {
  std::vector<std::size_t> depth(nodes.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, depth[i]);
    if (!nodes[i].is_leaf()) {
      depth[static_cast<std::size_t>(nodes[i].left)] = depth[i] + 1;
      depth[static_cast<std::size_t>(nodes[i].right)] = depth[i] + 1;
    }
  }
  return deepest;
}

Samples Samples::from_features(const FeatureMatrix& fm, std::span<const Label> labels) {
  if (labels.size() != fm.rows())
    throw InvalidArgument("label count " + std::to_string(labels.size()) + " does not match feature rows " +
                          std::to_string(fm.rows()));
  Samples s;
  s.dim = fm.cols();
  s.values.resize(fm.rows() * s.dim);
  for (std::size_t c = 0; c < s.dim; ++c) {
    const auto col = fm.column(c);
    for (std::size_t r = 0; r < fm.rows(); ++r) s.values[r * s.dim + c] = col[r];
  }
  for (std::size_t r = 0; r < fm.rows(); ++r) {
    if (labels[r].streamline_id != fm.row_ids()[r])
      throw InvalidArgument("label " + std::to_string(r) + " is for streamline " +
                            std::to_string(labels[r].streamline_id) + " but feature row is " +
                            std::to_string(fm.row_ids()[r]));
    s.ids.push_back(labels[r].streamline_id);
    s.labels.push_back(labels[r].positive ? 1 : 0);
  }
  return s;
}

ForestModel ForestModel::fit(const Samples& samples, const ForestParams& params, std::uint64_t seed) {
  const std::size_t n = samples.size();
  if (samples.dim == 0) throw InvalidArgument("fit: feature dimension is zero");
  if (samples.values.size() != n * samples.dim || samples.labels.size() != n)
    throw InvalidArgument("fit: inconsistent sample arrays");
  if (params.trees == 0) throw InvalidArgument("fit: need at least one tree");

  ForestModel model;
  model.feature_dim_ = samples.dim;
  model.seed_ = seed;
  model.samples_used_ = n;
  model.class_weights_ = balanced_class_weights(samples.labels);
  if (!params.balanced_class_weights) model.class_weights_ = {1.0, 1.0};

  // Bootstrap draws index samples in id order, so the model does not depend
  // on the order rows were supplied in.
  std::vector<std::size_t> canonical(n);
  std::iota(canonical.begin(), canonical.end(), 0);
  std::stable_sort(canonical.begin(), canonical.end(),
                   [&](std::size_t a, std::size_t b) { return samples.ids[a] < samples.ids[b]; });

  const std::size_t max_features =
      params.max_features > 0
          ? std::min(params.max_features, samples.dim)
          : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(samples.dim))));

  model.trees_.resize(params.trees);
  std::vector<std::vector<std::uint32_t>> in_bag_counts(params.compute_oob ? params.trees : 0);
  parallel_for(params.trees, 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      Rng rng(derive_seed(seed, t));
      std::vector<std::uint32_t> counts(n, params.bootstrap ? 0 : 1);
      if (params.bootstrap)
        for (std::size_t d = 0; d < n; ++d) ++counts[canonical[rng.below(n)]];
      std::vector<double> weights(n);
      std::vector<std::size_t> members;
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = canonical[k];
        weights[i] = counts[i] * model.class_weights_[samples.labels[i]];
        if (counts[i] > 0) members.push_back(i);
      }
      TreeBuilder builder(samples, weights, params, max_features, rng);
      model.trees_[t] = builder.build(std::move(members));
      if (params.compute_oob) in_bag_counts[t] = std::move(counts);
    }
  });

  model.oob_accuracy_ = std::numeric_limits<double>::quiet_NaN();
  if (params.compute_oob) {
    std::size_t scored = 0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      std::size_t votes = 0;
      for (std::size_t t = 0; t < params.trees; ++t) {
        if (in_bag_counts[t][i] != 0) continue;
        sum += model.trees_[t].leaf_for(samples.row(i)).positive_fraction();
        ++votes;
      }
      if (votes == 0) continue;
      ++scored;
      correct += ((sum / static_cast<double>(votes)) >= 0.5) == (samples.labels[i] != 0) ? 1 : 0;
    }
    if (scored > 0) model.oob_accuracy_ = static_cast<double>(correct) / static_cast<double>(scored);
  }
  return model;
}

double ForestModel::predict_proba(std::span<const float> sample) const {
  if (sample.size() != feature_dim_)
    throw InvalidArgument("feature dimension " + std::to_string(sample.size()) + " does not match model dimension " +
                          std::to_string(feature_dim_));
  double sum = 0.0;
  for (const auto& tree : trees_) sum += tree.leaf_for(sample).positive_fraction();
  return sum / static_cast<double>(trees_.size());
}

Prediction ForestModel::predict_proba(const FeatureMatrix& fm) const {
  if (fm.cols() != feature_dim_)
    throw InvalidArgument("feature dimension " + std::to_string(fm.cols()) + " does not match model dimension " +
                          std::to_string(feature_dim_));
  std::vector<const float*> columns(feature_dim_);
  for (std::size_t c = 0; c < feature_dim_; ++c) columns[c] = fm.column(c).data();

  Prediction out;
  out.probability.assign(fm.rows(), 0.0);
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (fm.rows() + kBlock - 1) / kBlock;
  const double tree_count = static_cast<double>(trees_.size());
  parallel_for(blocks, 8, [&](std::size_t first, std::size_t last) {
    for (std::size_t b = first; b < last; ++b) {
      const std::size_t begin = b * kBlock;
      const std::size_t end = std::min(fm.rows(), begin + kBlock);
      for (const auto& tree : trees_) {
        const TreeNode* nodes = tree.nodes.data();
        for (std::size_t r = begin; r < end; ++r) {
          const TreeNode* node = nodes;
          while (node->feature >= 0)
            node = nodes + (columns[static_cast<std::size_t>(node->feature)][r] <= node->threshold ? node->left
                                                                                                   : node->right);
          out.probability[r] += node->positive_fraction();
        }
      }
      for (std::size_t r = begin; r < end; ++r) out.probability[r] = std::clamp(out.probability[r] / tree_count, 0.0, 1.0);
    }
  });
  return out;
}

}  // namespace tractloop::forest
