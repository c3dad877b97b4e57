#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cstdint>
#include <span>
#include <vector>

#include "pfsel/errors.hpp"
#include "pfsel/labeling.hpp"
#include "pfsel/phase.hpp"
#include "pfsel/prefetcher_config.hpp"

namespace pfsel {

struct TreeNode {
  std::uint8_t slot = 0;     // index into feature_map, 0..3
  double threshold = 0.0;    // in scaled [0,1] space
};

// Complete binary tree of depth `depth`: 2^d - 1 internal nodes in
// breadth-first (heap) order, 2^d leaves left to right. Branches where
// training terminated early are padded with {slot 0, threshold 0} and the
// leaf mask replicated, so prediction always runs exactly `depth`
// comparisons.
struct DecisionTree {
  int depth = 0;
  std::array<std::uint8_t, 4> feature_map{};  // canonical feature IDs for slots 0..3
  std::vector<TreeNode> nodes;
  std::vector<PrefetcherConfig> leaves;

  static constexpr std::size_t internal_count(int depth) { return (std::size_t{1} << depth) - 1; }
  static constexpr std::size_t leaf_count(int depth) { return std::size_t{1} << depth; }
};

// The four mapped features' scaler parameters as they travel in the model
// container: 32-bit floats.
struct SlotScaler {
  std::array<float, 4> min{};
  std::array<float, 4> max{};

  double apply(int slot, double v) const {
    const double lo = min[slot], hi = max[slot];
    if (!(hi > lo)) return 0.0;
    return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  }

  static SlotScaler narrow(const Scaler& s, const std::array<std::uint8_t, 4>& fmap) {
    SlotScaler out;
    for (int j = 0; j < 4; ++j) {
      out.min[j] = static_cast<float>(s.min[fmap[j]]);
      out.max[j] = static_cast<float>(s.max[fmap[j]]);
    }
    return out;
  }

  friend bool operator==(const SlotScaler&, const SlotScaler&) = default;
};

namespace detail {

// Growth engine shared by training, feature importance, and the exhaustive
// subset search. Operates on pre-scaled column data; classes are valid-config
// indices.
struct CartNode {
  int left = -1, right = -1;  // -1 on both: leaf
  std::uint8_t slot = 0;
  double threshold = 0.0;
  int cls = 0;        // majority class at this node
  double decrease = 0;  // impurity decrease of the split, 0 for leaves
  std::size_t n = 0;
};

struct CartTree {
  std::vector<CartNode> nodes;  // node 0 is the root
};

inline double gini(const std::array<std::uint64_t, PrefetcherConfig::kValidCount>& counts,
                   std::uint64_t n) {
  double g = 1.0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(n);
    g -= p * p;
  }
  return g;
}

inline int majority_class(const std::array<std::uint64_t, PrefetcherConfig::kValidCount>& counts) {
  int best = 0;
  for (int c = 1; c < PrefetcherConfig::kValidCount; ++c)
    if (counts[c] > counts[best]) best = c;  // ties keep the lowest mask
  return best;
}

struct SplitChoice {
  bool found = false;
  int slot = -1;
  double threshold = 0;
  double decrease = 0;
};

// Candidate thresholds are midpoints of consecutive sorted distinct values.
// Best split by impurity decrease; ties resolved toward the lower slot, then
// the lower threshold (slots and thresholds are visited in ascending order).
inline SplitChoice best_split(const std::vector<std::vector<double>>& cols,
                              std::span<const int> labels, std::span<const int> idx,
                              double parent_gini) {
  const std::size_t n = idx.size();
  SplitChoice best;
  std::vector<std::pair<double, int>> vals(n);
  for (std::size_t slot = 0; slot < cols.size(); ++slot) {
    const auto& col = cols[slot];
    for (std::size_t i = 0; i < n; ++i) vals[i] = {col[idx[i]], labels[idx[i]]};
    std::sort(vals.begin(), vals.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::array<std::uint64_t, PrefetcherConfig::kValidCount> left_counts{};
    std::array<std::uint64_t, PrefetcherConfig::kValidCount> right_counts{};
    for (std::size_t i = 0; i < n; ++i) ++right_counts[vals[i].second];

    for (std::size_t i = 0; i + 1 < n; ++i) {
      ++left_counts[vals[i].second];
      --right_counts[vals[i].second];
      const double a = vals[i].first, b = vals[i + 1].first;
      if (!(a < b)) continue;
      double thr = (a + b) / 2.0;
      if (!(thr < b)) thr = a;  // midpoint rounded up to b would empty the right child
      const std::uint64_t nl = i + 1, nr = n - nl;
      const double child =
          (static_cast<double>(nl) * gini(left_counts, nl) + static_cast<double>(nr) * gini(right_counts, nr)) /
          static_cast<double>(n);
      const double dec = parent_gini - child;
      if (!best.found || dec > best.decrease) {
        best.found = true;
        best.slot = static_cast<int>(slot);
        best.threshold = thr;
        best.decrease = dec;
      }
    }
  }
  return best;
}

inline int grow_cart_node(CartTree& tree, const std::vector<std::vector<double>>& cols,
                          std::span<const int> labels, std::vector<int>& idx, int depth_left,
                          std::size_t min_leaf) {
  std::array<std::uint64_t, PrefetcherConfig::kValidCount> counts{};
  for (int i : idx) ++counts[labels[i]];
  const std::uint64_t n = idx.size();

  CartNode node;
  node.n = n;
  node.cls = majority_class(counts);
  const double parent_gini = gini(counts, n);

  const bool pure = counts[node.cls] == n;
  SplitChoice split;
  if (depth_left > 0 && !pure && n >= min_leaf)
    split = best_split(cols, labels, idx, parent_gini);

  const int self = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(node);
  if (!split.found) return self;

  std::vector<int> left_idx, right_idx;
  left_idx.reserve(idx.size());
  for (int i : idx)
    (cols[split.slot][i] <= split.threshold ? left_idx : right_idx).push_back(i);
  assert(!left_idx.empty() && !right_idx.empty());

  tree.nodes[self].slot = static_cast<std::uint8_t>(split.slot);
  tree.nodes[self].threshold = split.threshold;
  tree.nodes[self].decrease = split.decrease;
  const int l = grow_cart_node(tree, cols, labels, left_idx, depth_left - 1, min_leaf);
  const int r = grow_cart_node(tree, cols, labels, right_idx, depth_left - 1, min_leaf);
  tree.nodes[self].left = l;
  tree.nodes[self].right = r;
  return self;
}

inline CartTree grow_cart(const std::vector<std::vector<double>>& cols, std::span<const int> labels,
                          std::span<const int> idx, int depth_limit, std::size_t min_leaf) {
  CartTree tree;
  tree.nodes.reserve(2 * idx.size());
  std::vector<int> all(idx.begin(), idx.end());
  grow_cart_node(tree, cols, labels, all, depth_limit, min_leaf);
  return tree;
}

inline int cart_eval(const CartTree& tree, const auto& value_of_slot) {
  int i = 0;
  while (tree.nodes[i].left >= 0) {
    const auto& nd = tree.nodes[i];
    i = value_of_slot(nd.slot) <= nd.threshold ? nd.left : nd.right;
  }
  return tree.nodes[i].cls;
}

// Fills the complete-array form, replicating leaf masks below early leaves.
inline void fill_complete(const CartTree& cart, int ci, DecisionTree& out, std::size_t pos,
                          int level) {
  const auto& cn = cart.nodes[ci];
  const bool is_leaf = cn.left < 0;
  if (level == out.depth) {
    out.leaves[pos - DecisionTree::internal_count(out.depth)] =
        PrefetcherConfig::valid_set()[cn.cls];
    return;
  }
  if (is_leaf) {
    out.nodes[pos] = TreeNode{0, 0.0};
    fill_complete(cart, ci, out, 2 * pos + 1, level + 1);
    fill_complete(cart, ci, out, 2 * pos + 2, level + 1);
  } else {
    out.nodes[pos] = TreeNode{cn.slot, cn.threshold};
    fill_complete(cart, cn.left, out, 2 * pos + 1, level + 1);
    fill_complete(cart, cn.right, out, 2 * pos + 2, level + 1);
  }
}

inline std::vector<std::vector<double>> scaled_columns(const TrainingSet& ts, const Scaler& scaler,
                                                       std::span<const std::uint8_t> feature_ids) {
  std::vector<std::vector<double>> cols(feature_ids.size());
  for (auto& c : cols) c.resize(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i)
    for (std::size_t j = 0; j < feature_ids.size(); ++j)
      cols[j][i] = scaler.apply(feature_ids[j], ts.rows[i].x[feature_ids[j]]);
  return cols;
}

inline std::vector<int> class_labels(const TrainingSet& ts) {
  std::vector<int> labels(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int ci = PrefetcherConfig::valid_index(ts.rows[i].label);
    if (ci < 0) throw DataError("training set: label not in valid config set");
    labels[i] = ci;
  }
  return labels;
}

}  // namespace detail

// CART with Gini impurity over the four mapped features, grown to depth_limit
// and padded to a complete tree.
inline DecisionTree train_tree(const TrainingSet& ts, const Scaler& scaler,
                               const std::array<std::uint8_t, 4>& feature_map, int depth_limit,
                               std::size_t min_leaf = 1) {
  if (ts.empty()) throw DataError("train_tree: empty training set");
  if (depth_limit < 1 || depth_limit > 8) throw DataError("train_tree: depth_limit must be in 1..8");
  for (auto id : feature_map)
    if (id >= FeatureVector::kCount) throw DataError("train_tree: bad feature id in map");

  const auto cols = detail::scaled_columns(ts, scaler, feature_map);
  const auto labels = detail::class_labels(ts);
  std::vector<int> idx(ts.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  const auto cart = detail::grow_cart(cols, labels, idx, depth_limit, min_leaf);

  DecisionTree tree;
  tree.depth = depth_limit;
  tree.feature_map = feature_map;
  tree.nodes.resize(DecisionTree::internal_count(depth_limit));
  tree.leaves.resize(DecisionTree::leaf_count(depth_limit));
  detail::fill_complete(cart, 0, tree, 0, 0);
  return tree;
}

inline PrefetcherConfig predict(const DecisionTree& tree, const FeatureVector& x,
                                const Scaler& scaler) {
  std::size_t i = 0;
  for (int level = 0; level < tree.depth; ++level) {
    const TreeNode& nd = tree.nodes[i];
    const std::uint8_t fid = tree.feature_map[nd.slot];
    const double v = scaler.apply(fid, x[fid]);
    i = 2 * i + (v <= nd.threshold ? 1 : 2);
  }
  return tree.leaves[i - DecisionTree::internal_count(tree.depth)];
}

inline PrefetcherConfig predict(const DecisionTree& tree, const FeatureVector& x,
                                const SlotScaler& scaler) {
  std::size_t i = 0;
  for (int level = 0; level < tree.depth; ++level) {
    const TreeNode& nd = tree.nodes[i];
    const double v = scaler.apply(nd.slot, x[tree.feature_map[nd.slot]]);
    i = 2 * i + (v <= nd.threshold ? 1 : 2);
  }
  return tree.leaves[i - DecisionTree::internal_count(tree.depth)];
}

inline double training_accuracy(const DecisionTree& tree, const TrainingSet& ts,
                                const Scaler& scaler) {
  if (ts.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& row : ts.rows)
    if (predict(tree, row.x, scaler) == row.label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ts.size());
}

// Total Gini impurity decrease per canonical feature, from an unbounded-depth
// reference tree over all seven features.
inline std::array<double, FeatureVector::kCount> feature_importances(const TrainingSet& ts,
                                                                     const Scaler& scaler) {
  if (ts.empty()) throw DataError("feature_importances: empty training set");
  std::array<std::uint8_t, FeatureVector::kCount> all_ids{};
  for (std::uint8_t i = 0; i < FeatureVector::kCount; ++i) all_ids[i] = i;
  const auto cols = detail::scaled_columns(ts, scaler, all_ids);
  const auto labels = detail::class_labels(ts);
  std::vector<int> idx(ts.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  const auto cart = detail::grow_cart(cols, labels, idx, 64, 1);

  std::array<double, FeatureVector::kCount> imp{};
  const double total = static_cast<double>(ts.size());
  for (const auto& nd : cart.nodes)
    if (nd.left >= 0) imp[nd.slot] += (static_cast<double>(nd.n) / total) * nd.decrease;
  return imp;
}

enum class FeatureSelectMethod { kImportance, kExhaustive };

inline FeatureSelectMethod parse_select_method(std::string_view s) {
  if (s == "importance") return FeatureSelectMethod::kImportance;
  if (s == "exhaustive") return FeatureSelectMethod::kExhaustive;
  throw DataError("unknown feature selection method '" + std::string(s) + "'");
}

namespace detail {

// Mean accuracy of a depth-4 tree over deterministic round-robin 5-fold CV.
inline double subset_cv_accuracy(const TrainingSet& ts, const Scaler& scaler,
                                 const std::array<std::uint8_t, 4>& subset) {
  const auto cols = scaled_columns(ts, scaler, subset);
  const auto labels = class_labels(ts);
  const int n = static_cast<int>(ts.size());
  const int folds = std::min(5, n);
  double acc_sum = 0;
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train_idx, test_idx;
    for (int i = 0; i < n; ++i) (i % folds == f ? test_idx : train_idx).push_back(i);
    if (train_idx.empty() || test_idx.empty()) continue;
    const auto cart = grow_cart(cols, labels, train_idx, 4, 1);
    std::size_t hits = 0;
    for (int i : test_idx) {
      const int cls = cart_eval(cart, [&](int slot) { return cols[slot][i]; });
      if (cls == labels[i]) ++hits;
    }
    acc_sum += static_cast<double>(hits) / static_cast<double>(test_idx.size());
  }
  return acc_sum / folds;
}

}  // namespace detail

// Picks the four canonical feature IDs the runtime model will use.
// `importance`: rank by total Gini decrease of an unbounded reference tree,
// ties toward the lower ID. `exhaustive`: best of all 35 subsets by 5-fold
// cross-validated accuracy of a depth-4 tree, ties toward the
// lexicographically smallest subset. The result is sorted ascending.
inline std::array<std::uint8_t, 4> select_features(
    const TrainingSet& ts, const Scaler& scaler,
    FeatureSelectMethod method = FeatureSelectMethod::kImportance) {
  if (ts.empty()) throw DataError("select_features: empty training set");

  if (method == FeatureSelectMethod::kImportance) {
    const auto imp = feature_importances(ts, scaler);
    std::array<std::uint8_t, FeatureVector::kCount> order{};
    for (std::uint8_t i = 0; i < FeatureVector::kCount; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint8_t a, std::uint8_t b) { return imp[a] > imp[b]; });
    std::array<std::uint8_t, 4> pick{order[0], order[1], order[2], order[3]};
    std::sort(pick.begin(), pick.end());
    return pick;
  }

  std::array<std::uint8_t, 4> best{};
  double best_acc = -1;
  for (std::uint8_t a = 0; a < 7; ++a)
    for (std::uint8_t b = a + 1; b < 7; ++b)
      for (std::uint8_t c = b + 1; c < 7; ++c)
        for (std::uint8_t d = c + 1; d < 7; ++d) {
          const std::array<std::uint8_t, 4> subset{a, b, c, d};
          const double acc = detail::subset_cv_accuracy(ts, scaler, subset);
          if (acc > best_acc) {  // strict: ties keep the lexicographically smaller subset
            best_acc = acc;
            best = subset;
          }
        }
  return best;
}

}  // namespace pfsel
