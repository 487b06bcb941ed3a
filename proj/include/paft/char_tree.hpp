#ifndef PAFT_CHAR_TREE_HPP
#define PAFT_CHAR_TREE_HPP

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "paft/error.hpp"
#include "paft/numerics.hpp"
#include "paft/residual_dist.hpp"
#include "paft/trial_data.hpp"

namespace paft {

struct TreeConfig {
  std::size_t min_leaf = 20;
  int max_depth = 4;
  double cp = 0.01;  ///< a split must remove at least cp * root SS

  void check() const {
    if (min_leaf < 1) throw usage_error("min_leaf must be >= 1");
    if (max_depth < 1) throw usage_error("max_depth must be >= 1");
    if (!(cp >= 0.0)) throw usage_error("cp must be >= 0");
  }
};

struct TreeNode {
  bool leaf = true;
  std::size_t var = 0;    ///< internal: covariate index
  double threshold = 0.0; ///< internal: x[var] < threshold goes left
  std::size_t left = 0;
  std::size_t right = 0;
  int depth = 0;
  double mean = 0.0;
  double ss = 0.0;  ///< within-node sum of squares
  std::vector<std::size_t> members;
};

/// Nodes are stored parent before children; nodes[0] is the root.
struct RegressionTree {
  std::vector<TreeNode> nodes;
  std::size_t dim = 0;

  std::vector<std::size_t> leaves() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < nodes.size(); ++k)
      if (nodes[k].leaf) out.push_back(k);
    return out;
  }
  std::size_t leaf_of(std::span<const double> x) const {
    if (x.size() != dim) throw usage_error("feature vector length differs from tree dimension");
    std::size_t k = 0;
    while (!nodes[k].leaf) k = x[nodes[k].var] < nodes[k].threshold ? nodes[k].left : nodes[k].right;
    return k;
  }
};

namespace detail {

struct split_choice {
  bool found = false;
  std::size_t var = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

// Compensated, so repeated values average back to themselves.
inline double node_mean(std::span<const double> target, std::span<const std::size_t> members) {
  return compensated_sum(members, [&](std::size_t i) { return target[i]; }) / static_cast<double>(members.size());
}

inline double node_ss(std::span<const double> target, std::span<const std::size_t> members, double m) {
  double s = 0.0;
  for (std::size_t i : members) s += (target[i] - m) * (target[i] - m);
  return s;
}

// Best (covariate, midpoint) by SS reduction. Gains within 1e-12 of the
// best (relative to the node SS) count as ties; ties keep the lower covariate
// index, then the smaller threshold.
inline split_choice best_split(std::span<const std::vector<double>> features, std::span<const double> target,
                               const TreeNode& node, std::size_t dim, std::size_t min_leaf) {
  split_choice best;
  const std::size_t n = node.members.size();
  if (n < 2 * min_leaf || node.ss <= 0.0) return best;
  const double tie_tol = 1e-12 * node.ss;

  std::vector<std::size_t> idx(node.members);
  for (std::size_t v = 0; v < dim; ++v) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return features[a][v] < features[b][v]; });
    // Centered sums keep the SS differences accurate.
    double sum_l = 0.0;
    double sq_l = 0.0;
    double sum_all = 0.0;
    double sq_all = 0.0;
    for (std::size_t i : idx) {
      const double c = target[i] - node.mean;
      sum_all += c;
      sq_all += c * c;
    }
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double c = target[idx[k]] - node.mean;
      sum_l += c;
      sq_l += c * c;
      const std::size_t nl = k + 1;
      const std::size_t nr = n - nl;
      const double xl = features[idx[k]][v];
      const double xr = features[idx[k + 1]][v];
      if (!(xl < xr) || nl < min_leaf || nr < min_leaf) continue;
      const double ss_l = sq_l - sum_l * sum_l / static_cast<double>(nl);
      const double sum_r = sum_all - sum_l;
      const double ss_r = (sq_all - sq_l) - sum_r * sum_r / static_cast<double>(nr);
      const double gain = node.ss - ss_l - ss_r;
      if (!best.found || gain > best.gain + tie_tol) {
        best = {true, v, 0.5 * (xl + xr), gain};
      }
    }
  }
  return best;
}

}  // namespace detail

/// Greedy CART regression tree. Candidate thresholds are midpoints between
/// consecutive distinct values; a split is kept when both children have at
/// least min_leaf members and it removes at least cp * root SS (and more than
/// nothing). Nodes at max_depth are leaves.
inline RegressionTree fit_regression_tree(std::span<const std::vector<double>> features, std::span<const double> target,
                                          const TreeConfig& cfg = {}) {
  cfg.check();
  const std::size_t n = target.size();
  if (features.size() != n) throw usage_error("feature rows differ from target length");
  if (n < 2 * cfg.min_leaf) throw usage_error("tree needs at least 2 * min_leaf rows");
  RegressionTree tree;
  tree.dim = features.front().size();
  for (const auto& row : features)
    if (row.size() != tree.dim) throw usage_error("ragged feature matrix");

  TreeNode root;
  root.members.resize(n);
  std::iota(root.members.begin(), root.members.end(), 0);
  root.mean = detail::node_mean(target, root.members);
  root.ss = detail::node_ss(target, root.members, root.mean);
  const double min_gain = cfg.cp * root.ss;
  tree.nodes.push_back(std::move(root));

  // Breadth-first by index; children are appended behind their parent.
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    if (tree.nodes[k].depth >= cfg.max_depth) continue;
    const auto sp = detail::best_split(features, target, tree.nodes[k], tree.dim, cfg.min_leaf);
    if (!sp.found || !(sp.gain > 0.0) || sp.gain < min_gain) continue;

    TreeNode left;
    TreeNode right;
    for (std::size_t i : tree.nodes[k].members) (features[i][sp.var] < sp.threshold ? left : right).members.push_back(i);
    for (TreeNode* c : {&left, &right}) {
      c->depth = tree.nodes[k].depth + 1;
      c->mean = detail::node_mean(target, c->members);
      c->ss = detail::node_ss(target, c->members, c->mean);
    }
    auto& parent = tree.nodes[k];
    parent.leaf = false;
    parent.var = sp.var;
    parent.threshold = sp.threshold;
    parent.left = tree.nodes.size();
    parent.right = tree.nodes.size() + 1;
    tree.nodes.push_back(std::move(left));
    tree.nodes.push_back(std::move(right));
  }
  return tree;
}

inline double predict(const RegressionTree& tree, std::span<const double> x) { return tree.nodes[tree.leaf_of(x)].mean; }

struct LeafSummary {
  std::string label;  ///< A, B, ... in order of increasing mean
  std::size_t node = 0;
  std::size_t n = 0;
  std::size_t events = 0;
  double mean = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// One row per leaf ordered by leaf mean ascending (ties by node index).
/// Quartiles use linear interpolation between order statistics (type 7).
inline std::vector<LeafSummary> summarize_leaves(const RegressionTree& tree, const TrialDataset& ds,
                                                 std::span<const BenefitScore> scores) {
  if (scores.size() != ds.size()) throw usage_error("scores not aligned with dataset rows");
  std::vector<std::size_t> leaves = tree.leaves();
  std::stable_sort(leaves.begin(), leaves.end(),
                   [&](std::size_t a, std::size_t b) { return tree.nodes[a].mean < tree.nodes[b].mean; });
  std::vector<LeafSummary> rows;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const auto& node = tree.nodes[leaves[k]];
    LeafSummary r;
    r.label = k < 26 ? std::string(1, static_cast<char>('A' + k)) : "L" + std::to_string(k + 1);
    r.node = leaves[k];
    r.n = node.members.size();
    r.mean = node.mean;
    std::vector<double> p;
    p.reserve(r.n);
    for (std::size_t i : node.members) {
      if (i >= ds.size()) throw usage_error("tree member index outside dataset");
      p.push_back(scores[i].p_hat);
      r.events += static_cast<std::size_t>(ds.records[i].delta);
    }
    std::sort(p.begin(), p.end());
    r.min = p.front();
    r.q1 = quantile_sorted(p, 0.25);
    r.median = quantile_sorted(p, 0.5);
    r.q3 = quantile_sorted(p, 0.75);
    r.max = p.back();
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Tree on p_hat with the dataset's covariates as features.
inline RegressionTree fit_benefit_tree(const TrialDataset& ds, std::span<const BenefitScore> scores,
                                       const TreeConfig& cfg = {}) {
  if (scores.size() != ds.size()) throw usage_error("scores not aligned with dataset rows");
  if (ds.dim() == 0) throw usage_error("characterization needs at least one covariate");
  std::vector<std::vector<double>> features;
  std::vector<double> target;
  features.reserve(ds.size());
  target.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    features.push_back(ds.records[i].x);
    target.push_back(scores[i].p_hat);
  }
  return fit_regression_tree(features, target, cfg);
}

}  // namespace paft

#endif  // PAFT_CHAR_TREE_HPP
