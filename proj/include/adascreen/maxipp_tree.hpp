#pragma once

// Regression trees over item responses, grown greedily on squared error under
// a maxIPP (distinct items per root-to-leaf path) or maxDepth constraint,
// pruned along the weakest-link subtree sequence by a holdout-RMSE plateau
// rule, and serialized as `adaptive-test/v1` deployment documents.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "adascreen/code_matrix.hpp"
#include "adascreen/error.hpp"
#include "adascreen/hash.hpp"
#include "adascreen/item_model.hpp"

namespace adascreen {

enum class ConstraintKind { MaxIpp, MaxDepth };

struct Constraint {
  ConstraintKind kind = ConstraintKind::MaxIpp;
  std::size_t value = 0;  // 0 means unconstrained

  static Constraint max_ipp(std::size_t m) { return {ConstraintKind::MaxIpp, m}; }
  static Constraint max_depth(std::size_t d) { return {ConstraintKind::MaxDepth, d}; }
  static Constraint none() { return {ConstraintKind::MaxIpp, 0}; }

  std::string kind_name() const { return kind == ConstraintKind::MaxIpp ? "maxIPP" : "maxDepth"; }
  friend bool operator==(const Constraint&, const Constraint&) = default;
};

struct TreeNode {
  int item = -1;  // column index into RegressionTree::item_ids; -1 for a leaf
  double cutpoint = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // mean target of the training rows reaching this node
  std::size_t count = 0;
  double sse = 0.0;

  bool is_leaf() const { return item < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // preorder; nodes[0] is the root
  std::vector<std::string> item_ids;
  Constraint constraint;
  std::string training_hash;
  std::uint64_t seed = 0;

  std::size_t leaf_index(const auto& x) const {
    std::size_t v = 0;
    while (!nodes[v].is_leaf()) {
      const auto& n = nodes[v];
      v = static_cast<std::size_t>(static_cast<double>(x[static_cast<std::size_t>(n.item)]) <= n.cutpoint ? n.left
                                                                                                            : n.right);
    }
    return v;
  }

  double predict(const auto& x) const { return nodes[leaf_index(x)].value; }

  std::size_t num_leaves() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.is_leaf(); }));
  }
  std::size_t num_internal() const { return nodes.size() - num_leaves(); }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

template <class Row>
double predict(const RegressionTree& tree, const Row& x) {
  return tree.predict(x);
}

/// Prediction from a response map keyed by item id; throws MissingItem if a
/// split item on the routed path is absent.
inline double predict(const RegressionTree& tree, const std::map<std::string, int>& responses) {
  std::size_t v = 0;
  while (!tree.nodes[v].is_leaf()) {
    const auto& n = tree.nodes[v];
    const auto& id = tree.item_ids[static_cast<std::size_t>(n.item)];
    auto it = responses.find(id);
    require(it != responses.end(), ErrorCode::MissingItem, "no response for item '" + id + "'");
    v = static_cast<std::size_t>(it->second <= n.cutpoint ? n.left : n.right);
  }
  return tree.nodes[v].value;
}

/// Longest root-to-leaf path, counted in splits.
inline std::size_t depth(const RegressionTree& tree) {
  std::size_t best = 0;
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [v, d] = stack.back();
    stack.pop_back();
    const auto& n = tree.nodes[static_cast<std::size_t>(v)];
    if (n.is_leaf()) {
      best = std::max(best, d);
    } else {
      stack.emplace_back(n.left, d + 1);
      stack.emplace_back(n.right, d + 1);
    }
  }
  return best;
}

/// maxIPP statistic: the most distinct items on any root-to-leaf path.
inline std::size_t unique_items_per_path(const RegressionTree& tree) {
  std::size_t best = 0;
  std::vector<int> path;
  std::function<void(int)> visit = [&](int v) {
    const auto& n = tree.nodes[static_cast<std::size_t>(v)];
    if (n.is_leaf()) {
      std::set<int> distinct(path.begin(), path.end());
      best = std::max(best, distinct.size());
      return;
    }
    path.push_back(n.item);
    visit(n.left);
    visit(n.right);
    path.pop_back();
  };
  if (!tree.nodes.empty()) visit(0);
  return best;
}

// ---- growth ----------------------------------------------------------------

struct GrowConfig {
  Constraint constraint;
  std::size_t min_node = 25;
  std::uint64_t seed = 0;  // recorded only; growth is deterministic
};

/// Nested subtrees of a fully grown tree. Element s keeps exactly the internal
/// nodes v with split_index[v] <= s; element 0 is the root alone and the last
/// element is the full tree.
struct SubtreeSequence {
  RegressionTree full;
  std::vector<std::size_t> split_index;  // per node of `full`; unused for leaves
  std::size_t steps = 0;                 // number of elements minus one

  std::size_t size() const { return steps + 1; }

  bool internal_in(std::size_t v, std::size_t s) const {
    return !full.nodes[v].is_leaf() && split_index[v] <= s;
  }

  RegressionTree subtree(std::size_t s) const {
    require(s <= steps, ErrorCode::InvalidArgument, "subtree index out of range");
    RegressionTree out = full;
    out.nodes.clear();
    std::function<int(std::size_t)> copy = [&](std::size_t v) -> int {
      const int idx = static_cast<int>(out.nodes.size());
      TreeNode n = full.nodes[v];
      if (!internal_in(v, s)) {
        n.item = -1;
        n.cutpoint = 0.0;
        n.left = n.right = -1;
        out.nodes.push_back(n);
        return idx;
      }
      out.nodes.push_back(n);
      const int l = copy(static_cast<std::size_t>(full.nodes[v].left));
      const int r = copy(static_cast<std::size_t>(full.nodes[v].right));
      out.nodes[static_cast<std::size_t>(idx)].left = l;
      out.nodes[static_cast<std::size_t>(idx)].right = r;
      return idx;
    };
    copy(0);
    return out;
  }
};

namespace detail {

struct GrowState {
  const CodeMatrix& x;
  std::span<const double> target;
  std::size_t num_items;
  std::vector<std::vector<int>> levels;       // observed codes per item, ascending
  std::vector<std::vector<std::uint8_t>> level_of;  // per item, per row: index into levels
  std::size_t min_node;
  std::size_t max_ipp;    // 0 = no item restriction
  std::size_t max_depth;  // hard cap
};

struct SplitChoice {
  int item = -1;
  std::size_t level = 0;  // left = levels[0..level]
  double gain = 0.0;
};

inline bool better_gain(double gain, double best) {
  return gain > best + 1e-12 * std::max(1.0, std::abs(best));
}

inline SplitChoice best_split(const GrowState& st, std::span<const std::size_t> rows, const std::vector<int>& candidates) {
  SplitChoice best;
  double total = 0.0;
  for (auto r : rows) total += st.target[r];
  const double n = static_cast<double>(rows.size());
  const double parent_term = total * total / n;
  std::vector<double> sum;
  std::vector<std::size_t> cnt;
  for (int item : candidates) {
    const auto& lv = st.levels[static_cast<std::size_t>(item)];
    const auto& idx = st.level_of[static_cast<std::size_t>(item)];
    sum.assign(lv.size(), 0.0);
    cnt.assign(lv.size(), 0);
    for (auto r : rows) {
      sum[idx[r]] += st.target[r];
      ++cnt[idx[r]];
    }
    double s_left = 0.0;
    std::size_t n_left = 0;
    for (std::size_t l = 0; l + 1 < lv.size(); ++l) {
      s_left += sum[l];
      n_left += cnt[l];
      const std::size_t n_right = rows.size() - n_left;
      if (n_left < st.min_node || n_right < st.min_node) continue;
      if (cnt[l] == 0) continue;  // same partition as an earlier cut
      const double s_right = total - s_left;
      const double gain = s_left * s_left / static_cast<double>(n_left) +
                          s_right * s_right / static_cast<double>(n_right) - parent_term;
      if (best.item < 0 ? gain > 1e-12 * std::max(1.0, parent_term) : better_gain(gain, best.gain)) {
        best = {item, l, gain};
      }
    }
  }
  return best;
}

inline TreeNode make_node(const GrowState& st, std::span<const std::size_t> rows) {
  TreeNode n;
  n.count = rows.size();
  double s = 0.0;
  for (auto r : rows) s += st.target[r];
  n.value = s / static_cast<double>(rows.size());
  double sse = 0.0;
  for (auto r : rows) sse += (st.target[r] - n.value) * (st.target[r] - n.value);
  n.sse = sse;
  return n;
}

}  // namespace detail

/// Greedy squared-error growth to the stopping rules, followed by weakest-link
/// cost-complexity ordering of the internal nodes.
inline SubtreeSequence grow(const CodeMatrix& x, std::span<const double> target,
                            const std::vector<std::string>& item_ids, const GrowConfig& cfg) {
  const std::size_t n = x.rows();
  const std::size_t p = item_ids.size();
  require(n > 0, ErrorCode::EmptyData, "cannot grow a tree on empty data");
  require(target.size() == n, ErrorCode::InvalidArgument, "targets and rows disagree in length");
  require(p >= 1 && p <= x.cols(), ErrorCode::InvalidArgument, "item ids do not match data columns");
  require(cfg.min_node >= 1, ErrorCode::InvalidConfig, "min_node must be at least 1");
  require(n >= 2 && cfg.min_node < n, ErrorCode::InsufficientData,
          "need more than min_node rows (" + std::to_string(cfg.min_node) + "), got " + std::to_string(n));
  for (double t : target)
    require(t >= 0.0 && t <= 1.0, ErrorCode::InvalidArgument, "targets must lie in [0, 1]");

  detail::GrowState st{x, target, p, {}, {}, cfg.min_node, 0, 0};
  std::size_t max_levels = 2;
  for (std::size_t c = 0; c < p; ++c) {
    auto col = x.column(c);
    std::vector<int> lv(col.begin(), col.end());
    std::sort(lv.begin(), lv.end());
    lv.erase(std::unique(lv.begin(), lv.end()), lv.end());
    require(lv.size() <= 255, ErrorCode::InvalidArgument, "too many distinct codes in item '" + item_ids[c] + "'");
    std::vector<std::uint8_t> idx(n);
    for (std::size_t r = 0; r < n; ++r)
      idx[r] = static_cast<std::uint8_t>(std::lower_bound(lv.begin(), lv.end(), col[r]) - lv.begin());
    max_levels = std::max(max_levels, lv.size());
    st.levels.push_back(std::move(lv));
    st.level_of.push_back(std::move(idx));
  }
  const auto& cons = cfg.constraint;
  if (cons.kind == ConstraintKind::MaxIpp) {
    st.max_ipp = cons.value == 0 ? p : std::min(cons.value, p);
    st.max_depth = 2 * st.max_ipp * max_levels;
  } else {
    st.max_ipp = p;
    st.max_depth = cons.value == 0 ? 2 * p * max_levels : cons.value;
  }

  SubtreeSequence seq;
  auto& tree = seq.full;
  tree.item_ids = item_ids;
  tree.constraint = cons;
  tree.seed = cfg.seed;

  std::vector<int> every_item(p);
  for (std::size_t c = 0; c < p; ++c) every_item[c] = static_cast<int>(c);

  // Preorder: a node is appended before its left subtree, which precedes its right subtree.
  std::function<int(std::vector<std::size_t>, const std::vector<int>&, std::size_t)> build =
      [&](std::vector<std::size_t> rows, const std::vector<int>& path_items, std::size_t d) -> int {
    const int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(detail::make_node(st, rows));
    if (d >= st.max_depth || rows.size() < 2 * st.min_node) return idx;
    const auto& candidates = path_items.size() >= st.max_ipp ? path_items : every_item;
    const auto choice = detail::best_split(st, rows, candidates);
    if (choice.item < 0) return idx;

    const auto item = static_cast<std::size_t>(choice.item);
    std::vector<std::size_t> left, right;
    for (auto r : rows) (st.level_of[item][r] <= choice.level ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    std::vector<int> items = path_items;
    if (!std::binary_search(items.begin(), items.end(), choice.item))
      items.insert(std::upper_bound(items.begin(), items.end(), choice.item), choice.item);

    const auto& lv = st.levels[item];
    tree.nodes[static_cast<std::size_t>(idx)].item = choice.item;
    tree.nodes[static_cast<std::size_t>(idx)].cutpoint = 0.5 * (lv[choice.level] + lv[choice.level + 1]);
    const int l = build(std::move(left), items, d + 1);
    const int r = build(std::move(right), items, d + 1);
    tree.nodes[static_cast<std::size_t>(idx)].left = l;
    tree.nodes[static_cast<std::size_t>(idx)].right = r;
    return idx;
  };
  std::vector<std::size_t> all(n);
  for (std::size_t r = 0; r < n; ++r) all[r] = r;
  build(std::move(all), {}, 0);

  // Weakest-link ordering.
  const std::size_t V = tree.nodes.size();
  std::vector<int> parent(V, -1);
  for (std::size_t v = 0; v < V; ++v) {
    if (!tree.nodes[v].is_leaf()) {
      parent[static_cast<std::size_t>(tree.nodes[v].left)] = static_cast<int>(v);
      parent[static_cast<std::size_t>(tree.nodes[v].right)] = static_cast<int>(v);
    }
  }
  std::vector<double> branch_sse(V, 0.0);
  std::vector<std::size_t> branch_leaves(V, 0);
  for (std::size_t v = V; v-- > 0;) {  // children follow parents in preorder
    const auto& nd = tree.nodes[v];
    if (nd.is_leaf()) {
      branch_sse[v] = nd.sse;
      branch_leaves[v] = 1;
    } else {
      branch_sse[v] = branch_sse[static_cast<std::size_t>(nd.left)] + branch_sse[static_cast<std::size_t>(nd.right)];
      branch_leaves[v] =
          branch_leaves[static_cast<std::size_t>(nd.left)] + branch_leaves[static_cast<std::size_t>(nd.right)];
    }
  }
  auto link_cost = [&](std::size_t v) {
    return (tree.nodes[v].sse - branch_sse[v]) / static_cast<double>(branch_leaves[v] - 1);
  };
  std::set<std::pair<double, std::size_t>> queue;
  std::vector<double> key(V, 0.0);
  std::vector<bool> collapsed(V, false);
  for (std::size_t v = 0; v < V; ++v) {
    if (!tree.nodes[v].is_leaf()) {
      key[v] = link_cost(v);
      queue.emplace(key[v], v);
    }
  }
  seq.split_index.assign(V, 0);
  std::vector<std::size_t> collapse_step(V, 0);
  std::size_t step = 0;
  while (!queue.empty()) {
    // smallest cost; among equals the highest index (deepest in preorder) goes first
    auto it = queue.lower_bound({queue.begin()->first, 0});
    auto last = it;
    for (auto j = it; j != queue.end() && j->first == it->first; ++j) last = j;
    const std::size_t v = last->second;
    queue.erase(last);
    ++step;
    // v and every still-internal descendant become leaves at this step
    std::vector<std::size_t> todo{v};
    while (!todo.empty()) {
      const std::size_t u = todo.back();
      todo.pop_back();
      if (tree.nodes[u].is_leaf() || collapsed[u]) continue;
      collapsed[u] = true;
      collapse_step[u] = step;
      if (u != v) queue.erase({key[u], u});
      todo.push_back(static_cast<std::size_t>(tree.nodes[u].left));
      todo.push_back(static_cast<std::size_t>(tree.nodes[u].right));
    }
    const double removed_sse = branch_sse[v] - tree.nodes[v].sse;
    const std::size_t removed_leaves = branch_leaves[v] - 1;
    branch_sse[v] = tree.nodes[v].sse;
    branch_leaves[v] = 1;
    for (int a = parent[v]; a >= 0; a = parent[static_cast<std::size_t>(a)]) {
      const auto au = static_cast<std::size_t>(a);
      branch_sse[au] -= removed_sse;
      branch_leaves[au] -= removed_leaves;
      queue.erase({key[au], au});
      key[au] = link_cost(au);
      queue.emplace(key[au], au);
    }
  }
  seq.steps = step;
  for (std::size_t v = 0; v < V; ++v)
    if (!tree.nodes[v].is_leaf()) seq.split_index[v] = step - collapse_step[v] + 1;
  return seq;
}

inline SubtreeSequence grow(const CodeMatrix& x, std::span<const double> target, std::size_t num_items,
                            const GrowConfig& cfg) {
  std::vector<std::string> ids;
  for (std::size_t c = 0; c < num_items; ++c) ids.push_back("item" + std::to_string(c + 1));
  return grow(x, target, ids, cfg);
}

// ---- pruning ---------------------------------------------------------------

/// Holdout RMSE of every element of the sequence, in sequence order.
inline std::vector<double> holdout_rmse_sequence(const SubtreeSequence& seq, const CodeMatrix& holdout,
                                                 std::span<const double> target) {
  require(holdout.rows() > 0, ErrorCode::EmptyHoldout, "pruning holdout is empty");
  require(target.size() == holdout.rows(), ErrorCode::InvalidArgument, "holdout targets and rows disagree");
  const std::size_t S = seq.steps;
  std::vector<double> diff(S + 2, 0.0);
  const auto& nodes = seq.full.nodes;
  for (std::size_t r = 0; r < holdout.rows(); ++r) {
    // Along the path split indices never decrease; element s predicts with the
    // first path node that is not internal in s.
    std::size_t v = 0;
    std::size_t lo = 0;
    for (;;) {
      const auto& nd = nodes[v];
      const std::size_t hi = nd.is_leaf() ? S + 1 : seq.split_index[v];
      if (hi > lo) {
        const double e = target[r] - nd.value;
        diff[lo] += e * e;
        diff[hi] -= e * e;
        lo = hi;
      }
      if (nd.is_leaf()) break;
      v = static_cast<std::size_t>(static_cast<double>(holdout(r, static_cast<std::size_t>(nd.item))) <= nd.cutpoint
                                       ? nd.left
                                       : nd.right);
    }
  }
  std::vector<double> rmse(S + 1);
  double acc = 0.0;
  for (std::size_t s = 0; s <= S; ++s) {
    acc += diff[s];
    rmse[s] = std::sqrt(std::max(0.0, acc) / static_cast<double>(holdout.rows()));
  }
  return rmse;
}

inline constexpr std::size_t kDefaultPatience = 10;

/// Threshold on the absolute holdout RMSE reduction between consecutive subtrees.
inline double default_prune_threshold(std::size_t m) { return m < 5 ? 1e-4 : 1e-5; }

/// Walks the sequence from the root outward. A step meets the threshold when
/// the RMSE drops by more than `threshold`. After `patience` consecutive misses
/// the last subtree that met it is returned (0 if none did); if that never
/// happens the deepest subtree is returned.
inline std::size_t select_by_rmse_plateau(std::span<const double> rmse, double threshold,
                                          std::size_t patience = kDefaultPatience) {
  require(!rmse.empty(), ErrorCode::InvalidArgument, "empty subtree sequence");
  require(patience >= 1, ErrorCode::InvalidConfig, "patience must be at least 1");
  std::size_t last_good = 0;
  std::size_t misses = 0;
  for (std::size_t s = 1; s < rmse.size(); ++s) {
    if (rmse[s - 1] - rmse[s] > threshold) {
      last_good = s;
      misses = 0;
    } else if (++misses == patience) {
      return last_good;
    }
  }
  return rmse.size() - 1;
}

struct PruneResult {
  RegressionTree tree;
  std::size_t selected = 0;
  std::vector<double> rmse;
};

inline PruneResult prune(const SubtreeSequence& seq, const CodeMatrix& holdout, std::span<const double> target,
                         double threshold, std::size_t patience = kDefaultPatience) {
  PruneResult out;
  out.rmse = holdout_rmse_sequence(seq, holdout, target);
  out.selected = select_by_rmse_plateau(out.rmse, threshold, patience);
  out.tree = seq.subtree(out.selected);
  return out;
}

// ---- deployment documents ----------------------------------------------------

inline constexpr const char* kDeploymentFormat = "adaptive-test/v1";

struct DeploymentProvenance {
  std::string training_hash;
  std::string population_hash;
  std::string copula_hash;
  std::string risk_hash;
  std::uint64_t seed = 0;
  std::string predicate;
  double w = 0.0;
};

/// Self-contained test document: only items the tree splits on are embedded.
inline nlohmann::json export_tree(const RegressionTree& tree, const ItemBank& bank, double threshold,
                                  const DeploymentProvenance& prov = {}) {
  require(threshold >= 0.0 && threshold <= 1.0, ErrorCode::InvalidArgument, "threshold must lie in [0, 1]");
  std::vector<int> used;
  for (const auto& n : tree.nodes)
    if (!n.is_leaf()) used.push_back(n.item);
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());

  nlohmann::json items = nlohmann::json::array();
  for (int idx : used) {
    const auto& id = tree.item_ids[static_cast<std::size_t>(idx)];
    const ItemDef* def = bank.find(id);
    require(def != nullptr, ErrorCode::UnknownItem, "tree splits on '" + id + "', which is not in the item bank");
    items.push_back(item_to_json(*def));
  }
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t v = 0; v < tree.nodes.size(); ++v) {
    const auto& n = tree.nodes[v];
    require(std::isfinite(n.value) && std::isfinite(n.cutpoint), ErrorCode::InvalidArgument,
            "tree holds a non-finite value");
    if (n.is_leaf()) {
      nodes.push_back({{"id", v}, {"leaf_prob", n.value}});
    } else {
      nodes.push_back({{"id", v},
                       {"item", tree.item_ids[static_cast<std::size_t>(n.item)]},
                       {"cutpoint", n.cutpoint},
                       {"left", n.left},
                       {"right", n.right}});
    }
  }
  nlohmann::json doc = {
      {"format", kDeploymentFormat},
      {"items", items},
      {"nodes", nodes},
      {"root", 0},
      {"threshold", threshold},
      {"maxipp", unique_items_per_path(tree)},
      {"depth", depth(tree)},
      {"constraint", {{"kind", tree.constraint.kind_name()}, {"value", tree.constraint.value}}},
      {"provenance",
       {{"training_hash", prov.training_hash.empty() ? tree.training_hash : prov.training_hash},
        {"population_hash", prov.population_hash},
        {"copula_hash", prov.copula_hash},
        {"risk_hash", prov.risk_hash},
        {"seed", prov.seed ? prov.seed : tree.seed},
        {"predicate", prov.predicate},
        {"w", prov.w}}},
  };
  doc["content_hash"] = content_hash(doc.dump());
  return doc;
}

inline void export_tree(const RegressionTree& tree, const ItemBank& bank, double threshold, const std::string& path,
                        const DeploymentProvenance& prov = {}) {
  write_file(path, export_tree(tree, bank, threshold, prov).dump(2) + "\n");
}

struct ImportedTest {
  RegressionTree tree;  // item_ids are the embedded items, in document order
  double threshold = 0.5;
  std::vector<ItemDef> items;
  std::size_t maxipp = 0;
};

inline ImportedTest import_tree(const nlohmann::json& doc) {
  require(doc.value("format", "") == kDeploymentFormat, ErrorCode::SchemaViolation, "not an adaptive-test/v1 document");
  if (doc.contains("content_hash")) {
    nlohmann::json body = doc;
    body.erase("content_hash");
    require(doc["content_hash"].get<std::string>() == content_hash(body.dump()), ErrorCode::SchemaViolation,
            "deployment document content hash mismatch");
  }
  ImportedTest out;
  std::map<std::string, int> index;
  for (const auto& ij : doc.at("items")) {
    out.items.push_back(item_from_json(ij, out.items.size()));
    require(index.emplace(out.items.back().id, static_cast<int>(out.tree.item_ids.size())).second,
            ErrorCode::DuplicateItemId, "item '" + out.items.back().id + "' embedded twice");
    out.tree.item_ids.push_back(out.items.back().id);
  }
  const auto& nodes = doc.at("nodes");
  out.tree.nodes.resize(nodes.size());
  for (const auto& nj : nodes) {
    const auto id = nj.at("id").get<std::size_t>();
    require(id < nodes.size(), ErrorCode::SchemaViolation, "node id out of range");
    TreeNode n;
    if (nj.contains("leaf_prob")) {
      n.value = nj.at("leaf_prob").get<double>();
      require(n.value >= 0.0 && n.value <= 1.0, ErrorCode::SchemaViolation, "leaf probability outside [0, 1]");
    } else {
      const auto item = nj.at("item").get<std::string>();
      auto it = index.find(item);
      require(it != index.end(), ErrorCode::UnknownItem, "node splits on undeclared item '" + item + "'");
      n.item = it->second;
      n.cutpoint = nj.at("cutpoint").get<double>();
      n.left = nj.at("left").get<int>();
      n.right = nj.at("right").get<int>();
      require(n.left > 0 && n.right > 0 && static_cast<std::size_t>(n.left) < nodes.size() &&
                  static_cast<std::size_t>(n.right) < nodes.size(),
              ErrorCode::SchemaViolation, "child index out of range");
    }
    out.tree.nodes[id] = n;
  }
  require(doc.at("root").get<int>() == 0, ErrorCode::SchemaViolation, "root must be node 0");
  const auto& cj = doc.at("constraint");
  out.tree.constraint = {cj.at("kind").get<std::string>() == "maxDepth" ? ConstraintKind::MaxDepth : ConstraintKind::MaxIpp,
                         cj.at("value").get<std::size_t>()};
  out.tree.training_hash = doc.at("provenance").value("training_hash", "");
  out.tree.seed = doc.at("provenance").value("seed", std::uint64_t{0});
  out.threshold = doc.at("threshold").get<double>();
  out.maxipp = doc.at("maxipp").get<std::size_t>();
  return out;
}

inline ImportedTest import_tree(const std::string& path) {
  try {
    return import_tree(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaViolation, "'" + path + "': " + e.what());
  }
}

/// Re-indexes split items against `columns`, so the tree can route rows of a
/// matrix laid out in that order.
inline RegressionTree rebind_items(const RegressionTree& tree, const std::vector<std::string>& columns) {
  RegressionTree out = tree;
  out.item_ids = columns;
  for (auto& n : out.nodes) {
    if (n.is_leaf()) continue;
    const auto& id = tree.item_ids[static_cast<std::size_t>(n.item)];
    auto it = std::find(columns.begin(), columns.end(), id);
    require(it != columns.end(), ErrorCode::MissingItem, "responses lack item '" + id + "'");
    n.item = static_cast<int>(it - columns.begin());
  }
  return out;
}

/// Same topology, split items (by id), cutpoints and leaf values.
inline bool structurally_equal(const RegressionTree& a, const RegressionTree& b) {
  std::function<bool(int, int)> same = [&](int u, int v) {
    const auto& x = a.nodes[static_cast<std::size_t>(u)];
    const auto& y = b.nodes[static_cast<std::size_t>(v)];
    if (x.is_leaf() != y.is_leaf()) return false;
    if (x.is_leaf()) return x.value == y.value;
    return a.item_ids[static_cast<std::size_t>(x.item)] == b.item_ids[static_cast<std::size_t>(y.item)] &&
           x.cutpoint == y.cutpoint && same(x.left, y.left) && same(x.right, y.right);
  };
  return !a.nodes.empty() && !b.nodes.empty() && same(0, 0);
}

/// Walks a deployment document the way a live administration does: each item is
/// asked at most once and a re-split on an answered item reuses the answer.
struct Administration {
  std::vector<std::pair<std::string, int>> asked;
  std::vector<std::size_t> path;
  double probability = 0.0;
  int risk_class = 0;
};

inline Administration administer(const nlohmann::json& doc, const std::function<int(const ItemDef&)>& respond) {
  const auto test = import_tree(doc);
  Administration out;
  std::map<std::string, int> answers;
  std::size_t v = 0;
  out.path.push_back(v);
  while (!test.tree.nodes[v].is_leaf()) {
    const auto& n = test.tree.nodes[v];
    const auto& def = test.items[static_cast<std::size_t>(n.item)];
    auto it = answers.find(def.id);
    if (it == answers.end()) {
      const int code = respond(def);
      require(def.has_code(code), ErrorCode::CodeOutOfRange,
              "code " + std::to_string(code) + " is not a level of '" + def.id + "'");
      it = answers.emplace(def.id, code).first;
      out.asked.emplace_back(def.id, code);
    }
    v = static_cast<std::size_t>(it->second <= n.cutpoint ? n.left : n.right);
    out.path.push_back(v);
  }
  out.probability = test.tree.nodes[v].value;
  out.risk_class = out.probability >= test.threshold ? 1 : 0;
  return out;
}

}  // namespace adascreen
