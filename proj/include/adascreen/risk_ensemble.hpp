#pragma once

// Bayesian sum-of-trees classifier for Pr(Y = 1 | x). Each posterior draw is an
// ensemble of L regression trees whose summed output passes through a probit
// link; fitting is Bayesian backfitting with the latent-variable
// representation (Albert & Chib) and birth/death tree moves.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "adascreen/code_matrix.hpp"
#include "adascreen/error.hpp"
#include "adascreen/hash.hpp"
#include "adascreen/item_model.hpp"
#include "adascreen/rng.hpp"

namespace adascreen {

/// Probabilities are kept this far from 0 and 1.
inline constexpr double kProbabilityFloor = 1e-12;

struct EnsembleNode {
  int var = -1;  // item index; -1 marks a leaf
  double cutpoint = 0.0;
  int left = -1;
  int right = -1;
  double mu = 0.0;

  bool is_leaf() const { return var < 0; }
  friend bool operator==(const EnsembleNode&, const EnsembleNode&) = default;
};

struct EnsembleTree {
  std::vector<EnsembleNode> nodes;  // nodes[0] is the root

  template <class Row>
  double evaluate(const Row& x) const {
    int node = 0;
    while (!nodes[static_cast<std::size_t>(node)].is_leaf()) {
      const auto& n = nodes[static_cast<std::size_t>(node)];
      node = static_cast<double>(x[static_cast<std::size_t>(n.var)]) <= n.cutpoint ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(node)].mu;
  }
  friend bool operator==(const EnsembleTree&, const EnsembleTree&) = default;
};

/// One posterior draw θ_Y: trees plus the probit offset.
struct TreeEnsembleDraw {
  std::vector<EnsembleTree> trees;
  double offset = 0.0;

  template <class Row>
  double latent(const Row& x) const {
    double s = offset;
    for (const auto& t : trees) s += t.evaluate(x);
    return s;
  }

  /// Pr(Y = 1 | x, θ_Y).
  template <class Row>
  double predict_prob(const Row& x) const {
    return std::clamp(normal_cdf(latent(x)), kProbabilityFloor, 1.0 - kProbabilityFloor);
  }

  /// {Pr(Y = 0 | x), Pr(Y = 1 | x)}.
  template <class Row>
  std::array<double, 2> class_probs(const Row& x) const {
    const double p1 = predict_prob(x);
    return {1.0 - p1, p1};
  }
  friend bool operator==(const TreeEnsembleDraw&, const TreeEnsembleDraw&) = default;
};

template <class Row>
double predict_prob(const TreeEnsembleDraw& draw, const Row& x) {
  return draw.predict_prob(x);
}

struct RiskConfig {
  std::size_t num_trees = 50;
  std::size_t burn_in = 250;
  std::size_t draws = 1000;
  std::size_t thin = 1;
  std::uint64_t seed = 1;
  double leaf_shrinkage = 2.0;  // k in τ = 3 / (k sqrt(L)); larger means stronger shrinkage
  double split_alpha = 0.95;    // depth prior α(1 + d)^-β
  double split_beta = 2.0;
};

struct RiskTrainingSummary {
  std::size_t num_observations = 0;
  double base_rate = 0.0;
  double grow_acceptance = 0.0;
  double prune_acceptance = 0.0;
};

class RiskPosterior {
 public:
  RiskPosterior() = default;
  RiskPosterior(std::vector<TreeEnsembleDraw> draws, std::vector<std::string> item_ids, RiskConfig config,
                RiskTrainingSummary summary)
      : draws_(std::move(draws)), item_ids_(std::move(item_ids)), config_(config), summary_(summary) {
    require(!draws_.empty(), ErrorCode::InvalidArgument, "risk posterior needs at least one draw");
  }

  std::size_t num_draws() const { return draws_.size(); }
  const std::vector<TreeEnsembleDraw>& draws() const { return draws_; }
  const TreeEnsembleDraw& draw(std::size_t j) const { return draws_[j]; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }
  const RiskConfig& config() const { return config_; }
  const RiskTrainingSummary& summary() const { return summary_; }

  template <class Row>
  double predict_prob(std::size_t j, const Row& x) const {
    return draws_[j].predict_prob(x);
  }

 private:
  std::vector<TreeEnsembleDraw> draws_;
  std::vector<std::string> item_ids_;
  RiskConfig config_;
  RiskTrainingSummary summary_;
};

/// Anything that exposes posterior draws of Pr(Y = 1 | x).
template <class M>
concept RiskModel = requires(const M& m, std::size_t j, const RowView& x) {
  { m.num_draws() } -> std::convertible_to<std::size_t>;
  { m.predict_prob(j, x) } -> std::convertible_to<double>;
};

/// Ē(Ỹ | x): arithmetic mean of Pr(Y = 1 | x, θ_Y^(j)) over all draws.
template <RiskModel M, class Row>
double posterior_mean_prob(const M& model, const Row& x) {
  const std::size_t d = model.num_draws();
  double sum = 0.0;
  for (std::size_t j = 0; j < d; ++j) sum += model.predict_prob(j, x);
  return sum / static_cast<double>(d);
}

/// Responses keyed by item id, laid out in the posterior's item order. Every
/// item the ensemble was fit on must be present.
inline std::vector<int> response_row(const RiskPosterior& post, const std::map<std::string, int>& responses) {
  std::vector<int> row;
  row.reserve(post.item_ids().size());
  for (const auto& id : post.item_ids()) {
    auto it = responses.find(id);
    require(it != responses.end(), ErrorCode::MissingItem, "no response for item '" + id + "'");
    row.push_back(it->second);
  }
  return row;
}

namespace detail {

struct FitNode {
  int var = -1;
  int cut = -1;  // index into the variable's cutpoint list
  int left = -1;
  int right = -1;
  int parent = -1;
  int depth = 0;
  double mu = 0.0;
  bool is_leaf() const { return left < 0; }
};

class BartSampler {
 public:
  BartSampler(const CodeMatrix& x, const std::vector<std::uint8_t>& y, const RiskConfig& cfg)
      : x_(x), y_(y), cfg_(cfg), n_(x.rows()), p_(x.cols()), rng_(derive_seed(cfg.seed, stream_tag::risk_fit)) {
    for (std::size_t v = 0; v < p_; ++v) {
      auto col = x.column(v);
      std::vector<int> values(col.begin(), col.end());
      std::sort(values.begin(), values.end());
      values.erase(std::unique(values.begin(), values.end()), values.end());
      std::vector<double> cuts;
      for (std::size_t l = 1; l < values.size(); ++l) cuts.push_back(0.5 * (values[l - 1] + values[l]));
      cuts_.push_back(std::move(cuts));
    }
    double base = 0.0;
    for (auto v : y_) base += v;
    base /= static_cast<double>(n_);
    offset_ = normal_quantile(base);
    tau_ = 3.0 / (cfg_.leaf_shrinkage * std::sqrt(static_cast<double>(cfg_.num_trees)));

    trees_.assign(cfg_.num_trees, std::vector<FitNode>{FitNode{}});
    leaf_of_.assign(cfg_.num_trees, std::vector<int>(n_, 0));
    tree_fit_.assign(cfg_.num_trees, std::vector<double>(n_, 0.0));
    total_fit_.assign(n_, 0.0);
    z_.assign(n_, 0.0);
    residual_.assign(n_, 0.0);
  }

  RiskPosterior run(std::vector<std::string> item_ids) {
    std::vector<TreeEnsembleDraw> draws;
    const std::size_t total_iter = cfg_.burn_in + cfg_.draws * cfg_.thin;
    for (std::size_t iter = 0; iter < total_iter; ++iter) {
      sample_latent();
      for (std::size_t t = 0; t < trees_.size(); ++t) update_tree(t);
      if (iter >= cfg_.burn_in && (iter - cfg_.burn_in + 1) % cfg_.thin == 0) draws.push_back(snapshot());
    }
    RiskTrainingSummary summary;
    summary.num_observations = n_;
    summary.base_rate = normal_cdf(offset_);
    summary.grow_acceptance = grow_tries_ ? static_cast<double>(grow_accepts_) / static_cast<double>(grow_tries_) : 0.0;
    summary.prune_acceptance =
        prune_tries_ ? static_cast<double>(prune_accepts_) / static_cast<double>(prune_tries_) : 0.0;
    return RiskPosterior(std::move(draws), std::move(item_ids), cfg_, summary);
  }

 private:
  void sample_latent() {
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_; ++i) {
      const double mean = offset_ + total_fit_[i];
      z_[i] = y_[i] ? truncated_normal(mean, 0.0, inf, rng_) : truncated_normal(mean, -inf, 0.0, rng_);
    }
  }

  // Range [lo, hi) of cut indices of `var` still available at `node`.
  std::pair<int, int> cut_range(const std::vector<FitNode>& tree, int node, std::size_t var) const {
    int lo = 0;
    int hi = static_cast<int>(cuts_[var].size());
    int child = node;
    int parent = tree[static_cast<std::size_t>(node)].parent;
    while (parent >= 0) {
      const auto& a = tree[static_cast<std::size_t>(parent)];
      if (static_cast<std::size_t>(a.var) == var) {
        if (a.left == child) hi = std::min(hi, a.cut);
        else lo = std::max(lo, a.cut + 1);
      }
      child = parent;
      parent = a.parent;
    }
    return {lo, std::max(lo, hi)};
  }

  std::size_t splittable_vars(const std::vector<FitNode>& tree, int node) const {
    std::size_t count = 0;
    for (std::size_t v = 0; v < p_; ++v) {
      auto [lo, hi] = cut_range(tree, node, v);
      if (hi > lo) ++count;
    }
    return count;
  }

  std::vector<int> leaves(const std::vector<FitNode>& tree) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < tree.size(); ++i)
      if (tree[i].parent >= 0 || i == 0)
        if (tree[i].is_leaf() && alive(tree, static_cast<int>(i))) out.push_back(static_cast<int>(i));
    return out;
  }

  // Nodes are never physically removed; a pruned child is detached by its parent.
  static bool alive(const std::vector<FitNode>& tree, int node) {
    if (node == 0) return true;
    const int parent = tree[static_cast<std::size_t>(node)].parent;
    if (parent < 0) return false;
    const auto& a = tree[static_cast<std::size_t>(parent)];
    return (a.left == node || a.right == node) && alive(tree, parent);
  }

  std::vector<int> growable_leaves(const std::vector<FitNode>& tree) const {
    std::vector<int> out;
    for (int leaf : leaves(tree))
      if (splittable_vars(tree, leaf) > 0) out.push_back(leaf);
    return out;
  }

  static std::vector<int> nog_nodes(const std::vector<FitNode>& tree) {
    std::vector<int> out;
    for (std::size_t i = 0; i < tree.size(); ++i) {
      const auto& n = tree[i];
      if (n.is_leaf() || !alive(tree, static_cast<int>(i))) continue;
      if (tree[static_cast<std::size_t>(n.left)].is_leaf() && tree[static_cast<std::size_t>(n.right)].is_leaf())
        out.push_back(static_cast<int>(i));
    }
    return out;
  }

  double log_marginal(std::size_t count, double sum) const {
    const double t2 = tau_ * tau_;
    const double denom = 1.0 + static_cast<double>(count) * t2;
    return -0.5 * std::log(denom) + 0.5 * t2 * sum * sum / denom;
  }

  double split_prob(int depth) const { return cfg_.split_alpha * std::pow(1.0 + depth, -cfg_.split_beta); }

  // log P(T*)/P(T) for splitting a leaf at `depth`, without the split-rule
  // factor (it cancels against the proposal).
  double log_prior_ratio(int depth) const {
    return std::log(split_prob(depth)) + 2.0 * std::log1p(-split_prob(depth + 1)) - std::log1p(-split_prob(depth));
  }

  void update_tree(std::size_t t) {
    auto& tree = trees_[t];
    auto& leaf_of = leaf_of_[t];
    auto& fit = tree_fit_[t];
    for (std::size_t i = 0; i < n_; ++i) residual_[i] = z_[i] - offset_ - (total_fit_[i] - fit[i]);

    const bool root_only = tree[0].is_leaf();
    const auto growable = growable_leaves(tree);
    const bool can_grow = !growable.empty();
    const bool do_grow = can_grow && (root_only || uniform01(rng_) < 0.5);
    if (do_grow) {
      propose_grow(tree, leaf_of, growable, root_only);
    } else if (!root_only) {
      propose_prune(tree, leaf_of, can_grow);
    }
    sample_leaves(tree, leaf_of);
    for (std::size_t i = 0; i < n_; ++i) {
      const double updated = tree[static_cast<std::size_t>(leaf_of[i])].mu;
      total_fit_[i] += updated - fit[i];
      fit[i] = updated;
    }
  }

  void propose_grow(std::vector<FitNode>& tree, std::vector<int>& leaf_of, const std::vector<int>& growable,
                    bool root_only) {
    ++grow_tries_;
    const int leaf = growable[static_cast<std::size_t>(uniform01(rng_) * static_cast<double>(growable.size()))];
    std::vector<std::size_t> vars;
    for (std::size_t v = 0; v < p_; ++v) {
      auto [lo, hi] = cut_range(tree, leaf, v);
      if (hi > lo) vars.push_back(v);
    }
    const std::size_t var = vars[static_cast<std::size_t>(uniform01(rng_) * static_cast<double>(vars.size()))];
    auto [lo, hi] = cut_range(tree, leaf, var);
    const int cut = lo + static_cast<int>(uniform01(rng_) * static_cast<double>(hi - lo));
    const double cut_value = cuts_[var][static_cast<std::size_t>(cut)];

    std::size_t n_left = 0, n_right = 0;
    double s_left = 0.0, s_right = 0.0;
    auto col = x_.column(var);
    for (std::size_t i = 0; i < n_; ++i) {
      if (leaf_of[i] != leaf) continue;
      if (static_cast<double>(col[i]) <= cut_value) {
        ++n_left;
        s_left += residual_[i];
      } else {
        ++n_right;
        s_right += residual_[i];
      }
    }
    const int depth = tree[static_cast<std::size_t>(leaf)].depth;
    const double log_lik = log_marginal(n_left, s_left) + log_marginal(n_right, s_right) -
                           log_marginal(n_left + n_right, s_left + s_right);

    // Build T* tentatively to count its nog nodes and growable leaves.
    std::vector<FitNode> proposal = tree;
    const int l = static_cast<int>(proposal.size());
    const int r = l + 1;
    proposal[static_cast<std::size_t>(leaf)].var = static_cast<int>(var);
    proposal[static_cast<std::size_t>(leaf)].cut = cut;
    proposal[static_cast<std::size_t>(leaf)].left = l;
    proposal[static_cast<std::size_t>(leaf)].right = r;
    proposal.push_back(FitNode{-1, -1, -1, -1, leaf, depth + 1, 0.0});
    proposal.push_back(FitNode{-1, -1, -1, -1, leaf, depth + 1, 0.0});

    const double p_grow = root_only ? 1.0 : 0.5;
    const double p_prune_star = growable_leaves(proposal).empty() ? 1.0 : 0.5;
    const double w_star = static_cast<double>(nog_nodes(proposal).size());
    const double log_proposal = std::log(p_prune_star / w_star) - std::log(p_grow / static_cast<double>(growable.size()));
    const double log_ratio = log_lik + log_prior_ratio(depth) + log_proposal;
    if (std::log(uniform01(rng_)) < log_ratio) {
      ++grow_accepts_;
      tree = std::move(proposal);
      for (std::size_t i = 0; i < n_; ++i) {
        if (leaf_of[i] == leaf) leaf_of[i] = static_cast<double>(col[i]) <= cut_value ? l : r;
      }
    }
  }

  void propose_prune(std::vector<FitNode>& tree, std::vector<int>& leaf_of, bool can_grow_now) {
    ++prune_tries_;
    const auto nogs = nog_nodes(tree);
    const int node = nogs[static_cast<std::size_t>(uniform01(rng_) * static_cast<double>(nogs.size()))];
    const auto& nd = tree[static_cast<std::size_t>(node)];
    std::size_t n_left = 0, n_right = 0;
    double s_left = 0.0, s_right = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      if (leaf_of[i] == nd.left) {
        ++n_left;
        s_left += residual_[i];
      } else if (leaf_of[i] == nd.right) {
        ++n_right;
        s_right += residual_[i];
      }
    }
    const double log_lik = log_marginal(n_left + n_right, s_left + s_right) - log_marginal(n_left, s_left) -
                           log_marginal(n_right, s_right);

    std::vector<FitNode> proposal = tree;
    const int left = nd.left, right = nd.right;
    proposal[static_cast<std::size_t>(node)].var = -1;
    proposal[static_cast<std::size_t>(node)].cut = -1;
    proposal[static_cast<std::size_t>(node)].left = -1;
    proposal[static_cast<std::size_t>(node)].right = -1;
    proposal[static_cast<std::size_t>(left)].parent = -1;
    proposal[static_cast<std::size_t>(right)].parent = -1;

    const double p_prune = can_grow_now ? 0.5 : 1.0;
    const bool proposal_root_only = proposal[0].is_leaf();
    const double p_grow_star = proposal_root_only ? 1.0 : 0.5;
    const double b_star = static_cast<double>(growable_leaves(proposal).size());
    const double log_proposal =
        std::log(p_grow_star / b_star) - std::log(p_prune / static_cast<double>(nogs.size()));
    const double log_ratio = log_lik - log_prior_ratio(nd.depth) + log_proposal;
    if (std::log(uniform01(rng_)) < log_ratio) {
      ++prune_accepts_;
      tree = compact(proposal);
      remap_leaves(tree, leaf_of);
    }
  }

  // Drops detached nodes, renumbering the survivors in preorder.
  static std::vector<FitNode> compact(const std::vector<FitNode>& tree) {
    std::vector<FitNode> out;
    std::vector<int> stack{0};
    std::vector<int> new_index(tree.size(), -1);
    // preorder with parents assigned before children
    std::vector<std::pair<int, int>> work{{0, -1}};
    while (!work.empty()) {
      auto [old, parent] = work.back();
      work.pop_back();
      FitNode n = tree[static_cast<std::size_t>(old)];
      const int idx = static_cast<int>(out.size());
      new_index[static_cast<std::size_t>(old)] = idx;
      n.parent = parent;
      out.push_back(n);
      if (!n.is_leaf()) {
        work.emplace_back(n.right, idx);
        work.emplace_back(n.left, idx);
      }
    }
    for (auto& n : out) {
      if (!n.is_leaf()) {
        n.left = new_index[static_cast<std::size_t>(n.left)];
        n.right = new_index[static_cast<std::size_t>(n.right)];
      }
    }
    return out;
  }

  void remap_leaves(const std::vector<FitNode>& tree, std::vector<int>& leaf_of) const {
    for (std::size_t i = 0; i < n_; ++i) {
      int node = 0;
      while (!tree[static_cast<std::size_t>(node)].is_leaf()) {
        const auto& nd = tree[static_cast<std::size_t>(node)];
        node = static_cast<double>(x_(i, static_cast<std::size_t>(nd.var))) <=
                       cuts_[static_cast<std::size_t>(nd.var)][static_cast<std::size_t>(nd.cut)]
                   ? nd.left
                   : nd.right;
      }
      leaf_of[i] = node;
    }
  }

  void sample_leaves(std::vector<FitNode>& tree, const std::vector<int>& leaf_of) {
    std::vector<std::size_t> count(tree.size(), 0);
    std::vector<double> sum(tree.size(), 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      ++count[static_cast<std::size_t>(leaf_of[i])];
      sum[static_cast<std::size_t>(leaf_of[i])] += residual_[i];
    }
    const double t2 = tau_ * tau_;
    for (std::size_t v = 0; v < tree.size(); ++v) {
      if (!tree[v].is_leaf()) continue;
      const double denom = 1.0 + static_cast<double>(count[v]) * t2;
      const double mean = t2 * sum[v] / denom;
      const double sd = std::sqrt(t2 / denom);
      tree[v].mu = mean + sd * std_normal(rng_);
      require(std::isfinite(tree[v].mu), ErrorCode::NonFiniteLeaf,
              "leaf update produced a non-finite value (n=" + std::to_string(count[v]) +
                  ", sum=" + std::to_string(sum[v]) + ")");
    }
  }

  TreeEnsembleDraw snapshot() const {
    TreeEnsembleDraw draw;
    draw.offset = offset_;
    for (const auto& fit_tree : trees_) {
      const auto tree = compact(fit_tree);
      EnsembleTree out;
      for (const auto& n : tree) {
        EnsembleNode e;
        if (!n.is_leaf()) {
          e.var = n.var;
          e.cutpoint = cuts_[static_cast<std::size_t>(n.var)][static_cast<std::size_t>(n.cut)];
          e.left = n.left;
          e.right = n.right;
        } else {
          e.mu = n.mu;
        }
        out.nodes.push_back(e);
      }
      draw.trees.push_back(std::move(out));
    }
    return draw;
  }

  const CodeMatrix& x_;
  const std::vector<std::uint8_t>& y_;
  RiskConfig cfg_;
  std::size_t n_, p_;
  Rng rng_;
  std::vector<std::vector<double>> cuts_;
  double offset_ = 0.0;
  double tau_ = 0.0;
  std::vector<std::vector<FitNode>> trees_;
  std::vector<std::vector<int>> leaf_of_;
  std::vector<std::vector<double>> tree_fit_;
  std::vector<double> total_fit_, z_, residual_;
  std::size_t grow_tries_ = 0, grow_accepts_ = 0, prune_tries_ = 0, prune_accepts_ = 0;
};

}  // namespace detail

inline RiskPosterior fit_risk_model(const CodeMatrix& responses, const std::vector<std::uint8_t>& outcomes,
                                    const std::vector<std::string>& item_ids, const RiskConfig& config) {
  require(config.num_trees >= 1, ErrorCode::InvalidConfig, "num_trees must be at least 1");
  require(config.draws >= 1 && config.thin >= 1, ErrorCode::InvalidConfig, "draws and thin must be positive");
  require(config.leaf_shrinkage > 0.0, ErrorCode::InvalidConfig, "leaf_shrinkage must be positive");
  require(responses.rows() == outcomes.size(), ErrorCode::InvalidArgument, "responses and outcomes disagree in length");
  require(responses.cols() == item_ids.size(), ErrorCode::InvalidArgument, "item ids do not match response columns");
  std::size_t positives = 0;
  for (auto y : outcomes) {
    require(y <= 1, ErrorCode::InvalidArgument, "outcomes must be binary");
    positives += y;
  }
  require(positives > 0 && positives < outcomes.size(), ErrorCode::SingleClassOutcome,
          "outcomes contain a single class");
  require(outcomes.size() >= 50, ErrorCode::InsufficientData,
          "need at least 50 observations, got " + std::to_string(outcomes.size()));
  detail::BartSampler sampler(responses, outcomes, config);
  return sampler.run(item_ids);
}

inline RiskPosterior fit_risk_model(const Dataset& data, const RiskConfig& config) {
  return fit_risk_model(data.responses, data.outcomes, data.item_ids, config);
}

// ---- archive ---------------------------------------------------------------

inline constexpr const char* kRiskFormat = "risk-posterior/v1";

inline nlohmann::json to_json(const RiskPosterior& post) {
  nlohmann::json draws = nlohmann::json::array();
  for (const auto& d : post.draws()) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : d.trees) {
      nlohmann::json nodes = nlohmann::json::array();
      for (const auto& n : t.nodes) {
        if (n.is_leaf()) nodes.push_back(nlohmann::json::array({n.mu}));
        else nodes.push_back(nlohmann::json::array({n.var, n.cutpoint, n.left, n.right}));
      }
      trees.push_back(nodes);
    }
    draws.push_back({{"offset", d.offset}, {"trees", trees}});
  }
  const auto& c = post.config();
  const auto& s = post.summary();
  nlohmann::json payload = {
      {"format", kRiskFormat},
      {"item_ids", post.item_ids()},
      {"link", "probit"},
      {"config", {{"num_trees", c.num_trees}, {"burn_in", c.burn_in}, {"draws", c.draws}, {"thin", c.thin},
                  {"seed", c.seed}, {"leaf_shrinkage", c.leaf_shrinkage}, {"split_alpha", c.split_alpha},
                  {"split_beta", c.split_beta}}},
      {"summary", {{"num_observations", s.num_observations}, {"base_rate", s.base_rate},
                   {"grow_acceptance", s.grow_acceptance}, {"prune_acceptance", s.prune_acceptance}}},
      {"draws", draws},
  };
  payload["content_hash"] = content_hash(payload.dump());
  return payload;
}

inline RiskPosterior risk_posterior_from_json(const nlohmann::json& j) {
  require(j.value("format", "") == kRiskFormat, ErrorCode::SchemaViolation, "not a risk posterior archive");
  nlohmann::json payload = j;
  const std::string stored = payload.value("content_hash", "");
  payload.erase("content_hash");
  require(stored == content_hash(payload.dump()), ErrorCode::SchemaViolation, "risk archive content hash mismatch");
  const auto ids = j.at("item_ids").get<std::vector<std::string>>();
  std::vector<TreeEnsembleDraw> draws;
  for (const auto& dj : j.at("draws")) {
    TreeEnsembleDraw d;
    d.offset = dj.at("offset").get<double>();
    for (const auto& tj : dj.at("trees")) {
      EnsembleTree t;
      for (const auto& nj : tj) {
        EnsembleNode n;
        if (nj.size() == 1) {
          n.mu = nj[0].get<double>();
        } else {
          n.var = nj[0].get<int>();
          n.cutpoint = nj[1].get<double>();
          n.left = nj[2].get<int>();
          n.right = nj[3].get<int>();
          require(n.var >= 0 && static_cast<std::size_t>(n.var) < ids.size(), ErrorCode::SchemaViolation,
                  "tree splits on an undeclared item");
        }
        t.nodes.push_back(n);
      }
      d.trees.push_back(std::move(t));
    }
    draws.push_back(std::move(d));
  }
  const auto& cj = j.at("config");
  RiskConfig c;
  c.num_trees = cj.at("num_trees").get<std::size_t>();
  c.burn_in = cj.at("burn_in").get<std::size_t>();
  c.draws = cj.at("draws").get<std::size_t>();
  c.thin = cj.at("thin").get<std::size_t>();
  c.seed = cj.at("seed").get<std::uint64_t>();
  c.leaf_shrinkage = cj.at("leaf_shrinkage").get<double>();
  c.split_alpha = cj.at("split_alpha").get<double>();
  c.split_beta = cj.at("split_beta").get<double>();
  const auto& sj = j.at("summary");
  RiskTrainingSummary s;
  s.num_observations = sj.at("num_observations").get<std::size_t>();
  s.base_rate = sj.at("base_rate").get<double>();
  s.grow_acceptance = sj.at("grow_acceptance").get<double>();
  s.prune_acceptance = sj.at("prune_acceptance").get<double>();
  return RiskPosterior(std::move(draws), ids, c, s);
}

inline void save_risk_posterior(const RiskPosterior& post, const std::string& path) {
  write_file(path, to_json(post).dump() + "\n");
}

inline RiskPosterior load_risk_posterior(const std::string& path) {
  try {
    return risk_posterior_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaViolation, "'" + path + "': " + e.what());
  }
}

}  // namespace adascreen
