#pragma once

// Utility-based evaluation of screening tests: weighted sensitivity and
// specificity, threshold optimization, full-length and shortened tests, per
// posterior draw utility differences, and tree-method comparisons.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "adascreen/error.hpp"
#include "adascreen/maxipp_tree.hpp"
#include "adascreen/parallel.hpp"
#include "adascreen/synth_population.hpp"

namespace adascreen {

inline void check_weight(double w) {
  require(w > 0.0 && w < 1.0, ErrorCode::InvalidWeight, "utility weight w must lie strictly between 0 and 1");
}

struct UtilityWeights {
  double w = 0.5;
  double base_rate = 0.5;  // Pr(Y = 1) in the target population

  UtilityWeights(double weight, double pr1) : w(weight), base_rate(pr1) {
    check_weight(w);
    require(base_rate > 0.0 && base_rate < 1.0, ErrorCode::InvalidArgument, "base rate must lie strictly in (0, 1)");
  }

  double u0() const { return (1.0 - w) / (1.0 - base_rate); }
  double u1() const { return w / base_rate; }
  /// Point-wise optimal cutoff on Ē: classify 1 iff Ē ≥ U0 / (U0 + U1).
  double label_threshold() const { return u0() / (u0() + u1()); }
};

inline double expected_utility(double sensitivity, double specificity, double w) {
  require(sensitivity >= 0.0 && sensitivity <= 1.0 && specificity >= 0.0 && specificity <= 1.0,
          ErrorCode::InvalidArgument, "sensitivity and specificity must lie in [0, 1]");
  require(w >= 0.0 && w <= 1.0, ErrorCode::InvalidWeight, "w must lie in [0, 1]");
  return w * sensitivity + (1.0 - w) * specificity;
}

struct SensSpec {
  double sensitivity = 0.0;
  double specificity = 0.0;
};

struct Confusion {
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;

  bool both_classes() const { return tp + fn > 0 && tn + fp > 0; }
  SensSpec rates() const {
    require(both_classes(), ErrorCode::DegenerateTruths, "truths contain a single class");
    return {static_cast<double>(tp) / static_cast<double>(tp + fn),
            static_cast<double>(tn) / static_cast<double>(tn + fp)};
  }
};

inline Confusion confusion(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> truths) {
  require(predictions.size() == truths.size(), ErrorCode::InvalidArgument, "predictions and truths differ in length");
  Confusion c;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i]) (predictions[i] ? c.tp : c.fn)++;
    else (predictions[i] ? c.fp : c.tn)++;
  }
  return c;
}

inline SensSpec empirical_sens_spec(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> truths) {
  return confusion(predictions, truths).rates();
}

struct ThresholdChoice {
  double threshold = 0.0;
  double utility = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

struct RocPoint {
  double threshold = 0.0;
  double specificity = 0.0;
  double sensitivity = 0.0;
};

/// One point per candidate threshold {0} ∪ unique scores ∪ {1}, in increasing
/// threshold order; the rule is classify 1 iff score ≥ threshold.
inline std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), ErrorCode::InvalidArgument, "scores and labels differ in length");
  std::size_t pos = 0;
  for (auto y : labels) pos += y;
  const std::size_t neg = labels.size() - pos;
  require(pos > 0 && neg > 0, ErrorCode::DegenerateTruths, "labels contain a single class");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::vector<double> candidates{0.0};
  for (auto i : order)
    if (scores[i] > candidates.back()) candidates.push_back(scores[i]);
  if (candidates.back() < 1.0) candidates.push_back(1.0);

  // Rows with score < threshold are classified 0.
  std::vector<RocPoint> out;
  out.reserve(candidates.size());
  std::size_t k = 0, below_pos = 0, below_neg = 0;
  for (double c : candidates) {
    while (k < order.size() && scores[order[k]] < c) {
      (labels[order[k]] ? below_pos : below_neg)++;
      ++k;
    }
    out.push_back({c, static_cast<double>(below_neg) / static_cast<double>(neg),
                   static_cast<double>(pos - below_pos) / static_cast<double>(pos)});
  }
  return out;
}

/// Exhaustive scan of the candidate thresholds; among maximizers the largest C wins.
inline ThresholdChoice optimize_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                          double w) {
  check_weight(w);
  ThresholdChoice best;
  double best_u = -1.0;
  for (const auto& pt : roc_points(scores, labels)) {
    const double u = w * pt.sensitivity + (1.0 - w) * pt.specificity;
    if (u >= best_u - 1e-12) {
      best = {pt.threshold, u, pt.sensitivity, pt.specificity};
      best_u = std::max(best_u, u);
    }
  }
  return best;
}

inline std::vector<std::uint8_t> classify(std::span<const double> scores, double threshold) {
  std::vector<std::uint8_t> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1 : 0;
  return out;
}

/// Labels γ*_k = 1 iff Ē_k ≥ U0 / (U0 + U1).
inline std::vector<std::uint8_t> utility_class_labels(std::span<const double> e_bar, double w, double base_rate) {
  const UtilityWeights uw(w, base_rate);
  return classify(e_bar, uw.label_threshold());
}

// ---- adaptive tests ----------------------------------------------------------

enum class ScorerKind { PosteriorMean, Tree };

/// γ = Thr_C(score). The full test scores with Ē; a shortened test with a tree.
struct AdaptiveTest {
  ScorerKind scorer = ScorerKind::PosteriorMean;
  std::optional<RegressionTree> tree;
  double threshold = 0.5;
  double w = 0.5;
  ThresholdChoice calibration;  // achieved on the pooled calibration rows

  std::vector<double> scores(const SyntheticPopulation& pop) const {
    if (scorer == ScorerKind::PosteriorMean) return pop.e_bar;
    std::vector<double> out(pop.rows());
    for (std::size_t k = 0; k < pop.rows(); ++k) out[k] = tree->predict(pop.row(k));
    return out;
  }

  std::vector<std::uint8_t> classify_population(const SyntheticPopulation& pop) const {
    return adascreen::classify(scores(pop), threshold);
  }
};

inline AdaptiveTest build_full_test(const SyntheticPopulation& pop, double w) {
  require(pop.rows() > 0, ErrorCode::EmptyPopulation, "population has no rows");
  AdaptiveTest t;
  t.scorer = ScorerKind::PosteriorMean;
  t.w = w;
  t.calibration = optimize_threshold(pop.e_bar, pop.y_tilde, w);
  t.threshold = t.calibration.threshold;
  return t;
}

inline AdaptiveTest build_short_test(const SyntheticPopulation& pop, const RegressionTree& tree, double w) {
  require(pop.rows() > 0, ErrorCode::EmptyPopulation, "population has no rows");
  AdaptiveTest t;
  t.scorer = ScorerKind::Tree;
  t.tree = tree;
  t.w = w;
  const auto s = t.scores(pop);
  t.calibration = optimize_threshold(s, pop.y_tilde, w);
  t.threshold = t.calibration.threshold;
  return t;
}

struct UtilityDiffSample {
  std::size_t m = 0;
  double w = 0.5;
  std::vector<double> draws;                // one Δ per retained block
  std::vector<std::size_t> block_index;     // block j of each entry in draws
  std::vector<std::size_t> skipped_blocks;  // single-class blocks
  std::vector<std::string> warnings;
};

/// Δ_j = EU_j(short) − EU_j(full), each evaluated against ỹ within block j only.
inline UtilityDiffSample delta_distribution(const SyntheticPopulation& pop, const AdaptiveTest& short_test,
                                            const AdaptiveTest& full_test, double w, std::size_t m = 0) {
  require(pop.rows() > 0, ErrorCode::EmptyPopulation, "population has no rows");
  check_weight(w);
  const auto a = short_test.classify_population(pop);
  const auto b = full_test.classify_population(pop);
  UtilityDiffSample out;
  out.m = m;
  out.w = w;
  for (std::size_t j = 0; j < pop.num_blocks(); ++j) {
    const auto blk = pop.block(j);
    std::span<const std::uint8_t> truth(pop.y_tilde.data() + blk.begin, blk.size());
    const auto ca = confusion(std::span(a.data() + blk.begin, blk.size()), truth);
    if (!ca.both_classes()) {
      out.skipped_blocks.push_back(j);
      out.warnings.push_back("block " + std::to_string(j) + " has a single class; skipped");
      continue;
    }
    const auto cb = confusion(std::span(b.data() + blk.begin, blk.size()), truth);
    const auto ra = ca.rates();
    const auto rb = cb.rates();
    out.draws.push_back(expected_utility(ra.sensitivity, ra.specificity, w) -
                        expected_utility(rb.sensitivity, rb.specificity, w));
    out.block_index.push_back(j);
  }
  return out;
}

// ---- summaries ---------------------------------------------------------------

/// Linear-interpolation sample quantile (Hyndman & Fan type 7).
inline double quantile(std::vector<double> values, double q) {
  require(!values.empty(), ErrorCode::InvalidArgument, "quantile of an empty sample");
  require(q >= 0.0 && q <= 1.0, ErrorCode::InvalidArgument, "quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

struct BoxStats {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  double whisker_low = 0.0, whisker_high = 0.0;  // extreme points within 1.5·IQR of the box
  std::vector<double> outliers;
  std::size_t count = 0;
};

inline BoxStats box_stats(const std::vector<double>& values) {
  BoxStats b;
  b.count = values.size();
  b.q1 = quantile(values, 0.25);
  b.median = quantile(values, 0.5);
  b.q3 = quantile(values, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr;
  const double hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_low = b.q1;
  b.whisker_high = b.q3;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      b.outliers.push_back(v);
      continue;
    }
    b.whisker_low = std::min(b.whisker_low, v);
    b.whisker_high = std::max(b.whisker_high, v);
  }
  std::sort(b.outliers.begin(), b.outliers.end());
  return b;
}

// ---- designing shortened tests -------------------------------------------------

enum class TreeMethod { RegressionCutoff, ClassifyOutcome, ClassifyUtilityLabel };

inline std::string method_name(TreeMethod m) {
  switch (m) {
    case TreeMethod::RegressionCutoff: return "regression";
    case TreeMethod::ClassifyOutcome: return "classify-outcome";
    case TreeMethod::ClassifyUtilityLabel: return "classify-utility";
  }
  return "?";
}

inline TreeMethod parse_method(const std::string& name) {
  if (name == "regression") return TreeMethod::RegressionCutoff;
  if (name == "classify-outcome") return TreeMethod::ClassifyOutcome;
  if (name == "classify-utility") return TreeMethod::ClassifyUtilityLabel;
  fail(ErrorCode::InvalidConfig, "unknown tree method '" + name + "'");
}

/// Scores above this are class 1 for a classification tree (leaf majority).
inline const double kMajorityThreshold = std::nextafter(0.5, 1.0);

struct DesignConfig {
  std::size_t m = 3;
  ConstraintKind kind = ConstraintKind::MaxIpp;
  TreeMethod method = TreeMethod::RegressionCutoff;
  double w = 0.5;
  std::size_t min_node = 25;
  std::optional<double> prune_threshold;  // default_prune_threshold(m) when unset
  std::size_t patience = kDefaultPatience;
};

struct DesignedTest {
  AdaptiveTest test;
  SubtreeSequence sequence;
  std::vector<double> holdout_rmse;
  std::size_t selected = 0;
};

namespace detail {

inline std::vector<double> tree_targets(const SyntheticPopulation& pop, TreeMethod method, double w, double base_rate) {
  switch (method) {
    case TreeMethod::RegressionCutoff: return pop.e_bar;
    case TreeMethod::ClassifyOutcome: return {pop.y_tilde.begin(), pop.y_tilde.end()};
    case TreeMethod::ClassifyUtilityLabel: {
      const auto labels = utility_class_labels(pop.e_bar, w, base_rate);
      return {labels.begin(), labels.end()};
    }
  }
  return {};
}

}  // namespace detail

/// Grows on the pooled population, prunes against the reservoir, then sets the
/// cutoff. Classification trees are squared-error trees on 0/1 targets (Gini
/// and squared error pick the same binary splits) read off by leaf majority.
/// Utility labels use the pooled base rate for both population and reservoir.
inline DesignedTest design_short_test(const SyntheticPopulation& pop, const SyntheticPopulation& reservoir,
                                      const DesignConfig& cfg) {
  require(pop.rows() > 0, ErrorCode::EmptyPopulation, "population has no rows");
  require(reservoir.rows() > 0, ErrorCode::EmptyHoldout, "pruning reservoir has no rows");
  require(cfg.m >= 1, ErrorCode::InvalidConfig, "test length m must be at least 1");
  check_weight(cfg.w);
  const double base_rate = pop.base_rate();
  const auto target = detail::tree_targets(pop, cfg.method, cfg.w, base_rate);
  const auto holdout_target = detail::tree_targets(reservoir, cfg.method, cfg.w, base_rate);

  GrowConfig gc;
  gc.constraint = {cfg.kind, cfg.m};
  gc.min_node = cfg.min_node;
  gc.seed = pop.seed;
  DesignedTest out;
  out.sequence = grow(pop.x, target, pop.item_ids(), gc);
  const double thr = cfg.prune_threshold.value_or(default_prune_threshold(cfg.m));
  auto pruned = prune(out.sequence, reservoir.x, holdout_target, thr, cfg.patience);
  out.holdout_rmse = std::move(pruned.rmse);
  out.selected = pruned.selected;

  if (cfg.method == TreeMethod::RegressionCutoff) {
    out.test = build_short_test(pop, pruned.tree, cfg.w);
  } else {
    out.test.scorer = ScorerKind::Tree;
    out.test.tree = std::move(pruned.tree);
    out.test.w = cfg.w;
    out.test.threshold = kMajorityThreshold;
    const auto pred = out.test.classify_population(pop);
    const auto r = confusion(pred, pop.y_tilde).rates();
    out.test.calibration = {kMajorityThreshold, expected_utility(r.sensitivity, r.specificity, cfg.w), r.sensitivity,
                            r.specificity};
  }
  return out;
}

// ---- method comparison ---------------------------------------------------------

struct ComparisonGrid {
  std::vector<std::size_t> m_values;
  std::vector<ConstraintKind> kinds{ConstraintKind::MaxIpp};
  std::vector<TreeMethod> methods{TreeMethod::RegressionCutoff};
  std::vector<double> weights{0.5};
  std::size_t min_node = 25;
  std::string calibration_label = "GCFM + BART";

  std::size_t size() const { return m_values.size() * kinds.size() * methods.size() * weights.size(); }
};

/// Rows and truths the comparison is scored on; the pooled population when absent.
struct EvaluationSet {
  CodeMatrix x;  // item columns first
  std::vector<std::uint8_t> y;
};

struct ComparisonRow {
  std::size_t m = 0;
  TreeMethod method = TreeMethod::RegressionCutoff;
  ConstraintKind kind = ConstraintKind::MaxIpp;
  double w = 0.5;
  std::string calibration;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double utility = 0.0;
  std::size_t unique_items = 0;
  std::size_t depth = 0;
  UtilityDiffSample delta;
};

inline std::vector<ComparisonRow> compare_methods(const SyntheticPopulation& pop, const SyntheticPopulation& reservoir,
                                                  const ComparisonGrid& grid,
                                                  const std::optional<EvaluationSet>& eval = std::nullopt) {
  require(grid.size() > 0, ErrorCode::EmptyGrid, "comparison grid is empty");
  for (auto m : grid.m_values) require(m >= 1, ErrorCode::InvalidConfig, "test length m must be at least 1");
  std::vector<ComparisonRow> rows;
  for (double w : grid.weights) {
    const auto full = build_full_test(pop, w);
    for (auto m : grid.m_values) {
      for (auto kind : grid.kinds) {
        for (auto method : grid.methods) {
          DesignConfig dc;
          dc.m = m;
          dc.kind = kind;
          dc.method = method;
          dc.w = w;
          dc.min_node = grid.min_node;
          const auto designed = design_short_test(pop, reservoir, dc);
          ComparisonRow row;
          row.m = m;
          row.method = method;
          row.kind = kind;
          row.w = w;
          row.calibration = grid.calibration_label;
          row.unique_items = unique_items_per_path(*designed.test.tree);
          row.depth = depth(*designed.test.tree);
          SensSpec r;
          if (eval) {
            std::vector<double> s(eval->x.rows());
            for (std::size_t i = 0; i < s.size(); ++i) s[i] = designed.test.tree->predict(RowView(eval->x, i));
            r = empirical_sens_spec(classify(s, designed.test.threshold), eval->y);
          } else {
            r = empirical_sens_spec(designed.test.classify_population(pop), pop.y_tilde);
          }
          row.sensitivity = r.sensitivity;
          row.specificity = r.specificity;
          row.utility = expected_utility(r.sensitivity, r.specificity, w);
          row.delta = delta_distribution(pop, designed.test, full, w, m);
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

inline void write_comparison_csv(const std::vector<ComparisonRow>& rows, std::ostream& out) {
  out << "Number of Items,Tree Type,Criterion,w,Calibration Data,Sensitivity,Specificity,Utility,Median Delta,"
         "Unique Items,Depth\n";
  for (const auto& r : rows) {
    const char* type = r.method == TreeMethod::RegressionCutoff   ? "Regression + Cutoff"
                       : r.method == TreeMethod::ClassifyOutcome ? "Classification (outcome)"
                                                                 : "Classification (utility)";
    const double med = r.delta.draws.empty() ? std::nan("") : quantile(r.delta.draws, 0.5);
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%s,%s,%g,%s,%.3f,%.3f,%.3f,%.4f,%zu,%zu\n", r.m, type,
                  r.kind == ConstraintKind::MaxIpp ? "maxIPP" : "maxDepth", r.w, r.calibration.c_str(), r.sensitivity,
                  r.specificity, r.utility, med, r.unique_items, r.depth);
    out << buf;
  }
}

}  // namespace adascreen
