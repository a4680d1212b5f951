#pragma once

// Simulated screening studies with a known data-generating process: item
// responses from a Gaussian copula factor model with fixed loadings and level
// probabilities, and a logistic at-risk probability driven by a few items.

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adascreen/copula_factor.hpp"
#include "adascreen/item_model.hpp"
#include "adascreen/rng.hpp"

namespace adascreen {

struct StudyDesign {
  std::size_t num_items = 30;
  std::size_t num_factors = 3;
  std::vector<double> level_probs{0.35, 0.25, 0.2, 0.12, 0.08};  // codes 1..L
  std::vector<std::size_t> risk_items{0, 1, 2};
  std::vector<double> risk_coef{0.9, 0.7, 0.5};  // per code step above the lowest level
  double risk_intercept = -2.2;
  bool with_age = true;
  int age_min = 10;
  int age_max = 19;
  double loading_low = 0.3;
  double loading_high = 0.9;
  std::uint64_t seed = 7;
};

/// The known truth behind a simulated study.
class StudyTruth {
 public:
  explicit StudyTruth(StudyDesign design) : design_(std::move(design)) {
    const auto& d = design_;
    require(d.num_items >= 1 && d.num_factors >= 1, ErrorCode::InvalidConfig, "study needs items and factors");
    require(d.level_probs.size() >= 2, ErrorCode::InvalidConfig, "items need at least two levels");
    require(d.risk_items.size() == d.risk_coef.size(), ErrorCode::InvalidConfig, "one coefficient per risk item");
    for (auto i : d.risk_items) require(i < d.num_items, ErrorCode::InvalidConfig, "risk item out of range");

    auto layout = std::make_shared<CopulaLayout>();
    std::vector<int> codes;
    std::vector<std::size_t> counts;
    for (std::size_t l = 0; l < d.level_probs.size(); ++l) {
      codes.push_back(static_cast<int>(l + 1));
      counts.push_back(static_cast<std::size_t>(std::llround(d.level_probs[l] * 1e6)));
    }
    for (std::size_t i = 0; i < d.num_items; ++i) {
      layout->variable_names.push_back(item_id(i));
      layout->marginals.push_back(EmpiricalMarginal::from_counts(codes, counts));
    }
    layout->num_items = d.num_items;
    if (d.with_age) {
      std::vector<int> ages;
      std::vector<std::size_t> ones;
      for (int a = d.age_min; a <= d.age_max; ++a) {
        ages.push_back(a);
        ones.push_back(1);
      }
      layout->variable_names.push_back("age");
      layout->marginals.push_back(EmpiricalMarginal::from_counts(ages, ones));
    }

    // Each variable loads mainly on one factor; age loads on the first.
    Rng rng(derive_seed(d.seed, stream_tag::simulation, 0));
    const auto p = static_cast<Eigen::Index>(layout->num_vars());
    const auto k = static_cast<Eigen::Index>(d.num_factors);
    Eigen::MatrixXd lam = Eigen::MatrixXd::Zero(p, k);
    for (Eigen::Index r = 0; r < p; ++r) {
      const Eigen::Index main = r < static_cast<Eigen::Index>(d.num_items) ? r % k : 0;
      for (Eigen::Index c = 0; c < k; ++c) {
        const double u = uniform01(rng);
        lam(r, c) = c == main ? d.loading_low + (d.loading_high - d.loading_low) * u : 0.3 * (u - 0.5);
      }
    }
    params_.loadings = lam;
    params_.layout = layout;
  }

  static std::string item_id(std::size_t i) { return "Q" + std::to_string(i + 1); }

  const StudyDesign& design() const { return design_; }
  const CopulaFactorParams& params() const { return params_; }
  const CopulaLayout& layout() const { return *params_.layout; }

  std::vector<std::string> item_ids() const {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < design_.num_items; ++i) ids.push_back(item_id(i));
    return ids;
  }

  ItemBank bank() const {
    std::vector<ItemDef> items;
    for (std::size_t i = 0; i < design_.num_items; ++i) {
      ItemDef def;
      def.id = item_id(i);
      def.text = "Simulated question " + std::to_string(i + 1);
      for (std::size_t l = 0; l < design_.level_probs.size(); ++l)
        def.levels.push_back({static_cast<int>(l + 1), "level " + std::to_string(l + 1)});
      items.push_back(std::move(def));
    }
    std::vector<ConditioningVar> cond;
    if (design_.with_age) cond.push_back({"age", "integer"});
    return ItemBank(std::move(items), {}, std::move(cond), std::max(kDefaultMaxLevels, design_.level_probs.size()));
  }

  /// True Pr(Y = 1 | x); x is indexed by item column.
  template <class Row>
  double risk(const Row& x) const {
    double eta = design_.risk_intercept;
    for (std::size_t i = 0; i < design_.risk_items.size(); ++i)
      eta += design_.risk_coef[i] * (static_cast<double>(x[design_.risk_items[i]]) - 1.0);
    return 1.0 / (1.0 + std::exp(-eta));
  }

  /// n complete-case rows with Y ~ Bernoulli(risk(x)).
  Dataset sample(std::size_t n, std::uint64_t seed) const {
    const CodeMatrix all = sample_predictive(params_, n, derive_seed(seed, stream_tag::simulation, 1));
    Rng rng(derive_seed(seed, stream_tag::simulation, 2));
    Dataset data;
    data.item_ids = item_ids();
    data.responses = CodeMatrix(n, design_.num_items);
    if (design_.with_age) data.conditioning_names = {"age"};
    data.conditioning = CodeMatrix(n, data.conditioning_names.size());
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < design_.num_items; ++c) data.responses(r, c) = all(r, c);
      if (design_.with_age) data.conditioning(r, 0) = all(r, design_.num_items);
      data.outcomes.push_back(uniform01(rng) < risk(RowView(all, r)) ? 1 : 0);
      data.row_ids.push_back("s" + std::to_string(r + 1));
    }
    return data;
  }

 private:
  StudyDesign design_;
  CopulaFactorParams params_;
};

/// A risk model whose every draw is the known truth.
struct OracleRiskModel {
  const StudyTruth* truth = nullptr;
  std::size_t draws = 1;

  std::size_t num_draws() const { return draws; }
  template <class Row>
  double predict_prob(std::size_t, const Row& x) const {
    return truth->risk(x);
  }
};

/// A copula "posterior" whose every draw is the known truth.
inline CopulaPosterior oracle_copula_posterior(const StudyTruth& truth, std::size_t draws) {
  CopulaPosterior post;
  post.draws.assign(draws, truth.params());
  post.config.draws = draws;
  return post;
}

}  // namespace adascreen
