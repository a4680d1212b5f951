#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace adascreen;

namespace {

EnsembleTree stump(int var, double cut, double left, double right) {
  EnsembleTree t;
  t.nodes = {{var, cut, 1, 2, 0.0}, {-1, 0.0, -1, -1, left}, {-1, 0.0, -1, -1, right}};
  return t;
}

EnsembleTree constant_tree(double mu) {
  EnsembleTree t;
  t.nodes = {{-1, 0.0, -1, -1, mu}};
  return t;
}

Dataset step_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Dataset d;
  d.item_ids = {"Q1", "Q2", "Q3", "Q4", "Q5"};
  d.responses = testing_support::random_codes(n, 5, 5, gen);
  for (std::size_t r = 0; r < n; ++r) {
    d.outcomes.push_back(d.responses(r, 2) >= 4 ? 1 : 0);
    d.row_ids.push_back(std::to_string(r));
  }
  d.conditioning = CodeMatrix(n, 0);
  return d;
}

ErrorCode fit_error(const Dataset& d, const RiskConfig& cfg) {
  try {
    fit_risk_model(d, cfg);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

}  // namespace

TEST(EnsembleDraw, ZeroLeavesGiveOneHalf) {
  TreeEnsembleDraw d;
  d.trees = {constant_tree(0.0), stump(0, 2.5, 0.0, 0.0)};
  const std::vector<int> x{3, 1};
  EXPECT_DOUBLE_EQ(d.predict_prob(x), 0.5);
}

TEST(EnsembleDraw, SingleSplitByHand) {
  TreeEnsembleDraw d;
  d.trees = {stump(0, 2.0, -0.4, 0.9)};
  d.offset = 0.1;
  // Q1 = 2 routes left: Φ(0.1 - 0.4) = Φ(-0.3); Q1 = 3 routes right: Φ(1.0).
  EXPECT_NEAR(d.predict_prob(std::vector<int>{2}), 0.38208857781104733, 1e-12);
  EXPECT_NEAR(d.predict_prob(std::vector<int>{3}), 0.8413447460685429, 1e-12);
}

TEST(EnsembleDraw, ClassProbabilitiesNormalizeAndStayInside) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> mu(0.0, 3.0);
  for (int rep = 0; rep < 200; ++rep) {
    TreeEnsembleDraw d;
    for (int t = 0; t < 5; ++t) d.trees.push_back(stump(t % 3, 2.5, mu(gen), mu(gen)));
    d.offset = mu(gen) * 10;
    const std::vector<int> x{static_cast<int>(gen() % 5) + 1, static_cast<int>(gen() % 5) + 1,
                             static_cast<int>(gen() % 5) + 1};
    const auto cp = d.class_probs(x);
    EXPECT_DOUBLE_EQ(cp[0] + cp[1], 1.0);
    EXPECT_GT(cp[1], 0.0);
    EXPECT_LT(cp[1], 1.0);
  }
}

TEST(PosteriorMean, ArithmeticMeanOfDraws) {
  // Φ^{-1}(0.2) and Φ^{-1}(0.6) as offsets.
  TreeEnsembleDraw a, b;
  a.offset = normal_quantile(0.2);
  b.offset = normal_quantile(0.6);
  const RiskPosterior one({a}, {"Q1"}, {}, {});
  const RiskPosterior two({a, b}, {"Q1"}, {}, {});
  const std::vector<int> x{1};
  EXPECT_NEAR(posterior_mean_prob(one, x), one.predict_prob(0, x), 0.0);
  EXPECT_NEAR(posterior_mean_prob(two, x), 0.4, 1e-12);
}

TEST(PosteriorMean, NamedResponsesNeedEveryItem) {
  const RiskPosterior post({TreeEnsembleDraw{}}, {"Q1", "Q2"}, {}, {});
  EXPECT_EQ(response_row(post, {{"Q2", 4}, {"Q1", 2}}), (std::vector<int>{2, 4}));
  try {
    response_row(post, {{"Q1", 2}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingItem);
  }
}

TEST(FitRisk, ConfigAndDataErrors) {
  auto d = step_data(200, 1);
  RiskConfig zero;
  zero.num_trees = 0;
  EXPECT_EQ(fit_error(d, zero), ErrorCode::InvalidConfig);
  auto ones = d;
  std::fill(ones.outcomes.begin(), ones.outcomes.end(), 1);
  EXPECT_EQ(fit_error(ones, {}), ErrorCode::SingleClassOutcome);
  EXPECT_EQ(fit_error(d.subset(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}), {}),
            ErrorCode::InsufficientData);
}

class StepFit : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    RiskConfig cfg;
    cfg.burn_in = 100;
    cfg.draws = 100;
    cfg.seed = 12;
    post_ = new RiskPosterior(fit_risk_model(step_data(600, 2), cfg));
  }
  static void TearDownTestSuite() { delete post_; }
  static RiskPosterior* post_;
};
RiskPosterior* StepFit::post_ = nullptr;

TEST_F(StepFit, LearnsTheStep) {
  const auto test = step_data(500, 3);
  double mae = 0.0;
  for (std::size_t r = 0; r < test.rows(); ++r)
    mae += std::abs(posterior_mean_prob(*post_, RowView(test.responses, r)) - test.outcomes[r]);
  EXPECT_LT(mae / static_cast<double>(test.rows()), 0.15);
}

TEST_F(StepFit, DrawsAreFiniteAndReferenceDeclaredItems) {
  ASSERT_EQ(post_->num_draws(), 100u);
  for (const auto& d : post_->draws()) {
    ASSERT_EQ(d.trees.size(), 50u);
    for (const auto& t : d.trees)
      for (const auto& n : t.nodes) {
        EXPECT_TRUE(std::isfinite(n.mu));
        if (!n.is_leaf()) {
          EXPECT_LT(static_cast<std::size_t>(n.var), post_->item_ids().size());
          EXPECT_NE(n.cutpoint, std::floor(n.cutpoint));  // midpoints between codes
        }
      }
  }
}

TEST_F(StepFit, ArchiveRoundTrip) {
  testing_support::TempDir dir("risk");
  save_risk_posterior(*post_, dir / "r.json");
  const auto again = load_risk_posterior(dir / "r.json");
  ASSERT_EQ(again.num_draws(), post_->num_draws());
  for (std::size_t j = 0; j < again.num_draws(); ++j) EXPECT_EQ(again.draw(j), post_->draw(j));
  EXPECT_EQ(again.item_ids(), post_->item_ids());
  auto j = nlohmann::json::parse(read_file(dir / "r.json"));
  j["item_ids"][0] = "Z9";
  EXPECT_THROW(risk_posterior_from_json(j), Error);
}

TEST(FitRisk, SeedDeterminism) {
  RiskConfig cfg;
  cfg.num_trees = 10;
  cfg.burn_in = 10;
  cfg.draws = 5;
  cfg.seed = 77;
  const auto d = step_data(120, 5);
  const auto a = fit_risk_model(d, cfg);
  const auto b = fit_risk_model(d, cfg);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(a.draw(j), b.draw(j));
}

// Heavier leaf shrinkage pulls predictions toward the base rate.
TEST(FitRisk, ShrinkageContractsTowardBaseRate) {
  const auto d = step_data(400, 6);
  auto spread = [&](double k) {
    RiskConfig cfg;
    cfg.num_trees = 20;
    cfg.burn_in = 100;
    cfg.draws = 50;
    cfg.seed = 3;
    cfg.leaf_shrinkage = k;
    const auto post = fit_risk_model(d, cfg);
    double s = 0.0;
    for (std::size_t r = 0; r < d.rows(); ++r)
      s += std::abs(posterior_mean_prob(post, RowView(d.responses, r)) - d.base_rate());
    return s / static_cast<double>(d.rows());
  };
  EXPECT_LT(spread(40.0), spread(2.0));
}
