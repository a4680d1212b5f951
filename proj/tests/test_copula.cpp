#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "test_support.hpp"

using namespace adascreen;

namespace {

CopulaFactorParams params_with(const Eigen::MatrixXd& lam, std::vector<EmpiricalMarginal> marginals,
                               std::vector<std::string> names, std::size_t num_items) {
  auto layout = std::make_shared<CopulaLayout>();
  layout->variable_names = std::move(names);
  layout->marginals = std::move(marginals);
  layout->num_items = num_items;
  return {lam, layout};
}

EmpiricalMarginal five_levels() { return EmpiricalMarginal::from_counts({1, 2, 3, 4, 5}, {35, 25, 20, 12, 8}); }

// Largest gap between the ECDF of `col` and the marginal's CDF over its support.
double ks_distance(std::span<const Code> col, const EmpiricalMarginal& m) {
  std::map<int, double> freq;
  for (auto v : col) freq[v] += 1.0 / static_cast<double>(col.size());
  double acc = 0.0, worst = 0.0;
  for (int v : m.values) {
    acc += freq[v];
    worst = std::max(worst, std::abs(acc - m(v)));
  }
  return worst;
}

}  // namespace

TEST(EmpiricalMarginal, PseudoInverseHandTable) {
  const auto m = EmpiricalMarginal::from_counts({1, 2, 3}, {5, 3, 2});
  EXPECT_EQ(m.quantile(0.55), 2);
  // F = (0.5, 0.8, 1.0); inf{x : F(x) >= t}
  EXPECT_EQ(m.quantile(0.0), 1);
  EXPECT_EQ(m.quantile(0.5), 1);
  EXPECT_EQ(m.quantile(0.5000001), 2);
  EXPECT_EQ(m.quantile(0.8), 2);
  EXPECT_EQ(m.quantile(0.81), 3);
  EXPECT_EQ(m.quantile(1.0), 3);
  EXPECT_DOUBLE_EQ(m(2), 0.8);
  EXPECT_DOUBLE_EQ(m(0), 0.0);
  EXPECT_DOUBLE_EQ(m(2.5), 0.8);
}

TEST(EmpiricalMarginal, TransformIsMonotoneInLatent) {
  const auto m = five_levels();
  for (double s : {0.3, 1.0, 2.7}) {
    int prev = m.values.front();
    for (double z = -6.0; z <= 6.0; z += 0.01) {
      const int x = m.quantile(normal_cdf(z / s));
      EXPECT_GE(x, prev);
      prev = x;
    }
  }
}

TEST(SamplePredictive, ZeroLoadingsGiveIndependentCoordinates) {
  const auto theta = params_with(Eigen::MatrixXd::Zero(2, 1), {five_levels(), five_levels()}, {"A", "B"}, 2);
  const std::size_t n = 10000;
  const auto x = sample_predictive(theta, n, 17);
  double counts[5][5] = {};
  double ra[5] = {}, rb[5] = {};
  for (std::size_t i = 0; i < n; ++i) {
    counts[x(i, 0) - 1][x(i, 1) - 1] += 1;
    ra[x(i, 0) - 1] += 1;
    rb[x(i, 1) - 1] += 1;
  }
  double chi2 = 0.0;
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      const double e = ra[a] * rb[b] / static_cast<double>(n);
      chi2 += (counts[a][b] - e) * (counts[a][b] - e) / e;
    }
  // 16 degrees of freedom; 99.9th percentile is 39.25.
  EXPECT_LT(chi2, 39.25);
}

TEST(SamplePredictive, ZeroLoadingRowReproducesMarginal) {
  Eigen::MatrixXd lam(3, 2);
  lam << 0.9, 0.0, 0.0, 0.0, 0.4, 1.3;
  const auto theta = params_with(lam, {five_levels(), five_levels(), five_levels()}, {"A", "B", "C"}, 3);
  const auto x = sample_predictive(theta, 10000, 3);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_LE(ks_distance(x.column(r), five_levels()), 0.05) << r;
}

TEST(SamplePredictive, SupportClosureAndDeterminism) {
  Eigen::MatrixXd lam(2, 1);
  lam << 1.5, -0.7;
  const auto sparse = EmpiricalMarginal::from_counts({2, 5, 9}, {1, 1, 1});
  const auto theta = params_with(lam, {sparse, five_levels()}, {"A", "B"}, 2);
  const auto a = sample_predictive(theta, 5000, 99);
  const auto b = sample_predictive(theta, 5000, 99);
  for (std::size_t i = 0; i < 5000; ++i) {
    EXPECT_GE(sparse.level_of(a(i, 0)), 0);
    EXPECT_GE(five_levels().level_of(a(i, 1)), 0);
    ASSERT_EQ(a.row(i), b.row(i));
  }
  EXPECT_THROW(sample_predictive(theta, 0, 1), Error);
}

TEST(SampleConditional, AlwaysTrueMatchesPredictive) {
  Eigen::MatrixXd lam(2, 1);
  lam << 0.8, 0.5;
  const auto theta = params_with(lam, {five_levels(), five_levels()}, {"Q1", "age"}, 1);
  const auto plain = sample_predictive(theta, 500, 5);
  const auto cond = sample_conditional(theta, Predicate{}, 500, 5);
  EXPECT_EQ(cond.proposals, 500u);
  for (std::size_t i = 0; i < 500; ++i) ASSERT_EQ(plain.row(i), cond.rows.row(i));
}

TEST(SampleConditional, ProposalCountMatchesAcceptanceRate) {
  // 20% of age mass is at 15 or above.
  const auto age = EmpiricalMarginal::from_counts({12, 13, 14, 15, 16}, {30, 30, 20, 10, 10});
  Eigen::MatrixXd lam(2, 1);
  lam << 0.7, 0.6;
  const auto theta = params_with(lam, {five_levels(), age}, {"Q1", "age"}, 1);
  const std::size_t n = 1000;
  const auto s = sample_conditional(theta, Predicate::parse("age>=15"), n, 8);
  for (std::size_t i = 0; i < n; ++i) ASSERT_GE(s.rows(i, 1), 15);
  // Proposals ~ negative binomial with mean n/p and sd sqrt(n(1-p))/p.
  const double p = 0.2, mean = n / p, sd = std::sqrt(n * (1 - p)) / p;
  EXPECT_NEAR(static_cast<double>(s.proposals), mean, 3 * sd);
}

TEST(SampleConditional, Errors) {
  const auto age = EmpiricalMarginal::from_counts({10, 19}, {999, 1});
  const auto theta = params_with(Eigen::MatrixXd::Zero(2, 1), {five_levels(), age}, {"Q1", "age"}, 1);
  auto code = [&](const Predicate& pred) {
    try {
      sample_conditional(theta, pred, 100, 1);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  EXPECT_EQ(code(Predicate::parse("height>=3")), ErrorCode::UnknownConditioningVar);
  EXPECT_EQ(code(Predicate::parse("Q1>=3")), ErrorCode::UnknownConditioningVar);
  EXPECT_EQ(code(Predicate::parse("age>=19")), ErrorCode::AcceptanceTooLow);
  EXPECT_THROW(Predicate::parse("age>>"), Error);
  EXPECT_EQ(Predicate::parse(" age >= 15 , age<18").to_string(), "age>=15,age<18");
}

class FittedCopula : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    Eigen::MatrixXd lam(6, 1);
    lam << 1.2, 1.0, 0.8, 0.6, 0.3, 0.0;
    std::vector<EmpiricalMarginal> ms(6, five_levels());
    truth_ = new CopulaFactorParams(params_with(lam, ms, {"A", "B", "C", "D", "E", "F"}, 6));
    const auto data = sample_predictive(*truth_, 800, 21);
    post_ = new CopulaPosterior(fit_gcfm(data, truth_->layout->variable_names, 6, 1, McmcConfig{300, 1, 300, 4}));
  }
  static void TearDownTestSuite() {
    delete truth_;
    delete post_;
  }
  static CopulaFactorParams* truth_;
  static CopulaPosterior* post_;
};
CopulaFactorParams* FittedCopula::truth_ = nullptr;
CopulaPosterior* FittedCopula::post_ = nullptr;

TEST_F(FittedCopula, RecoversImpliedCorrelation) {
  const Eigen::MatrixXd err = (post_->mean_implied_correlation() - truth_->implied_correlation()).cwiseAbs();
  EXPECT_LT(err.maxCoeff(), 0.15);
}

TEST_F(FittedCopula, DrawsAreIdentifiedAndPositiveDefinite) {
  ASSERT_EQ(post_->size(), 300u);
  for (const auto& d : post_->draws) {
    EXPECT_GE(d.loadings(0, 0), 0.0);
    const Eigen::LLT<Eigen::MatrixXd> llt(d.implied_covariance());
    EXPECT_EQ(llt.info(), Eigen::Success);
  }
  EXPECT_EQ(post_->diagnostics.loading_norm_trace.size(), 300u);
}

TEST_F(FittedCopula, ArchiveRoundTripAndTamperCheck) {
  testing_support::TempDir dir("copula");
  save_copula_posterior(*post_, dir / "c.json");
  const auto again = load_copula_posterior(dir / "c.json");
  ASSERT_EQ(again.size(), post_->size());
  for (std::size_t j = 0; j < again.size(); ++j) EXPECT_EQ(again.draws[j].loadings, post_->draws[j].loadings);
  EXPECT_EQ(again.layout().variable_names, post_->layout().variable_names);
  EXPECT_EQ(file_hash(dir / "c.json"), content_hash(read_file(dir / "c.json")));

  auto j = nlohmann::json::parse(read_file(dir / "c.json"));
  j["draws"][0][0] = 42.0;
  EXPECT_THROW(copula_posterior_from_json(j), Error);
}

TEST(FitGcfm, RejectsBadInputs) {
  std::mt19937_64 gen(1);
  const auto x = testing_support::random_codes(100, 3, 4, gen);
  const std::vector<std::string> names{"A", "B", "C"};
  auto code = [&](const CodeMatrix& data, std::size_t k) {
    try {
      fit_gcfm(data, names, 3, k, McmcConfig{5, 1, 5, 1});
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  EXPECT_EQ(code(x, 0), ErrorCode::InvalidFactorDim);
  auto constant = x;
  for (std::size_t r = 0; r < constant.rows(); ++r) constant(r, 1) = 2;
  EXPECT_EQ(code(constant, 1), ErrorCode::DegenerateMarginal);
  EXPECT_EQ(code(testing_support::random_codes(15, 3, 4, gen), 2), ErrorCode::InsufficientData);
}

TEST(FitGcfm, SameSeedSameChain) {
  std::mt19937_64 gen(2);
  const auto x = testing_support::random_codes(60, 3, 4, gen);
  const auto a = fit_gcfm(x, {"A", "B", "C"}, 3, 2, McmcConfig{20, 2, 10, 7});
  const auto b = fit_gcfm(x, {"A", "B", "C"}, 3, 2, McmcConfig{20, 2, 10, 7});
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_EQ(a.draws[j].loadings, b.draws[j].loadings);
  for (const auto& d : a.draws) EXPECT_EQ(d.loadings(0, 1), 0.0);  // lower triangular
}
