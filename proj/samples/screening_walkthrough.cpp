// Small end-to-end run on a simulated study: fit both models, synthesize a
// population, design a 3-item adaptive test and score it on fresh data.

#include <cstdio>

#include "adascreen/adascreen.hpp"

using namespace adascreen;

int main() {
  StudyDesign design;
  design.num_items = 12;
  design.risk_intercept = -3.5;
  const StudyTruth truth(design);
  const Dataset train = truth.sample(1500, 11);
  const Dataset test = truth.sample(1500, 12);
  std::printf("training rows %zu, base rate %.3f\n", train.rows(), train.base_rate());

  const auto copula = fit_gcfm(train, 3, McmcConfig{150, 1, 100, 5});
  const auto risk = fit_risk_model(train, RiskConfig{.num_trees = 30, .burn_in = 150, .draws = 100, .seed = 6});

  PopulationConfig pc;
  pc.block_size = 200;
  pc.draws = 100;
  pc.seed = 9;
  const auto pop = generate_population(copula, risk, pc);
  const auto reservoir = generate_pruning_reservoir(copula, risk, 10000, pc);

  DesignConfig dc;
  dc.m = 3;
  dc.w = 0.5;
  const auto designed = design_short_test(pop, reservoir, dc);
  const auto& tree = *designed.test.tree;
  std::printf("tree: %zu leaves, depth %zu, %zu items per path, threshold %.3f\n", tree.num_leaves(), depth(tree),
              unique_items_per_path(tree), designed.test.threshold);

  std::vector<double> scores(test.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) scores[i] = tree.predict(RowView(test.responses, i));
  const auto rates = empirical_sens_spec(classify(scores, designed.test.threshold), test.outcomes);
  std::printf("holdout sensitivity %.3f, specificity %.3f, utility %.3f\n", rates.sensitivity, rates.specificity,
              expected_utility(rates.sensitivity, rates.specificity, 0.5));
  return 0;
}
