#include <gtest/gtest.h>

#include <map>
#include <set>

#include "test_support.hpp"

using namespace adascreen;
using testing_support::example_tree;
using testing_support::random_codes;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

// Every (Q1, Q2) in {1,2,3} x {1..4} repeated `reps` times with a noise item Q3,
// targets from the four-leaf example tree.
struct GridData {
  CodeMatrix x;
  std::vector<double> y;
};

GridData example_grid(std::size_t reps) {
  const auto tree = example_tree();
  std::mt19937_64 gen(5);
  GridData g;
  g.x = CodeMatrix(12 * reps, 3);
  std::size_t k = 0;
  for (std::size_t r = 0; r < reps; ++r)
    for (int a = 1; a <= 3; ++a)
      for (int b = 1; b <= 4; ++b) {
        g.x(k, 0) = static_cast<Code>(a);
        g.x(k, 1) = static_cast<Code>(b);
        g.x(k, 2) = static_cast<Code>(1 + gen() % 4);
        g.y.push_back(tree.predict(std::vector<int>{a, b}));
        ++k;
      }
  return g;
}

std::set<int> path_items(const RegressionTree& t, std::size_t leaf) {
  // Parent links recovered by a scan.
  std::vector<int> parent(t.nodes.size(), -1);
  for (std::size_t v = 0; v < t.nodes.size(); ++v)
    if (!t.nodes[v].is_leaf()) parent[static_cast<std::size_t>(t.nodes[v].left)] = parent[static_cast<std::size_t>(t.nodes[v].right)] = static_cast<int>(v);
  std::set<int> items;
  for (int v = parent[leaf]; v >= 0; v = parent[static_cast<std::size_t>(v)]) items.insert(t.nodes[static_cast<std::size_t>(v)].item);
  return items;
}

}  // namespace

TEST(ExampleTree, PredictsRightmostLeaf) {
  const auto t = example_tree();
  EXPECT_DOUBLE_EQ(predict(t, std::map<std::string, int>{{"Q1", 3}, {"Q2", 4}}), 0.79);
  EXPECT_DOUBLE_EQ(t.predict(std::vector<int>{3, 4}), 0.79);
  EXPECT_DOUBLE_EQ(t.predict(std::vector<int>{1, 4}), 0.08);
  EXPECT_DOUBLE_EQ(t.predict(std::vector<int>{2, 4}), 0.55);
  EXPECT_DOUBLE_EQ(t.predict(std::vector<int>{3, 2}), 0.30);
  EXPECT_EQ(code_of([&] { predict(t, std::map<std::string, int>{{"Q1", 3}}); }), ErrorCode::MissingItem);
  // Q1 = 1 never needs Q2.
  EXPECT_DOUBLE_EQ(predict(t, std::map<std::string, int>{{"Q1", 1}}), 0.08);
}

TEST(ExampleTree, PathStatistics) {
  const auto t = example_tree();
  EXPECT_EQ(unique_items_per_path(t), 2u);
  EXPECT_EQ(depth(t), 3u);
  EXPECT_EQ(t.num_internal(), 3u);
  EXPECT_EQ(t.num_leaves(), 4u);
}

TEST(TreeStats, RootOnlyTree) {
  RegressionTree t;
  t.nodes = {TreeNode{}};
  t.nodes[0].value = 0.5;
  EXPECT_EQ(unique_items_per_path(t), 0u);
  EXPECT_EQ(depth(t), 0u);
  EXPECT_DOUBLE_EQ(t.predict(std::vector<int>{1, 2, 3}), 0.5);
}

TEST(Grow, MaxIppTwoResplitsLikeExampleTree) {
  const auto g = example_grid(10);
  const auto seq = grow(g.x, g.y, std::vector<std::string>{"Q1", "Q2", "Q3"}, {Constraint::max_ipp(2), 5});
  const auto& t = seq.full;
  EXPECT_EQ(unique_items_per_path(t), 2u);
  EXPECT_EQ(depth(t), 3u);
  EXPECT_EQ(t.num_leaves(), 4u);
  for (std::size_t r = 0; r < g.x.rows(); ++r) ASSERT_NEAR(t.predict(RowView(g.x, r)), g.y[r], 1e-12);
  // Q1 is split on twice along the deepest path.
  int q1_splits = 0;
  for (const auto& n : t.nodes) q1_splits += !n.is_leaf() && t.item_ids[static_cast<std::size_t>(n.item)] == "Q1";
  EXPECT_EQ(q1_splits, 2);
}

TEST(Grow, ErrorCases) {
  std::mt19937_64 gen(1);
  const auto x1 = random_codes(1, 2, 3, gen);
  EXPECT_EQ(code_of([&] { grow(x1, std::vector<double>{0.5}, 2, {Constraint::none(), 1}); }),
            ErrorCode::InsufficientData);
  EXPECT_EQ(code_of([&] { grow(CodeMatrix(0, 2), std::vector<double>{}, 2, {}); }), ErrorCode::EmptyData);
  const auto x = random_codes(40, 2, 3, gen);
  std::vector<double> y(40, 0.5);
  EXPECT_EQ(code_of([&] { grow(x, y, 2, {Constraint::none(), 40}); }), ErrorCode::InsufficientData);
  y[3] = 1.5;
  EXPECT_EQ(code_of([&] { grow(x, y, 2, {Constraint::none(), 5}); }), ErrorCode::InvalidArgument);
}

TEST(Grow, LeafValuesAreRoutedTargetMeans) {
  std::mt19937_64 gen(8);
  const auto x = random_codes(600, 4, 5, gen);
  std::vector<double> y(600);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : y) v = u(gen);
  const auto seq = grow(x, y, 4, {Constraint::max_ipp(2), 10});
  for (std::size_t s : {std::size_t{0}, seq.steps / 2, seq.steps}) {
    const auto t = seq.subtree(s);
    std::map<std::size_t, std::pair<double, std::size_t>> acc;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto& a = acc[t.leaf_index(RowView(x, r))];
      a.first += y[r];
      ++a.second;
    }
    for (const auto& [leaf, a] : acc) {
      EXPECT_NEAR(t.nodes[leaf].value, a.first / static_cast<double>(a.second), 1e-12);
      EXPECT_EQ(t.nodes[leaf].count, a.second);
    }
    EXPECT_EQ(acc.size(), t.num_leaves());
  }
}

TEST(Grow, InvariantsOnRandomData) {
  std::mt19937_64 gen(3);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t p = 2 + gen() % 8, n = 100 + gen() % 400;
    const int levels = 2 + static_cast<int>(gen() % 5);
    const auto x = random_codes(n, p, levels, gen);
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) y[r] = std::min(1.0, 0.1 * x(r, 0) + 0.05 * x(r, p - 1) + 0.02 * (gen() % 3));
    const std::size_t m = 1 + gen() % 3;
    const std::size_t min_node = 1 + gen() % 15;
    const auto seq = grow(x, y, p, {Constraint::max_ipp(m), min_node});
    const auto& t = seq.full;
    EXPECT_LE(unique_items_per_path(t), m);
    for (std::size_t v = 0; v < t.nodes.size(); ++v) {
      const auto& nd = t.nodes[v];
      EXPECT_GE(nd.value, 0.0);
      EXPECT_LE(nd.value, 1.0);
      if (nd.is_leaf()) {
        EXPECT_GE(nd.count, min_node);
        continue;
      }
      // Cutpoints sit strictly between adjacent codes.
      EXPECT_GT(nd.cutpoint, 1.0);
      EXPECT_LT(nd.cutpoint, static_cast<double>(levels));
      EXPECT_EQ(nd.cutpoint - std::floor(nd.cutpoint), 0.5);
      EXPECT_LE(path_items(t, static_cast<std::size_t>(nd.left)).size(), m);
    }
    // Every code-grid point (restricted to small grids) reaches exactly one leaf.
    std::vector<int> probe(p, 1);
    for (int a = 1; a <= levels; ++a)
      for (int b = 1; b <= levels; ++b) {
        probe[0] = a;
        probe[p - 1] = b;
        EXPECT_TRUE(t.nodes[t.leaf_index(probe)].is_leaf());
      }
  }
}

TEST(Grow, MaxDepthBoundsDepth) {
  std::mt19937_64 gen(4);
  const auto x = random_codes(500, 5, 5, gen);
  std::vector<double> y(500);
  for (std::size_t r = 0; r < 500; ++r) y[r] = (x(r, 0) + x(r, 1) + x(r, 2)) / 15.0;
  for (std::size_t d = 1; d <= 4; ++d) EXPECT_LE(depth(grow(x, y, 5, {Constraint::max_depth(d), 5}).full), d);
}

TEST(Grow, LargeMaxIppEqualsUnconstrained) {
  std::mt19937_64 gen(6);
  const auto x = random_codes(400, 4, 4, gen);
  std::vector<double> y(400);
  for (std::size_t r = 0; r < 400; ++r) y[r] = (x(r, 0) * x(r, 3)) / 16.0;
  const auto free = grow(x, y, 4, {Constraint::none(), 5});
  for (std::size_t m : {4, 5, 9}) {
    const auto seq = grow(x, y, 4, {Constraint::max_ipp(m), 5});
    EXPECT_EQ(seq.full.nodes, free.full.nodes) << m;
    EXPECT_EQ(seq.split_index, free.split_index) << m;
  }
}

TEST(SubtreeSequence, NestedAndEndsAtFullTree) {
  std::mt19937_64 gen(9);
  const auto x = random_codes(300, 3, 5, gen);
  std::vector<double> y(300);
  for (std::size_t r = 0; r < 300; ++r) y[r] = (x(r, 0) + x(r, 1)) / 10.0;
  const auto seq = grow(x, y, 3, {Constraint::max_ipp(2), 5});
  EXPECT_EQ(seq.subtree(0).nodes.size(), 1u);
  EXPECT_EQ(seq.subtree(seq.steps), seq.full);
  for (std::size_t s = 1; s <= seq.steps; ++s) {
    for (std::size_t v = 0; v < seq.full.nodes.size(); ++v)
      if (seq.internal_in(v, s - 1)) {
        EXPECT_TRUE(seq.internal_in(v, s));
      }
    EXPECT_GT(seq.subtree(s).num_leaves(), seq.subtree(s - 1).num_leaves());
  }
}

TEST(HoldoutRmse, MatchesDirectEvaluation) {
  std::mt19937_64 gen(10);
  const auto x = random_codes(300, 3, 5, gen);
  std::vector<double> y(300);
  for (std::size_t r = 0; r < 300; ++r) y[r] = (x(r, 0) + x(r, 2)) / 10.0;
  const auto seq = grow(x, y, 3, {Constraint::max_ipp(3), 5});
  const auto hx = random_codes(200, 3, 5, gen);
  std::vector<double> hy(200);
  for (std::size_t r = 0; r < 200; ++r) hy[r] = (hx(r, 0) + hx(r, 2)) / 10.0 + 0.01 * (r % 3);
  const auto rmse = holdout_rmse_sequence(seq, hx, hy);
  ASSERT_EQ(rmse.size(), seq.size());
  for (std::size_t s = 0; s < seq.size(); ++s) {
    const auto t = seq.subtree(s);
    double sse = 0.0;
    for (std::size_t r = 0; r < 200; ++r) sse += std::pow(hy[r] - t.predict(RowView(hx, r)), 2);
    EXPECT_NEAR(rmse[s], std::sqrt(sse / 200.0), 1e-12) << s;
  }
  EXPECT_EQ(code_of([&] { holdout_rmse_sequence(seq, CodeMatrix(0, 3), std::vector<double>{}); }),
            ErrorCode::EmptyHoldout);
}

TEST(Prune, DefaultThresholds) {
  for (std::size_t m = 1; m < 5; ++m) EXPECT_EQ(default_prune_threshold(m), 1e-4);
  for (std::size_t m = 5; m <= 15; ++m) EXPECT_EQ(default_prune_threshold(m), 1e-5);
}

TEST(Prune, SingleElementSequence) {
  EXPECT_EQ(select_by_rmse_plateau(std::vector<double>{0.3}, 1e-4), 0u);
}

TEST(Prune, MonotoneImprovementKeepsDeepest) {
  std::vector<double> rmse;
  for (int s = 0; s < 30; ++s) rmse.push_back(0.5 - 0.001 * s);
  EXPECT_EQ(select_by_rmse_plateau(rmse, 1e-4), 29u);
}

TEST(Prune, PlateauReturnsLastGoodSubtree) {
  // Steps 1..4 improve, then 10 flat steps.
  std::vector<double> rmse{0.5, 0.4, 0.35, 0.33, 0.32};
  for (int i = 0; i < 10; ++i) rmse.push_back(0.32 - 1e-6 * i);
  EXPECT_EQ(select_by_rmse_plateau(rmse, 1e-4), 4u);
  // Nine misses then a hit resets the count.
  rmse.resize(14);
  rmse.push_back(0.2);
  EXPECT_EQ(select_by_rmse_plateau(rmse, 1e-4), 14u);
  // A reduction exactly at the threshold is a miss.
  EXPECT_EQ(select_by_rmse_plateau(std::vector<double>{1.0, 0.5, 0.5, 0.5}, 0.0, 2), 1u);
}

TEST(Export, ExampleTreeDocument) {
  const auto t = example_tree();
  const auto bank = testing_support::q_bank(5);
  DeploymentProvenance prov;
  prov.population_hash = "abc";
  prov.w = 0.5;
  const auto doc = export_tree(t, bank, 0.5, prov);
  EXPECT_EQ(doc["format"], "adaptive-test/v1");
  EXPECT_EQ(doc["items"].size(), 2u);
  std::size_t internal = 0, leaves = 0;
  for (const auto& n : doc["nodes"]) (n.contains("leaf_prob") ? leaves : internal)++;
  EXPECT_EQ(internal, 3u);
  EXPECT_EQ(leaves, 4u);
  EXPECT_EQ(doc["maxipp"], 2);
  EXPECT_EQ(doc["depth"], 3);
  EXPECT_EQ(doc["items"][0]["levels"].size(), 5u);
  EXPECT_EQ(doc["provenance"]["population_hash"], "abc");

  const auto back = import_tree(doc);
  EXPECT_TRUE(structurally_equal(back.tree, t));
  EXPECT_EQ(back.threshold, 0.5);
  EXPECT_EQ(back.maxipp, 2u);
}

TEST(Export, UnknownItemAndTampering) {
  auto t = example_tree();
  t.item_ids[1] = "Z7";
  EXPECT_EQ(code_of([&] { export_tree(t, testing_support::q_bank(3), 0.5); }), ErrorCode::UnknownItem);
  auto doc = export_tree(example_tree(), testing_support::q_bank(3), 0.5);
  doc["nodes"][6]["leaf_prob"] = 0.99;
  EXPECT_EQ(code_of([&] { import_tree(doc); }), ErrorCode::SchemaViolation);
}

TEST(Export, FileRoundTripOfGrownTrees) {
  testing_support::TempDir dir("export");
  std::mt19937_64 gen(12);
  const auto bank = testing_support::q_bank(6);
  for (int rep = 0; rep < 10; ++rep) {
    const auto x = random_codes(300, 6, 5, gen);
    std::vector<double> y(300);
    for (std::size_t r = 0; r < 300; ++r) y[r] = (x(r, rep % 6) + x(r, 5)) / 10.0;
    const auto t = grow(x, y, bank.splitting_ids(), {Constraint::max_ipp(1 + rep % 4), 10}).full;
    export_tree(t, bank, 0.37, dir / "t.json");
    const auto back = import_tree(dir / "t.json");
    EXPECT_TRUE(structurally_equal(back.tree, t));
    const auto rebound = rebind_items(back.tree, bank.splitting_ids());
    for (std::size_t r = 0; r < 300; ++r) ASSERT_EQ(rebound.predict(RowView(x, r)), t.predict(RowView(x, r)));
  }
}

TEST(Administer, ExampleTreeSession) {
  const auto doc = export_tree(example_tree(), testing_support::q_bank(2), 0.5);
  const std::map<std::string, int> answers{{"Q1", 3}, {"Q2", 4}};
  int asked = 0;
  const auto s = administer(doc, [&](const ItemDef& d) {
    ++asked;
    return answers.at(d.id);
  });
  EXPECT_DOUBLE_EQ(s.probability, 0.79);
  EXPECT_EQ(s.risk_class, 1);
  EXPECT_EQ(asked, 2);  // Q1 reused at the third split
  EXPECT_EQ(s.asked.size(), 2u);
  EXPECT_EQ(s.path.size(), 4u);

  const auto low = administer(export_tree(example_tree(), testing_support::q_bank(2), 0.8),
                              [&](const ItemDef& d) { return answers.at(d.id); });
  EXPECT_EQ(low.risk_class, 0);
  EXPECT_EQ(code_of([&] { administer(doc, [](const ItemDef&) { return 9; }); }), ErrorCode::CodeOutOfRange);
}

TEST(Administer, NeverAsksMoreThanMaxIpp) {
  std::mt19937_64 gen(13);
  const auto bank = testing_support::q_bank(8);
  for (int rep = 0; rep < 50; ++rep) {
    const auto x = random_codes(400, 8, 5, gen);
    std::vector<double> y(400);
    for (std::size_t r = 0; r < 400; ++r) y[r] = (x(r, rep % 8) * x(r, (rep + 3) % 8)) / 25.0;
    const auto t = grow(x, y, bank.splitting_ids(), {Constraint::max_ipp(1 + rep % 5), 5}).full;
    const auto doc = export_tree(t, bank, 0.5);
    for (int session = 0; session < 5; ++session) {
      const auto s = administer(doc, [&](const ItemDef&) { return 1 + static_cast<int>(gen() % 5); });
      ASSERT_LE(s.asked.size(), doc["maxipp"].get<std::size_t>());
    }
  }
}
