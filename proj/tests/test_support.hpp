#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "adascreen/adascreen.hpp"

namespace testing_support {

using namespace adascreen;

inline ItemDef five_level_item(const std::string& id, int levels = 5) {
  ItemDef d;
  d.id = id;
  d.text = "How often: " + id;
  for (int c = 1; c <= levels; ++c) d.levels.push_back({c, "level " + std::to_string(c)});
  return d;
}

inline ItemBank q_bank(std::size_t p, int levels = 5) {
  std::vector<ItemDef> items;
  for (std::size_t i = 0; i < p; ++i) items.push_back(five_level_item("Q" + std::to_string(i + 1), levels));
  return ItemBank(std::move(items), {}, {});
}

// Root Q1 <= 1.5 -> 0.08; else Q2 <= 2.5 -> 0.30; else Q1 <= 2.5 -> 0.55 / 0.79.
inline RegressionTree example_tree() {
  RegressionTree t;
  t.item_ids = {"Q1", "Q2"};
  t.constraint = Constraint::max_ipp(2);
  auto split = [](int item, double cut, int l, int r) {
    TreeNode n;
    n.item = item;
    n.cutpoint = cut;
    n.left = l;
    n.right = r;
    return n;
  };
  auto leaf = [](double v) {
    TreeNode n;
    n.value = v;
    return n;
  };
  t.nodes = {split(0, 1.5, 1, 2), leaf(0.08), split(1, 2.5, 3, 4), leaf(0.30), split(0, 2.5, 5, 6), leaf(0.55),
             leaf(0.79)};
  return t;
}

inline CodeMatrix random_codes(std::size_t n, std::size_t p, int levels, std::mt19937_64& gen) {
  CodeMatrix x(n, p);
  std::uniform_int_distribution<int> code(1, levels);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < p; ++c) x(r, c) = static_cast<Code>(code(gen));
  return x;
}

/// A scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("adascreen-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

/// Population assembled by hand: one block per entry of `blocks`, each a list
/// of (codes, p̃, Ē, ỹ) rows.
struct HandRow {
  std::vector<int> codes;
  double p = 0.5;
  double e = 0.5;
  int y = 0;
};

inline SyntheticPopulation hand_population(const std::vector<std::string>& items,
                                           const std::vector<std::vector<HandRow>>& blocks) {
  SyntheticPopulation pop;
  pop.variable_names = items;
  pop.num_items = items.size();
  std::size_t total = 0;
  for (const auto& b : blocks) total += b.size();
  pop.x = CodeMatrix(total, items.size());
  std::size_t k = 0;
  for (const auto& b : blocks) {
    for (const auto& r : b) {
      for (std::size_t c = 0; c < items.size(); ++c) pop.x(k, c) = static_cast<Code>(r.codes[c]);
      pop.p_tilde.push_back(r.p);
      pop.e_bar.push_back(r.e);
      pop.y_tilde.push_back(static_cast<std::uint8_t>(r.y));
      ++k;
    }
    pop.block_offsets.push_back(k);
  }
  pop.block_size = blocks.empty() ? 0 : blocks.front().size();
  return pop;
}

}  // namespace testing_support
