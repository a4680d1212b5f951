#pragma once

// Command-line driver. run() is the whole program; the executable in tools/
// only forwards argv, so tests can drive every command in-process.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adascreen/adascreen.hpp"
#include "adascreen/plot.hpp"

namespace adascreen::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kOutputDirEnv = "ADASCREEN_OUTPUT_DIR";

struct RunConfig {
  std::string bank;
  std::string data;
  std::string holdout;
  std::string output_dir = "adascreen-out";
  std::size_t threads = default_thread_count();

  std::size_t k = 3;
  McmcConfig copula{500, 1, 500, 1};
  RiskConfig risk{50, 250, 500, 1, 2, 2.0, 0.95, 2.0};

  std::size_t block_size = 1000;  // N
  std::size_t draws = 0;          // D; 0 means every retained draw
  std::uint64_t population_seed = 3;
  std::string predicate;
  std::size_t reservoir = kDefaultReservoirSize;
  double acceptance_floor = kDefaultAcceptanceFloor;

  std::vector<std::size_t> m_values{2, 3, 4, 5, 6};
  std::vector<double> weights{0.5};
  std::string constraint = "maxIPP";
  std::string method = "regression";
  std::size_t min_node = 25;
  std::optional<double> prune_threshold;
  std::size_t patience = kDefaultPatience;

  std::vector<std::string> compare_methods{"regression", "classify-outcome", "classify-utility"};
  std::vector<std::string> compare_constraints{"maxIPP", "maxDepth"};
  bool svg = true;
};

namespace detail {

template <class T>
void read_key(const json& obj, const char* key, T& dst, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::InvalidConfig, "config key '" + where + key + "' has the wrong type");
  }
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  require(obj.is_object(), ErrorCode::InvalidConfig, "config section '" + where + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    require(ok, ErrorCode::InvalidConfig, "unknown config key '" + where + key + "'");
  }
}

inline ConstraintKind parse_constraint(const std::string& s) {
  if (s == "maxIPP" || s == "maxipp") return ConstraintKind::MaxIpp;
  if (s == "maxDepth" || s == "maxdepth") return ConstraintKind::MaxDepth;
  fail(ErrorCode::InvalidConfig, "unknown constraint '" + s + "' (expected maxIPP or maxDepth)");
}

inline std::string weight_tag(double w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", w);
  return buf;
}

inline std::string test_file(std::size_t m, double w) {
  return "tests/m" + std::to_string(m) + "_w" + weight_tag(w) + ".json";
}

inline std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  detail::reject_unknown(j, {"bank", "data", "holdout", "output_dir", "threads", "copula", "risk", "population",
                             "design", "compare", "report"},
                         "");
  detail::read_key(j, "bank", c.bank, "");
  detail::read_key(j, "data", c.data, "");
  detail::read_key(j, "holdout", c.holdout, "");
  detail::read_key(j, "output_dir", c.output_dir, "");
  detail::read_key(j, "threads", c.threads, "");
  if (j.contains("copula")) {
    const auto& s = j["copula"];
    detail::reject_unknown(s, {"k", "burn_in", "draws", "thin", "seed"}, "copula.");
    detail::read_key(s, "k", c.k, "copula.");
    detail::read_key(s, "burn_in", c.copula.burn_in, "copula.");
    detail::read_key(s, "draws", c.copula.draws, "copula.");
    detail::read_key(s, "thin", c.copula.thin, "copula.");
    detail::read_key(s, "seed", c.copula.seed, "copula.");
  }
  if (j.contains("risk")) {
    const auto& s = j["risk"];
    detail::reject_unknown(s, {"num_trees", "burn_in", "draws", "thin", "seed", "leaf_shrinkage", "split_alpha",
                               "split_beta"},
                           "risk.");
    detail::read_key(s, "num_trees", c.risk.num_trees, "risk.");
    detail::read_key(s, "burn_in", c.risk.burn_in, "risk.");
    detail::read_key(s, "draws", c.risk.draws, "risk.");
    detail::read_key(s, "thin", c.risk.thin, "risk.");
    detail::read_key(s, "seed", c.risk.seed, "risk.");
    detail::read_key(s, "leaf_shrinkage", c.risk.leaf_shrinkage, "risk.");
    detail::read_key(s, "split_alpha", c.risk.split_alpha, "risk.");
    detail::read_key(s, "split_beta", c.risk.split_beta, "risk.");
  }
  if (j.contains("population")) {
    const auto& s = j["population"];
    detail::reject_unknown(s, {"N", "D", "seed", "predicate", "reservoir", "acceptance_floor"}, "population.");
    detail::read_key(s, "N", c.block_size, "population.");
    detail::read_key(s, "D", c.draws, "population.");
    detail::read_key(s, "seed", c.population_seed, "population.");
    detail::read_key(s, "predicate", c.predicate, "population.");
    detail::read_key(s, "reservoir", c.reservoir, "population.");
    detail::read_key(s, "acceptance_floor", c.acceptance_floor, "population.");
  }
  if (j.contains("design")) {
    const auto& s = j["design"];
    detail::reject_unknown(s, {"m", "w", "constraint", "method", "min_node", "prune_threshold", "patience"}, "design.");
    detail::read_key(s, "m", c.m_values, "design.");
    detail::read_key(s, "w", c.weights, "design.");
    detail::read_key(s, "constraint", c.constraint, "design.");
    detail::read_key(s, "method", c.method, "design.");
    detail::read_key(s, "min_node", c.min_node, "design.");
    detail::read_key(s, "patience", c.patience, "design.");
    if (s.contains("prune_threshold") && !s["prune_threshold"].is_null()) {
      double t = 0.0;
      detail::read_key(s, "prune_threshold", t, "design.");
      c.prune_threshold = t;
    }
  }
  if (j.contains("compare")) {
    const auto& s = j["compare"];
    detail::reject_unknown(s, {"methods", "constraints"}, "compare.");
    detail::read_key(s, "methods", c.compare_methods, "compare.");
    detail::read_key(s, "constraints", c.compare_constraints, "compare.");
  }
  if (j.contains("report")) {
    const auto& s = j["report"];
    detail::reject_unknown(s, {"svg"}, "report.");
    detail::read_key(s, "svg", c.svg, "report.");
  }
  return c;
}

inline json to_json(const RunConfig& c) {
  return {{"bank", c.bank},
          {"data", c.data},
          {"holdout", c.holdout},
          {"copula", {{"k", c.k}, {"burn_in", c.copula.burn_in}, {"draws", c.copula.draws}, {"thin", c.copula.thin},
                      {"seed", c.copula.seed}}},
          {"risk", {{"num_trees", c.risk.num_trees}, {"burn_in", c.risk.burn_in}, {"draws", c.risk.draws},
                    {"thin", c.risk.thin}, {"seed", c.risk.seed}, {"leaf_shrinkage", c.risk.leaf_shrinkage},
                    {"split_alpha", c.risk.split_alpha}, {"split_beta", c.risk.split_beta}}},
          {"population", {{"N", c.block_size}, {"D", c.draws}, {"seed", c.population_seed},
                          {"predicate", c.predicate}, {"reservoir", c.reservoir},
                          {"acceptance_floor", c.acceptance_floor}}},
          {"design", {{"m", c.m_values}, {"w", c.weights}, {"constraint", c.constraint}, {"method", c.method},
                      {"min_node", c.min_node},
                      {"prune_threshold", c.prune_threshold ? json(*c.prune_threshold) : json(nullptr)},
                      {"patience", c.patience}}},
          {"compare", {{"methods", c.compare_methods}, {"constraints", c.compare_constraints}}},
          {"report", {{"svg", c.svg}}}};
}

inline void validate(const RunConfig& c) {
  require(c.k >= 1, ErrorCode::InvalidConfig, "copula.k must be at least 1");
  require(c.block_size >= 1, ErrorCode::InvalidConfig, "population.N must be at least 1");
  require(!c.m_values.empty(), ErrorCode::InvalidConfig, "design.m must list at least one test length");
  for (auto m : c.m_values) require(m >= 1, ErrorCode::InvalidConfig, "design.m values must be at least 1");
  require(!c.weights.empty(), ErrorCode::InvalidConfig, "design.w must list at least one weight");
  for (double w : c.weights) check_weight(w);
  detail::parse_constraint(c.constraint);
  parse_method(c.method);
  for (const auto& m : c.compare_methods) parse_method(m);
  for (const auto& k : c.compare_constraints) detail::parse_constraint(k);
  require(c.min_node >= 1, ErrorCode::InvalidConfig, "design.min_node must be at least 1");
  require(c.patience >= 1, ErrorCode::InvalidConfig, "design.patience must be at least 1");
}

inline void require_file(const std::string& path, const std::string& what) {
  require(!path.empty(), ErrorCode::InvalidConfig, what + " path is not set");
  require(fs::is_regular_file(path), ErrorCode::Io, what + " '" + path + "' does not exist");
}

/// Names every input and output by content hash.
inline void write_manifest(const std::string& out_dir, const std::string& command, const RunConfig& cfg,
                           const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  json in = json::object(), out = json::object();
  for (const auto& p : inputs) in[p] = file_hash(p);
  for (const auto& p : outputs) out[fs::relative(p, out_dir).generic_string()] = file_hash(p);
  json m = {{"command", command}, {"config", to_json(cfg)}, {"inputs", in}, {"outputs", out}};
  write_file((fs::path(out_dir) / (command + ".manifest.json")).string(), m.dump(2) + "\n");
}

class Context {
 public:
  Context(RunConfig cfg, std::ostream& out, std::ostream& err) : cfg_(std::move(cfg)), out_(out), err_(err) {
    fs::create_directories(cfg_.output_dir);
  }

  const RunConfig& cfg() const { return cfg_; }
  std::string path(const std::string& name) const { return (fs::path(cfg_.output_dir) / name).string(); }
  std::ostream& out() { return out_; }
  std::ostream& err() { return err_; }

  SyntheticPopulation population() const { return load_population(path("population.json")); }
  SyntheticPopulation reservoir() const { return load_population(path("reservoir.json")); }

  /// Holdout rows restricted to the population's predicate.
  Dataset holdout(const ItemBank& bank, const std::string& predicate) const {
    require_file(cfg_.holdout, "holdout dataset");
    Dataset data = load_dataset(cfg_.holdout, bank);
    if (!predicate.empty()) {
      const auto pred = Predicate::parse(predicate);
      std::vector<std::size_t> keep;
      for (std::size_t r = 0; r < data.rows(); ++r) {
        bool ok = true;
        for (const auto& c : pred.all_of) {
          auto it = std::find(data.conditioning_names.begin(), data.conditioning_names.end(), c.variable);
          require(it != data.conditioning_names.end(), ErrorCode::UnknownConditioningVar,
                  "holdout lacks conditioning variable '" + c.variable + "'");
          ok = ok && c.holds(data.conditioning(r, static_cast<std::size_t>(it - data.conditioning_names.begin())));
        }
        if (ok) keep.push_back(r);
      }
      data = data.subset(keep);
    }
    require(data.rows() > 0, ErrorCode::EmptyHoldout, "holdout dataset has no rows for this population");
    return data;
  }

 private:
  RunConfig cfg_;
  std::ostream& out_;
  std::ostream& err_;
};

// ---- commands ------------------------------------------------------------------

inline int cmd_fit(Context& ctx, bool force) {
  const auto& c = ctx.cfg();
  require_file(c.bank, "item bank");
  require_file(c.data, "training data");
  const std::string copula_path = ctx.path("copula.json");
  const std::string risk_path = ctx.path("risk.json");
  const std::string manifest_path = ctx.path("fit.manifest.json");

  if (!force && fs::exists(manifest_path) && fs::exists(copula_path) && fs::exists(risk_path)) {
    const auto prev = json::parse(read_file(manifest_path));
    const bool same = prev.value("config", json()) == to_json(c) &&
                      prev["inputs"].value(c.bank, "") == file_hash(c.bank) &&
                      prev["inputs"].value(c.data, "") == file_hash(c.data) &&
                      prev["outputs"].value("copula.json", "") == file_hash(copula_path) &&
                      prev["outputs"].value("risk.json", "") == file_hash(risk_path);
    if (same) {
      ctx.out() << "fit: archives are up to date\n";
      return 0;
    }
  }

  const auto bank = load_item_bank(c.bank);
  const auto data = load_dataset(c.data, bank);
  ctx.out() << "fit: " << data.rows() << " rows, " << data.num_items() << " items, base rate "
            << detail::fmt3(data.base_rate()) << "\n";
  const auto copula = fit_gcfm(data, c.k, c.copula);
  for (const auto& w : copula.diagnostics.warnings) ctx.err() << "warning: " << w << "\n";
  save_copula_posterior(copula, copula_path);
  const auto risk = fit_risk_model(data, c.risk);
  save_risk_posterior(risk, risk_path);
  write_manifest(c.output_dir, "fit", c, {c.bank, c.data}, {copula_path, risk_path});
  ctx.out() << "fit: " << copula.size() << " copula draws, " << risk.num_draws() << " risk draws\n";
  return 0;
}

inline int cmd_synth(Context& ctx) {
  const auto& c = ctx.cfg();
  const std::string copula_path = ctx.path("copula.json");
  const std::string risk_path = ctx.path("risk.json");
  require_file(copula_path, "copula archive");
  require_file(risk_path, "risk archive");
  const auto copula = load_copula_posterior(copula_path);
  const auto risk = load_risk_posterior(risk_path);

  PopulationConfig pc;
  pc.block_size = c.block_size;
  pc.draws = c.draws ? c.draws : std::min(copula.size(), risk.num_draws());
  pc.seed = c.population_seed;
  pc.predicate = Predicate::parse(c.predicate);
  pc.acceptance_floor = c.acceptance_floor;
  pc.threads = c.threads;

  auto pop = generate_population(copula, risk, pc);
  auto res = generate_pruning_reservoir(copula, risk, c.reservoir, pc);
  for (auto* p : {&pop, &res}) {
    p->copula_hash = file_hash(copula_path);
    p->risk_hash = file_hash(risk_path);
  }
  save_population(pop, ctx.path("population"));
  save_population(res, ctx.path("reservoir"));
  write_manifest(c.output_dir, "synth", c, {copula_path, risk_path},
                 {ctx.path("population.json"), ctx.path("population.bin"), ctx.path("reservoir.json"),
                  ctx.path("reservoir.bin")});
  ctx.out() << "synth: N=" << pc.block_size << " D=" << pc.draws << " M=" << pop.rows()
            << " reservoir=" << res.rows() << " base rate " << detail::fmt3(pop.base_rate()) << "\n";
  return 0;
}

inline int cmd_design(Context& ctx) {
  const auto& c = ctx.cfg();
  require_file(c.bank, "item bank");
  const auto bank = load_item_bank(c.bank);
  const auto pop = ctx.population();
  const auto res = ctx.reservoir();
  fs::create_directories(ctx.path("tests"));

  std::ostringstream report;
  report << "m,w,constraint,method,threshold,utility,sensitivity,specificity,unique_items,depth,leaves,"
            "sequence_length,selected\n";
  json full_tests = json::array();
  std::vector<std::string> outputs;
  for (double w : c.weights) {
    const auto full = build_full_test(pop, w);
    full_tests.push_back({{"w", w},
                          {"threshold", full.threshold},
                          {"utility", full.calibration.utility},
                          {"sensitivity", full.calibration.sensitivity},
                          {"specificity", full.calibration.specificity}});
    for (auto m : c.m_values) {
      DesignConfig dc;
      dc.m = m;
      dc.kind = detail::parse_constraint(c.constraint);
      dc.method = parse_method(c.method);
      dc.w = w;
      dc.min_node = c.min_node;
      dc.prune_threshold = c.prune_threshold;
      dc.patience = c.patience;
      const auto designed = design_short_test(pop, res, dc);
      const auto& tree = *designed.test.tree;
      DeploymentProvenance prov;
      prov.population_hash = file_hash(ctx.path("population.bin"));
      prov.copula_hash = pop.copula_hash;
      prov.risk_hash = pop.risk_hash;
      prov.training_hash = prov.population_hash;
      prov.seed = pop.seed;
      prov.predicate = pop.predicate;
      prov.w = w;
      const std::string file = ctx.path(detail::test_file(m, w));
      export_tree(tree, bank, designed.test.threshold, file, prov);
      outputs.push_back(file);
      const auto& cal = designed.test.calibration;
      report << m << ',' << w << ',' << c.constraint << ',' << c.method << ',' << detail::fmt6(designed.test.threshold)
             << ',' << detail::fmt6(cal.utility) << ',' << detail::fmt6(cal.sensitivity) << ','
             << detail::fmt6(cal.specificity) << ',' << unique_items_per_path(tree) << ',' << depth(tree) << ','
             << tree.num_leaves() << ',' << designed.sequence.size() << ',' << designed.selected << '\n';
      ctx.out() << "design: m=" << m << " w=" << w << " items/path=" << unique_items_per_path(tree)
                << " depth=" << depth(tree) << " leaves=" << tree.num_leaves() << " C=" << detail::fmt3(designed.test.threshold)
                << " utility=" << detail::fmt3(cal.utility) << "\n";
    }
  }
  write_file(ctx.path("design.csv"), report.str());
  write_file(ctx.path("full_tests.json"), full_tests.dump(2) + "\n");
  outputs.push_back(ctx.path("design.csv"));
  outputs.push_back(ctx.path("full_tests.json"));
  write_manifest(c.output_dir, "design", c, {c.bank, ctx.path("population.json"), ctx.path("reservoir.json")}, outputs);
  return 0;
}

struct EvaluationRow {
  std::size_t m = 0;
  double w = 0.0;
  SensSpec short_rates, full_rates;
  double short_utility = 0.0, full_utility = 0.0;
  double empirical_delta = 0.0;
  BoxStats box;
  bool inside_box = false;
  UtilityDiffSample deltas;
};

inline std::vector<EvaluationRow> evaluate(Context& ctx, std::vector<std::pair<std::string, std::vector<RocPoint>>>* roc) {
  const auto& c = ctx.cfg();
  require_file(c.bank, "item bank");
  const auto bank = load_item_bank(c.bank);
  const auto pop = ctx.population();
  const std::string risk_path = ctx.path("risk.json");
  require_file(risk_path, "risk archive");
  const auto risk = load_risk_posterior(risk_path);
  const auto holdout = ctx.holdout(bank, pop.predicate);
  require(risk.item_ids() == holdout.item_ids, ErrorCode::SchemaViolation,
          "holdout items differ from the items the risk model was fit on");
  std::vector<double> holdout_ebar(holdout.rows());
  for (std::size_t i = 0; i < holdout.rows(); ++i)
    holdout_ebar[i] = posterior_mean_prob(risk, RowView(holdout.responses, i));

  std::vector<EvaluationRow> rows;
  for (double w : c.weights) {
    const auto full = build_full_test(pop, w);
    const auto full_rates = empirical_sens_spec(classify(holdout_ebar, full.threshold), holdout.outcomes);
    if (roc && roc->empty()) roc->emplace_back("full", roc_points(pop.e_bar, pop.y_tilde));
    for (auto m : c.m_values) {
      const std::string file = ctx.path(detail::test_file(m, w));
      require_file(file, "deployment file");
      const auto imported = import_tree(file);
      AdaptiveTest short_test;
      short_test.scorer = ScorerKind::Tree;
      short_test.tree = rebind_items(imported.tree, pop.item_ids());
      short_test.threshold = imported.threshold;
      short_test.w = w;

      const auto on_holdout = rebind_items(imported.tree, holdout.item_ids);
      std::vector<double> scores(holdout.rows());
      for (std::size_t i = 0; i < holdout.rows(); ++i) scores[i] = on_holdout.predict(RowView(holdout.responses, i));

      EvaluationRow row;
      row.m = m;
      row.w = w;
      row.short_rates = empirical_sens_spec(classify(scores, imported.threshold), holdout.outcomes);
      row.full_rates = full_rates;
      row.short_utility = expected_utility(row.short_rates.sensitivity, row.short_rates.specificity, w);
      row.full_utility = expected_utility(full_rates.sensitivity, full_rates.specificity, w);
      row.empirical_delta = row.short_utility - row.full_utility;
      row.deltas = delta_distribution(pop, short_test, full, w, m);
      for (const auto& msg : row.deltas.warnings) ctx.err() << "warning: m=" << m << ": " << msg << "\n";
      require(!row.deltas.draws.empty(), ErrorCode::DegenerateTruths, "every population block has a single class");
      row.box = box_stats(row.deltas.draws);
      row.inside_box = row.empirical_delta >= row.box.q1 && row.empirical_delta <= row.box.q3;
      if (roc && w == c.weights.front())
        roc->emplace_back("m=" + std::to_string(m), roc_points(short_test.scores(pop), pop.y_tilde));
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline void render_figures(Context& ctx, const std::vector<plot::BoxSeries>& boxes, const std::string& box_title,
                           const std::vector<plot::Curve>& curves) {
  write_file(ctx.path("boxplot.svg"), plot::boxplot_svg(boxes, box_title, "utility difference"));
  write_file(ctx.path("roc.svg"), plot::curves_svg(curves, "ROC on the synthetic population", "1 - specificity",
                                                   "sensitivity"));
}

inline std::vector<plot::Curve> roc_curves(const std::vector<std::pair<std::string, std::vector<RocPoint>>>& roc) {
  std::vector<plot::Curve> curves;
  for (const auto& [label, pts] : roc) {
    plot::Curve cv{label, {}};
    for (const auto& p : pts) cv.points.emplace_back(1.0 - p.specificity, p.sensitivity);
    curves.push_back(std::move(cv));
  }
  return curves;
}

inline int cmd_evaluate(Context& ctx) {
  const auto& c = ctx.cfg();
  std::vector<std::pair<std::string, std::vector<RocPoint>>> roc;
  const auto rows = evaluate(ctx, &roc);

  std::ostringstream ev, deltas, box, table, roc_csv;
  ev << "m,w,test,sensitivity,specificity,utility\n";
  deltas << "m,w,block,delta\n";
  box << "m,w,count,skipped,whisker_low,q1,median,q3,whisker_high,holdout_delta,inside_box\n";
  for (const auto& r : rows) {
    ev << r.m << ',' << r.w << ",short," << detail::fmt6(r.short_rates.sensitivity) << ','
       << detail::fmt6(r.short_rates.specificity) << ',' << detail::fmt6(r.short_utility) << '\n';
    ev << r.m << ',' << r.w << ",full," << detail::fmt6(r.full_rates.sensitivity) << ','
       << detail::fmt6(r.full_rates.specificity) << ',' << detail::fmt6(r.full_utility) << '\n';
    for (std::size_t i = 0; i < r.deltas.draws.size(); ++i)
      deltas << r.m << ',' << r.w << ',' << r.deltas.block_index[i] << ',' << detail::fmt6(r.deltas.draws[i]) << '\n';
    box << r.m << ',' << r.w << ',' << r.box.count << ',' << r.deltas.skipped_blocks.size() << ','
        << detail::fmt6(r.box.whisker_low) << ',' << detail::fmt6(r.box.q1) << ',' << detail::fmt6(r.box.median) << ','
        << detail::fmt6(r.box.q3) << ',' << detail::fmt6(r.box.whisker_high) << ',' << detail::fmt6(r.empirical_delta)
        << ',' << (r.inside_box ? 1 : 0) << '\n';
  }
  // Sensitivity and specificity per m, one column pair per w.
  table << "m";
  for (double w : c.weights) table << ",sens_w" << w << ",spec_w" << w;
  table << '\n';
  for (auto m : c.m_values) {
    table << m;
    for (double w : c.weights)
      for (const auto& r : rows)
        if (r.m == m && r.w == w)
          table << ',' << detail::fmt3(r.short_rates.sensitivity) << ',' << detail::fmt3(r.short_rates.specificity);
    table << '\n';
  }
  table << "full";
  for (double w : c.weights)
    for (const auto& r : rows)
      if (r.w == w && r.m == c.m_values.front())
        table << ',' << detail::fmt3(r.full_rates.sensitivity) << ',' << detail::fmt3(r.full_rates.specificity);
  table << '\n';
  roc_csv << "test,threshold,specificity,sensitivity\n";
  for (const auto& [label, pts] : roc)
    for (const auto& p : pts)
      roc_csv << label << ',' << detail::fmt6(p.threshold) << ',' << detail::fmt6(p.specificity) << ','
              << detail::fmt6(p.sensitivity) << '\n';

  std::vector<std::string> outputs{ctx.path("evaluation.csv"), ctx.path("deltas.csv"), ctx.path("boxplot.csv"),
                                   ctx.path("sens_spec_table.csv"), ctx.path("roc.csv")};
  write_file(outputs[0], ev.str());
  write_file(outputs[1], deltas.str());
  write_file(outputs[2], box.str());
  write_file(outputs[3], table.str());
  write_file(outputs[4], roc_csv.str());
  if (c.svg) {
    std::vector<plot::BoxSeries> boxes;
    for (const auto& r : rows)
      if (r.w == c.weights.front())
        boxes.push_back({"m=" + std::to_string(r.m), r.box.whisker_low, r.box.q1, r.box.median, r.box.q3,
                         r.box.whisker_high, r.box.outliers, r.empirical_delta});
    render_figures(ctx, boxes, "Utility difference per draw, w=" + detail::weight_tag(c.weights.front()),
                   roc_curves(roc));
    outputs.push_back(ctx.path("boxplot.svg"));
    outputs.push_back(ctx.path("roc.svg"));
  }
  write_manifest(c.output_dir, "evaluate", c, {c.bank, c.holdout, ctx.path("population.json"), ctx.path("risk.json")},
                 outputs);
  ctx.out() << "  m      w   sens   spec  utility  holdout delta  box [q1, q3]\n";
  for (const auto& r : rows) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%3zu %6g  %.3f  %.3f    %.3f        %+.4f  [%+.4f, %+.4f]%s\n", r.m, r.w,
                  r.short_rates.sensitivity, r.short_rates.specificity, r.short_utility, r.empirical_delta, r.box.q1,
                  r.box.q3, r.inside_box ? "" : "  outside");
    ctx.out() << buf;
  }
  return 0;
}

inline int cmd_compare(Context& ctx) {
  const auto& c = ctx.cfg();
  const auto pop = ctx.population();
  const auto res = ctx.reservoir();
  ComparisonGrid grid;
  grid.m_values = c.m_values;
  grid.weights = c.weights;
  grid.min_node = c.min_node;
  grid.kinds.clear();
  grid.methods.clear();
  for (const auto& k : c.compare_constraints) grid.kinds.push_back(detail::parse_constraint(k));
  for (const auto& m : c.compare_methods) grid.methods.push_back(parse_method(m));

  std::optional<EvaluationSet> eval;
  std::vector<std::string> inputs{ctx.path("population.json"), ctx.path("reservoir.json")};
  if (!c.holdout.empty()) {
    require_file(c.bank, "item bank");
    const auto bank = load_item_bank(c.bank);
    const auto holdout = ctx.holdout(bank, pop.predicate);
    EvaluationSet es;
    es.x = CodeMatrix(holdout.rows(), pop.num_items);
    const auto ids = pop.item_ids();
    for (std::size_t col = 0; col < ids.size(); ++col) {
      auto it = std::find(holdout.item_ids.begin(), holdout.item_ids.end(), ids[col]);
      require(it != holdout.item_ids.end(), ErrorCode::MissingItem, "holdout lacks item '" + ids[col] + "'");
      const auto src = static_cast<std::size_t>(it - holdout.item_ids.begin());
      for (std::size_t r = 0; r < holdout.rows(); ++r) es.x(r, col) = holdout.responses(r, src);
    }
    es.y = holdout.outcomes;
    eval = std::move(es);
    inputs.push_back(c.holdout);
  }
  const auto rows = compare_methods(pop, res, grid, eval);
  std::ostringstream csv;
  write_comparison_csv(rows, csv);
  write_file(ctx.path("comparison.csv"), csv.str());
  write_manifest(c.output_dir, "compare", c, inputs, {ctx.path("comparison.csv")});
  ctx.out() << csv.str();
  return 0;
}

inline int cmd_export(Context& ctx, const std::string& what, std::size_t m, double w, const std::string& to) {
  const auto& c = ctx.cfg();
  require(!to.empty(), ErrorCode::InvalidConfig, "export needs --to");
  if (what == "population") {
    const auto pop = ctx.population();
    std::ofstream out(to);
    require(out.good(), ErrorCode::Io, "cannot write '" + to + "'");
    write_population_csv(pop, out);
    ctx.out() << "export: " << pop.rows() << " rows to " << to << "\n";
    return 0;
  }
  if (what == "test") {
    require(m >= 1, ErrorCode::InvalidConfig, "export test needs --m");
    check_weight(w);
    require_file(c.bank, "item bank");
    const auto bank = load_item_bank(c.bank);
    const std::string file = ctx.path(detail::test_file(m, w));
    require_file(file, "deployment file");
    const auto doc = json::parse(read_file(file));
    const auto imported = import_tree(doc);
    DeploymentProvenance prov;
    const auto& pj = doc.at("provenance");
    prov.training_hash = pj.value("training_hash", "");
    prov.population_hash = pj.value("population_hash", "");
    prov.copula_hash = pj.value("copula_hash", "");
    prov.risk_hash = pj.value("risk_hash", "");
    prov.seed = pj.value("seed", std::uint64_t{0});
    prov.predicate = pj.value("predicate", "");
    prov.w = pj.value("w", 0.0);
    export_tree(imported.tree, bank, imported.threshold, to, prov);
    ctx.out() << "export: test m=" << m << " w=" << w << " to " << to << "\n";
    return 0;
  }
  fail(ErrorCode::InvalidConfig, "export --what must be 'population' or 'test'");
}

inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(adascreen::detail::split_csv_line(line));
  return rows;
}

inline int cmd_report(Context& ctx) {
  const auto& c = ctx.cfg();
  require_file(ctx.path("boxplot.csv"), "boxplot data (run evaluate first)");
  require_file(ctx.path("roc.csv"), "ROC data (run evaluate first)");
  const auto box_rows = read_csv(ctx.path("boxplot.csv"));
  const auto roc_rows = read_csv(ctx.path("roc.csv"));
  std::string first_w;
  std::vector<plot::BoxSeries> boxes;
  std::ostringstream md;
  md << "# Adaptive test report\n\n| m | w | median delta | q1 | q3 | holdout delta | inside box |\n"
     << "|---|---|---|---|---|---|---|\n";
  for (std::size_t i = 1; i < box_rows.size(); ++i) {
    const auto& r = box_rows[i];
    require(r.size() == 11, ErrorCode::SchemaViolation, "boxplot.csv has an unexpected layout");
    if (first_w.empty()) first_w = r[1];
    md << "| " << r[0] << " | " << r[1] << " | " << r[6] << " | " << r[5] << " | " << r[7] << " | " << r[9] << " | "
       << (r[10] == "1" ? "yes" : "no") << " |\n";
    if (r[1] != first_w) continue;
    boxes.push_back({"m=" + r[0], std::stod(r[4]), std::stod(r[5]), std::stod(r[6]), std::stod(r[7]), std::stod(r[8]),
                     {}, std::stod(r[9])});
  }
  std::vector<plot::Curve> curves;
  for (std::size_t i = 1; i < roc_rows.size(); ++i) {
    const auto& r = roc_rows[i];
    require(r.size() == 4, ErrorCode::SchemaViolation, "roc.csv has an unexpected layout");
    if (curves.empty() || curves.back().label != r[0]) curves.push_back({r[0], {}});
    curves.back().points.emplace_back(1.0 - std::stod(r[2]), std::stod(r[3]));
  }
  render_figures(ctx, boxes, "Utility difference per draw, w=" + first_w, curves);
  if (fs::exists(ctx.path("design.csv"))) {
    md << "\n## Designed tests\n\n```\n" << read_file(ctx.path("design.csv")) << "```\n";
  }
  write_file(ctx.path("report.md"), md.str());
  write_manifest(c.output_dir, "report", c, {ctx.path("boxplot.csv"), ctx.path("roc.csv")},
                 {ctx.path("boxplot.svg"), ctx.path("roc.svg"), ctx.path("report.md")});
  ctx.out() << "report: wrote boxplot.svg, roc.svg, report.md\n";
  return 0;
}

struct SimulateOptions {
  std::size_t n = 3000;
  std::size_t n_test = 3000;
  std::size_t items = 30;
  std::uint64_t seed = 7;
  double intercept = -3.5;
};

inline int cmd_simulate(Context& ctx, const SimulateOptions& o) {
  StudyDesign d;
  d.num_items = o.items;
  d.seed = o.seed;
  d.risk_intercept = o.intercept;
  require(o.items >= 3, ErrorCode::InvalidConfig, "simulate needs at least 3 items");
  require(o.n >= 1 && o.n_test >= 1, ErrorCode::InvalidCount, "row counts must be positive");
  const StudyTruth truth(d);
  save_item_bank(truth.bank(), ctx.path("bank.json"));
  save_dataset(truth.sample(o.n, derive_seed(o.seed, stream_tag::simulation, 100)), ctx.path("train.csv"));
  save_dataset(truth.sample(o.n_test, derive_seed(o.seed, stream_tag::simulation, 200)), ctx.path("test.csv"));
  json loadings = json::array();
  const auto& lam = truth.params().loadings;
  for (Eigen::Index r = 0; r < lam.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(lam.cols()));
    for (Eigen::Index k = 0; k < lam.cols(); ++k) row[static_cast<std::size_t>(k)] = lam(r, k);
    loadings.push_back(row);
  }
  json t = {{"variables", truth.layout().variable_names},
            {"loadings", loadings},
            {"level_probs", d.level_probs},
            {"risk", {{"link", "logit"}, {"intercept", d.risk_intercept}, {"items", d.risk_items},
                      {"coefficients", d.risk_coef}}}};
  write_file(ctx.path("truth.json"), t.dump(2) + "\n");
  ctx.out() << "simulate: wrote bank.json, train.csv (" << o.n << " rows), test.csv (" << o.n_test
            << " rows), truth.json\n";
  return 0;
}

// ---- entry point ---------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Design and evaluate short adaptive screening tests from item-response data."};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  app.set_version_flag("--version", "adascreen 0.1.0");

  std::string config_path, out_dir;
  std::size_t threads = 0;
  app.add_option("-c,--config", config_path, "JSON run configuration");
  app.add_option("-o,--out", out_dir, "output directory (overrides $" + std::string(kOutputDirEnv) + ")");
  app.add_option("--threads", threads, "worker threads");

  RunConfig ov;  // flag values; applied only when given
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> overrides;
  auto flag = [&](CLI::App* sub, const std::string& name, auto& slot, auto apply, const std::string& help) {
    auto* opt = sub->add_option(name, slot, help);
    overrides.emplace_back(opt, apply);
  };

  auto* fit = app.add_subcommand("fit", "fit the copula and risk models");
  bool force = false;
  flag(fit, "--bank", ov.bank, [&](RunConfig& c) { c.bank = ov.bank; }, "item bank JSON");
  flag(fit, "--data", ov.data, [&](RunConfig& c) { c.data = ov.data; }, "training data CSV");
  flag(fit, "--k", ov.k, [&](RunConfig& c) { c.k = ov.k; }, "latent factors");
  flag(fit, "--copula-draws", ov.copula.draws, [&](RunConfig& c) { c.copula.draws = ov.copula.draws; }, "retained copula draws");
  flag(fit, "--copula-burn-in", ov.copula.burn_in, [&](RunConfig& c) { c.copula.burn_in = ov.copula.burn_in; }, "copula burn-in");
  flag(fit, "--copula-seed", ov.copula.seed, [&](RunConfig& c) { c.copula.seed = ov.copula.seed; }, "copula seed");
  flag(fit, "--trees", ov.risk.num_trees, [&](RunConfig& c) { c.risk.num_trees = ov.risk.num_trees; }, "trees per ensemble");
  flag(fit, "--risk-draws", ov.risk.draws, [&](RunConfig& c) { c.risk.draws = ov.risk.draws; }, "retained risk draws");
  flag(fit, "--risk-burn-in", ov.risk.burn_in, [&](RunConfig& c) { c.risk.burn_in = ov.risk.burn_in; }, "risk burn-in");
  flag(fit, "--risk-seed", ov.risk.seed, [&](RunConfig& c) { c.risk.seed = ov.risk.seed; }, "risk seed");
  fit->add_flag("--force", force, "refit even when archives are up to date");

  auto* synth = app.add_subcommand("synth", "generate the synthetic population and pruning reservoir");
  flag(synth, "--N", ov.block_size, [&](RunConfig& c) { c.block_size = ov.block_size; }, "rows per posterior draw");
  flag(synth, "--D", ov.draws, [&](RunConfig& c) { c.draws = ov.draws; }, "posterior draws used");
  flag(synth, "--predicate", ov.predicate, [&](RunConfig& c) { c.predicate = ov.predicate; }, "e.g. age>=15");
  flag(synth, "--reservoir", ov.reservoir, [&](RunConfig& c) { c.reservoir = ov.reservoir; }, "pruning reservoir rows");
  flag(synth, "--seed", ov.population_seed, [&](RunConfig& c) { c.population_seed = ov.population_seed; }, "population seed");

  auto* design = app.add_subcommand("design", "grow, prune and threshold one test per m");
  auto design_flags = [&](CLI::App* sub) {
    flag(sub, "--m", ov.m_values, [&](RunConfig& c) { c.m_values = ov.m_values; }, "test lengths");
    flag(sub, "--w", ov.weights, [&](RunConfig& c) { c.weights = ov.weights; }, "utility weights");
    flag(sub, "--min-node", ov.min_node, [&](RunConfig& c) { c.min_node = ov.min_node; }, "minimum rows per leaf");
  };
  design_flags(design);
  flag(design, "--bank", ov.bank, [&](RunConfig& c) { c.bank = ov.bank; }, "item bank JSON");
  flag(design, "--constraint", ov.constraint, [&](RunConfig& c) { c.constraint = ov.constraint; }, "maxIPP or maxDepth");
  flag(design, "--method", ov.method, [&](RunConfig& c) { c.method = ov.method; },
       "regression, classify-outcome or classify-utility");
  double prune_threshold = 0.0;
  flag(design, "--prune-threshold", prune_threshold, [&](RunConfig& c) { c.prune_threshold = prune_threshold; },
       "holdout RMSE reduction floor");
  flag(design, "--patience", ov.patience, [&](RunConfig& c) { c.patience = ov.patience; }, "consecutive misses before stopping");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "score designed tests on a holdout dataset");
  flag(evaluate_cmd, "--holdout", ov.holdout, [&](RunConfig& c) { c.holdout = ov.holdout; }, "holdout data CSV");
  flag(evaluate_cmd, "--bank", ov.bank, [&](RunConfig& c) { c.bank = ov.bank; }, "item bank JSON");
  flag(evaluate_cmd, "--m", ov.m_values, [&](RunConfig& c) { c.m_values = ov.m_values; }, "test lengths");
  flag(evaluate_cmd, "--w", ov.weights, [&](RunConfig& c) { c.weights = ov.weights; }, "utility weights");
  bool no_svg = false;
  evaluate_cmd->add_flag("--no-svg", no_svg, "skip SVG figures");

  auto* compare = app.add_subcommand("compare", "compare tree methods over a grid");
  design_flags(compare);
  flag(compare, "--methods", ov.compare_methods, [&](RunConfig& c) { c.compare_methods = ov.compare_methods; },
       "tree methods");
  flag(compare, "--constraints", ov.compare_constraints,
       [&](RunConfig& c) { c.compare_constraints = ov.compare_constraints; }, "maxIPP and/or maxDepth");
  flag(compare, "--holdout", ov.holdout, [&](RunConfig& c) { c.holdout = ov.holdout; }, "score on this data instead");
  flag(compare, "--bank", ov.bank, [&](RunConfig& c) { c.bank = ov.bank; }, "item bank JSON");

  auto* export_cmd = app.add_subcommand("export", "export a deployment file or the population as CSV");
  std::string what, to;
  std::size_t export_m = 0;
  double export_w = 0.5;
  export_cmd->add_option("--what", what, "population or test")->required();
  export_cmd->add_option("--to", to, "destination path")->required();
  export_cmd->add_option("--m", export_m, "test length");
  export_cmd->add_option("--w", export_w, "utility weight");
  flag(export_cmd, "--bank", ov.bank, [&](RunConfig& c) { c.bank = ov.bank; }, "item bank JSON");

  auto* report = app.add_subcommand("report", "render SVG figures and a summary from evaluate's CSVs");

  auto* simulate = app.add_subcommand("simulate", "write a simulated study (bank, train, test, truth)");
  SimulateOptions sim;
  simulate->add_option("--n", sim.n, "training rows");
  simulate->add_option("--n-test", sim.n_test, "holdout rows");
  simulate->add_option("--items", sim.items, "number of items");
  simulate->add_option("--seed", sim.seed, "simulation seed");
  simulate->add_option("--intercept", sim.intercept, "risk intercept on the logit scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      require_file(config_path, "config");
      json j;
      try {
        j = json::parse(read_file(config_path));
      } catch (const json::parse_error& e) {
        fail(ErrorCode::InvalidConfig, "config '" + config_path + "' is not valid JSON: " + e.what());
      }
      cfg = config_from_json(j);
    }
    for (auto& [opt, apply] : overrides)
      if (opt->count() > 0) apply(cfg);
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) cfg.output_dir = env;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (threads > 0) cfg.threads = threads;
    if (no_svg) cfg.svg = false;
    validate(cfg);

    Context ctx(cfg, out, err);
    if (*fit) return cmd_fit(ctx, force);
    if (*synth) return cmd_synth(ctx);
    if (*design) return cmd_design(ctx);
    if (*evaluate_cmd) return cmd_evaluate(ctx);
    if (*compare) return cmd_compare(ctx);
    if (*export_cmd) return cmd_export(ctx, what, export_m, export_w, to);
    if (*report) return cmd_report(ctx);
    if (*simulate) return cmd_simulate(ctx, sim);
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.is_usage() ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: Io: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace adascreen::cli
