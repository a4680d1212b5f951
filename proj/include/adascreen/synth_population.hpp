#pragma once

// Posterior predictive synthetic populations: one block of N rows per paired
// posterior draw (θ_X^(j), θ_Y^(j)), pooled into M = N·D rows with the
// posterior-mean at-risk probability Ē attached to each row.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adascreen/code_matrix.hpp"
#include "adascreen/copula_factor.hpp"
#include "adascreen/error.hpp"
#include "adascreen/hash.hpp"
#include "adascreen/parallel.hpp"
#include "adascreen/risk_ensemble.hpp"
#include "adascreen/rng.hpp"

namespace adascreen {

struct SyntheticPopulation;

/// Rows [begin, end) of a population, all generated from draw j.
struct SyntheticBlock {
  const SyntheticPopulation* population = nullptr;
  std::size_t draw_index = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
};

struct SyntheticPopulation {
  std::vector<std::string> variable_names;  // items first, then conditioning variables
  std::size_t num_items = 0;
  std::size_t block_size = 0;  // N; 0 when blocks have unequal sizes (reservoirs)
  std::vector<std::size_t> block_offsets{0};  // D + 1 entries
  CodeMatrix x;
  std::vector<double> p_tilde;
  std::vector<double> e_bar;
  std::vector<std::uint8_t> y_tilde;

  std::uint64_t seed = 0;
  std::string predicate;
  std::string copula_hash;
  std::string risk_hash;

  std::size_t rows() const { return x.rows(); }
  std::size_t num_blocks() const { return block_offsets.size() - 1; }
  SyntheticBlock block(std::size_t j) const { return {this, j, block_offsets[j], block_offsets[j + 1]}; }
  RowView row(std::size_t k) const { return {x, k}; }

  double base_rate() const {
    std::size_t pos = 0;
    for (auto y : y_tilde) pos += y;
    return y_tilde.empty() ? 0.0 : static_cast<double>(pos) / static_cast<double>(y_tilde.size());
  }

  std::vector<std::string> item_ids() const {
    return {variable_names.begin(), variable_names.begin() + static_cast<std::ptrdiff_t>(num_items)};
  }
};

/// Ē(Ỹ | x) over the first `draws` posterior draws, summed in draw order.
template <RiskModel M, class Row>
double mean_prob_over(const M& model, std::size_t draws, const Row& x) {
  double sum = 0.0;
  for (std::size_t j = 0; j < draws; ++j) sum += model.predict_prob(j, x);
  return sum / static_cast<double>(draws);
}

namespace detail {

inline std::uint64_t label_seed(std::uint64_t block_seed) { return derive_seed(block_seed, stream_tag::simulation); }

template <RiskModel M>
void check_draws(const CopulaPosterior& copula, const M& risk, std::size_t draws) {
  require(draws >= 1, ErrorCode::InvalidCount, "number of posterior draws D must be at least 1");
  require(copula.size() >= draws, ErrorCode::DrawCountMismatch,
          "copula posterior has " + std::to_string(copula.size()) + " draws, " + std::to_string(draws) + " requested");
  require(risk.num_draws() >= draws, ErrorCode::DrawCountMismatch,
          "risk posterior has " + std::to_string(risk.num_draws()) + " draws, " + std::to_string(draws) +
              " requested");
}

inline void check_items(const CopulaPosterior& copula, const RiskPosterior& risk) {
  const auto& names = copula.layout().variable_names;
  const auto& ids = risk.item_ids();
  bool ok = ids.size() <= copula.layout().num_items;
  for (std::size_t i = 0; ok && i < ids.size(); ++i) ok = names[i] == ids[i];
  require(ok, ErrorCode::SchemaViolation, "risk and copula posteriors were fit on different item sets");
}

template <class M>
void check_items(const CopulaPosterior&, const M&) {}

// Fills rows [begin, begin + rows.rows()) from copula draw j and labels them with risk draw j.
template <RiskModel M>
void fill_block(SyntheticPopulation& pop, const CodeMatrix& rows, std::size_t begin, std::size_t j, const M& risk,
                std::uint64_t block_seed) {
  pop.x.paste_rows(begin, rows);
  Rng rng(label_seed(block_seed));
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const double p = risk.predict_prob(j, RowView(rows, i));
    pop.p_tilde[begin + i] = p;
    pop.y_tilde[begin + i] = uniform01(rng) < p ? 1 : 0;
  }
}

template <RiskModel M>
void attach_posterior_mean(SyntheticPopulation& pop, const M& risk, std::size_t draws, std::size_t threads) {
  constexpr std::size_t chunk = 1024;
  const std::size_t chunks = (pop.rows() + chunk - 1) / chunk;
  parallel_for(
      chunks,
      [&](std::size_t c) {
        const std::size_t end = std::min(pop.rows(), (c + 1) * chunk);
        for (std::size_t k = c * chunk; k < end; ++k) pop.e_bar[k] = mean_prob_over(risk, draws, pop.row(k));
      },
      threads);
}

inline SyntheticPopulation empty_population(const CopulaPosterior& copula, std::size_t rows) {
  SyntheticPopulation pop;
  pop.variable_names = copula.layout().variable_names;
  pop.num_items = copula.layout().num_items;
  pop.x = CodeMatrix(rows, pop.variable_names.size());
  pop.p_tilde.assign(rows, 0.0);
  pop.e_bar.assign(rows, 0.0);
  pop.y_tilde.assign(rows, 0);
  return pop;
}

}  // namespace detail

struct PopulationConfig {
  std::size_t block_size = 1000;  // N
  std::size_t draws = 1000;       // D
  std::uint64_t seed = 1;
  Predicate predicate;
  double acceptance_floor = kDefaultAcceptanceFloor;
  std::size_t threads = default_thread_count();
};

/// Block j: N rows from f(x̃ | θ_X^(j)) (restricted to the predicate), p̃ from
/// θ_Y^(j), ỹ ~ Bernoulli(p̃). Ē averages all D risk draws at each row.
template <RiskModel M>
SyntheticPopulation generate_population(const CopulaPosterior& copula, const M& risk, const PopulationConfig& cfg) {
  require(cfg.block_size >= 1, ErrorCode::InvalidCount, "block size N must be at least 1");
  detail::check_draws(copula, risk, cfg.draws);
  detail::check_items(copula, risk);
  const std::size_t N = cfg.block_size;
  const std::size_t D = cfg.draws;
  auto pop = detail::empty_population(copula, N * D);
  pop.block_size = N;
  pop.seed = cfg.seed;
  pop.predicate = cfg.predicate.to_string();
  pop.block_offsets.resize(D + 1);
  for (std::size_t j = 0; j <= D; ++j) pop.block_offsets[j] = j * N;

  parallel_for(
      D,
      [&](std::size_t j) {
        const std::uint64_t block_seed = derive_seed(cfg.seed, stream_tag::population, j);
        auto sample = sample_conditional(copula.draws[j], cfg.predicate, N, block_seed, cfg.acceptance_floor);
        detail::fill_block(pop, sample.rows, j * N, j, risk, block_seed);
      },
      cfg.threads);
  detail::attach_posterior_mean(pop, risk, D, cfg.threads);
  return pop;
}

inline constexpr std::size_t kDefaultReservoirSize = 100000;

/// Extra pooled rows for pruning. Rows are spread as evenly as possible over
/// the D draws; Ē again averages all D risk draws.
template <RiskModel M>
SyntheticPopulation generate_pruning_reservoir(const CopulaPosterior& copula, const M& risk, std::size_t count,
                                               const PopulationConfig& cfg) {
  require(count >= 1, ErrorCode::InvalidCount, "reservoir size must be at least 1");
  detail::check_draws(copula, risk, cfg.draws);
  detail::check_items(copula, risk);
  const std::size_t D = cfg.draws;
  auto pop = detail::empty_population(copula, count);
  pop.seed = cfg.seed;
  pop.predicate = cfg.predicate.to_string();
  pop.block_offsets.resize(D + 1);
  pop.block_offsets[0] = 0;
  for (std::size_t j = 0; j < D; ++j) pop.block_offsets[j + 1] = pop.block_offsets[j] + count / D + (j < count % D);

  parallel_for(
      D,
      [&](std::size_t j) {
        const std::size_t begin = pop.block_offsets[j];
        const std::size_t size = pop.block_offsets[j + 1] - begin;
        if (size == 0) return;
        const std::uint64_t block_seed = derive_seed(cfg.seed, stream_tag::reservoir, j);
        auto sample = sample_conditional(copula.draws[j], cfg.predicate, size, block_seed, cfg.acceptance_floor);
        detail::fill_block(pop, sample.rows, begin, j, risk, block_seed);
      },
      cfg.threads);
  detail::attach_posterior_mean(pop, risk, D, cfg.threads);
  return pop;
}

// ---- archive ---------------------------------------------------------------

inline constexpr const char* kPopulationFormat = "synthetic-population/v1";
inline constexpr char kPopulationMagic[8] = {'A', 'D', 'S', 'P', 'O', 'P', '1', '\0'};

namespace detail {

template <class T>
void append_raw(std::string& out, const T* data, std::size_t count) {
  out.append(reinterpret_cast<const char*>(data), count * sizeof(T));
}

template <class T>
void read_raw(const std::string& in, std::size_t& pos, T* data, std::size_t count) {
  const std::size_t bytes = count * sizeof(T);
  require(pos + bytes <= in.size(), ErrorCode::SchemaViolation, "population data file is truncated");
  std::memcpy(data, in.data() + pos, bytes);
  pos += bytes;
}

}  // namespace detail

/// Columnar binary body: magic, rows, cols, codes (column-major int16), p̃, Ē, ỹ.
inline std::string encode_population_data(const SyntheticPopulation& pop) {
  std::string out(kPopulationMagic, sizeof kPopulationMagic);
  const std::uint64_t dims[2] = {pop.rows(), pop.x.cols()};
  detail::append_raw(out, dims, 2);
  detail::append_raw(out, pop.x.raw().data(), pop.x.raw().size());
  detail::append_raw(out, pop.p_tilde.data(), pop.p_tilde.size());
  detail::append_raw(out, pop.e_bar.data(), pop.e_bar.size());
  detail::append_raw(out, pop.y_tilde.data(), pop.y_tilde.size());
  return out;
}

inline nlohmann::json population_manifest(const SyntheticPopulation& pop, const std::string& data_file,
                                          const std::string& data_hash) {
  return {{"format", kPopulationFormat},
          {"N", pop.block_size},
          {"D", pop.num_blocks()},
          {"M", pop.rows()},
          {"block_offsets", pop.block_offsets},
          {"seed", pop.seed},
          {"predicate", pop.predicate},
          {"variable_names", pop.variable_names},
          {"num_items", pop.num_items},
          {"base_rate", pop.base_rate()},
          {"models", {{"copula", pop.copula_hash}, {"risk", pop.risk_hash}}},
          {"data_file", data_file},
          {"data_hash", data_hash}};
}

/// Writes `<stem>.bin` and `<stem>.json`; returns the manifest.
inline nlohmann::json save_population(const SyntheticPopulation& pop, const std::string& stem) {
  const std::string data = encode_population_data(pop);
  const std::string bin = stem + ".bin";
  write_file(bin, data);
  const auto slash = bin.find_last_of('/');
  auto manifest = population_manifest(pop, slash == std::string::npos ? bin : bin.substr(slash + 1), content_hash(data));
  write_file(stem + ".json", manifest.dump(2) + "\n");
  return manifest;
}

inline SyntheticPopulation load_population(const std::string& manifest_path) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaViolation, "'" + manifest_path + "': " + e.what());
  }
  require(m.value("format", "") == kPopulationFormat, ErrorCode::SchemaViolation,
          "'" + manifest_path + "' is not a population manifest");
  const auto slash = manifest_path.find_last_of('/');
  const std::string dir = slash == std::string::npos ? "" : manifest_path.substr(0, slash + 1);
  const std::string data = read_file(dir + m.at("data_file").get<std::string>());
  require(content_hash(data) == m.at("data_hash").get<std::string>(), ErrorCode::SchemaViolation,
          "population data does not match its manifest hash");
  require(data.size() >= sizeof kPopulationMagic && std::memcmp(data.data(), kPopulationMagic, sizeof kPopulationMagic) == 0,
          ErrorCode::SchemaViolation, "population data has a bad header");

  SyntheticPopulation pop;
  std::size_t pos = sizeof kPopulationMagic;
  std::uint64_t dims[2];
  detail::read_raw(data, pos, dims, 2);
  pop.x = CodeMatrix(dims[0], dims[1]);
  pop.p_tilde.resize(dims[0]);
  pop.e_bar.resize(dims[0]);
  pop.y_tilde.resize(dims[0]);
  detail::read_raw(data, pos, pop.x.raw().data(), pop.x.raw().size());
  detail::read_raw(data, pos, pop.p_tilde.data(), dims[0]);
  detail::read_raw(data, pos, pop.e_bar.data(), dims[0]);
  detail::read_raw(data, pos, pop.y_tilde.data(), dims[0]);
  require(pos == data.size(), ErrorCode::SchemaViolation, "population data has trailing bytes");

  pop.variable_names = m.at("variable_names").get<std::vector<std::string>>();
  pop.num_items = m.at("num_items").get<std::size_t>();
  pop.block_size = m.at("N").get<std::size_t>();
  pop.block_offsets = m.at("block_offsets").get<std::vector<std::size_t>>();
  pop.seed = m.at("seed").get<std::uint64_t>();
  pop.predicate = m.at("predicate").get<std::string>();
  pop.copula_hash = m.at("models").at("copula").get<std::string>();
  pop.risk_hash = m.at("models").at("risk").get<std::string>();
  require(pop.variable_names.size() == dims[1] && pop.block_offsets.size() >= 2 &&
              pop.block_offsets.back() == dims[0],
          ErrorCode::SchemaViolation, "population manifest disagrees with its data file");
  return pop;
}

/// One line per pooled row: k, block, variables..., p_tilde, e_bar, y_tilde.
inline void write_population_csv(const SyntheticPopulation& pop, std::ostream& out) {
  out << "k,block";
  for (const auto& name : pop.variable_names) out << ',' << name;
  out << ",p_tilde,e_bar,y_tilde\n";
  out.precision(17);
  for (std::size_t j = 0; j < pop.num_blocks(); ++j) {
    for (std::size_t k = pop.block_offsets[j]; k < pop.block_offsets[j + 1]; ++k) {
      out << k << ',' << j;
      for (std::size_t c = 0; c < pop.x.cols(); ++c) out << ',' << pop.x(k, c);
      out << ',' << pop.p_tilde[k] << ',' << pop.e_bar[k] << ',' << static_cast<int>(pop.y_tilde[k]) << '\n';
    }
  }
}

}  // namespace adascreen
