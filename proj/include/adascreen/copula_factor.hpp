#pragma once

// Gaussian copula factor model: latent z_i = Λ f_i + ε_i with f_i ~ N(0, I_k),
// ε_i ~ N(0, I_p), and observed x_ir = F_r^{-1}(Φ(z_ir / sqrt(1 + |λ_r|²))) for
// empirical marginals F_r. Fitted by Gibbs sampling under the extended rank
// likelihood, so the marginals never enter the likelihood for Λ.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "adascreen/code_matrix.hpp"
#include "adascreen/error.hpp"
#include "adascreen/hash.hpp"
#include "adascreen/item_model.hpp"
#include "adascreen/rng.hpp"

namespace adascreen {

/// Right-continuous ECDF of one variable with its generalized inverse.
struct EmpiricalMarginal {
  std::vector<int> values;            // strictly increasing support
  std::vector<std::size_t> counts;    // observations per support value
  std::vector<double> cdf;            // F at each support value; back() == 1

  static EmpiricalMarginal from_counts(std::vector<int> values, std::vector<std::size_t> counts) {
    EmpiricalMarginal m;
    m.values = std::move(values);
    m.counts = std::move(counts);
    const std::size_t total = std::accumulate(m.counts.begin(), m.counts.end(), std::size_t{0});
    std::size_t running = 0;
    for (auto c : m.counts) {
      running += c;
      m.cdf.push_back(static_cast<double>(running) / static_cast<double>(total));
    }
    m.cdf.back() = 1.0;
    return m;
  }

  static EmpiricalMarginal from_column(std::span<const Code> column) {
    std::vector<int> sorted(column.begin(), column.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> values;
    std::vector<std::size_t> counts;
    for (int v : sorted) {
      if (values.empty() || values.back() != v) {
        values.push_back(v);
        counts.push_back(0);
      }
      ++counts.back();
    }
    return from_counts(std::move(values), std::move(counts));
  }

  std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

  /// F(x) = Pr(X <= x).
  double operator()(double x) const {
    auto it = std::upper_bound(values.begin(), values.end(), x,
                               [](double a, int b) { return a < static_cast<double>(b); });
    if (it == values.begin()) return 0.0;
    return cdf[static_cast<std::size_t>(it - values.begin()) - 1];
  }

  /// F^{-1}(t) = inf{x : F(x) >= t}.
  int quantile(double t) const {
    auto it = std::lower_bound(cdf.begin(), cdf.end(), t);
    if (it == cdf.end()) return values.back();
    return values[static_cast<std::size_t>(it - cdf.begin())];
  }

  /// Index of `code` in the support, or -1.
  int level_of(int code) const {
    auto it = std::lower_bound(values.begin(), values.end(), code);
    if (it == values.end() || *it != code) return -1;
    return static_cast<int>(it - values.begin());
  }
};

/// Variable layout and marginals, shared by every draw of one fit.
struct CopulaLayout {
  std::vector<std::string> variable_names;  // items first, then conditioning variables
  std::size_t num_items = 0;
  std::vector<EmpiricalMarginal> marginals;

  std::size_t num_vars() const { return variable_names.size(); }
  std::optional<std::size_t> index_of(const std::string& name) const {
    auto it = std::find(variable_names.begin(), variable_names.end(), name);
    if (it == variable_names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - variable_names.begin());
  }
  bool is_conditioning(std::size_t idx) const { return idx >= num_items && idx < num_vars(); }
};

struct CopulaFactorParams {
  Eigen::MatrixXd loadings;  // p x k, lower triangular with nonnegative diagonal
  std::shared_ptr<const CopulaLayout> layout;

  std::size_t factor_dim() const { return static_cast<std::size_t>(loadings.cols()); }
  std::size_t num_vars() const { return static_cast<std::size_t>(loadings.rows()); }

  /// Latent covariance ΛΛᵀ + I.
  Eigen::MatrixXd implied_covariance() const {
    Eigen::MatrixXd cov = loadings * loadings.transpose();
    cov.diagonal().array() += 1.0;
    return cov;
  }

  /// Copula correlation: ΛΛᵀ + I rescaled to unit diagonal.
  Eigen::MatrixXd implied_correlation() const {
    Eigen::MatrixXd cov = implied_covariance();
    const Eigen::VectorXd inv_sd = cov.diagonal().array().rsqrt();
    return inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
  }
};

struct McmcConfig {
  std::size_t burn_in = 1000;
  std::size_t thin = 1;
  std::size_t draws = 1000;
  std::uint64_t seed = 1;
};

struct ChainDiagnostics {
  std::vector<double> loading_norm_trace;  // squared Frobenius norm of Λ per retained draw
  double geweke_z = 0.0;
  bool converged = true;
  std::vector<std::string> warnings;
};

struct CopulaPosterior {
  std::vector<CopulaFactorParams> draws;
  ChainDiagnostics diagnostics;
  McmcConfig config;
  std::size_t num_observations = 0;

  std::size_t size() const { return draws.size(); }
  const CopulaLayout& layout() const { return *draws.front().layout; }

  Eigen::MatrixXd mean_implied_correlation() const {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(layout().num_vars()),
                                                static_cast<Eigen::Index>(layout().num_vars()));
    for (const auto& d : draws) acc += d.implied_correlation();
    return acc / static_cast<double>(draws.size());
  }
};

namespace detail {

/// Geweke statistic comparing the first 10% and last 50% of a trace, with
/// batch-means variance estimates for each segment.
inline double geweke_z(const std::vector<double>& trace) {
  const std::size_t n = trace.size();
  if (n < 20) return 0.0;
  auto seg_stats = [&](std::size_t begin, std::size_t end) {
    const std::size_t len = end - begin;
    double mean = 0.0;
    for (std::size_t i = begin; i < end; ++i) mean += trace[i];
    mean /= static_cast<double>(len);
    const std::size_t batches = std::min<std::size_t>(10, len);
    const std::size_t bsize = len / batches;
    double var_of_mean = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      double bm = 0.0;
      for (std::size_t i = begin + b * bsize; i < begin + (b + 1) * bsize; ++i) bm += trace[i];
      bm /= static_cast<double>(bsize);
      var_of_mean += (bm - mean) * (bm - mean);
    }
    var_of_mean /= static_cast<double>(batches) * static_cast<double>(batches - 1);
    return std::pair{mean, var_of_mean};
  };
  auto [ma, va] = seg_stats(0, n / 10);
  auto [mb, vb] = seg_stats(n / 2, n);
  const double denom = std::sqrt(va + vb);
  return denom > 0 ? (ma - mb) / denom : 0.0;
}

/// Rotates a p x k loading matrix to lower-triangular form with nonnegative
/// diagonal. The implied covariance ΛΛᵀ is unchanged.
inline Eigen::MatrixXd to_lower_triangular(const Eigen::MatrixXd& loadings) {
  const auto k = loadings.cols();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(loadings.topRows(k).transpose());
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
  Eigen::MatrixXd rotated = loadings * q;
  for (Eigen::Index c = 0; c < k; ++c) {
    if (rotated(c, c) < 0) rotated.col(c) *= -1.0;
    for (Eigen::Index r = 0; r < c; ++r) rotated(r, c) = 0.0;
  }
  return rotated;
}

}  // namespace detail

/// Fits the copula factor model to the columns of `data` (items then
/// conditioning variables, as named by `names`).
inline CopulaPosterior fit_gcfm(const CodeMatrix& data, const std::vector<std::string>& names, std::size_t num_items,
                                std::size_t k, const McmcConfig& mcmc) {
  const std::size_t n = data.rows();
  const std::size_t p = data.cols();
  require(k >= 1, ErrorCode::InvalidFactorDim, "factor dimension must be at least 1");
  require(k <= p, ErrorCode::InvalidFactorDim, "factor dimension exceeds the number of variables");
  require(names.size() == p, ErrorCode::InvalidArgument, "variable names do not match data columns");
  require(n >= 10 * k, ErrorCode::InsufficientData,
          "need at least 10*k observations (" + std::to_string(10 * k) + "), got " + std::to_string(n));
  require(mcmc.draws >= 1 && mcmc.thin >= 1, ErrorCode::InvalidConfig, "draws and thin must be positive");

  auto layout = std::make_shared<CopulaLayout>();
  layout->variable_names = names;
  layout->num_items = num_items;
  for (std::size_t r = 0; r < p; ++r) {
    layout->marginals.push_back(EmpiricalMarginal::from_column(data.column(r)));
    require(layout->marginals.back().values.size() >= 2, ErrorCode::DegenerateMarginal,
            "variable '" + names[r] + "' is constant");
  }

  // Level membership for the rank constraints.
  std::vector<std::vector<std::vector<int>>> members(p);
  for (std::size_t r = 0; r < p; ++r) {
    const auto& marg = layout->marginals[r];
    members[r].resize(marg.values.size());
    auto col = data.column(r);
    for (std::size_t i = 0; i < n; ++i) members[r][static_cast<std::size_t>(marg.level_of(col[i]))].push_back(static_cast<int>(i));
  }

  Rng rng(derive_seed(mcmc.seed, stream_tag::copula_fit));
  const auto N = static_cast<Eigen::Index>(n);
  const auto P = static_cast<Eigen::Index>(p);
  const auto K = static_cast<Eigen::Index>(k);

  // Start from normal scores and a principal-axis factor solution.
  Eigen::MatrixXd Z(N, P);
  for (std::size_t r = 0; r < p; ++r) {
    const auto& marg = layout->marginals[r];
    double before = 0.0;
    for (std::size_t l = 0; l < marg.values.size(); ++l) {
      const double mid = (before + 0.5 * static_cast<double>(marg.counts[l])) / static_cast<double>(n);
      const double score = normal_quantile(mid);
      for (int i : members[r][l]) Z(i, static_cast<Eigen::Index>(r)) = score;
      before += static_cast<double>(marg.counts[l]);
    }
  }
  Eigen::MatrixXd Lambda(P, K);
  {
    Eigen::MatrixXd centered = Z.rowwise() - Z.colwise().mean();
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
    Eigen::VectorXd sd = cov.diagonal().array().sqrt();
    Eigen::MatrixXd corr = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
    Eigen::MatrixXd B(P, K);
    for (Eigen::Index c = 0; c < K; ++c) {
      const Eigen::Index src = P - 1 - c;  // eigenvalues ascend
      B.col(c) = eig.eigenvectors().col(src) * std::sqrt(std::max(eig.eigenvalues()(src), 1e-3));
    }
    for (Eigen::Index r = 0; r < P; ++r) {
      double norm = B.row(r).norm();
      if (norm > 0.9) {
        B.row(r) *= 0.9 / norm;
        norm = 0.9;
      }
      Lambda.row(r) = B.row(r) / std::sqrt(1.0 - norm * norm);
    }
    Lambda = detail::to_lower_triangular(Lambda);
    for (Eigen::Index r = 0; r < P; ++r) Z.col(r) *= std::sqrt(1.0 + Lambda.row(r).squaredNorm());
  }
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(N, K);

  CopulaPosterior posterior;
  posterior.config = mcmc;
  posterior.num_observations = n;
  const std::size_t total_iter = mcmc.burn_in + mcmc.draws * mcmc.thin;
  const Eigen::MatrixXd I_k = Eigen::MatrixXd::Identity(K, K);
  Eigen::VectorXd mean_col(N);

  for (std::size_t iter = 0; iter < total_iter; ++iter) {
    // factors | z, Λ
    {
      Eigen::MatrixXd precision = I_k + Lambda.transpose() * Lambda;
      Eigen::LLT<Eigen::MatrixXd> llt(precision);
      Eigen::MatrixXd cov = llt.solve(I_k);
      Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(cov).matrixL();
      Eigen::MatrixXd noise(N, K);
      for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index c = 0; c < K; ++c) noise(i, c) = std_normal(rng);
      F = Z * Lambda * cov + noise * chol.transpose();
    }

    // Λ | z, f, row by row; row r < k has r+1 free entries, the last one >= 0
    {
      const Eigen::MatrixXd FtF = F.transpose() * F;
      const Eigen::MatrixXd FtZ = F.transpose() * Z;
      for (Eigen::Index r = 0; r < P; ++r) {
        const Eigen::Index q = std::min<Eigen::Index>(r + 1, K);
        Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(q, q) + FtF.topLeftCorner(q, q);
        Eigen::LLT<Eigen::MatrixXd> llt(prec);
        const Eigen::VectorXd mean = llt.solve(FtZ.col(r).head(q));
        Eigen::VectorXd lam = Lambda.row(r).head(q).transpose();
        if (r >= K) {
          Eigen::VectorXd eps(q);
          for (Eigen::Index c = 0; c < q; ++c) eps(c) = std_normal(rng);
          lam = mean + llt.matrixU().solve(eps);
        } else {
          const Eigen::Index d = q - 1;
          if (d > 0) {
            // free off-diagonal entries | diagonal
            const Eigen::MatrixXd prec_oo = prec.topLeftCorner(d, d);
            Eigen::LLT<Eigen::MatrixXd> llt_oo(prec_oo);
            const Eigen::VectorXd cond_mean =
                mean.head(d) - llt_oo.solve(prec.col(d).head(d)) * (lam(d) - mean(d));
            Eigen::VectorXd eps(d);
            for (Eigen::Index c = 0; c < d; ++c) eps(c) = std_normal(rng);
            lam.head(d) = cond_mean + llt_oo.matrixU().solve(eps);
          }
          // diagonal | off-diagonal, truncated to [0, inf)
          const double pdd = prec(d, d);
          double m = mean(d);
          if (d > 0) m -= prec.row(d).head(d).dot(lam.head(d) - mean.head(d)) / pdd;
          const double sd = 1.0 / std::sqrt(pdd);
          lam(d) = m + sd * truncated_std_normal(-m / sd, std::numeric_limits<double>::infinity(), rng);
        }
        Lambda.row(r).head(q) = lam.transpose();
      }
    }

    // z | f, Λ, ranks: level by level within each column
    for (std::size_t r = 0; r < p; ++r) {
      const auto R = static_cast<Eigen::Index>(r);
      mean_col.noalias() = F * Lambda.row(R).transpose();
      const auto& lev = members[r];
      const std::size_t L = lev.size();
      std::vector<double> level_min(L), level_max(L);
      for (std::size_t l = 0; l < L; ++l) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int i : lev[l]) {
          lo = std::min(lo, Z(i, R));
          hi = std::max(hi, Z(i, R));
        }
        level_min[l] = lo;
        level_max[l] = hi;
      }
      std::vector<double> suffix_min(L + 1, std::numeric_limits<double>::infinity());
      for (std::size_t l = L; l-- > 0;) suffix_min[l] = std::min(suffix_min[l + 1], level_min[l]);
      double lower = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < L; ++l) {
        const double upper = suffix_min[l + 1];
        double new_max = -std::numeric_limits<double>::infinity();
        for (int i : lev[l]) {
          const double z = truncated_normal(mean_col(i), lower, upper, rng);
          Z(i, R) = z;
          new_max = std::max(new_max, z);
        }
        lower = std::max(lower, new_max);
      }
    }

    if (iter >= mcmc.burn_in && (iter - mcmc.burn_in + 1) % mcmc.thin == 0) {
      posterior.draws.push_back(CopulaFactorParams{Lambda, layout});
      posterior.diagnostics.loading_norm_trace.push_back(Lambda.squaredNorm());
    }
  }

  posterior.diagnostics.geweke_z = detail::geweke_z(posterior.diagnostics.loading_norm_trace);
  if (std::abs(posterior.diagnostics.geweke_z) > 3.0) {
    posterior.diagnostics.converged = false;
    posterior.diagnostics.warnings.push_back("Geweke |z| = " + std::to_string(std::abs(posterior.diagnostics.geweke_z)) +
                                             " on the loading-norm trace; consider a longer burn-in");
  }
  return posterior;
}

/// Fits the model to the augmented vector (items, conditioning variables).
inline CopulaPosterior fit_gcfm(const Dataset& data, std::size_t k, const McmcConfig& mcmc) {
  return fit_gcfm(data.augmented(), data.augmented_names(), data.num_items(), k, mcmc);
}

namespace detail {

/// Draws one predictive row into `out` (length p). Consumes k + p normals.
inline void sample_row(const CopulaFactorParams& theta, const Eigen::VectorXd& scale, Rng& rng,
                       Eigen::VectorXd& factors, std::vector<int>& out) {
  const auto K = theta.loadings.cols();
  for (Eigen::Index c = 0; c < K; ++c) factors(c) = std_normal(rng);
  const auto& marginals = theta.layout->marginals;
  for (Eigen::Index r = 0; r < theta.loadings.rows(); ++r) {
    const double z = theta.loadings.row(r).dot(factors) + std_normal(rng);
    out[static_cast<std::size_t>(r)] = marginals[static_cast<std::size_t>(r)].quantile(normal_cdf(z / scale(r)));
  }
}

inline Eigen::VectorXd latent_scale(const CopulaFactorParams& theta) {
  return (1.0 + theta.loadings.rowwise().squaredNorm().array()).sqrt().matrix();
}

}  // namespace detail

/// N rows from f(x̃ | θ_X), covering items and conditioning variables.
inline CodeMatrix sample_predictive(const CopulaFactorParams& theta, std::size_t count, std::uint64_t seed) {
  require(count >= 1, ErrorCode::InvalidCount, "sample count must be at least 1");
  Rng rng(seed);
  const std::size_t p = theta.num_vars();
  CodeMatrix out(count, p);
  const Eigen::VectorXd scale = detail::latent_scale(theta);
  Eigen::VectorXd factors(theta.loadings.cols());
  std::vector<int> row(p);
  for (std::size_t i = 0; i < count; ++i) {
    detail::sample_row(theta, scale, rng, factors, row);
    for (std::size_t r = 0; r < p; ++r) out(i, r) = static_cast<Code>(row[r]);
  }
  return out;
}

enum class CompareOp { Less, LessEqual, Equal, NotEqual, GreaterEqual, Greater };

struct Condition {
  std::string variable;
  CompareOp op = CompareOp::GreaterEqual;
  int value = 0;

  bool holds(int x) const {
    switch (op) {
      case CompareOp::Less: return x < value;
      case CompareOp::LessEqual: return x <= value;
      case CompareOp::Equal: return x == value;
      case CompareOp::NotEqual: return x != value;
      case CompareOp::GreaterEqual: return x >= value;
      case CompareOp::Greater: return x > value;
    }
    return false;
  }
};

/// Conjunction of comparisons on conditioning variables; empty means always true.
struct Predicate {
  std::vector<Condition> all_of;

  bool always_true() const { return all_of.empty(); }

  /// Parses e.g. "age>=15" or "age>=15,age<18".
  static Predicate parse(const std::string& text) {
    Predicate pred;
    std::string part;
    std::stringstream ss(text);
    while (std::getline(ss, part, ',')) {
      part.erase(std::remove_if(part.begin(), part.end(), [](unsigned char ch) { return std::isspace(ch); }),
                 part.end());
      if (part.empty()) continue;
      static const std::pair<const char*, CompareOp> ops[] = {
          {">=", CompareOp::GreaterEqual}, {"<=", CompareOp::LessEqual}, {"!=", CompareOp::NotEqual},
          {"==", CompareOp::Equal},        {">", CompareOp::Greater},    {"<", CompareOp::Less},
          {"=", CompareOp::Equal}};
      bool matched = false;
      for (const auto& [tok, op] : ops) {
        const auto pos = part.find(tok);
        if (pos == std::string::npos || pos == 0) continue;
        const auto value = detail::parse_int(part.substr(pos + std::strlen(tok)));
        require(value.has_value(), ErrorCode::InvalidConfig, "predicate '" + part + "' needs an integer right-hand side");
        pred.all_of.push_back({part.substr(0, pos), op, *value});
        matched = true;
        break;
      }
      require(matched, ErrorCode::InvalidConfig, "cannot parse predicate '" + part + "'");
    }
    return pred;
  }

  std::string to_string() const {
    std::string out;
    for (const auto& c : all_of) {
      if (!out.empty()) out += ',';
      static const char* names[] = {"<", "<=", "==", "!=", ">=", ">"};
      out += c.variable + names[static_cast<int>(c.op)] + std::to_string(c.value);
    }
    return out;
  }
};

struct ConditionalSample {
  CodeMatrix rows;
  std::size_t proposals = 0;
};

inline constexpr double kDefaultAcceptanceFloor = 0.01;

/// N rows from the predictive distribution restricted to `predicate`, by
/// rejection. Proposals are the same stream sample_predictive would draw, so an
/// always-true predicate reproduces it exactly.
inline ConditionalSample sample_conditional(const CopulaFactorParams& theta, const Predicate& predicate,
                                            std::size_t count, std::uint64_t seed,
                                            double acceptance_floor = kDefaultAcceptanceFloor) {
  require(count >= 1, ErrorCode::InvalidCount, "sample count must be at least 1");
  require(acceptance_floor > 0.0 && acceptance_floor <= 1.0, ErrorCode::InvalidConfig,
          "acceptance floor must lie in (0, 1]");
  const auto& layout = *theta.layout;
  std::vector<std::pair<std::size_t, Condition>> resolved;
  for (const auto& c : predicate.all_of) {
    auto idx = layout.index_of(c.variable);
    require(idx.has_value() && layout.is_conditioning(*idx), ErrorCode::UnknownConditioningVar,
            "'" + c.variable + "' is not a declared conditioning variable");
    resolved.emplace_back(*idx, c);
  }
  const auto budget = static_cast<std::size_t>(std::ceil(static_cast<double>(count) / acceptance_floor));

  Rng rng(seed);
  const std::size_t p = theta.num_vars();
  ConditionalSample result{CodeMatrix(count, p), 0};
  const Eigen::VectorXd scale = detail::latent_scale(theta);
  Eigen::VectorXd factors(theta.loadings.cols());
  std::vector<int> row(p);
  std::size_t accepted = 0;
  while (accepted < count) {
    require(result.proposals < budget, ErrorCode::AcceptanceTooLow,
            "predicate '" + predicate.to_string() + "' accepted " + std::to_string(accepted) + " of " +
                std::to_string(result.proposals) + " proposals; below the acceptance floor");
    detail::sample_row(theta, scale, rng, factors, row);
    ++result.proposals;
    bool ok = true;
    for (const auto& [idx, c] : resolved) ok = ok && c.holds(row[idx]);
    if (!ok) continue;
    for (std::size_t r = 0; r < p; ++r) result.rows(accepted, r) = static_cast<Code>(row[r]);
    ++accepted;
  }
  return result;
}

// ---- archive ---------------------------------------------------------------

inline constexpr const char* kCopulaFormat = "copula-posterior/v1";

inline nlohmann::json to_json(const CopulaPosterior& post) {
  const auto& layout = post.layout();
  nlohmann::json marginals = nlohmann::json::array();
  for (const auto& m : layout.marginals) marginals.push_back({{"values", m.values}, {"counts", m.counts}});
  nlohmann::json draws = nlohmann::json::array();
  for (const auto& d : post.draws) {
    std::vector<double> flat;
    for (Eigen::Index r = 0; r < d.loadings.rows(); ++r)
      for (Eigen::Index c = 0; c < d.loadings.cols(); ++c) flat.push_back(d.loadings(r, c));
    draws.push_back(flat);
  }
  nlohmann::json payload = {
      {"format", kCopulaFormat},
      {"k", post.draws.front().factor_dim()},
      {"p", layout.num_vars()},
      {"num_items", layout.num_items},
      {"variable_names", layout.variable_names},
      {"marginals", marginals},
      {"draws", draws},
      {"num_observations", post.num_observations},
      {"mcmc", {{"burn_in", post.config.burn_in}, {"thin", post.config.thin},
                {"draws", post.config.draws}, {"seed", post.config.seed}}},
      {"diagnostics", {{"loading_norm_trace", post.diagnostics.loading_norm_trace},
                       {"geweke_z", post.diagnostics.geweke_z},
                       {"converged", post.diagnostics.converged},
                       {"warnings", post.diagnostics.warnings}}},
  };
  payload["content_hash"] = content_hash(payload.dump());
  return payload;
}

inline CopulaPosterior copula_posterior_from_json(const nlohmann::json& j) {
  require(j.value("format", "") == kCopulaFormat, ErrorCode::SchemaViolation, "not a copula posterior archive");
  nlohmann::json payload = j;
  const std::string stored = payload.value("content_hash", "");
  payload.erase("content_hash");
  require(stored == content_hash(payload.dump()), ErrorCode::SchemaViolation, "copula archive content hash mismatch");

  auto layout = std::make_shared<CopulaLayout>();
  layout->variable_names = j.at("variable_names").get<std::vector<std::string>>();
  layout->num_items = j.at("num_items").get<std::size_t>();
  for (const auto& m : j.at("marginals"))
    layout->marginals.push_back(EmpiricalMarginal::from_counts(m.at("values").get<std::vector<int>>(),
                                                               m.at("counts").get<std::vector<std::size_t>>()));
  const auto p = j.at("p").get<Eigen::Index>();
  const auto k = j.at("k").get<Eigen::Index>();
  CopulaPosterior post;
  for (const auto& d : j.at("draws")) {
    const auto flat = d.get<std::vector<double>>();
    require(static_cast<Eigen::Index>(flat.size()) == p * k, ErrorCode::SchemaViolation, "loading matrix size mismatch");
    Eigen::MatrixXd lam(p, k);
    for (Eigen::Index r = 0; r < p; ++r)
      for (Eigen::Index c = 0; c < k; ++c) lam(r, c) = flat[static_cast<std::size_t>(r * k + c)];
    post.draws.push_back({std::move(lam), layout});
  }
  require(!post.draws.empty(), ErrorCode::SchemaViolation, "copula archive holds no draws");
  post.num_observations = j.at("num_observations").get<std::size_t>();
  const auto& mc = j.at("mcmc");
  post.config = {mc.at("burn_in").get<std::size_t>(), mc.at("thin").get<std::size_t>(),
                 mc.at("draws").get<std::size_t>(), mc.at("seed").get<std::uint64_t>()};
  const auto& dg = j.at("diagnostics");
  post.diagnostics.loading_norm_trace = dg.at("loading_norm_trace").get<std::vector<double>>();
  post.diagnostics.geweke_z = dg.at("geweke_z").get<double>();
  post.diagnostics.converged = dg.at("converged").get<bool>();
  post.diagnostics.warnings = dg.at("warnings").get<std::vector<std::string>>();
  return post;
}

inline void save_copula_posterior(const CopulaPosterior& post, const std::string& path) {
  write_file(path, to_json(post).dump() + "\n");
}

inline CopulaPosterior load_copula_posterior(const std::string& path) {
  try {
    return copula_posterior_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaViolation, "'" + path + "': " + e.what());
  }
}

}  // namespace adascreen
