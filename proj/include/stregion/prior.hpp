#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "stregion/graph.hpp"
#include "stregion/random.hpp"

namespace stregion {

// Log-probability that can also represent an impossible event. Arithmetic on
// the finite value never sees an infinity; callers test `impossible()`.
class LogProb {
 public:
  constexpr LogProb() = default;
  constexpr explicit LogProb(double v) : value_(v), impossible_(false) {}
  static constexpr LogProb zero_probability() {
    LogProb p;
    p.impossible_ = true;
    return p;
  }

  constexpr bool impossible() const noexcept { return impossible_; }

  double value() const {
    if (impossible_) throw std::logic_error("value() on a zero-probability LogProb");
    return value_;
  }

  // -inf for impossible events; only for reporting and comparisons.
  double value_or_neg_inf() const noexcept {
    return impossible_ ? -std::numeric_limits<double>::infinity() : value_;
  }

  friend constexpr LogProb operator+(LogProb a, LogProb b) {
    if (a.impossible_ || b.impossible_) return zero_probability();
    return LogProb(a.value_ + b.value_);
  }

 private:
  double value_ = 0.0;
  bool impossible_ = false;
};

struct PartitionPriorHyper {
  double a_upsilon = 10.0;
  double b_upsilon = 1.0;
  double a_kappa = 100.0;
  double b_kappa = 1.0;
  double a_zeta = 1.0;
  double b_zeta = 1.0;
  std::size_t q = 1;

  void validate() const {
    for (double v : {a_upsilon, b_upsilon, a_kappa, b_kappa, a_zeta, b_zeta}) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument("gamma hyperparameters must be positive and finite");
      }
    }
  }
};

// Beta-autoregressive latent chain. Slot j (0-based) holds season j + 1;
// the first S slots are data seasons, the trailing q are the horizon
// extension. Seasons at or before zero are implicitly zero.
struct LatentSeries {
  std::size_t n_seasons = 0;  // S
  std::size_t q = 0;
  std::vector<double> rho;
  std::vector<std::int64_t> u;
  std::vector<std::int64_t> c;
  double w = 0.5;
  double zeta = 1.0;
  double upsilon = 1.0;
  double kappa = 1.0;

  std::size_t n_slots() const noexcept { return n_seasons + q; }

  // sum_{l=0}^{q} u_{slot - l}, dropping slots before the first season.
  std::int64_t u_window(std::size_t slot) const { return window(u, slot); }
  std::int64_t c_window(std::size_t slot) const { return window(c, slot); }

  // Parameters of the conditional Be(upsilon + U, kappa + C - U) for rho at `slot`.
  std::pair<double, double> rho_prior_params(std::size_t slot) const {
    const auto uw = static_cast<double>(u_window(slot));
    const auto cw = static_cast<double>(c_window(slot));
    return {upsilon + uw, kappa + cw - uw};
  }

 private:
  std::int64_t window(const std::vector<std::int64_t>& v, std::size_t slot) const {
    std::int64_t sum = 0;
    for (std::size_t l = 0; l <= q && l <= slot; ++l) sum += v.at(slot - l);
    return sum;
  }
};

// log of rho^(k-1) (1 - rho)^(n-k) when the partition is obtainable by pruning
// the tree, zero probability otherwise.
inline LogProb log_partition_prior(const Partition& partition, const SpanningTree& tree, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in (0, 1)");
  if (!is_compatible(tree, partition)) return LogProb::zero_probability();
  const auto n = static_cast<double>(partition.n_areas());
  const auto k = static_cast<double>(partition.k());
  return LogProb((k - 1.0) * std::log(rho) + (n - k) * std::log1p(-rho));
}

struct ClusterCountMoments {
  double mean;
  double variance;
};

// Moments of K, where K - 1 ~ BetaBinomial(n - 1, upsilon, kappa).
inline ClusterCountMoments cluster_count_prior_moments(std::size_t n, double upsilon, double kappa) {
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  if (!(upsilon > 0.0) || !(kappa > 0.0)) throw std::invalid_argument("upsilon, kappa must be positive");
  const double m = static_cast<double>(n - 1);
  const double s = upsilon + kappa;
  return {m * upsilon / s + 1.0, m * upsilon * kappa * (s + m) / (s * s * (s + 1.0))};
}

// Prior pmf of the cluster count, index k - 1 for k = 1..n.
inline std::vector<double> cluster_count_prior_pmf(std::size_t n, double upsilon, double kappa) {
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  const double m = static_cast<double>(n - 1);
  std::vector<double> pmf(n);
  const double log_beta_0 = std::lgamma(upsilon) + std::lgamma(kappa) - std::lgamma(upsilon + kappa);
  for (std::size_t j = 0; j < n; ++j) {
    const double x = static_cast<double>(j);
    const double log_choose = std::lgamma(m + 1.0) - std::lgamma(x + 1.0) - std::lgamma(m - x + 1.0);
    const double log_beta = std::lgamma(x + upsilon) + std::lgamma(m - x + kappa) -
                            std::lgamma(m + upsilon + kappa);
    pmf[j] = std::exp(log_choose + log_beta - log_beta_0);
  }
  return pmf;
}

// corr(rho_s, rho_{s+l}) given pinned c. `s`, `l` are 1-based seasons;
// c[h - 1] is c_h, and c_h = 0 for h <= 0. The shared-window sum
// sum_{h=0}^{q-l} is empty when l > q.
inline double rho_autocorrelation(std::size_t s, std::size_t l, std::size_t q, double upsilon,
                                  double kappa, std::span<const std::int64_t> c) {
  if (s < 1 || l < 1) throw std::invalid_argument("s and l must be >= 1");
  if (c.size() < s + l) throw std::invalid_argument("c must cover seasons 1..s+l");
  auto c_at = [&](std::int64_t h) -> double { return h >= 1 ? static_cast<double>(c[h - 1]) : 0.0; };
  const auto si = static_cast<std::int64_t>(s);
  const auto li = static_cast<std::int64_t>(l);
  const auto qi = static_cast<std::int64_t>(q);
  double shared = 0.0;
  for (std::int64_t h = 0; h <= qi - li; ++h) shared += c_at(si - h);
  double cs = 0.0;
  double csl = 0.0;
  for (std::int64_t h = 0; h <= qi; ++h) {
    cs += c_at(si - h);
    csl += c_at(si + li - h);
  }
  const double m = upsilon + kappa;
  return (m * shared + cs * csl) / ((m + cs) * (m + csl));
}

// Draws w, c, u and rho for S data seasons plus the q-slot horizon, given
// fixed upsilon, kappa and zeta.
inline LatentSeries sample_latents_given(double upsilon, double kappa, double zeta, std::size_t S,
                                         std::size_t q, Rng& rng) {
  if (S < 1) throw std::invalid_argument("need at least one season");
  LatentSeries lat;
  lat.n_seasons = S;
  lat.q = q;
  lat.upsilon = upsilon;
  lat.kappa = kappa;
  lat.zeta = zeta;
  lat.w = beta_variate(rng, upsilon, kappa);
  const auto slots = lat.n_slots();
  lat.c.resize(slots);
  lat.u.resize(slots);
  lat.rho.resize(slots);
  for (std::size_t j = 0; j < slots; ++j) {
    lat.c[j] = poisson_variate(rng, zeta);
    lat.u[j] = binomial_variate(rng, lat.c[j], lat.w);
  }
  for (std::size_t j = 0; j < slots; ++j) {
    const auto [a, b] = lat.rho_prior_params(j);
    lat.rho[j] = beta_variate(rng, a, b);
  }
  return lat;
}

inline LatentSeries sample_prior_latents(const PartitionPriorHyper& hyper, std::size_t S, Rng& rng) {
  hyper.validate();
  const double upsilon = gamma_variate(rng, hyper.a_upsilon, hyper.b_upsilon);
  const double kappa = gamma_variate(rng, hyper.a_kappa, hyper.b_kappa);
  const double zeta = gamma_variate(rng, hyper.a_zeta, hyper.b_zeta);
  return sample_latents_given(upsilon, kappa, zeta, S, hyper.q, rng);
}

// Prim over iid Uniform(0,1) weights: the operational stand-in for a uniform
// spanning tree.
inline SpanningTree random_spanning_tree(const SpatialGraph& graph, Rng& rng) {
  std::vector<double> w(graph.n_edges());
  for (auto& x : w) x = uniform01(rng);
  return prim_mst(graph, w);
}

// Independent Bernoulli(rho) removal of every tree edge.
inline EdgeIndicators prune_tree(const SpanningTree& tree, double rho, Rng& rng) {
  EdgeIndicators bits(tree.edges().size());
  for (auto& b : bits) b = uniform01(rng) < rho ? 0 : 1;
  return bits;
}

struct PriorPredictiveOptions {
  std::optional<double> pinned_rho;  // overrides the latent draw when set
};

// partitions[draw][season] simulated from the full prior.
inline std::vector<std::vector<Partition>> prior_predictive_partitions(
    const PartitionPriorHyper& hyper, const SpatialGraph& graph, std::size_t S, std::size_t n_draws,
    Rng& rng, const PriorPredictiveOptions& options = {}) {
  graph.require_connected();
  std::vector<std::vector<Partition>> out;
  out.reserve(n_draws);
  for (std::size_t d = 0; d < n_draws; ++d) {
    const auto latents = sample_prior_latents(hyper, S, rng);
    std::vector<Partition> seasons;
    seasons.reserve(S);
    for (std::size_t s = 0; s < S; ++s) {
      const auto tree = random_spanning_tree(graph, rng);
      const double rho = options.pinned_rho.value_or(latents.rho[s]);
      seasons.push_back(partition_from_indicators(tree, prune_tree(tree, rho, rng)));
    }
    out.push_back(std::move(seasons));
  }
  return out;
}

// Prior draws of the cluster count with upsilon and kappa held fixed.
inline std::vector<std::size_t> prior_predictive_cluster_counts(double upsilon, double kappa,
                                                                const SpatialGraph& graph,
                                                                std::size_t n_draws, Rng& rng) {
  std::vector<std::size_t> k(n_draws);
  for (auto& x : k) {
    const double rho = beta_variate(rng, upsilon, kappa);
    const auto tree = random_spanning_tree(graph, rng);
    x = partition_from_indicators(tree, prune_tree(tree, rho, rng)).k();
  }
  return k;
}

}  // namespace stregion
