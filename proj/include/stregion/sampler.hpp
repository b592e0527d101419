#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stregion/gig.hpp"
#include "stregion/graph.hpp"
#include "stregion/likelihood.hpp"
#include "stregion/prior.hpp"
#include "stregion/random.hpp"

namespace stregion {

enum class LikelihoodFamily { pig, poisson };

inline const char* to_string(LikelihoodFamily f) { return f == LikelihoodFamily::pig ? "pig" : "poisson"; }

// Blocks held at their initial values. Used for enumerable test
// configurations and for conditional recovery checks.
struct FrozenBlocks {
  bool upsilon = false;
  bool kappa = false;
  bool zeta = false;
  bool w = false;
  bool trees = false;
  bool partitions = false;
  bool latents = false;  // c and u
  bool rho = false;
  bool theta = false;
  bool z = false;
  bool beta = false;
  bool delta = false;
};

struct SamplerConfig {
  std::size_t n_iter = 10000;
  double burn_in = 0.7;
  std::size_t thin = 3;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;  // chain index; distinct streams share one seed

  PartitionPriorHyper hyper;
  // Empty vectors mean zero mean and 10 * I covariance; covariances are
  // row-major p x p.
  std::vector<double> mu_beta;
  std::vector<double> sigma_beta;
  std::vector<double> mu_delta;
  std::vector<double> sigma_delta;
  double a_theta = 1.0;
  double b_theta = 1.0;

  double step_upsilon = 0.3;
  double step_kappa = 0.3;
  double step_beta = 0.05;
  double step_delta = 0.1;
  bool adapt = true;
  double target_accept = 0.3;
  std::size_t adapt_batch = 50;

  LikelihoodFamily family = LikelihoodFamily::pig;
  bool independent = false;  // u = c = 0 throughout; rho_s iid Be(upsilon, kappa)
  FrozenBlocks frozen;

  std::optional<double> init_upsilon;
  std::optional<double> init_kappa;
  std::optional<double> init_zeta;
  std::optional<double> init_w;
  std::vector<double> init_beta;
  std::vector<double> init_delta;
  std::vector<std::vector<std::int64_t>> init_partitions;  // one label vector per data season

  bool store_loglik = true;
  CompatibilityWeightRanges weight_ranges;

  std::size_t n_post() const {
    return static_cast<std::size_t>(std::floor((1.0 - burn_in) * static_cast<double>(n_iter) + 1e-9));
  }
  std::size_t n_burn() const { return n_iter - n_post(); }
  std::size_t n_retained() const { return n_post() / thin; }

  void validate(const Dataset& data, std::size_t n_areas) const {
    if (!(burn_in >= 0.0 && burn_in < 1.0)) throw std::invalid_argument("burn_in must lie in [0, 1)");
    if (thin < 1) throw std::invalid_argument("thin must be >= 1");
    if (n_iter < 1) throw std::invalid_argument("n_iter must be >= 1");
    hyper.validate();
    for (double v : {step_upsilon, step_kappa, step_beta, step_delta, a_theta, b_theta}) {
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("proposal scales and theta prior must be positive");
    }
    if (!(target_accept > 0.0 && target_accept < 1.0)) throw std::invalid_argument("target_accept must lie in (0, 1)");
    if (adapt_batch < 1) throw std::invalid_argument("adapt_batch must be >= 1");
    auto check_normal = [](const std::vector<double>& mu, const std::vector<double>& sigma, std::size_t p,
                           const char* name) {
      if (!mu.empty() && mu.size() != p) throw std::invalid_argument(std::string(name) + " mean has wrong length");
      if (!sigma.empty() && sigma.size() != p * p) {
        throw std::invalid_argument(std::string(name) + " covariance must be p x p");
      }
    };
    check_normal(mu_beta, sigma_beta, data.p_mean, "beta");
    check_normal(mu_delta, sigma_delta, data.p_disp, "delta");
    if (!init_beta.empty() && init_beta.size() != data.p_mean) throw std::invalid_argument("init_beta has wrong length");
    if (!init_delta.empty() && init_delta.size() != data.p_disp) {
      throw std::invalid_argument("init_delta has wrong length");
    }
    if (!init_partitions.empty()) {
      if (init_partitions.size() != data.n_seasons) {
        throw std::invalid_argument("init_partitions needs one entry per season");
      }
      for (const auto& p : init_partitions) {
        if (p.size() != n_areas) throw std::invalid_argument("initial partition must label every area");
      }
    }
    if (frozen.theta && !frozen.partitions) {
      throw std::invalid_argument("theta can only be frozen together with the partitions");
    }
    if (init_w && !(*init_w > 0.0 && *init_w < 1.0)) throw std::invalid_argument("init_w must lie in (0, 1)");
  }
};

struct SeasonState {
  SpanningTree tree;
  EdgeIndicators bits;
  Partition partition;
  std::vector<double> theta;  // per cluster; empty for horizon slots
  std::vector<double> z;      // per area; empty for horizon slots
};

struct ChainState {
  std::vector<SeasonState> seasons;  // S data seasons followed by q horizon slots
  std::vector<double> beta;
  std::vector<double> delta;
  LatentSeries latent;
};

struct AcceptanceCounter {
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  double rate() const { return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0; }
};

struct AcceptanceTable {
  AcceptanceCounter upsilon, kappa, c, u, beta, delta;
};

// Retained draws. Per-season arrays are indexed [(d * S + s) * n + i];
// latent arrays [d * n_slots + j]; log-likelihoods [d * n_obs + o].
struct SampleStore {
  std::size_t n_areas = 0;
  std::size_t n_seasons = 0;
  std::size_t n_slots = 0;
  std::size_t p_mean = 0;
  std::size_t p_disp = 0;
  std::size_t n_obs = 0;
  std::size_t n_draws = 0;
  LikelihoodFamily family = LikelihoodFamily::pig;

  std::vector<std::size_t> iteration;
  std::vector<double> upsilon, kappa, zeta, w;
  std::vector<double> rho;
  std::vector<std::int64_t> u, c;
  std::vector<double> beta, delta;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint32_t> k;  // [d * S + s]
  std::vector<double> theta;     // cluster value carried by each area
  std::vector<double> z;
  std::vector<double> loglik_marginal;     // PIG marginal (Poisson mass in Poisson mode)
  std::vector<double> loglik_conditional;  // Poisson given z

  AcceptanceTable acceptance_burn;
  AcceptanceTable acceptance_post;
  double step_upsilon = 0.0, step_kappa = 0.0, step_beta = 0.0, step_delta = 0.0;
  double wall_seconds = 0.0;

  Partition partition(std::size_t d, std::size_t s) const {
    std::vector<std::int64_t> raw(n_areas);
    const auto base = (d * n_seasons + s) * n_areas;
    for (std::size_t i = 0; i < n_areas; ++i) raw[i] = labels[base + i];
    return Partition(raw);
  }
  double area_value(const std::vector<double>& v, std::size_t d, std::size_t s, std::size_t i) const {
    return v[(d * n_seasons + s) * n_areas + i];
  }
};

// Gaussian prior N(mu, Sigma) kept as mean plus precision.
class GaussianPrior {
 public:
  GaussianPrior() = default;
  GaussianPrior(std::size_t p, const std::vector<double>& mu, const std::vector<double>& sigma) : p_(p) {
    if (mu.empty()) {
      mu_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    } else {
      mu_ = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(p));
    }
    Eigen::MatrixXd cov;
    if (sigma.empty()) {
      cov = 10.0 * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    } else {
      cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          sigma.data(), static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    }
    if (p == 0) return;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("prior covariance is not positive definite");
    precision_ = llt.solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)));
  }

  double log_density_kernel(std::span<const double> x) const {
    if (p_ == 0) return 0.0;
    const Eigen::VectorXd d =
        Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(p_)) - mu_;
    return -0.5 * d.dot(precision_ * d);
  }
  const Eigen::VectorXd& mean() const { return mu_; }

 private:
  std::size_t p_ = 0;
  Eigen::VectorXd mu_;
  Eigen::MatrixXd precision_;
};

inline double log_beta_density(double x, double a, double b) {
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
}

inline double log_gamma_density(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

// log IG(z; mean 1, shape psi) up to the constant -log(2 pi) / 2.
inline double log_ig_unit_mean_kernel(double z, double psi) {
  return 0.5 * std::log(psi) - 1.5 * std::log(z) - psi * (z - 1.0) * (z - 1.0) / (2.0 * z);
}

// Full conditional pieces shared by the MH blocks; exposed so tests can
// evaluate them independently of the chain.
namespace target {

// Sum over all slots of log Be(rho_j; upsilon + U_j, kappa + C_j - U_j).
inline double rho_chain(const LatentSeries& lat) {
  double s = 0.0;
  for (std::size_t j = 0; j < lat.n_slots(); ++j) {
    const auto [a, b] = lat.rho_prior_params(j);
    s += log_beta_density(lat.rho[j], a, b);
  }
  return s;
}

// log p(upsilon | rest) up to a constant, on the natural scale.
inline double upsilon(const LatentSeries& lat, const PartitionPriorHyper& h, bool independent) {
  double s = log_gamma_density(lat.upsilon, h.a_upsilon, h.b_upsilon) + rho_chain(lat);
  if (!independent) s += log_beta_density(lat.w, lat.upsilon, lat.kappa);
  return s;
}

inline double kappa(const LatentSeries& lat, const PartitionPriorHyper& h, bool independent) {
  double s = log_gamma_density(lat.kappa, h.a_kappa, h.b_kappa) + rho_chain(lat);
  if (!independent) s += log_beta_density(lat.w, lat.upsilon, lat.kappa);
  return s;
}

// Terms of the joint that involve c_j or u_j: Poisson(c_j; zeta),
// Bin(u_j; c_j, w) and the beta densities of rho over the window j..j+q.
inline double latent_slot(const LatentSeries& lat, std::size_t j) {
  const double c = static_cast<double>(lat.c[j]);
  const double u = static_cast<double>(lat.u[j]);
  if (lat.u[j] < 0 || lat.u[j] > lat.c[j]) throw std::logic_error("latent_slot: u outside 0..c");
  double s = c * std::log(lat.zeta) - lat.zeta - std::lgamma(c + 1.0);
  s += std::lgamma(c + 1.0) - std::lgamma(u + 1.0) - std::lgamma(c - u + 1.0);
  if (u > 0) s += u * std::log(lat.w);
  if (c - u > 0) s += (c - u) * std::log1p(-lat.w);
  for (std::size_t h = 0; h <= lat.q && j + h < lat.n_slots(); ++h) {
    const auto [a, b] = lat.rho_prior_params(j + h);
    s += log_beta_density(lat.rho[j + h], a, b);
  }
  return s;
}

}  // namespace target

class GibbsSampler {
 public:
  GibbsSampler(const SpatialGraph& graph, const Dataset& data, SamplerConfig config)
      : graph_(graph), data_(data), cfg_(std::move(config)), rng_(make_rng(cfg_.seed, cfg_.stream)) {
    if (graph.n_areas() != data.n_areas) throw std::invalid_argument("graph and dataset disagree on n_areas");
    graph.require_connected();
    cfg_.validate(data, graph.n_areas());
    if (cfg_.independent) cfg_.frozen.latents = true;
    if (cfg_.family == LikelihoodFamily::poisson) {
      cfg_.frozen.z = true;
      cfg_.frozen.delta = true;
    }
    beta_prior_ = GaussianPrior(data.p_mean, cfg_.mu_beta, cfg_.sigma_beta);
    delta_prior_ = GaussianPrior(data.p_disp, cfg_.mu_delta, cfg_.sigma_delta);
    step_upsilon_ = cfg_.step_upsilon;
    step_kappa_ = cfg_.step_kappa;
    step_beta_ = cfg_.step_beta;
    step_delta_ = cfg_.step_delta;
    precompute_season_counts();
    initialize();
  }

  const ChainState& state() const { return state_; }
  ChainState& mutable_state() { return state_; }
  const SamplerConfig& config() const { return cfg_; }
  Rng& rng() { return rng_; }

  // One full sweep. Per data season the order is tree, partition, rho,
  // theta, c, u, z: rho and theta are refreshed right after the collapsed
  // partition move so that no later step conditions on stale values.
  void sweep() {
    if (!cfg_.frozen.upsilon) update_upsilon();
    if (!cfg_.frozen.kappa) update_kappa();
    if (!cfg_.independent) {
      if (!cfg_.frozen.zeta) update_zeta();
      if (!cfg_.frozen.w) update_w();
    }
    for (std::size_t s = 0; s < data_.n_seasons; ++s) {
      if (!cfg_.frozen.trees) update_tree(s);
      if (!cfg_.frozen.partitions) update_partition(s);
      if (!cfg_.frozen.rho) update_rho(s);
      if (!cfg_.frozen.theta) update_theta(s);
      if (!cfg_.frozen.latents) {
        update_c(s);
        update_u(s);
      }
      if (!cfg_.frozen.z) update_z(s);
    }
    extend_horizon();
    if (!cfg_.frozen.beta && data_.p_mean > 0) update_beta();
    if (!cfg_.frozen.delta && data_.p_disp > 0) update_delta();
  }

  SampleStore run() {
    const auto start = std::chrono::steady_clock::now();
    SampleStore store = empty_store();
    const auto n_burn = cfg_.n_burn();
    const auto n_keep = cfg_.n_retained();
    for (std::size_t it = 0; it < cfg_.n_iter; ++it) {
      in_burn_ = it < n_burn;
      sweep();
      if (in_burn_ && cfg_.adapt && (it + 1) % cfg_.adapt_batch == 0) adapt_scales();
      if (!in_burn_) {
        const auto post_index = it - n_burn + 1;
        if (post_index % cfg_.thin == 0 && store.n_draws < n_keep) {
          check_invariants(it);
          record(store, it);
        }
      }
    }
    store.acceptance_burn = acc_burn_;
    store.acceptance_post = acc_post_;
    store.step_upsilon = step_upsilon_;
    store.step_kappa = step_kappa_;
    store.step_beta = step_beta_;
    store.step_delta = step_delta_;
    store.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return store;
  }

  // ---- individual steps ----

  void update_upsilon() {
    auto& lat = state_.latent;
    const double cur = lat.upsilon;
    const double cur_t = target::upsilon(lat, cfg_.hyper, cfg_.independent) + std::log(cur);
    const double prop = cur * std::exp(step_upsilon_ * standard_normal(rng_));
    lat.upsilon = prop;
    const double prop_t = target::upsilon(lat, cfg_.hyper, cfg_.independent) + std::log(prop);
    const bool ok = accept(prop_t - cur_t);
    if (!ok) lat.upsilon = cur;
    count(&AcceptanceTable::upsilon, ok);
  }

  void update_kappa() {
    auto& lat = state_.latent;
    const double cur = lat.kappa;
    const double cur_t = target::kappa(lat, cfg_.hyper, cfg_.independent) + std::log(cur);
    const double prop = cur * std::exp(step_kappa_ * standard_normal(rng_));
    lat.kappa = prop;
    const double prop_t = target::kappa(lat, cfg_.hyper, cfg_.independent) + std::log(prop);
    const bool ok = accept(prop_t - cur_t);
    if (!ok) lat.kappa = cur;
    count(&AcceptanceTable::kappa, ok);
  }

  // Conjugate over every slot, horizon included: each c_j carries a
  // Poisson(zeta) prior.
  void update_zeta() {
    auto& lat = state_.latent;
    double sum_c = 0.0;
    for (auto c : lat.c) sum_c += static_cast<double>(c);
    lat.zeta = gamma_variate(rng_, cfg_.hyper.a_zeta + sum_c,
                             cfg_.hyper.b_zeta + static_cast<double>(lat.n_slots()));
  }

  void update_w() {
    auto& lat = state_.latent;
    double su = 0.0;
    double sd = 0.0;
    for (std::size_t j = 0; j < lat.n_slots(); ++j) {
      su += static_cast<double>(lat.u[j]);
      sd += static_cast<double>(lat.c[j] - lat.u[j]);
    }
    lat.w = beta_variate(rng_, lat.upsilon + su, lat.kappa + sd);
  }

  void update_tree(std::size_t s) {
    auto& ss = state_.seasons[s];
    ss.tree = sample_compatible_tree(graph_, ss.partition, rng_, cfg_.weight_ranges);
    ss.bits = indicators_from_partition(ss.tree, ss.partition);
  }

  // Edge-by-edge Gibbs on the indicator vector with theta and rho integrated
  // out. For edge l, with k the cluster count when l is kept,
  //   R = (n - k + kappa + C - U - 1) / (k + upsilon + U - 1)
  //       * Gamma(a) / b^a * f(merged) / (f(left) f(right))
  // is the kept-to-removed odds; the edge is removed with probability 1/(1+R).
  void update_partition(std::size_t s) {
    auto& ss = state_.seasons[s];
    const auto n = graph_.n_areas();
    const auto m = ss.bits.size();
    if (m == 0) return;
    std::vector<double> yi(n);
    std::vector<double> ei(n);
    for (std::size_t i = 0; i < n; ++i) {
      yi[i] = season_y_[s][i];
      ei[i] = ss.z[i] * exposure_[s][i];
    }
    const auto [A, B] = state_.latent.rho_prior_params(s);
    const double a = cfg_.a_theta;
    const double b = cfg_.b_theta;
    const double log_norm = std::lgamma(a) - a * std::log(b);
    const double nd = static_cast<double>(n);

    build_tree_adjacency(ss.tree);
    std::size_t zeros = 0;
    for (auto bit : ss.bits) zeros += bit == 0;

    for (std::size_t l = 0; l < m; ++l) {
      const auto& e = ss.tree.tree_edge(l);
      const std::size_t zeros_without = zeros - (ss.bits[l] == 0 ? 1 : 0);
      const double k_kept = static_cast<double>(zeros_without + 1);
      const auto left = side_sums(ss.bits, e.a, l, yi, ei);
      const auto right = side_sums(ss.bits, e.b, l, yi, ei);
      const double log_f_left = log_collapsed_marginal(left.first, left.second, a, b);
      const double log_f_right = log_collapsed_marginal(right.first, right.second, a, b);
      const double log_f_merged =
          log_collapsed_marginal(left.first + right.first, left.second + right.second, a, b);
      const double log_r = std::log(nd - k_kept + B - 1.0) - std::log(k_kept + A - 1.0) + log_norm +
                           log_f_merged - log_f_left - log_f_right;
      const double u = uniform01(rng_);
      const std::uint8_t bit = log_r < std::log(u) - std::log1p(-u) ? 0 : 1;
      if (bit != ss.bits[l]) {
        zeros += bit == 0 ? 1 : 0;
        zeros -= bit == 1 ? 1 : 0;
        ss.bits[l] = bit;
      }
    }
    ss.partition = partition_from_indicators(ss.tree, ss.bits);
  }

  void update_rho(std::size_t slot) {
    auto& lat = state_.latent;
    const auto k = static_cast<double>(state_.seasons[slot].partition.k());
    const auto n = static_cast<double>(graph_.n_areas());
    const auto [a, b] = lat.rho_prior_params(slot);
    lat.rho[slot] = beta_variate(rng_, k - 1.0 + a, n - k + b);
  }

  void update_theta(std::size_t s) {
    auto& ss = state_.seasons[s];
    const auto k = ss.partition.k();
    ss.theta.assign(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      double ys = 0.0;
      double es = 0.0;
      for (auto i : ss.partition.members(j)) {
        ys += season_y_[s][i];
        es += ss.z[i] * exposure_[s][i];
      }
      ss.theta[j] = gamma_variate(rng_, cfg_.a_theta + ys, cfg_.b_theta + es);
    }
  }

  void update_c(std::size_t slot) {
    auto& lat = state_.latent;
    const auto cur = lat.c[slot];
    const auto prop = cur + (uniform01(rng_) < 0.5 ? -1 : 1);
    if (prop < lat.u[slot]) {
      count(&AcceptanceTable::c, false);
      return;
    }
    const double cur_t = target::latent_slot(lat, slot);
    lat.c[slot] = prop;
    const double prop_t = target::latent_slot(lat, slot);
    const bool ok = accept(prop_t - cur_t);
    if (!ok) lat.c[slot] = cur;
    count(&AcceptanceTable::c, ok);
  }

  void update_u(std::size_t slot) {
    auto& lat = state_.latent;
    const auto cur = lat.u[slot];
    const auto prop = cur + (uniform01(rng_) < 0.5 ? -1 : 1);
    if (prop < 0 || prop > lat.c[slot]) {
      count(&AcceptanceTable::u, false);
      return;
    }
    const double cur_t = target::latent_slot(lat, slot);
    lat.u[slot] = prop;
    const double prop_t = target::latent_slot(lat, slot);
    const bool ok = accept(prop_t - cur_t);
    if (!ok) lat.u[slot] = cur;
    count(&AcceptanceTable::u, ok);
  }

  // z_is ~ GIG(Y_is - 1/2, 2 theta E_is + psi, psi), E_is = sum_t O e^{X'beta}.
  void update_z(std::size_t s) {
    auto& ss = state_.seasons[s];
    for (std::size_t i = 0; i < graph_.n_areas(); ++i) {
      const double psi = dispersion_param(i, s, data_, state_.delta);
      const double theta = ss.theta[ss.partition.label(i)];
      ss.z[i] = sample_gig(season_y_[s][i] - 0.5, 2.0 * theta * exposure_[s][i] + psi, psi, rng_);
    }
  }

  // Horizon slots carry no data: a fresh tree, a partition pruned with
  // probability rho per edge, then c, u and rho.
  void extend_horizon() {
    const auto S = data_.n_seasons;
    for (std::size_t j = S; j < state_.seasons.size(); ++j) {
      auto& ss = state_.seasons[j];
      ss.tree = random_spanning_tree(graph_, rng_);
      ss.bits = prune_tree(ss.tree, state_.latent.rho[j], rng_);
      ss.partition = partition_from_indicators(ss.tree, ss.bits);
      if (!cfg_.frozen.latents) {
        update_c(j);
        update_u(j);
      }
      if (!cfg_.frozen.rho) update_rho(j);
    }
  }

  double beta_log_target(std::span<const double> beta) const {
    double s = beta_prior_.log_density_kernel(beta);
    for (std::size_t sn = 0; sn < data_.n_seasons; ++sn) {
      const auto& ss = state_.seasons[sn];
      for (std::size_t i = 0; i < data_.n_areas; ++i) {
        const double tz = ss.theta[ss.partition.label(i)] * ss.z[i];
        for (auto t : data_.weeks_of_season[sn]) {
          const auto o = data_.obs(i, t);
          const double eta = dot(data_.x_row(i, t), beta);
          s += static_cast<double>(data_.y[o]) * eta - data_.offset[o] * tz * std::exp(eta);
        }
      }
    }
    return s;
  }

  double delta_log_target(std::span<const double> delta) const {
    double s = delta_prior_.log_density_kernel(delta);
    for (std::size_t sn = 0; sn < data_.n_seasons; ++sn) {
      const auto& ss = state_.seasons[sn];
      for (std::size_t i = 0; i < data_.n_areas; ++i) {
        const double psi = dispersion_param(i, sn, data_, delta);
        s += log_ig_unit_mean_kernel(ss.z[i], psi);
      }
    }
    return s;
  }

  void update_beta() {
    auto& beta = state_.beta;
    std::vector<double> prop(beta.size());
    for (std::size_t j = 0; j < beta.size(); ++j) prop[j] = beta[j] + step_beta_ * standard_normal(rng_);
    const double diff = beta_log_target(prop) - beta_log_target(beta);
    const bool ok = accept(diff);
    if (ok) {
      beta = prop;
      refresh_exposure();
    }
    count(&AcceptanceTable::beta, ok);
  }

  void update_delta() {
    auto& delta = state_.delta;
    std::vector<double> prop(delta.size());
    for (std::size_t j = 0; j < delta.size(); ++j) prop[j] = delta[j] + step_delta_ * standard_normal(rng_);
    const double diff = delta_log_target(prop) - delta_log_target(delta);
    const bool ok = accept(diff);
    if (ok) delta = prop;
    count(&AcceptanceTable::delta, ok);
  }

  // Per-area exposure sum_t O e^{X'beta} within season s, at the current beta.
  double exposure(std::size_t s, std::size_t i) const { return exposure_[s][i]; }
  double season_count(std::size_t s, std::size_t i) const { return season_y_[s][i]; }

  void refresh_exposure() {
    exposure_.assign(data_.n_seasons, std::vector<double>(data_.n_areas, 0.0));
    for (std::size_t s = 0; s < data_.n_seasons; ++s) {
      for (std::size_t i = 0; i < data_.n_areas; ++i) {
        double e = 0.0;
        for (auto t : data_.weeks_of_season[s]) {
          e += data_.offset[data_.obs(i, t)] * std::exp(dot(data_.x_row(i, t), state_.beta));
        }
        exposure_[s][i] = e;
      }
    }
  }

 private:
  void precompute_season_counts() {
    season_y_.assign(data_.n_seasons, std::vector<double>(data_.n_areas, 0.0));
    for (std::size_t s = 0; s < data_.n_seasons; ++s) {
      for (std::size_t i = 0; i < data_.n_areas; ++i) {
        for (auto t : data_.weeks_of_season[s]) season_y_[s][i] += static_cast<double>(data_.y[data_.obs(i, t)]);
      }
    }
  }

  void initialize() {
    const auto& h = cfg_.hyper;
    const auto S = data_.n_seasons;
    const auto n = graph_.n_areas();
    auto& lat = state_.latent;
    lat.n_seasons = S;
    lat.q = h.q;
    lat.upsilon = cfg_.init_upsilon.value_or(h.a_upsilon / h.b_upsilon);
    lat.kappa = cfg_.init_kappa.value_or(h.a_kappa / h.b_kappa);
    lat.zeta = cfg_.init_zeta.value_or(h.a_zeta / h.b_zeta);
    lat.w = cfg_.init_w.value_or(0.5);
    const double rho0 = (h.a_upsilon / h.b_upsilon) / (h.a_upsilon / h.b_upsilon + h.a_kappa / h.b_kappa);
    lat.rho.assign(lat.n_slots(), rho0);
    lat.u.assign(lat.n_slots(), 0);
    lat.c.assign(lat.n_slots(), 0);

    state_.beta = cfg_.init_beta.empty() ? std::vector<double>(data_.p_mean, 0.0) : cfg_.init_beta;
    state_.delta = cfg_.init_delta.empty() ? std::vector<double>(data_.p_disp, 0.0) : cfg_.init_delta;

    state_.seasons.resize(lat.n_slots());
    for (std::size_t j = 0; j < lat.n_slots(); ++j) {
      auto& ss = state_.seasons[j];
      if (j < S && !cfg_.init_partitions.empty()) {
        ss.partition = Partition(cfg_.init_partitions[j]);
        ss.tree = sample_compatible_tree(graph_, ss.partition, rng_, cfg_.weight_ranges);
      } else {
        ss.partition = Partition::single_cluster(n);
        ss.tree = random_spanning_tree(graph_, rng_);
      }
      ss.bits = indicators_from_partition(ss.tree, ss.partition);
      if (j < S) {
        ss.theta.assign(ss.partition.k(), 1.0);
        ss.z.assign(n, 1.0);
      }
    }
    refresh_exposure();
  }

  void build_tree_adjacency(const SpanningTree& tree) {
    const auto n = graph_.n_areas();
    tree_adj_.assign(n, {});
    for (std::size_t l = 0; l < tree.edges().size(); ++l) {
      const auto& e = tree.tree_edge(l);
      tree_adj_[e.a].emplace_back(e.b, l);
      tree_adj_[e.b].emplace_back(e.a, l);
    }
  }

  // (count, exposure) totals over the component of `start` after removing
  // edge `skip` and every currently-removed edge.
  std::pair<double, double> side_sums(const EdgeIndicators& bits, std::size_t start, std::size_t skip,
                                      const std::vector<double>& yi, const std::vector<double>& ei) {
    stack_.clear();
    stack_.push_back(start);
    visit_mark_.resize(graph_.n_areas(), 0);
    ++visit_epoch_;
    if (visit_epoch_ == 0) {
      std::fill(visit_mark_.begin(), visit_mark_.end(), 0);
      visit_epoch_ = 1;
    }
    visit_mark_[start] = visit_epoch_;
    double y = 0.0;
    double e = 0.0;
    while (!stack_.empty()) {
      const auto v = stack_.back();
      stack_.pop_back();
      y += yi[v];
      e += ei[v];
      for (const auto& [nb, l] : tree_adj_[v]) {
        if (l == skip || !bits[l] || visit_mark_[nb] == visit_epoch_) continue;
        visit_mark_[nb] = visit_epoch_;
        stack_.push_back(nb);
      }
    }
    return {y, e};
  }

  bool accept(double log_ratio) {
    if (log_ratio >= 0.0) return true;
    return std::log(uniform01(rng_)) < log_ratio;
  }

  void count(AcceptanceCounter AcceptanceTable::*field, bool ok) {
    auto& table = in_burn_ ? acc_burn_ : acc_post_;
    (table.*field).proposed += 1;
    (table.*field).accepted += ok ? 1 : 0;
    if (in_burn_) {
      (batch_.*field).proposed += 1;
      (batch_.*field).accepted += ok ? 1 : 0;
    }
  }

  // Nudges log step sizes toward the target acceptance rate; the nudge
  // shrinks with the batch count and stops entirely after burn-in.
  void adapt_scales() {
    ++adapt_round_;
    const double delta = std::min(0.25, 1.0 / std::sqrt(static_cast<double>(adapt_round_)));
    auto nudge = [&](double& step, const AcceptanceCounter& c) {
      if (c.proposed == 0) return;
      step *= std::exp(c.rate() > cfg_.target_accept ? delta : -delta);
    };
    nudge(step_upsilon_, batch_.upsilon);
    nudge(step_kappa_, batch_.kappa);
    nudge(step_beta_, batch_.beta);
    nudge(step_delta_, batch_.delta);
    batch_ = {};
  }

  void check_invariants(std::size_t it) const {
    for (std::size_t j = 0; j < state_.seasons.size(); ++j) {
      const auto& ss = state_.seasons[j];
      std::size_t bad = 0;
      if (!is_compatible(ss.tree, ss.partition) || !is_contiguous(graph_, ss.partition, &bad)) {
        throw std::logic_error(dump_state(it, "tree/partition invariant broken in slot " + std::to_string(j)));
      }
    }
    const auto& lat = state_.latent;
    for (std::size_t j = 0; j < lat.n_slots(); ++j) {
      if (lat.u[j] < 0 || lat.u[j] > lat.c[j]) {
        throw std::logic_error(dump_state(it, "latent u > c in slot " + std::to_string(j)));
      }
    }
  }

  std::string dump_state(std::size_t it, const std::string& what) const {
    std::ostringstream os;
    os << what << " at iteration " << it << "\n";
    const auto& lat = state_.latent;
    os << "upsilon=" << lat.upsilon << " kappa=" << lat.kappa << " zeta=" << lat.zeta << " w=" << lat.w << "\n";
    for (std::size_t j = 0; j < state_.seasons.size(); ++j) {
      const auto& ss = state_.seasons[j];
      os << "slot " << j << ": k=" << ss.partition.k() << " rho=" << lat.rho[j] << " c=" << lat.c[j]
         << " u=" << lat.u[j] << " labels=";
      for (auto l : ss.partition.labels()) os << l << ' ';
      os << "\n";
    }
    return os.str();
  }

  SampleStore empty_store() const {
    SampleStore st;
    st.n_areas = data_.n_areas;
    st.n_seasons = data_.n_seasons;
    st.n_slots = state_.latent.n_slots();
    st.p_mean = data_.p_mean;
    st.p_disp = data_.p_disp;
    st.n_obs = cfg_.store_loglik ? data_.n_obs() : 0;
    st.family = cfg_.family;
    const auto d = cfg_.n_retained();
    const auto per_area = d * data_.n_seasons * data_.n_areas;
    st.iteration.reserve(d);
    st.labels.reserve(per_area);
    st.theta.reserve(per_area);
    st.z.reserve(per_area);
    st.loglik_marginal.reserve(d * st.n_obs);
    st.loglik_conditional.reserve(d * st.n_obs);
    return st;
  }

  void record(SampleStore& st, std::size_t it) const {
    const auto& lat = state_.latent;
    st.iteration.push_back(it);
    st.upsilon.push_back(lat.upsilon);
    st.kappa.push_back(lat.kappa);
    st.zeta.push_back(lat.zeta);
    st.w.push_back(lat.w);
    st.rho.insert(st.rho.end(), lat.rho.begin(), lat.rho.end());
    st.u.insert(st.u.end(), lat.u.begin(), lat.u.end());
    st.c.insert(st.c.end(), lat.c.begin(), lat.c.end());
    st.beta.insert(st.beta.end(), state_.beta.begin(), state_.beta.end());
    st.delta.insert(st.delta.end(), state_.delta.begin(), state_.delta.end());
    for (std::size_t s = 0; s < data_.n_seasons; ++s) {
      const auto& ss = state_.seasons[s];
      st.k.push_back(static_cast<std::uint32_t>(ss.partition.k()));
      for (std::size_t i = 0; i < data_.n_areas; ++i) {
        const auto label = ss.partition.label(i);
        st.labels.push_back(static_cast<std::uint32_t>(label));
        st.theta.push_back(ss.theta[label]);
        st.z.push_back(ss.z[i]);
      }
    }
    if (cfg_.store_loglik) {
      const auto base = st.loglik_marginal.size();
      st.loglik_marginal.resize(base + data_.n_obs());
      st.loglik_conditional.resize(base + data_.n_obs());
      for (std::size_t i = 0; i < data_.n_areas; ++i) {
        for (std::size_t t = 0; t < data_.n_weeks; ++t) {
          const auto s = data_.season_of_week[t];
          const auto& ss = state_.seasons[s];
          const auto o = data_.obs(i, t);
          const double mu = data_.offset[o] * mean_rate(i, t, data_, state_.beta, ss.theta[ss.partition.label(i)]);
          const auto y = data_.y[o];
          st.loglik_conditional[base + o] = poisson_log_pmf(y, mu * ss.z[i]).value_or_neg_inf();
          if (cfg_.family == LikelihoodFamily::pig) {
            st.loglik_marginal[base + o] = pig_log_pmf(y, mu, dispersion_param(i, s, data_, state_.delta));
          } else {
            st.loglik_marginal[base + o] = poisson_log_pmf(y, mu).value_or_neg_inf();
          }
        }
      }
    }
    st.n_draws += 1;
  }

  const SpatialGraph& graph_;
  const Dataset& data_;
  SamplerConfig cfg_;
  Rng rng_;
  ChainState state_;
  GaussianPrior beta_prior_;
  GaussianPrior delta_prior_;
  std::vector<std::vector<double>> season_y_;
  std::vector<std::vector<double>> exposure_;

  double step_upsilon_ = 0.0, step_kappa_ = 0.0, step_beta_ = 0.0, step_delta_ = 0.0;
  bool in_burn_ = true;
  std::size_t adapt_round_ = 0;
  AcceptanceTable acc_burn_, acc_post_, batch_;

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> tree_adj_;
  std::vector<std::size_t> stack_;
  std::vector<std::uint32_t> visit_mark_;
  std::uint32_t visit_epoch_ = 0;
};

inline SampleStore run_chain(const SpatialGraph& graph, const Dataset& data, const SamplerConfig& config) {
  GibbsSampler sampler(graph, data, config);
  return sampler.run();
}

// log Poisson mass of y_it at rate O lambda z, per observation.
inline std::vector<double> conditional_poisson_loglik(const Dataset& data, const ChainState& state) {
  std::vector<double> out(data.n_obs());
  for (std::size_t i = 0; i < data.n_areas; ++i) {
    for (std::size_t t = 0; t < data.n_weeks; ++t) {
      const auto& ss = state.seasons[data.season_of_week[t]];
      const double rate = poisson_rate(i, t, data, state.beta, ss.theta[ss.partition.label(i)], ss.z[i]);
      out[data.obs(i, t)] = poisson_log_pmf(data.y[data.obs(i, t)], rate).value_or_neg_inf();
    }
  }
  return out;
}

// log PIG(y_it; O lambda, psi) per observation, z integrated out.
inline std::vector<double> marginal_pig_loglik(const Dataset& data, const ChainState& state) {
  std::vector<double> out(data.n_obs());
  for (std::size_t i = 0; i < data.n_areas; ++i) {
    for (std::size_t t = 0; t < data.n_weeks; ++t) {
      const auto s = data.season_of_week[t];
      const auto& ss = state.seasons[s];
      const double mu = data.offset[data.obs(i, t)] * mean_rate(i, t, data, state.beta, ss.theta[ss.partition.label(i)]);
      out[data.obs(i, t)] = pig_log_pmf(data.y[data.obs(i, t)], mu, dispersion_param(i, s, data, state.delta));
    }
  }
  return out;
}

}  // namespace stregion
