#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "stregion/graph.hpp"
#include "stregion/likelihood.hpp"
#include "stregion/random.hpp"
#include "stregion/sampler.hpp"

namespace stregion {

struct WaicResult {
  double waic = 0.0;
  double lppd = 0.0;
  double p_waic = 0.0;
};

// ll is draws x observations, row-major. p_waic uses the sample variance
// (divisor draws - 1).
inline WaicResult waic(std::span<const double> ll, std::size_t n_draws, std::size_t n_obs) {
  if (n_draws < 2) throw std::invalid_argument("waic needs at least two draws");
  if (ll.size() != n_draws * n_obs) throw std::invalid_argument("waic: matrix size mismatch");
  WaicResult r;
  const double nd = static_cast<double>(n_draws);
  for (std::size_t o = 0; o < n_obs; ++o) {
    double mx = -std::numeric_limits<double>::infinity();
    double mean = 0.0;
    for (std::size_t d = 0; d < n_draws; ++d) {
      const double v = ll[d * n_obs + o];
      mx = std::max(mx, v);
      mean += v;
    }
    mean /= nd;
    double se = 0.0;
    double ss = 0.0;
    for (std::size_t d = 0; d < n_draws; ++d) {
      const double v = ll[d * n_obs + o];
      se += std::exp(v - mx);
      ss += (v - mean) * (v - mean);
    }
    r.lppd += mx + std::log(se / nd);
    r.p_waic += ss / (nd - 1.0);
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

inline double rand_index(const Partition& p1, const Partition& p2) {
  const auto n = p1.n_areas();
  if (n != p2.n_areas()) throw std::invalid_argument("rand_index: partitions differ in size");
  if (n < 2) throw std::invalid_argument("rand_index needs at least two areas");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same1 = p1.label(i) == p1.label(j);
      const bool same2 = p2.label(i) == p2.label(j);
      agree += same1 == same2;
    }
  }
  return static_cast<double>(agree) / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

// Hubert-Arabie adjustment: (RI - E[RI]) / (max RI - E[RI]) in pair-count form.
// Returns 1 when both partitions are trivial and identical.
inline double adjusted_rand_index(const Partition& p1, const Partition& p2) {
  const auto n = p1.n_areas();
  if (n != p2.n_areas()) throw std::invalid_argument("adjusted_rand_index: partitions differ in size");
  if (n < 2) throw std::invalid_argument("adjusted_rand_index needs at least two areas");
  auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
  std::vector<double> table(p1.k() * p2.k(), 0.0);
  for (std::size_t i = 0; i < n; ++i) table[p1.label(i) * p2.k() + p2.label(i)] += 1.0;
  double sum_ij = 0.0;
  for (double v : table) sum_ij += pairs(v);
  double sum_a = 0.0;
  for (const auto& c : p1.clusters()) sum_a += pairs(static_cast<double>(c.size()));
  double sum_b = 0.0;
  for (const auto& c : p2.clusters()) sum_b += pairs(static_cast<double>(c.size()));
  const double total = pairs(static_cast<double>(n));
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return p1 == p2 ? 1.0 : 0.0;
  return (sum_ij - expected) / (max_index - expected);
}

// Variation of information, natural log.
inline double variation_of_information(const Partition& p1, const Partition& p2) {
  const auto n = p1.n_areas();
  if (n != p2.n_areas()) throw std::invalid_argument("variation_of_information: size mismatch");
  auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
  std::vector<double> table(p1.k() * p2.k(), 0.0);
  for (std::size_t i = 0; i < n; ++i) table[p1.label(i) * p2.k() + p2.label(i)] += 1.0;
  double s = 0.0;
  for (const auto& c : p1.clusters()) s += xlogx(static_cast<double>(c.size()));
  for (const auto& c : p2.clusters()) s += xlogx(static_cast<double>(c.size()));
  for (double v : table) s -= 2.0 * xlogx(v);
  return s / static_cast<double>(n);
}

// Binder loss with unit costs, counted over unordered pairs.
inline double binder_loss(const Partition& p1, const Partition& p2) {
  const auto n = p1.n_areas();
  if (n != p2.n_areas()) throw std::invalid_argument("binder_loss: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      s += (p1.label(i) == p1.label(j)) != (p2.label(i) == p2.label(j));
    }
  }
  return s;
}

enum class PartitionLoss { vi, binder };

inline double expected_loss(const Partition& candidate, std::span<const Partition> draws, PartitionLoss loss) {
  if (draws.empty()) throw std::invalid_argument("expected_loss needs draws");
  double s = 0.0;
  for (const auto& d : draws) {
    s += loss == PartitionLoss::vi ? variation_of_information(candidate, d) : binder_loss(candidate, d);
  }
  return s / static_cast<double>(draws.size());
}

// Posterior co-clustering probabilities, n x n row-major.
inline std::vector<double> similarity_matrix(std::span<const Partition> draws) {
  if (draws.empty()) throw std::invalid_argument("similarity_matrix needs draws");
  const auto n = draws.front().n_areas();
  std::vector<double> p(n * n, 0.0);
  for (const auto& d : draws) {
    for (const auto& c : d.clusters()) {
      for (auto i : c) {
        for (auto j : c) p[i * n + j] += 1.0;
      }
    }
  }
  for (auto& v : p) v /= static_cast<double>(draws.size());
  return p;
}

namespace detail {

// Greedy single-area relabelling that lowers the expected loss. VI moves
// are scored exactly through per-draw contingency counts.
class PartitionSearch {
 public:
  PartitionSearch(std::span<const Partition> draws, PartitionLoss loss)
      : draws_(draws), loss_(loss), n_(draws.front().n_areas()) {
    for (const auto& d : draws) {
      if (d.n_areas() != n_) throw std::invalid_argument("draws must share n_areas");
    }
    if (loss_ == PartitionLoss::binder) sim_ = similarity_matrix(draws);
  }

  std::vector<std::size_t> optimize(std::vector<std::size_t> labels, Rng& rng) {
    load(labels);
    std::vector<std::size_t> order(n_);
    std::iota(order.begin(), order.end(), 0);
    bool improved = true;
    while (improved) {
      improved = false;
      std::shuffle(order.begin(), order.end(), rng);
      for (auto i : order) {
        const auto from = labels_[i];
        std::size_t best_to = from;
        double best_delta = -1e-12;
        const auto empty = first_empty();
        for (std::size_t to = 0; to < n_; ++to) {
          if (to == from) continue;
          if (size_[to] == 0 && to != empty) continue;
          if (size_[to] == 0 && size_[from] == 1) continue;  // pointless relabel
          const double d = move_delta(i, from, to);
          if (d < best_delta) {
            best_delta = d;
            best_to = to;
          }
        }
        if (best_to != from) {
          apply_move(i, from, best_to);
          improved = true;
        }
      }
    }
    return labels_;
  }

 private:
  static double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

  void load(const std::vector<std::size_t>& labels) {
    labels_ = labels;
    size_.assign(n_, 0);
    for (auto l : labels_) size_.at(l) += 1;
    if (loss_ == PartitionLoss::vi) {
      counts_.assign(draws_.size() * n_ * n_, 0);
      for (std::size_t d = 0; d < draws_.size(); ++d) {
        for (std::size_t i = 0; i < n_; ++i) counts_[(d * n_ + labels_[i]) * n_ + draws_[d].label(i)] += 1;
      }
    }
  }

  std::size_t first_empty() const {
    for (std::size_t c = 0; c < n_; ++c) {
      if (size_[c] == 0) return c;
    }
    return n_;
  }

  double move_delta(std::size_t i, std::size_t from, std::size_t to) const {
    if (loss_ == PartitionLoss::binder) {
      double s = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        if (j == i) continue;
        const double cost = 1.0 - 2.0 * sim_[i * n_ + j];
        if (labels_[j] == to) s += cost;
        if (labels_[j] == from) s -= cost;
      }
      return s;
    }
    const double nf = static_cast<double>(size_[from]);
    const double nt = static_cast<double>(size_[to]);
    const double nd = static_cast<double>(draws_.size());
    double s = nd * (xlogx(nf - 1.0) - xlogx(nf) + xlogx(nt + 1.0) - xlogx(nt));
    for (std::size_t d = 0; d < draws_.size(); ++d) {
      const auto b = draws_[d].label(i);
      const double cf = counts_[(d * n_ + from) * n_ + b];
      const double ct = counts_[(d * n_ + to) * n_ + b];
      s -= 2.0 * (xlogx(cf - 1.0) - xlogx(cf) + xlogx(ct + 1.0) - xlogx(ct));
    }
    return s;
  }

  void apply_move(std::size_t i, std::size_t from, std::size_t to) {
    labels_[i] = to;
    size_[from] -= 1;
    size_[to] += 1;
    if (loss_ == PartitionLoss::vi) {
      for (std::size_t d = 0; d < draws_.size(); ++d) {
        const auto b = draws_[d].label(i);
        counts_[(d * n_ + from) * n_ + b] -= 1;
        counts_[(d * n_ + to) * n_ + b] += 1;
      }
    }
  }

  std::span<const Partition> draws_;
  PartitionLoss loss_;
  std::size_t n_;
  std::vector<double> sim_;
  std::vector<std::size_t> labels_;
  std::vector<std::size_t> size_;
  std::vector<std::uint32_t> counts_;
};

}  // namespace detail

struct PointEstimate {
  Partition partition;
  double expected_loss = 0.0;
};

// Minimizes the expected loss against the draws: greedy search started from
// the best sampled draw and from `restarts` random labellings.
inline PointEstimate point_estimate_partition(std::span<const Partition> draws, PartitionLoss loss,
                                              std::size_t restarts, Rng& rng) {
  if (draws.empty()) throw std::invalid_argument("point_estimate_partition needs at least one draw");
  const auto n = draws.front().n_areas();

  // Distinct draws only; the posterior mass sits on a handful of partitions.
  std::vector<const Partition*> unique;
  for (const auto& d : draws) {
    if (std::none_of(unique.begin(), unique.end(), [&](const Partition* p) { return *p == d; })) {
      unique.push_back(&d);
    }
  }
  PointEstimate best{*unique.front(), std::numeric_limits<double>::infinity()};
  for (const auto* p : unique) {
    const double l = expected_loss(*p, draws, loss);
    if (l < best.expected_loss) best = {*p, l};
  }

  detail::PartitionSearch search(draws, loss);
  auto consider = [&](std::vector<std::size_t> start) {
    const auto labels = search.optimize(std::move(start), rng);
    std::vector<std::int64_t> raw(labels.begin(), labels.end());
    Partition cand(raw);
    const double l = expected_loss(cand, draws, loss);
    if (l < best.expected_loss - 1e-12) best = {cand, l};
  };
  consider(std::vector<std::size_t>(best.partition.labels().begin(), best.partition.labels().end()));
  for (std::size_t r = 0; r < restarts; ++r) {
    std::uniform_int_distribution<std::size_t> kdist(1, n);
    const auto k = kdist(rng);
    std::uniform_int_distribution<std::size_t> ldist(0, k - 1);
    std::vector<std::size_t> start(n);
    for (auto& l : start) l = ldist(rng);
    consider(std::move(start));
  }
  return best;
}

// Type-7 sample quantile (linear interpolation between order statistics).
inline double quantile(std::vector<double> x, double prob) {
  if (x.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("quantile probability outside [0, 1]");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

struct ParameterSummary {
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

inline ParameterSummary summarize_series(std::span<const double> x, double level = 0.95) {
  if (x.empty()) throw std::invalid_argument("summarize_series needs draws");
  ParameterSummary s;
  const double n = static_cast<double>(x.size());
  s.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - s.mean) * (v - s.mean);
  s.sd = x.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::vector<double> copy(x.begin(), x.end());
  s.lower = quantile(copy, 0.5 * (1.0 - level));
  s.upper = quantile(std::move(copy), 0.5 * (1.0 + level));
  return s;
}

// Batch-means Monte Carlo standard error of the sample mean.
inline double batch_means_mcse(std::span<const double> x, std::size_t n_batches = 50) {
  if (x.size() < 2 * n_batches) throw std::invalid_argument("series too short for batch means");
  const std::size_t len = x.size() / n_batches;
  std::vector<double> means(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    means[b] = std::accumulate(x.begin() + static_cast<std::ptrdiff_t>(b * len),
                               x.begin() + static_cast<std::ptrdiff_t>((b + 1) * len), 0.0) /
               static_cast<double>(len);
  }
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(n_batches);
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  const double var_batch = ss / static_cast<double>(n_batches - 1);
  return std::sqrt(var_batch / static_cast<double>(n_batches));
}

// Sample autocorrelation at lags 0..max_lag.
inline std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag) {
  const auto n = x.size();
  if (n < 2) throw std::invalid_argument("autocorrelation needs at least two points");
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double c0 = 0.0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  std::vector<double> acf(std::min(max_lag, n - 1) + 1, 0.0);
  for (std::size_t l = 0; l < acf.size(); ++l) {
    double c = 0.0;
    for (std::size_t t = 0; t + l < n; ++t) c += (x[t] - mean) * (x[t + l] - mean);
    acf[l] = c0 > 0.0 ? c / c0 : (l == 0 ? 1.0 : 0.0);
  }
  return acf;
}

// z_draws is draws x cells row-major. A cell is flagged when its
// equal-tailed interval excludes 1.
inline std::vector<bool> dispersion_indicators(std::span<const double> z_draws, std::size_t n_draws,
                                               std::size_t n_cells, double level = 0.95) {
  if (z_draws.size() != n_draws * n_cells) throw std::invalid_argument("dispersion_indicators: size mismatch");
  if (n_draws == 0) throw std::invalid_argument("dispersion_indicators needs draws");
  std::vector<bool> flags(n_cells);
  std::vector<double> col(n_draws);
  for (std::size_t c = 0; c < n_cells; ++c) {
    for (std::size_t d = 0; d < n_draws; ++d) col[d] = z_draws[d * n_cells + c];
    const double lo = quantile(col, 0.5 * (1.0 - level));
    const double hi = quantile(col, 0.5 * (1.0 + level));
    flags[c] = lo > 1.0 || hi < 1.0;
  }
  return flags;
}

// Posterior mean of O lambda / (O lambda + (O lambda)^2 / psi) per cell.
// lambda and psi draws are draws x cells, aligned with `offset`.
inline std::vector<double> mean_variance_ratio(std::span<const double> lambda_draws,
                                               std::span<const double> psi_draws,
                                               std::span<const double> offset, std::size_t n_draws) {
  const auto cells = offset.size();
  if (lambda_draws.size() != n_draws * cells || psi_draws.size() != n_draws * cells) {
    throw std::invalid_argument("mean_variance_ratio: size mismatch");
  }
  if (n_draws == 0) throw std::invalid_argument("mean_variance_ratio needs draws");
  std::vector<double> r(cells, 0.0);
  for (std::size_t d = 0; d < n_draws; ++d) {
    for (std::size_t c = 0; c < cells; ++c) {
      const double m = offset[c] * lambda_draws[d * cells + c];
      const double psi = psi_draws[d * cells + c];
      r[c] += 1.0 / (1.0 + m / psi);
    }
  }
  for (auto& v : r) v /= static_cast<double>(n_draws);
  return r;
}

// Symmetric S x S matrix of pairwise Rand indices between seasons.
inline std::vector<double> lagged_ri_matrix(std::span<const Partition> seasons) {
  const auto S = seasons.size();
  std::vector<double> m(S * S, 1.0);
  for (std::size_t a = 0; a < S; ++a) {
    for (std::size_t b = a + 1; b < S; ++b) {
      m[a * S + b] = m[b * S + a] = rand_index(seasons[a], seasons[b]);
    }
  }
  return m;
}

// Draws of lambda_it and psi_is laid out per observation, from a store.
inline std::pair<std::vector<double>, std::vector<double>> lambda_psi_draws(const SampleStore& st,
                                                                             const Dataset& data) {
  const auto n_obs = data.n_obs();
  std::vector<double> lambda(st.n_draws * n_obs);
  std::vector<double> psi(st.n_draws * n_obs);
  for (std::size_t d = 0; d < st.n_draws; ++d) {
    std::span<const double> beta(st.beta.data() + d * st.p_mean, st.p_mean);
    std::span<const double> delta(st.delta.data() + d * st.p_disp, st.p_disp);
    for (std::size_t i = 0; i < data.n_areas; ++i) {
      for (std::size_t t = 0; t < data.n_weeks; ++t) {
        const auto s = data.season_of_week[t];
        const auto o = data.obs(i, t);
        lambda[d * n_obs + o] = mean_rate(i, t, data, beta, st.area_value(st.theta, d, s, i));
        psi[d * n_obs + o] = st.family == LikelihoodFamily::pig ? dispersion_param(i, s, data, delta)
                                                                : std::numeric_limits<double>::infinity();
      }
    }
  }
  return {std::move(lambda), std::move(psi)};
}

// All retained draws of one season's partition.
inline std::vector<Partition> season_draws(const SampleStore& st, std::size_t season) {
  std::vector<Partition> out;
  out.reserve(st.n_draws);
  for (std::size_t d = 0; d < st.n_draws; ++d) out.push_back(st.partition(d, season));
  return out;
}

}  // namespace stregion
