#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stregion/prior.hpp"

namespace stregion {

// Counts, offsets and designs for n areas over T weeks grouped into S
// seasons. Storage is row-major by area:
//   y, offset:  [i * T + t]
//   x:          [(i * T + t) * p_mean + j]
//   v:          [(i * S + s) * p_disp + j]
struct Dataset {
  std::size_t n_areas = 0;
  std::size_t n_weeks = 0;
  std::size_t n_seasons = 0;
  std::size_t p_mean = 0;
  std::size_t p_disp = 0;
  std::vector<std::int64_t> y;
  std::vector<double> offset;
  std::vector<double> x;
  std::vector<double> v;
  std::vector<std::size_t> season_of_week;
  std::vector<std::vector<std::size_t>> weeks_of_season;

  std::size_t obs(std::size_t i, std::size_t t) const { return i * n_weeks + t; }
  std::size_t n_obs() const { return n_areas * n_weeks; }

  std::span<const double> x_row(std::size_t i, std::size_t t) const {
    return std::span<const double>(x).subspan(obs(i, t) * p_mean, p_mean);
  }
  std::span<const double> v_row(std::size_t i, std::size_t s) const {
    return std::span<const double>(v).subspan((i * n_seasons + s) * p_disp, p_disp);
  }

  // Rebuilds weeks_of_season and checks every invariant. Seasons must be
  // contiguous week blocks covering 0..S-1; a dataset with zero weeks is
  // allowed and acts as a data-free configuration.
  void finalize() {
    if (n_areas == 0) throw std::invalid_argument("dataset has no areas");
    if (n_seasons == 0) throw std::invalid_argument("dataset has no seasons");
    if (y.size() != n_obs() || offset.size() != n_obs()) {
      throw std::invalid_argument("y/offset size must equal n_areas * n_weeks");
    }
    if (x.size() != n_obs() * p_mean) throw std::invalid_argument("mean design has wrong size");
    if (v.size() != n_areas * n_seasons * p_disp) {
      throw std::invalid_argument("dispersion design has wrong size");
    }
    if (season_of_week.size() != n_weeks) throw std::invalid_argument("season map must cover every week");
    for (auto c : y) {
      if (c < 0) throw std::invalid_argument("counts must be non-negative");
    }
    for (double o : offset) {
      if (!(o > 0.0) || !std::isfinite(o)) throw std::invalid_argument("offsets must be positive");
    }
    weeks_of_season.assign(n_seasons, {});
    for (std::size_t t = 0; t < n_weeks; ++t) {
      const auto s = season_of_week[t];
      if (s >= n_seasons) throw std::invalid_argument("season id out of range at week " + std::to_string(t));
      if (t > 0 && s < season_of_week[t - 1]) {
        throw std::invalid_argument("season blocks must be contiguous and ordered");
      }
      if (t > 0 && s > season_of_week[t - 1] + 1) {
        throw std::invalid_argument("season map skips a season at week " + std::to_string(t));
      }
      weeks_of_season[s].push_back(t);
    }
    if (n_weeks > 0) {
      if (season_of_week.front() != 0 || season_of_week.back() != n_seasons - 1) {
        throw std::invalid_argument("season map must be surjective onto 0..S-1");
      }
    }
  }

  // No observations; S seasons of latent structure only. V carries an
  // intercept column followed by zeros.
  static Dataset data_free(std::size_t n_areas, std::size_t n_seasons, std::size_t p_mean = 0,
                           std::size_t p_disp = 1) {
    Dataset d;
    d.n_areas = n_areas;
    d.n_seasons = n_seasons;
    d.p_mean = p_mean;
    d.p_disp = p_disp;
    d.v.assign(n_areas * n_seasons * p_disp, 0.0);
    if (p_disp > 0) {
      for (std::size_t r = 0; r < n_areas * n_seasons; ++r) d.v[r * p_disp] = 1.0;
    }
    d.finalize();
    return d;
  }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

// lambda_it = exp(X_it' beta) * theta*, theta* being the value of the
// cluster holding area i in the season of week t.
inline double mean_rate(std::size_t i, std::size_t t, const Dataset& data, std::span<const double> beta,
                        double theta) {
  if (beta.size() != data.p_mean) throw std::invalid_argument("beta has wrong length");
  return std::exp(dot(data.x_row(i, t), beta)) * theta;
}

// Poisson rate O_it * lambda_it * z_is.
inline double poisson_rate(std::size_t i, std::size_t t, const Dataset& data, std::span<const double> beta,
                           double theta, double z) {
  return data.offset[data.obs(i, t)] * mean_rate(i, t, data, beta, theta) * z;
}

// psi_is = exp(V_is' delta)
inline double dispersion_param(std::size_t i, std::size_t s, const Dataset& data,
                               std::span<const double> delta) {
  if (delta.size() != data.p_disp) throw std::invalid_argument("delta has wrong length");
  return std::exp(dot(data.v_row(i, s), delta));
}

inline LogProb poisson_log_pmf(std::int64_t y, double rate) {
  if (y < 0) throw std::invalid_argument("count must be non-negative");
  if (rate <= 0.0) {
    return y == 0 ? LogProb(0.0) : LogProb::zero_probability();
  }
  const double yd = static_cast<double>(y);
  return LogProb(yd * std::log(rate) - rate - std::lgamma(yd + 1.0));
}

// log Pr(Y = y) for the Poisson mixture over Z ~ IG(1, psi) with Poisson
// mean mu * Z:
//   Pr(y) = mu^y / y! * 2 sqrt(psi / 2pi) e^psi (psi / (2mu + psi))^{(y - 1/2)/2}
//           * K_{y - 1/2}(omega),  omega = sqrt(psi (2mu + psi)).
// K of half-integer order starts from K_{1/2}(x) = sqrt(pi / 2x) e^{-x} and
// climbs with the ratio recurrence r_nu = 1 / r_{nu-1} + 2 nu / x, where
// r_nu = K_{nu+1} / K_nu; every ratio is positive so the log-sum is stable.
// Collecting constants leaves
//   log Pr(y) = y log mu - log y! - (y/2) log1p(2mu/psi) + (psi - omega)
//               + sum_{m=0}^{y-2} log r_{m + 1/2}.
inline double pig_log_pmf(std::int64_t y, double mu, double psi) {
  if (y < 0) throw std::invalid_argument("count must be non-negative");
  if (!(mu > 0.0) || !(psi > 0.0)) throw std::invalid_argument("pig_log_pmf needs mu > 0 and psi > 0");
  const double ratio = 2.0 * mu / psi;
  const double omega = psi * std::sqrt(1.0 + ratio);
  // psi - omega = psi (1 - sqrt(1 + ratio)) = -2 mu / (1 + sqrt(1 + ratio))
  const double psi_minus_omega = -2.0 * mu / (1.0 + std::sqrt(1.0 + ratio));
  const double yd = static_cast<double>(y);
  double out = psi_minus_omega;
  if (y > 0) out += yd * std::log(mu) - std::lgamma(yd + 1.0) - 0.5 * yd * std::log1p(ratio);
  double r = 1.0 + 1.0 / omega;  // r_{1/2}
  double log_ratios = 0.0;
  for (std::int64_t m = 0; m + 2 <= y; ++m) {
    if (m > 0) r = 1.0 / r + (2.0 * static_cast<double>(m) + 1.0) / omega;
    log_ratios += std::log(r);
  }
  out += log_ratios;
  if (!std::isfinite(out)) {
    throw std::overflow_error("pig_log_pmf: non-finite result for y=" + std::to_string(y));
  }
  return out;
}

// log f_s for a block: lgamma(a + Y) - (a + Y) log(b + E), with Y the block's
// total count and E its total z-weighted exposure sum_i z_is sum_t O e^{X'beta}.
inline double log_collapsed_marginal(double y_sum, double exposure_sum, double a_theta, double b_theta) {
  const double shape = a_theta + y_sum;
  return std::lgamma(shape) - shape * std::log(b_theta + exposure_sum);
}

// z is indexed by area for the given season.
inline double collapsed_cluster_marginal(std::span<const std::size_t> members, std::size_t season,
                                         const Dataset& data, std::span<const double> beta,
                                         std::span<const double> z_season, double a_theta, double b_theta) {
  if (members.empty()) throw std::invalid_argument("cluster must be non-empty");
  if (season >= data.n_seasons) throw std::invalid_argument("season out of range");
  double y_sum = 0.0;
  double exposure = 0.0;
  for (auto i : members) {
    double e_i = 0.0;
    for (auto t : data.weeks_of_season[season]) {
      y_sum += static_cast<double>(data.y[data.obs(i, t)]);
      e_i += data.offset[data.obs(i, t)] * std::exp(dot(data.x_row(i, t), beta));
    }
    exposure += z_season[i] * e_i;
  }
  return log_collapsed_marginal(y_sum, exposure, a_theta, b_theta);
}

// Standardized incidence ratio Y_i / E_i.
inline std::vector<double> compute_sir(std::span<const double> y_totals, std::span<const double> expected) {
  if (y_totals.size() != expected.size()) throw std::invalid_argument("size mismatch");
  std::vector<double> sir(y_totals.size());
  for (std::size_t i = 0; i < sir.size(); ++i) {
    if (!(expected[i] > 0.0)) {
      throw std::invalid_argument("expected count for area " + std::to_string(i) + " must be positive");
    }
    sir[i] = y_totals[i] / expected[i];
  }
  return sir;
}

// Per-area expected counts under a common rate: E_i = O_i * (sum Y / sum O).
inline std::vector<double> expected_counts(const Dataset& data) {
  std::vector<double> area_offset(data.n_areas, 0.0);
  double total_y = 0.0;
  double total_o = 0.0;
  for (std::size_t i = 0; i < data.n_areas; ++i) {
    for (std::size_t t = 0; t < data.n_weeks; ++t) {
      area_offset[i] += data.offset[data.obs(i, t)];
      total_y += static_cast<double>(data.y[data.obs(i, t)]);
    }
    total_o += area_offset[i];
  }
  const double rate = total_o > 0.0 ? total_y / total_o : 0.0;
  for (auto& e : area_offset) e *= rate;
  return area_offset;
}

}  // namespace stregion
