#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>

namespace stregion {

// One RNG stream per chain. mt19937_64 plus libstdc++ distributions keeps
// chains bit-reproducible for a given seed on a given toolchain.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

// Uniform on the open interval (0, 1).
inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  double u = dist(rng);
  while (u <= 0.0) u = dist(rng);
  return u;
}

inline double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(rng);
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

// log of a Gamma(shape, 1) draw. For shape < 1 uses
// G(a) = G(a + 1) * U^(1/a), evaluated on the log scale so that tiny shapes
// do not underflow to zero.
inline double log_gamma_variate(Rng& rng, double shape) {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw std::invalid_argument("gamma shape must be positive and finite");
  }
  if (shape >= 1.0) {
    std::gamma_distribution<double> dist(shape, 1.0);
    return std::log(dist(rng));
  }
  std::gamma_distribution<double> dist(shape + 1.0, 1.0);
  return std::log(dist(rng)) + std::log(uniform01(rng)) / shape;
}

// Gamma with shape/rate parameterization (mean = shape / rate).
inline double gamma_variate(Rng& rng, double shape, double rate) {
  if (!(rate > 0.0)) throw std::invalid_argument("gamma rate must be positive");
  return std::exp(log_gamma_variate(rng, shape)) / rate;
}

// Beta(a, b) through two log-gamma draws; result clamped into the open
// interval so downstream log(rho), log(1 - rho) stay finite.
inline double beta_variate(Rng& rng, double a, double b) {
  const double la = log_gamma_variate(rng, a);
  const double lb = log_gamma_variate(rng, b);
  // x = Ga / (Ga + Gb) = 1 / (1 + exp(lb - la))
  const double d = lb - la;
  double x = d > 0.0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  if (x < lo) x = lo;
  if (x > hi) x = hi;
  return x;
}

inline std::int64_t poisson_variate(Rng& rng, double mean) {
  if (!(mean >= 0.0)) throw std::invalid_argument("poisson mean must be non-negative");
  if (mean == 0.0) return 0;
  std::poisson_distribution<std::int64_t> dist(mean);
  return dist(rng);
}

inline std::int64_t binomial_variate(Rng& rng, std::int64_t trials, double p) {
  if (trials <= 0) return 0;
  std::binomial_distribution<std::int64_t> dist(trials, p);
  return dist(rng);
}

// Inverse Gaussian IG(mean, shape) by the Michael-Schucany-Haas transform.
inline double inverse_gaussian_variate(Rng& rng, double mean, double shape) {
  if (!(mean > 0.0) || !(shape > 0.0)) {
    throw std::invalid_argument("inverse gaussian parameters must be positive");
  }
  const double nu = standard_normal(rng);
  const double y = nu * nu;
  const double my = mean * y;
  // larger root is cancellation-free; the smaller one is mean^2 / larger.
  const double big = mean + mean * my / (2.0 * shape) +
                     mean / (2.0 * shape) * std::sqrt(4.0 * mean * shape * y + my * my);
  const double x = mean * mean / big;
  if (uniform01(rng) <= mean / (mean + x)) return x;
  return mean * mean / x;
}

}  // namespace stregion
