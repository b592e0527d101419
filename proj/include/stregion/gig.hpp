#pragma once

#include <cfloat>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "stregion/random.hpp"

namespace stregion {

// Generalized inverse Gaussian draws, density proportional to
//   x^{p-1} exp(-(a x + b / x) / 2),  a, b > 0.
// Rejection sampling on the standardized variable
// X = x / sqrt(b/a) has density x^{lambda-1} exp(-omega (x + 1/x) / 2) with
// omega = sqrt(ab), and for lambda < 0 we draw with |lambda| and invert.

namespace detail {

inline double gig_mode(double lambda, double omega) {
  if (lambda >= 1.0) return (std::sqrt((lambda - 1.0) * (lambda - 1.0) + omega * omega) + (lambda - 1.0)) / omega;
  return omega / (std::sqrt((1.0 - lambda) * (1.0 - lambda) + omega * omega) + (1.0 - lambda));
}

// Ratio-of-uniforms with the mode as centre, used for lambda > 2 or omega > 3.
inline double gig_rou_shift(double lambda, double omega, Rng& rng) {
  const double t = 0.5 * (lambda - 1.0);
  const double s = 0.25 * omega;
  const double xm = gig_mode(lambda, omega);
  const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);

  // Roots of the cubic giving the extremes of (x - xm) sqrt(f(x)).
  const double a = -(2.0 * (lambda + 1.0) / omega + xm);
  const double b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
  const double c = xm;
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const double fi = std::acos(-q / (2.0 * std::sqrt(-(p * p * p) / 27.0)));
  const double fak = 2.0 * std::sqrt(-p / 3.0);
  const double y1 = fak * std::cos(fi / 3.0) - a / 3.0;
  const double y2 = fak * std::cos(fi / 3.0 + 4.0 / 3.0 * std::numbers::pi) - a / 3.0;
  const double uplus = (y1 - xm) * std::exp(t * std::log(y1) - s * (y1 + 1.0 / y1) - nc);
  const double uminus = (y2 - xm) * std::exp(t * std::log(y2) - s * (y2 + 1.0 / y2) - nc);

  for (;;) {
    const double u = uminus + uniform01(rng) * (uplus - uminus);
    const double v = uniform01(rng);
    const double x = u / v + xm;
    if (x <= 0.0) continue;
    if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
  }
}

// Ratio-of-uniforms without shift; for moderate lambda and omega.
inline double gig_rou_noshift(double lambda, double omega, Rng& rng) {
  const double t = 0.5 * (lambda - 1.0);
  const double s = 0.25 * omega;
  const double xm = gig_mode(lambda, omega);
  const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);
  const double ym = ((lambda + 1.0) + std::sqrt((lambda + 1.0) * (lambda + 1.0) + omega * omega)) / omega;
  const double um = std::exp(0.5 * (lambda + 1.0) * std::log(ym) - s * (ym + 1.0 / ym) - nc);
  for (;;) {
    const double u = um * uniform01(rng);
    const double v = uniform01(rng);
    const double x = u / v;
    if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
  }
}

// Three-piece hat for 0 <= lambda < 1 and small omega: constant up to x0,
// k1 x^{lambda-1} up to 2/omega, exponential tail beyond.
inline double gig_small_omega(double lambda, double omega, Rng& rng) {
  const double xm = gig_mode(lambda, omega);
  const double x0 = omega / (1.0 - lambda);
  const double k0 = std::exp((lambda - 1.0) * std::log(xm) - 0.5 * omega * (xm + 1.0 / xm));
  const double area0 = k0 * x0;

  double k1 = 0.0;
  double area1 = 0.0;
  if (x0 < 2.0 / omega) {
    k1 = std::exp(-omega);
    area1 = lambda > 0.0 ? k1 / lambda * (std::pow(2.0 / omega, lambda) - std::pow(x0, lambda))
                         : k1 * std::log(2.0 / (omega * x0));
  }
  const double tail_start = std::max(x0, 2.0 / omega);
  const double k2 = std::pow(tail_start, lambda - 1.0);
  const double area2 = k2 * 2.0 / omega * std::exp(-0.5 * omega * tail_start);
  const double total = area0 + area1 + area2;

  for (;;) {
    double v = total * uniform01(rng);
    double x;
    double hat;
    if (v <= area0) {
      x = x0 * v / area0;
      hat = k0;
    } else if ((v -= area0) <= area1) {
      if (lambda > 0.0) {
        x = std::pow(std::pow(x0, lambda) + lambda / k1 * v, 1.0 / lambda);
      } else {
        x = x0 * std::exp(v / k1);
      }
      hat = k1 * std::pow(x, lambda - 1.0);
    } else {
      v -= area1;
      // inverse CDF of k2 exp(-omega x / 2) on [tail_start, inf)
      x = tail_start - 2.0 / omega * std::log1p(-v / area2);
      if (!std::isfinite(x)) continue;
      hat = k2 * std::exp(-0.5 * omega * x);
    }
    const double log_f = (lambda - 1.0) * std::log(x) - 0.5 * omega * (x + 1.0 / x);
    if (std::log(uniform01(rng) * hat) <= log_f) return x;
  }
}

}  // namespace detail

inline double sample_gig(double p, double a, double b, Rng& rng) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b) || !std::isfinite(p)) {
    throw std::invalid_argument("sample_gig needs finite p and a, b > 0");
  }
  constexpr double tiny = 10.0 * DBL_EPSILON;
  // Near-degenerate limits: b -> 0 is a gamma, a -> 0 an inverse gamma.
  if (b < tiny && p > 0.0) return gamma_variate(rng, p, 0.5 * a);
  if (a < tiny && p < 0.0) return 1.0 / gamma_variate(rng, -p, 0.5 * b);

  const double lambda = std::fabs(p);
  const double omega = std::sqrt(a * b);
  const double alpha = std::sqrt(b / a);
  double x;
  if (lambda > 2.0 || omega > 3.0) {
    x = detail::gig_rou_shift(lambda, omega, rng);
  } else if (lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2) {
    x = detail::gig_rou_noshift(lambda, omega, rng);
  } else {
    x = detail::gig_small_omega(lambda, omega, rng);
  }
  return p < 0.0 ? alpha / x : alpha * x;
}

}  // namespace stregion
