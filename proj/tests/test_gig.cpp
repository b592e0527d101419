#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "stregion/gig.hpp"

using namespace stregion;

namespace {

// E[X] = sqrt(b/a) K_{p+1}(sqrt(ab)) / K_p(sqrt(ab)).
double gig_mean(double p, double a, double b) {
  const double w = std::sqrt(a * b);
  return std::sqrt(b / a) * boost::math::cyl_bessel_k(p + 1.0, w) / boost::math::cyl_bessel_k(p, w);
}

double gig_density(double x, double p, double a, double b) {
  const double w = std::sqrt(a * b);
  const double norm = 2.0 * std::pow(b / a, 0.5 * p) * boost::math::cyl_bessel_k(p, w);
  return std::exp((p - 1.0) * std::log(x) - 0.5 * (a * x + b / x)) / norm;
}

double gig_cdf(double x, double p, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [&](double t) { return t > 0.0 ? gig_density(t, p, a, b) : 0.0; }, 0.0, x, 15, 1e-12);
}

struct Stats {
  double mean;
  double var;
};

Stats draw_stats(double p, double a, double b, std::size_t n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  double s = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = sample_gig(p, a, b, rng);
    s += x;
    ss += x * x;
  }
  const double m = s / static_cast<double>(n);
  return {m, ss / static_cast<double>(n) - m * m};
}

}  // namespace

TEST(Gig, UnitMeanInverseGaussianMoments) {
  for (double psi : {0.5, 5.0, 50.0}) {
    const auto s = draw_stats(-0.5, psi, psi, 1000000, 41);
    EXPECT_NEAR(s.mean, 1.0, 0.01) << psi;
    EXPECT_NEAR(s.var * psi, 1.0, 0.03) << psi;
  }
}

TEST(Gig, MeanMatchesBesselRatioInEveryRegime) {
  // (p, a, b) covering the shifted, unshifted and small-omega branches and
  // negative p.
  const std::vector<std::array<double, 3>> cases{{5.0, 2.0, 3.0},   {0.5, 1.0, 1.0},    {0.3, 0.01, 0.02},
                                                 {0.0, 0.05, 0.05}, {-3.0, 1.0, 10.0},  {12.5, 40.0, 0.5},
                                                 {-0.5, 0.1, 0.1},  {0.8, 0.001, 0.004}};
  std::uint64_t seed = 42;
  for (const auto& c : cases) {
    const auto s = draw_stats(c[0], c[1], c[2], 400000, seed++);
    const double m = gig_mean(c[0], c[1], c[2]);
    EXPECT_NEAR(s.mean / m, 1.0, 0.01) << c[0] << " " << c[1] << " " << c[2];
  }
}

TEST(Gig, KolmogorovSmirnovAgainstNumericCdf) {
  const std::vector<std::array<double, 3>> cases{{2.5, 1.0, 4.0}, {0.2, 0.02, 0.05}, {-1.5, 3.0, 0.7}};
  std::uint64_t seed = 60;
  for (const auto& c : cases) {
    auto rng = make_rng(seed++);
    std::vector<double> x(4000);
    for (auto& v : x) v = sample_gig(c[0], c[1], c[2], rng);
    std::sort(x.begin(), x.end());
    double ks = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); i += 8) {
      const double f = gig_cdf(x[i], c[0], c[1], c[2]);
      ks = std::max({ks, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    EXPECT_LT(ks, 0.03) << c[0];
  }
}

TEST(Gig, ConcentratesAtDataMode) {
  // Large count with large exposure: the z full conditional peaks near
  // y / exposure.
  auto rng = make_rng(70);
  const double y = 4000.0, exposure = 2000.0, psi = 1.0;
  double s = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double z = sample_gig(y - 0.5, 2.0 * exposure + psi, psi, rng);
    ASSERT_GT(z, 0.0);
    s += z;
  }
  EXPECT_NEAR(s / 20000.0, y / exposure, 0.01);
}

TEST(Gig, RejectsNonPositiveScale) {
  auto rng = make_rng(71);
  EXPECT_THROW(sample_gig(1.0, 0.0, 1.0, rng), std::invalid_argument);
  EXPECT_THROW(sample_gig(1.0, 1.0, -1.0, rng), std::invalid_argument);
  EXPECT_THROW(sample_gig(std::nan(""), 1.0, 1.0, rng), std::invalid_argument);
}
