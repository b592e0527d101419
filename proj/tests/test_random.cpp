#include <gtest/gtest.h>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "stregion/random.hpp"

using namespace stregion;

namespace {

struct Moments {
  double mean;
  double var;
};

template <typename F>
Moments sample_moments(std::size_t n, F draw) {
  double s = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = draw();
    s += x;
    ss += x * x;
  }
  const double m = s / static_cast<double>(n);
  return {m, ss / static_cast<double>(n) - m * m};
}

// Kolmogorov-Smirnov statistic of a sample against a CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> x, Cdf cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

}  // namespace

TEST(Rng, SameSeedSameStreamReproduces) {
  auto a = make_rng(42, 3);
  auto b = make_rng(42, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(Rng, StreamsDiffer) {
  auto a = make_rng(42, 0);
  auto b = make_rng(42, 1);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += a() == b();
  EXPECT_EQ(same, 0);
}

TEST(Uniform, OpenInterval) {
  auto rng = make_rng(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = uniform01(rng);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Gamma, MomentsShapeRate) {
  auto rng = make_rng(2);
  for (auto [shape, rate] : {std::pair{0.3, 2.0}, std::pair{2.5, 0.5}, std::pair{40.0, 3.0}}) {
    const auto m = sample_moments(400000, [&] { return gamma_variate(rng, shape, rate); });
    const double mean = shape / rate;
    const double var = shape / (rate * rate);
    EXPECT_NEAR(m.mean, mean, 5.0 * std::sqrt(var / 400000.0)) << shape;
    EXPECT_NEAR(m.var / var, 1.0, 0.05) << shape;
  }
}

TEST(Gamma, TinyShapeStaysFiniteOnLogScale) {
  auto rng = make_rng(3);
  for (int i = 0; i < 1000; ++i) EXPECT_TRUE(std::isfinite(log_gamma_variate(rng, 1e-3)));
}

TEST(Gamma, KsAgainstCdf) {
  auto rng = make_rng(4);
  std::vector<double> x(20000);
  for (auto& v : x) v = gamma_variate(rng, 0.7, 1.5);
  boost::math::gamma_distribution<> g(0.7, 1.0 / 1.5);
  EXPECT_LT(ks_statistic(x, [&](double v) { return boost::math::cdf(g, v); }), 0.015);
}

TEST(Beta, KsAgainstIncompleteBeta) {
  auto rng = make_rng(5);
  for (auto [a, b] : {std::pair{1.0, 1.0}, std::pair{0.2, 0.5}, std::pair{10.0, 100.0}}) {
    std::vector<double> x(20000);
    for (auto& v : x) v = beta_variate(rng, a, b);
    boost::math::beta_distribution<> d(a, b);
    EXPECT_LT(ks_statistic(x, [&](double v) { return boost::math::cdf(d, v); }), 0.015) << a << "," << b;
  }
}

TEST(Beta, ExtremeShapesStayInsideUnitInterval) {
  auto rng = make_rng(6);
  for (int i = 0; i < 10000; ++i) {
    const double x = beta_variate(rng, 1e-3, 1e-3);
    ASSERT_GT(x, 0.0);
    ASSERT_LT(x, 1.0);
  }
}

TEST(InverseGaussian, MeanAndVariance) {
  auto rng = make_rng(7);
  // IG(mean m, shape l): variance m^3 / l.
  for (auto [m, l] : {std::pair{1.0, 0.5}, std::pair{1.0, 5.0}, std::pair{2.0, 50.0}}) {
    const auto s = sample_moments(400000, [&] { return inverse_gaussian_variate(rng, m, l); });
    EXPECT_NEAR(s.mean / m, 1.0, 0.01);
    EXPECT_NEAR(s.var / (m * m * m / l), 1.0, 0.06);
  }
}

TEST(Discrete, PoissonAndBinomialMeans) {
  auto rng = make_rng(8);
  const auto p = sample_moments(200000, [&] { return static_cast<double>(poisson_variate(rng, 3.5)); });
  EXPECT_NEAR(p.mean, 3.5, 0.03);
  EXPECT_NEAR(p.var, 3.5, 0.08);
  const auto b = sample_moments(200000, [&] { return static_cast<double>(binomial_variate(rng, 12, 0.3)); });
  EXPECT_NEAR(b.mean, 3.6, 0.03);
  EXPECT_NEAR(b.var, 12 * 0.3 * 0.7, 0.06);
  EXPECT_EQ(poisson_variate(rng, 0.0), 0);
  EXPECT_EQ(binomial_variate(rng, 0, 0.5), 0);
}

TEST(Validation, RejectsBadParameters) {
  auto rng = make_rng(9);
  EXPECT_THROW(gamma_variate(rng, -1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(gamma_variate(rng, 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(poisson_variate(rng, -1.0), std::invalid_argument);
  EXPECT_THROW(inverse_gaussian_variate(rng, 0.0, 1.0), std::invalid_argument);
}
