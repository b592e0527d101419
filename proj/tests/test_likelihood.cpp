#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>

#include "stregion/likelihood.hpp"
#include "stregion/sampler.hpp"

using namespace stregion;

namespace {

double ig_density(double z, double psi) {
  return std::sqrt(psi / (2.0 * std::numbers::pi * z * z * z)) * std::exp(-psi * (z - 1.0) * (z - 1.0) / (2.0 * z));
}

// Pr(Y = y) by integrating Poisson(mu z) against the IG(1, psi) density.
double pig_pmf_quadrature(std::int64_t y, double mu, double psi) {
  auto f = [&](double z) {
    if (!(z > 0.0) || !std::isfinite(z)) return 0.0;
    const double lp = static_cast<double>(y) * std::log(mu * z) - mu * z - std::lgamma(y + 1.0);
    const double v = std::exp(lp) * ig_density(z, psi);
    return std::isfinite(v) ? v : 0.0;
  };
  // Split at the mode region so both pieces are smooth.
  const double mid = 1.0;
  const double lower = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, mid, 15, 1e-14);
  boost::math::quadrature::exp_sinh<double> tail;
  const double upper = tail.integrate([&](double t) { return f(mid + t); }, 1e-14);
  return lower + upper;
}

Dataset toy_dataset() {
  Dataset d;
  d.n_areas = 3;
  d.n_weeks = 2;
  d.n_seasons = 1;
  d.p_mean = 1;
  d.p_disp = 1;
  d.y = {1, 3, 0, 2, 5, 4};
  d.offset = {1.0, 1.5, 2.0, 0.5, 1.0, 3.0};
  d.x = {0.1, -0.2, 0.3, 0.0, 0.5, -0.4};
  d.v = {1.0, 1.0, 1.0};
  d.season_of_week = {0, 0};
  d.finalize();
  return d;
}

}  // namespace

TEST(Rates, OffsetOnlyAndPublishedCoefficients) {
  Dataset d = Dataset::data_free(1, 1, 2, 3);
  d.n_weeks = 1;
  d.y = {0};
  d.offset = {2.5};
  d.x = {1.0, 0.0};
  d.season_of_week = {0};
  d.v = {1.0, 0.0, 0.0};
  d.finalize();
  const std::vector<double> zero{0.0, 0.0};
  EXPECT_DOUBLE_EQ(poisson_rate(0, 0, d, zero, 1.0, 1.0), 2.5);
  const std::vector<double> beta{0.4, 0.1};
  EXPECT_NEAR(mean_rate(0, 0, d, beta, 3.0), 3.0 * std::exp(0.4), 1e-14);
  EXPECT_NEAR(mean_rate(0, 0, d, beta, 6.0), 2.0 * mean_rate(0, 0, d, beta, 3.0), 1e-14);
  const std::vector<double> delta{-0.3, 0.2, -0.4};
  EXPECT_NEAR(dispersion_param(0, 0, d, delta), std::exp(-0.3), 1e-15);
  EXPECT_DOUBLE_EQ(dispersion_param(0, 0, d, std::vector<double>{0.0, 0.0, 0.0}), 1.0);
}

TEST(PoissonPmf, EdgeCases) {
  EXPECT_DOUBLE_EQ(poisson_log_pmf(0, 2.5).value(), -2.5);
  EXPECT_TRUE(poisson_log_pmf(3, 0.0).impossible());
  EXPECT_DOUBLE_EQ(poisson_log_pmf(0, 0.0).value(), 0.0);
  EXPECT_NEAR(poisson_log_pmf(4, 2.0).value(), 4 * std::log(2.0) - 2.0 - std::log(24.0), 1e-14);
}

TEST(PigPmf, ZeroCountClosedFormAndQuadrature) {
  for (auto [mu, psi] : {std::pair{3.0, 0.5}, std::pair{0.2, 5.0}, std::pair{12.0, 50.0}, std::pair{1.0, 1.0}}) {
    const double closed = psi * (1.0 - std::sqrt(1.0 + 2.0 * mu / psi));
    EXPECT_NEAR(pig_log_pmf(0, mu, psi), closed, 1e-12);
    EXPECT_NEAR(std::exp(pig_log_pmf(0, mu, psi)), pig_pmf_quadrature(0, mu, psi), 1e-8);
  }
}

TEST(PigPmf, PositiveCountsMatchQuadrature) {
  for (auto [mu, psi] : {std::pair{3.0, 0.74}, std::pair{10.0, 5.0}, std::pair{0.5, 2.0}}) {
    for (std::int64_t y : {1, 2, 5, 13, 30}) {
      const double q = pig_pmf_quadrature(y, mu, psi);
      EXPECT_NEAR(std::exp(pig_log_pmf(y, mu, psi)) / q, 1.0, 1e-7) << mu << " " << psi << " " << y;
    }
  }
}

TEST(PigPmf, NormalizesUnderTruncation) {
  for (auto [mu, psi] : {std::pair{3.0, 0.5}, std::pair{20.0, 2.0}, std::pair{1.0, 100.0}}) {
    double total = 0.0;
    for (std::int64_t y = 0; y <= 20000; ++y) {
      const double p = std::exp(pig_log_pmf(y, mu, psi));
      total += p;
      if (y > 10.0 * mu && p < 1e-20) break;
    }
    EXPECT_GE(total, 1.0 - 1e-8);
    EXPECT_LE(total, 1.0 + 1e-10);
  }
}

TEST(PigPmf, PoissonLimit) {
  // The leading correction is ((y - mu)^2 - y) / (2 psi); the log-pmf gap
  // follows it, and the probability-scale gap is below 1e-5 everywhere.
  const double mu = 3.0, psi = 1e6;
  for (std::int64_t y = 0; y <= 20; ++y) {
    const double yd = static_cast<double>(y);
    const double gap = pig_log_pmf(y, mu, psi) - poisson_log_pmf(y, mu).value();
    EXPECT_NEAR(gap, ((yd - mu) * (yd - mu) - yd) / (2.0 * psi), 1e-9) << y;
    EXPECT_NEAR(std::exp(pig_log_pmf(y, mu, psi)), std::exp(poisson_log_pmf(y, mu).value()), 1e-5) << y;
  }
  for (std::int64_t y = 0; y <= 7; ++y) {
    EXPECT_NEAR(pig_log_pmf(y, mu, psi), poisson_log_pmf(y, mu).value(), 1e-5) << y;
  }
}

TEST(PigPmf, FiniteAcrossWideRange) {
  for (double psi : {1e-4, 1e-2, 1.0, 1e4, 1e8}) {
    for (double mu : {1e-6, 1.0, 1e4}) {
      for (std::int64_t y : {0, 1, 1000, 1000000}) {
        EXPECT_TRUE(std::isfinite(pig_log_pmf(y, mu, psi))) << y << " " << mu << " " << psi;
      }
    }
  }
}

TEST(PigPmf, MixtureMomentIdentity) {
  auto rng = make_rng(31);
  const double mu = 4.0, psi = 0.8;
  double s = 0.0, ss = 0.0;
  const int reps = 400000;
  for (int r = 0; r < reps; ++r) {
    const double y = static_cast<double>(poisson_variate(rng, mu * inverse_gaussian_variate(rng, 1.0, psi)));
    s += y;
    ss += y * y;
  }
  const double mean = s / reps;
  EXPECT_NEAR(mean, mu, 0.05);
  EXPECT_NEAR((ss / reps - mean * mean) / (mu + mu * mu / psi), 1.0, 0.04);
  // The pmf reproduces the same two moments.
  double m1 = 0.0, m2 = 0.0;
  for (std::int64_t y = 0; y < 2000; ++y) {
    const double p = std::exp(pig_log_pmf(y, mu, psi));
    m1 += y * p;
    m2 += static_cast<double>(y) * y * p;
  }
  EXPECT_NEAR(m1, mu, 1e-8);
  EXPECT_NEAR(m2 - m1 * m1, mu + mu * mu / psi, 1e-6);
}

TEST(CollapsedMarginal, SubstitutionCases) {
  EXPECT_NEAR(log_collapsed_marginal(1.0, 1.0, 1.0, 1.0), std::lgamma(2.0) - 2.0 * std::log(2.0), 1e-15);
  EXPECT_NEAR(log_collapsed_marginal(0.0, 3.0, 2.0, 0.5), std::lgamma(2.0) - 2.0 * std::log(3.5), 1e-15);
}

TEST(CollapsedMarginal, OrderInvariantAndMatchesThetaQuadrature) {
  const auto d = toy_dataset();
  const std::vector<double> beta{0.3};
  const std::vector<double> z{0.7, 1.2, 1.5};
  const double a = 1.5, b = 0.8;
  const std::vector<std::size_t> fwd{0, 1, 2}, rev{2, 0, 1};
  const double f = collapsed_cluster_marginal(fwd, 0, d, beta, z, a, b);
  EXPECT_NEAR(f, collapsed_cluster_marginal(rev, 0, d, beta, z, a, b), 1e-12);

  // Integral over theta of Ga(a, b) prior times Poisson kernels (without
  // the y! and O-power constants) equals b^a / Gamma(a) * f.
  auto block = [&](const std::vector<std::size_t>& members) {
    auto g = [&](double th) {
      if (!(th > 0.0)) return 0.0;
      double lp = (a - 1.0) * std::log(th) - b * th;
      for (auto i : members) {
        for (std::size_t t = 0; t < d.n_weeks; ++t) {
          const double e = d.offset[d.obs(i, t)] * std::exp(dot(d.x_row(i, t), beta)) * z[i];
          lp += static_cast<double>(d.y[d.obs(i, t)]) * std::log(th) - th * e;
        }
      }
      return std::exp(lp);
    };
    boost::math::quadrature::exp_sinh<double> es;
    return std::log(es.integrate(g, 1e-13));
  };
  EXPECT_NEAR(block(fwd), f, 1e-8);
  // Merge/split odds as used by the partition ratio.
  const std::vector<std::size_t> left{0}, right{1, 2};
  const double oracle = block(fwd) - block(left) - block(right);
  const double model = f - collapsed_cluster_marginal(left, 0, d, beta, z, a, b) -
                       collapsed_cluster_marginal(right, 0, d, beta, z, a, b);
  EXPECT_NEAR(model, oracle, 1e-8);
}

TEST(ConditionalLoglik, SumMatchesIndependentFormula) {
  const auto d = toy_dataset();
  ChainState st;
  st.beta = {0.2};
  st.delta = {0.1};
  st.seasons.resize(1);
  st.seasons[0].partition = Partition(std::vector<std::int64_t>{0, 0, 1});
  st.seasons[0].theta = {2.0, 0.5};
  st.seasons[0].z = {0.9, 1.1, 1.3};
  const auto ll = conditional_poisson_loglik(d, st);
  ASSERT_EQ(ll.size(), d.n_obs());
  double total = 0.0, oracle = 0.0;
  for (double v : ll) total += v;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t t = 0; t < 2; ++t) {
      const double th = i < 2 ? 2.0 : 0.5;
      const double r = d.offset[i * 2 + t] * std::exp(0.2 * d.x[i * 2 + t]) * th * st.seasons[0].z[i];
      const double y = static_cast<double>(d.y[i * 2 + t]);
      oracle += y * std::log(r) - r - std::lgamma(y + 1.0);
    }
  }
  EXPECT_NEAR(total, oracle, 1e-10);
}

TEST(Sir, RatiosAndErrors) {
  const std::vector<double> y{5.0, 0.0, 8.0};
  const std::vector<double> e{5.0, 2.0, 4.0};
  const auto s = compute_sir(y, e);
  EXPECT_DOUBLE_EQ(s[0], 1.0);
  EXPECT_DOUBLE_EQ(s[1], 0.0);
  EXPECT_DOUBLE_EQ(s[2], 2.0);
  EXPECT_THROW(compute_sir(y, std::vector<double>{1.0, 0.0, 1.0}), std::invalid_argument);
  const auto d = toy_dataset();
  const auto ex = expected_counts(d);
  double te = 0.0;
  for (double v : ex) te += v;
  EXPECT_NEAR(te, 15.0, 1e-12);
}

TEST(Dataset, ValidationRejectsBadInputs) {
  auto d = toy_dataset();
  d.offset[0] = 0.0;
  EXPECT_THROW(d.finalize(), std::invalid_argument);
  d = toy_dataset();
  d.y[1] = -1;
  EXPECT_THROW(d.finalize(), std::invalid_argument);
  d = toy_dataset();
  d.x.pop_back();
  EXPECT_THROW(d.finalize(), std::invalid_argument);
}
