#include <gtest/gtest.h>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stregion/prior.hpp"

using namespace stregion;

namespace {

double sample_corr(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Beta-binomial pmf of K - 1 written out from the beta function.
double betabinomial_pmf(std::size_t m, std::size_t j, double a, double b) {
  return std::exp(std::lgamma(m + 1.0) - std::lgamma(j + 1.0) - std::lgamma(m - j + 1.0)) *
         boost::math::beta(j + a, m - j + b) / boost::math::beta(a, b);
}

}  // namespace

TEST(PartitionPrior, DirectSubstitution) {
  const auto g = path_graph(5);
  const auto tree = prim_mst(g, std::vector<double>{1, 2, 3, 4});
  const Partition two(std::vector<std::int64_t>{0, 0, 1, 1, 1});
  EXPECT_NEAR(log_partition_prior(two, tree, 0.5).value(), 4.0 * std::log(0.5), 1e-14);
  EXPECT_NEAR(log_partition_prior(Partition::single_cluster(5), tree, 0.2).value(), 4.0 * std::log(0.8), 1e-14);
  const Partition split(std::vector<std::int64_t>{0, 1, 0, 1, 1});
  EXPECT_TRUE(log_partition_prior(split, tree, 0.3).impossible());
  EXPECT_THROW(log_partition_prior(two, tree, 0.0), std::invalid_argument);
  EXPECT_THROW(log_partition_prior(two, tree, 1.0), std::invalid_argument);
}

TEST(PartitionPrior, SumsToOneOverIndicatorVectors) {
  const auto g = grid_graph(3, 4);
  auto rng = make_rng(21);
  const auto tree = random_spanning_tree(g, rng);
  const auto m = tree.edges().size();
  double total = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    EdgeIndicators bits(m);
    for (std::size_t l = 0; l < m; ++l) bits[l] = mask >> l & 1u;
    total += std::exp(log_partition_prior(partition_from_indicators(tree, bits), tree, 0.37).value());
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(ClusterCountMoments, PublishedCells) {
  auto rounded = [](std::size_t n, double u, double k) {
    const auto m = cluster_count_prior_moments(n, u, k);
    return std::pair{std::nearbyint(m.mean), std::nearbyint(m.variance)};
  };
  EXPECT_EQ(rounded(70, 10, 100), std::pair(7.0, 9.0));
  EXPECT_EQ(rounded(70, 0.01, 0.01), std::pair(36.0, 1167.0));
  EXPECT_EQ(rounded(70, 1, 1), std::pair(36.0, 408.0));
  EXPECT_NEAR(cluster_count_prior_moments(70, 10, 100).mean, 1.0 + 69.0 * 10.0 / 110.0, 1e-12);
}

TEST(ClusterCountMoments, AgreeWithBetaBinomialPmf) {
  for (auto [n, u, k] : {std::tuple{70ul, 10.0, 100.0}, std::tuple{12ul, 0.5, 2.0}, std::tuple{5ul, 3.0, 3.0}}) {
    const auto pmf = cluster_count_prior_pmf(n, u, k);
    double s = 0.0, m1 = 0.0, m2 = 0.0;
    for (std::size_t j = 0; j < pmf.size(); ++j) {
      EXPECT_NEAR(pmf[j], betabinomial_pmf(n - 1, j, u, k), 1e-12);
      s += pmf[j];
      m1 += (j + 1.0) * pmf[j];
      m2 += (j + 1.0) * (j + 1.0) * pmf[j];
    }
    const auto mom = cluster_count_prior_moments(n, u, k);
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_NEAR(m1, mom.mean, 1e-9);
    EXPECT_NEAR(m2 - m1 * m1, mom.variance, 1e-7);
  }
}

TEST(ClusterCountMoments, MonotoneInHyperparameters) {
  EXPECT_LT(cluster_count_prior_moments(70, 1, 10).mean, cluster_count_prior_moments(70, 2, 10).mean);
  EXPECT_GT(cluster_count_prior_moments(70, 1, 10).mean, cluster_count_prior_moments(70, 1, 20).mean);
}

TEST(ClusterCountMoments, MonteCarloBetaBinomial) {
  auto rng = make_rng(22);
  const std::size_t n = 70;
  const double u = 1.0, k = 1.0;
  double s = 0.0, ss = 0.0;
  const int reps = 200000;
  for (int r = 0; r < reps; ++r) {
    const double rho = beta_variate(rng, u, k);
    const double kk = 1.0 + static_cast<double>(binomial_variate(rng, n - 1, rho));
    s += kk;
    ss += kk * kk;
  }
  const auto mom = cluster_count_prior_moments(n, u, k);
  const double mean = s / reps;
  EXPECT_NEAR(mean, mom.mean, 4.0 * std::sqrt(mom.variance / reps));
  EXPECT_NEAR((ss / reps - mean * mean) / mom.variance, 1.0, 0.02);
}

TEST(RhoAutocorrelation, ClosedFormCases) {
  const std::vector<std::int64_t> zeros(10, 0);
  EXPECT_EQ(rho_autocorrelation(3, 1, 2, 1.0, 1.0, zeros), 0.0);
  const std::vector<std::int64_t> ones(10, 1);
  EXPECT_NEAR(rho_autocorrelation(2, 1, 1, 1.0, 1.0, ones), 0.375, 1e-15);
  EXPECT_NEAR(rho_autocorrelation(2, 1, 1, 1e-9, 1e-9, ones), 1.0, 1e-8);
  EXPECT_THROW(rho_autocorrelation(0, 1, 1, 1.0, 1.0, ones), std::invalid_argument);
}

TEST(RhoAutocorrelation, MatchesLatentChainSimulation) {
  // c pinned to 1: w ~ Be, u ~ Bin(1, w), rho from the windowed beta.
  auto rng = make_rng(23);
  const std::size_t q = 1;
  const double ups = 1.0, kap = 1.0;
  const int reps = 200000;
  std::vector<double> r2(reps), r3(reps);
  LatentSeries lat;
  lat.n_seasons = 3;
  lat.q = q;
  lat.upsilon = ups;
  lat.kappa = kap;
  lat.c.assign(4, 1);
  lat.u.assign(4, 0);
  for (int r = 0; r < reps; ++r) {
    const double w = beta_variate(rng, ups, kap);
    for (auto& u : lat.u) u = binomial_variate(rng, 1, w);
    auto [a2, b2] = lat.rho_prior_params(1);
    auto [a3, b3] = lat.rho_prior_params(2);
    r2[r] = beta_variate(rng, a2, b2);
    r3[r] = beta_variate(rng, a3, b3);
  }
  const std::vector<std::int64_t> ones(4, 1);
  EXPECT_NEAR(sample_corr(r2, r3), rho_autocorrelation(2, 1, q, ups, kap, ones), 0.01);
}

TEST(Latents, MarginalRhoIsBeta) {
  auto rng = make_rng(24);
  const int reps = 20000;
  std::vector<double> x(reps);
  for (auto& v : x) v = sample_latents_given(2.0, 5.0, 3.0, 4, 2, rng).rho[3];
  std::sort(x.begin(), x.end());
  boost::math::beta_distribution<> d(2.0, 5.0);
  double ks = 0.0;
  for (int i = 0; i < reps; ++i) {
    const double f = boost::math::cdf(d, x[i]);
    ks = std::max({ks, f - static_cast<double>(i) / reps, static_cast<double>(i + 1) / reps - f});
  }
  EXPECT_LT(ks, 0.015);
}

TEST(Latents, SupportAndZeroZeta) {
  auto rng = make_rng(25);
  for (int r = 0; r < 1000; ++r) {
    const auto lat = sample_latents_given(1.0, 1.0, 2.5, 5, 2, rng);
    ASSERT_EQ(lat.n_slots(), 7u);
    for (std::size_t j = 0; j < lat.n_slots(); ++j) ASSERT_LE(lat.u[j], lat.c[j]);
  }
  PartitionPriorHyper h;
  h.a_zeta = 1e-3;
  h.b_zeta = 1e6;
  const auto lat = sample_prior_latents(h, 6, rng);
  for (auto c : lat.c) EXPECT_EQ(c, 0);
}

TEST(Latents, WindowSumsDropEarlySlots) {
  LatentSeries lat;
  lat.n_seasons = 4;
  lat.q = 2;
  lat.u = {1, 2, 3, 4, 5, 6};
  lat.c = {1, 2, 3, 4, 5, 6};
  EXPECT_EQ(lat.u_window(0), 1);
  EXPECT_EQ(lat.u_window(1), 3);
  EXPECT_EQ(lat.u_window(5), 15);
}

TEST(PriorPredictive, PinnedRhoExtremes) {
  const auto g = grid_graph(4, 4);
  auto rng = make_rng(26);
  PartitionPriorHyper h;
  PriorPredictiveOptions zero{0.0};
  for (const auto& draw : prior_predictive_partitions(h, g, 3, 20, rng, zero)) {
    for (const auto& p : draw) EXPECT_EQ(p.k(), 1u);
  }
  PriorPredictiveOptions one{1.0};
  for (const auto& draw : prior_predictive_partitions(h, g, 3, 20, rng, one)) {
    for (const auto& p : draw) EXPECT_EQ(p.k(), 16u);
  }
}

TEST(PriorPredictive, ClusterCountMeanMatchesClosedForm) {
  const auto g = grid_graph(7, 10);
  auto rng = make_rng(27);
  const auto k = prior_predictive_cluster_counts(10.0, 100.0, g, 10000, rng);
  const double mean = std::accumulate(k.begin(), k.end(), 0.0) / static_cast<double>(k.size());
  EXPECT_NEAR(mean, cluster_count_prior_moments(70, 10.0, 100.0).mean, 0.2);
}

TEST(PriorPredictive, ClusterCountChiSquareOnSmallGraph) {
  const auto g = grid_graph(3, 3);
  auto rng = make_rng(28);
  const double u = 2.0, kap = 3.0;
  const auto k = prior_predictive_cluster_counts(u, kap, g, 20000, rng);
  const auto pmf = cluster_count_prior_pmf(9, u, kap);
  std::vector<double> obs(pmf.size(), 0.0);
  for (auto x : k) obs[x - 1] += 1.0;
  double chi2 = 0.0;
  for (std::size_t j = 0; j < pmf.size(); ++j) {
    const double e = pmf[j] * static_cast<double>(k.size());
    chi2 += (obs[j] - e) * (obs[j] - e) / e;
  }
  boost::math::chi_squared_distribution<> d(static_cast<double>(pmf.size() - 1));
  EXPECT_LT(chi2, boost::math::quantile(d, 0.99));
}
