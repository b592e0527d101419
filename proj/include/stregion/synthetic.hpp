#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stregion/graph.hpp"
#include "stregion/likelihood.hpp"
#include "stregion/random.hpp"

namespace stregion {

// A synthetic study. Season s uses partition slot s % theta.size(), so a
// four-slot table repeats yearly and a single slot is constant in time.
struct ScenarioSpec {
  std::string name;
  std::string description;

  std::size_t grid_rows = 6;
  std::size_t grid_cols = 6;
  // When non-empty, replaces the grid.
  std::size_t n_areas = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  std::size_t n_seasons = 12;
  std::size_t weeks_per_season = 13;

  std::vector<std::vector<double>> theta;  // per slot, one value per cluster
  // Per slot, number of disconnected components of each cluster; empty
  // means every cluster is contiguous.
  std::vector<std::vector<std::size_t>> components;
  // Per slot explicit labels; overrides generation when non-empty.
  std::vector<std::vector<std::int64_t>> partitions;
  std::uint64_t partition_seed = 7;

  std::vector<double> beta{0.4, 0.1};
  std::vector<double> delta{-0.3, 0.2, -0.4};
  bool overdispersed = true;
  double offset_lo = 1.0;
  double offset_hi = 10.0;

  std::size_t n_slots() const { return theta.size(); }

  void validate() const {
    if (theta.empty()) throw std::invalid_argument("scenario needs at least one theta slot");
    for (const auto& slot : theta) {
      if (slot.empty()) throw std::invalid_argument("theta slot must be non-empty");
      for (double v : slot) {
        if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("theta values must be positive");
      }
    }
    if (!components.empty()) {
      if (components.size() != theta.size()) throw std::invalid_argument("components must match theta slots");
      for (std::size_t j = 0; j < theta.size(); ++j) {
        if (components[j].size() != theta[j].size()) {
          throw std::invalid_argument("components entry must list one count per cluster");
        }
        for (auto c : components[j]) {
          if (c < 1) throw std::invalid_argument("component counts must be >= 1");
        }
      }
    }
    if (!partitions.empty() && partitions.size() != theta.size()) {
      throw std::invalid_argument("explicit partitions must match theta slots");
    }
    if (n_seasons < 1 || weeks_per_season < 1) throw std::invalid_argument("need seasons and weeks");
    if (delta.empty()) throw std::invalid_argument("delta needs at least the intercept");
    if (delta.size() > 3 || beta.size() > 2) {
      throw std::invalid_argument("synthetic designs provide at most 2 mean and 3 dispersion columns");
    }
    if (!(offset_lo > 0.0) || !(offset_hi >= offset_lo)) throw std::invalid_argument("bad offset range");
  }
};

struct ScenarioTruth {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<Partition> partitions;          // per season
  std::vector<std::vector<double>> theta;     // per season, per cluster (canonical order)
  std::vector<double> beta;
  std::vector<double> delta;
  bool overdispersed = true;
  std::vector<double> z;    // [i * S + s]
  std::vector<double> psi;  // [i * S + s]
};

struct SyntheticDataset {
  SpatialGraph graph;
  Dataset data;
  ScenarioTruth truth;
};

inline SpatialGraph scenario_graph(const ScenarioSpec& spec) {
  if (spec.edges.empty()) return grid_graph(spec.grid_rows, spec.grid_cols);
  return SpatialGraph(spec.n_areas, spec.edges);
}

namespace detail {

// Contiguous partition with reasonably balanced cluster sizes: retries the
// random growth a bounded number of times and keeps the most balanced one.
inline Partition balanced_contiguous_partition(const SpatialGraph& graph, std::size_t k, Rng& rng) {
  const auto n = graph.n_areas();
  const std::size_t floor_size = std::max<std::size_t>(1, n / (2 * k));
  Partition best;
  std::size_t best_min = 0;
  for (int attempt = 0; attempt < 200; ++attempt) {
    auto p = random_contiguous_partition(graph, k, rng);
    std::size_t smallest = n;
    for (const auto& c : p.clusters()) smallest = std::min(smallest, c.size());
    if (smallest > best_min || attempt == 0) {
      best = p;
      best_min = smallest;
    }
    if (smallest >= floor_size) break;
  }
  return best;
}

// Groups contiguous regions into clusters with the requested component
// counts; regions sharing a cluster must not touch, so each stays a
// separate component.
inline std::vector<std::int64_t> partition_with_components(const SpatialGraph& graph,
                                                           const std::vector<std::size_t>& comps, Rng& rng) {
  std::size_t regions = 0;
  for (auto c : comps) regions += c;
  for (int attempt = 0; attempt < 500; ++attempt) {
    const auto base = balanced_contiguous_partition(graph, regions, rng);
    std::vector<std::vector<char>> touch(regions, std::vector<char>(regions, 0));
    for (const auto& e : graph.edges()) {
      const auto a = base.label(e.a);
      const auto b = base.label(e.b);
      if (a != b) touch[a][b] = touch[b][a] = 1;
    }
    std::vector<std::size_t> order(regions);
    std::iota(order.begin(), order.end(), 0);
    for (int shuffle = 0; shuffle < 200; ++shuffle) {
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<std::int64_t> cluster_of(regions, -1);
      std::size_t pos = 0;
      bool ok = true;
      for (std::size_t j = 0; j < comps.size() && ok; ++j) {
        for (std::size_t m = 0; m < comps[j]; ++m) {
          const auto r = order[pos++];
          for (std::size_t r2 = 0; r2 < regions; ++r2) {
            if (cluster_of[r2] == static_cast<std::int64_t>(j) && touch[r][r2]) ok = false;
          }
          cluster_of[r] = static_cast<std::int64_t>(j);
        }
      }
      if (!ok) continue;
      std::vector<std::int64_t> labels(graph.n_areas());
      for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = cluster_of[base.label(i)];
      return labels;
    }
  }
  throw std::runtime_error("could not place non-contiguous clusters on this graph");
}

}  // namespace detail

// True partition of each slot with theta re-indexed to canonical cluster
// ids. Raw label r carries theta[r].
struct SlotPartition {
  Partition partition;
  std::vector<double> theta;  // indexed by canonical cluster id
};

inline std::vector<SlotPartition> scenario_partitions(const ScenarioSpec& spec, const SpatialGraph& graph) {
  spec.validate();
  Rng prng = make_rng(spec.partition_seed, 0x9a27);
  std::vector<SlotPartition> out;
  for (std::size_t j = 0; j < spec.n_slots(); ++j) {
    const auto& th = spec.theta[j];
    std::vector<std::int64_t> raw;
    if (!spec.partitions.empty()) {
      raw = spec.partitions[j];
      if (raw.size() != graph.n_areas()) throw std::invalid_argument("explicit partition has wrong length");
    } else if (!spec.components.empty()) {
      raw = detail::partition_with_components(graph, spec.components[j], prng);
    } else {
      const auto p = detail::balanced_contiguous_partition(graph, th.size(), prng);
      raw.assign(p.labels().begin(), p.labels().end());
    }
    Partition p(raw);
    if (p.k() != th.size()) {
      throw std::invalid_argument("slot " + std::to_string(j) + ": partition has " + std::to_string(p.k()) +
                                  " clusters but theta lists " + std::to_string(th.size()));
    }
    // Raw cluster id r carries theta[r] when raw ids are 0..k-1; canonical
    // order may differ, so map through a representative area.
    std::vector<double> by_canonical(p.k());
    for (std::size_t c = 0; c < p.k(); ++c) {
      const auto rep = p.members(c).front();
      const auto r = raw[rep];
      if (r < 0 || static_cast<std::size_t>(r) >= th.size()) {
        throw std::invalid_argument("partition labels must be 0..k-1");
      }
      by_canonical[c] = th[static_cast<std::size_t>(r)];
    }
    out.push_back({std::move(p), std::move(by_canonical)});
  }
  return out;
}

// Draws counts from the generative model given the scenario's partitions,
// coefficients and dispersion setting.
inline SyntheticDataset generate_dataset(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  SyntheticDataset out;
  out.graph = scenario_graph(spec);
  out.graph.require_connected();
  const auto slots = scenario_partitions(spec, out.graph);

  Rng rng = make_rng(seed, 0x51ed);
  const auto n = out.graph.n_areas();
  const auto S = spec.n_seasons;
  const auto T = S * spec.weeks_per_season;
  auto& d = out.data;
  d.n_areas = n;
  d.n_weeks = T;
  d.n_seasons = S;
  d.p_mean = spec.beta.size();
  d.p_disp = spec.delta.size();
  d.season_of_week.resize(T);
  for (std::size_t t = 0; t < T; ++t) d.season_of_week[t] = t / spec.weeks_per_season;

  // Offsets: log-uniform per area, constant over weeks.
  std::vector<double> area_offset(n);
  for (auto& o : area_offset) {
    o = std::exp(uniform(rng, std::log(spec.offset_lo), std::log(spec.offset_hi)));
  }
  d.offset.resize(n * T);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < T; ++t) d.offset[i * T + t] = area_offset[i];
  }

  // Two seasonal stand-in covariates: a yearly sinusoid with an area phase
  // plus noise, then standardized over all cells.
  std::vector<std::vector<double>> cov(2, std::vector<double>(n * T));
  for (std::size_t i = 0; i < n; ++i) {
    const double phase = uniform(rng, 0.0, 0.5);
    for (std::size_t t = 0; t < T; ++t) {
      const double angle = 2.0 * std::numbers::pi * (static_cast<double>(t) / 52.0 + phase);
      cov[0][i * T + t] = std::sin(angle) + 0.3 * standard_normal(rng);
      cov[1][i * T + t] = std::cos(angle) + 0.3 * standard_normal(rng);
    }
  }
  for (auto& c : cov) {
    double mean = 0.0;
    for (double v : c) mean += v;
    mean /= static_cast<double>(c.size());
    double ss = 0.0;
    for (double v : c) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(c.size() - 1));
    for (auto& v : c) v = (v - mean) / sd;
  }
  d.x.resize(n * T * d.p_mean);
  for (std::size_t o = 0; o < n * T; ++o) {
    for (std::size_t j = 0; j < d.p_mean; ++j) d.x[o * d.p_mean + j] = cov[j][o];
  }
  // V: intercept, then season averages of the covariates.
  d.v.assign(n * S * d.p_disp, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < S; ++s) {
      double* row = &d.v[(i * S + s) * d.p_disp];
      row[0] = 1.0;
      for (std::size_t j = 1; j < d.p_disp; ++j) {
        double m = 0.0;
        for (std::size_t w = 0; w < spec.weeks_per_season; ++w) m += cov[j - 1][i * T + s * spec.weeks_per_season + w];
        row[j] = m / static_cast<double>(spec.weeks_per_season);
      }
    }
  }

  auto& truth = out.truth;
  truth.scenario = spec.name;
  truth.seed = seed;
  truth.beta = spec.beta;
  truth.delta = spec.delta;
  truth.overdispersed = spec.overdispersed;
  truth.z.assign(n * S, 1.0);
  truth.psi.assign(n * S, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    const auto& slot = slots[s % slots.size()];
    truth.partitions.push_back(slot.partition);
    truth.theta.push_back(slot.theta);
  }

  d.y.resize(n * T);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < S; ++s) {
      double eta_v = 0.0;
      for (std::size_t j = 0; j < d.p_disp; ++j) eta_v += d.v[(i * S + s) * d.p_disp + j] * spec.delta[j];
      const double psi = std::exp(eta_v);
      truth.psi[i * S + s] = psi;
      if (spec.overdispersed) truth.z[i * S + s] = inverse_gaussian_variate(rng, 1.0, psi);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      const auto s = d.season_of_week[t];
      const auto& part = truth.partitions[s];
      const double theta = truth.theta[s][part.label(i)];
      double eta = 0.0;
      for (std::size_t j = 0; j < d.p_mean; ++j) eta += d.x[(i * T + t) * d.p_mean + j] * spec.beta[j];
      const double rate = d.offset[i * T + t] * std::exp(eta) * theta * truth.z[i * S + s];
      d.y[i * T + t] = poisson_variate(rng, rate);
    }
  }
  d.finalize();
  return out;
}

// Shipped scenarios. Sim1 variants use beta = (0.4, 0.1) and
// delta = (-0.3, 0.2, -0.4) over 12 seasons; Sim2 and Sim3 use
// delta = (3.5, 0.2, -0.4) over 20 seasons.
inline std::vector<ScenarioSpec> builtin_scenarios() {
  std::vector<ScenarioSpec> out;
  auto sim1 = [&](const std::string& name, std::vector<std::vector<double>> theta, bool over,
                  const std::string& what) {
    ScenarioSpec s;
    s.name = name;
    s.description = what;
    s.n_seasons = 12;
    s.theta = std::move(theta);
    s.overdispersed = over;
    s.delta = {-0.3, 0.2, -0.4};
    out.push_back(std::move(s));
  };
  const std::vector<std::vector<double>> s1_sc1{{1, 3, 5, 7}};
  const std::vector<std::vector<double>> s1_sc2{{1, 3, 5, 7}, {3, 5, 7}, {3, 5}, {1, 3}};
  const std::vector<std::vector<double>> s1_sc3{
      {1, 3, 5, 7}, {1, 3, 5, 7}, {5, 7}, {1, 3, 5}, {1, 3, 5, 7},       {1, 3, 5, 7, 9, 11},
      {1, 3, 5, 7}, {1, 3},       {1, 3, 5, 7, 9}, {1, 3, 5, 7, 9, 11}, {1, 3, 5, 7},       {1, 3, 5}};
  sim1("sim1-sc1-over", s1_sc1, true, "constant 4-cluster partition, overdispersed");
  sim1("sim1-sc1-equi", s1_sc1, false, "constant 4-cluster partition, equidispersed");
  sim1("sim1-sc2-over", s1_sc2, true, "seasonal partitions repeated yearly, overdispersed");
  sim1("sim1-sc2-equi", s1_sc2, false, "seasonal partitions repeated yearly, equidispersed");
  sim1("sim1-sc3-over", s1_sc3, true, "a different partition every season, overdispersed");
  sim1("sim1-sc3-equi", s1_sc3, false, "a different partition every season, equidispersed");

  auto sim2 = [&](const std::string& name, std::vector<std::vector<double>> theta, const std::string& what) {
    ScenarioSpec s;
    s.name = name;
    s.description = what;
    s.n_seasons = 20;
    s.theta = std::move(theta);
    s.overdispersed = true;
    s.delta = {3.5, 0.2, -0.4};
    out.push_back(std::move(s));
  };
  sim2("sim2-sc1", {{1, 3, 6, 9}, {1, 5, 9}, {1}, {1, 4}}, "seasonal 4/3/1/2 clusters, similar rates");
  sim2("sim2-sc2", {{1, 10, 25, 45}, {1, 10, 25}, {1}, {1, 10}}, "seasonal 4/3/1/2 clusters, distinct rates");
  sim2("sim2-sc3", {{1, 3, 6, 9, 13}, {1, 3, 6, 9, 12, 16, 20, 25, 30, 35}, {1, 3, 6, 9}, {1, 4}},
       "seasonal 5/10/4/2 clusters, similar rates");
  sim2("sim2-sc4",
       {{1, 10, 25, 45, 70}, {1, 9, 20, 35, 55, 75, 100, 120, 150, 180}, {1, 10, 25, 40}, {1, 15}},
       "seasonal 5/10/4/2 clusters, distinct rates");

  ScenarioSpec s3;
  s3.name = "sim3-noncontiguous";
  s3.description = "seasonal partitions containing clusters split into several components";
  s3.n_seasons = 20;
  s3.theta = {{1, 10, 25, 45}, {1, 5, 25}, {5, 20}, {1, 15}};
  s3.components = {{1, 2, 2, 2}, {1, 2, 2}, {1, 2}, {1, 3}};
  s3.delta = {3.5, 0.2, -0.4};
  out.push_back(std::move(s3));
  return out;
}

inline ScenarioSpec find_scenario(const std::string& name) {
  for (auto& s : builtin_scenarios()) {
    if (s.name == name) return s;
  }
  throw std::invalid_argument("unknown scenario: " + name);
}

}  // namespace stregion
