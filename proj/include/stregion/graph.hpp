#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "stregion/random.hpp"

namespace stregion {

// Thrown when a traversal cannot reach some area. `area()` names one of the
// unreachable areas so callers can point at the offending input row.
class DisconnectedGraphError : public std::runtime_error {
 public:
  explicit DisconnectedGraphError(std::size_t area)
      : std::runtime_error("graph is disconnected: area " + std::to_string(area) +
                           " is unreachable from area 0"),
        area_(area) {}
  std::size_t area() const noexcept { return area_; }

 private:
  std::size_t area_;
};

// A cluster that does not induce a connected subgraph can never be obtained by
// pruning a spanning tree.
class IncompatiblePartitionError : public std::runtime_error {
 public:
  explicit IncompatiblePartitionError(std::size_t cluster)
      : std::runtime_error("cluster " + std::to_string(cluster) +
                           " does not induce a connected subgraph"),
        cluster_(cluster) {}
  std::size_t cluster() const noexcept { return cluster_; }

 private:
  std::size_t cluster_;
};

struct Edge {
  std::size_t a;  // a < b
  std::size_t b;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Incidence {
  std::size_t neighbor;
  std::size_t edge;
};

// Undirected adjacency structure over a fixed set of areas. Edges are
// deduplicated and numbered in lexicographic (min id, max id) order; that
// numbering is the canonical edge index used everywhere else.
class SpatialGraph {
 public:
  SpatialGraph() = default;

  SpatialGraph(std::size_t n_areas, std::span<const std::pair<std::size_t, std::size_t>> pairs)
      : n_areas_(n_areas) {
    edges_.reserve(pairs.size());
    for (auto [u, v] : pairs) {
      if (u >= n_areas || v >= n_areas) {
        throw std::invalid_argument("edge (" + std::to_string(u) + "," + std::to_string(v) +
                                    ") references an area >= n_areas");
      }
      if (u == v) throw std::invalid_argument("self-loop on area " + std::to_string(u));
      edges_.push_back({std::min(u, v), std::max(u, v)});
    }
    std::sort(edges_.begin(), edges_.end(),
              [](const Edge& x, const Edge& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

    adjacency_.assign(n_areas_, {});
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      adjacency_[edges_[e].a].push_back({edges_[e].b, e});
      adjacency_[edges_[e].b].push_back({edges_[e].a, e});
    }
  }

  SpatialGraph(std::size_t n_areas, const std::vector<std::pair<std::size_t, std::size_t>>& pairs)
      : SpatialGraph(n_areas, std::span<const std::pair<std::size_t, std::size_t>>(pairs)) {}

  std::size_t n_areas() const noexcept { return n_areas_; }
  std::size_t n_edges() const noexcept { return edges_.size(); }
  const Edge& edge(std::size_t e) const { return edges_.at(e); }
  std::span<const Edge> edges() const noexcept { return edges_; }
  std::span<const Incidence> neighbors(std::size_t v) const { return adjacency_.at(v); }

  std::size_t edge_index(std::size_t u, std::size_t v) const {
    const Edge key{std::min(u, v), std::max(u, v)};
    auto it = std::lower_bound(edges_.begin(), edges_.end(), key, [](const Edge& x, const Edge& y) {
      return std::tie(x.a, x.b) < std::tie(y.a, y.b);
    });
    if (it == edges_.end() || !(*it == key)) {
      throw std::out_of_range("no edge between " + std::to_string(u) + " and " + std::to_string(v));
    }
    return static_cast<std::size_t>(it - edges_.begin());
  }

  // First area not reachable from area 0, or n_areas() when connected.
  std::size_t first_unreachable() const {
    if (n_areas_ == 0) return 0;
    std::vector<char> seen(n_areas_, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (const auto& inc : adjacency_[v]) {
        if (!seen[inc.neighbor]) {
          seen[inc.neighbor] = 1;
          stack.push_back(inc.neighbor);
        }
      }
    }
    for (std::size_t v = 0; v < n_areas_; ++v) {
      if (!seen[v]) return v;
    }
    return n_areas_;
  }

  bool is_connected() const { return first_unreachable() == n_areas_; }

  void require_connected() const {
    const auto v = first_unreachable();
    if (v != n_areas_) throw DisconnectedGraphError(v);
  }

 private:
  std::size_t n_areas_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<Incidence>> adjacency_;
};

// Rook-adjacency lattice, areas numbered row-major.
inline SpatialGraph grid_graph(std::size_t rows, std::size_t cols) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const auto v = r * cols + c;
      if (c + 1 < cols) pairs.emplace_back(v, v + 1);
      if (r + 1 < rows) pairs.emplace_back(v, v + cols);
    }
  }
  return SpatialGraph(rows * cols, pairs);
}

inline SpatialGraph path_graph(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t v = 0; v + 1 < n; ++v) pairs.emplace_back(v, v + 1);
  return SpatialGraph(n, pairs);
}

// Cluster assignment with labels canonicalized so that cluster 0 holds area
// 0, and clusters are numbered by their smallest member. Two partitions are
// equal iff their label vectors are equal.
class Partition {
 public:
  Partition() = default;

  explicit Partition(std::span<const std::int64_t> raw_labels) { assign(raw_labels); }
  explicit Partition(const std::vector<std::int64_t>& raw_labels) {
    assign(std::span<const std::int64_t>(raw_labels));
  }

  static Partition single_cluster(std::size_t n) {
    return Partition(std::vector<std::int64_t>(n, 0));
  }

  static Partition singletons(std::size_t n) {
    std::vector<std::int64_t> labels(n);
    std::iota(labels.begin(), labels.end(), 0);
    return Partition(labels);
  }

  std::size_t n_areas() const noexcept { return labels_.size(); }
  std::size_t k() const noexcept { return members_.size(); }
  std::size_t label(std::size_t area) const { return labels_.at(area); }
  std::span<const std::size_t> labels() const noexcept { return labels_; }
  std::span<const std::size_t> members(std::size_t cluster) const { return members_.at(cluster); }
  const std::vector<std::vector<std::size_t>>& clusters() const noexcept { return members_; }

  friend bool operator==(const Partition& x, const Partition& y) { return x.labels_ == y.labels_; }

 private:
  void assign(std::span<const std::int64_t> raw) {
    labels_.assign(raw.size(), 0);
    members_.clear();
    std::vector<std::pair<std::int64_t, std::size_t>> seen;  // raw label -> canonical
    for (std::size_t i = 0; i < raw.size(); ++i) {
      auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& p) { return p.first == raw[i]; });
      std::size_t c;
      if (it == seen.end()) {
        c = seen.size();
        seen.emplace_back(raw[i], c);
        members_.emplace_back();
      } else {
        c = it->second;
      }
      labels_[i] = c;
      members_[c].push_back(i);
    }
  }

  std::vector<std::size_t> labels_;
  std::vector<std::vector<std::size_t>> members_;
};

// Spanning tree of a SpatialGraph. Holds a non-owning pointer to the graph;
// the graph must outlive every tree built from it. Tree edges are kept sorted
// by canonical index, which fixes the layout of indicator vectors.
class SpanningTree {
 public:
  SpanningTree() = default;

  SpanningTree(const SpatialGraph& graph, std::vector<std::size_t> edge_ids)
      : graph_(&graph), edges_(std::move(edge_ids)) {
    std::sort(edges_.begin(), edges_.end());
    if (graph.n_areas() > 0 && edges_.size() != graph.n_areas() - 1) {
      throw std::invalid_argument("spanning tree needs exactly n_areas - 1 edges");
    }
    for (auto e : edges_) {
      if (e >= graph.n_edges()) throw std::invalid_argument("tree edge index out of range");
    }
    std::vector<std::size_t> parent(graph.n_areas());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t v) {
      while (parent[v] != v) v = parent[v] = parent[parent[v]];
      return v;
    };
    for (auto e : edges_) {
      const auto ra = find(graph.edge(e).a);
      const auto rb = find(graph.edge(e).b);
      if (ra == rb) throw std::invalid_argument("tree edges contain a cycle");
      parent[ra] = rb;
    }
  }

  const SpatialGraph& graph() const { return *graph_; }
  std::size_t n_areas() const { return graph_ ? graph_->n_areas() : 0; }
  std::span<const std::size_t> edges() const noexcept { return edges_; }
  const Edge& tree_edge(std::size_t l) const { return graph_->edge(edges_.at(l)); }

  friend bool operator==(const SpanningTree& x, const SpanningTree& y) {
    return x.graph_ == y.graph_ && x.edges_ == y.edges_;
  }

 private:
  const SpatialGraph* graph_ = nullptr;
  std::vector<std::size_t> edges_;
};

// One bit per tree edge, in the tree's edge order: 1 keeps, 0 removes.
using EdgeIndicators = std::vector<std::uint8_t>;

struct CompatibilityWeightRanges {
  double within_lo = 0.0;
  double within_hi = 1.0;
  double across_lo = 10.0;
  double across_hi = 20.0;
};

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t v) {
    while (parent_[v] != v) v = parent_[v] = parent_[parent_[v]];
    return v;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

inline Partition components_as_partition(DisjointSets& sets, std::size_t n) {
  std::vector<std::int64_t> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = static_cast<std::int64_t>(sets.find(v));
  return Partition(labels);
}

}  // namespace detail

// Prim's algorithm from area 0 with a binary heap. Ties in weight fall back
// to the canonical edge index so results are deterministic.
inline SpanningTree prim_mst(const SpatialGraph& graph, std::span<const double> weights) {
  if (weights.size() != graph.n_edges()) {
    throw std::invalid_argument("prim_mst: need one weight per graph edge");
  }
  for (double w : weights) {
    if (!std::isfinite(w)) throw std::invalid_argument("prim_mst: weights must be finite");
  }
  const auto n = graph.n_areas();
  if (n == 0) return {};
  using Item = std::pair<double, std::size_t>;  // (weight, edge)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  std::vector<char> in_tree(n, 0);
  std::vector<std::size_t> chosen;
  chosen.reserve(n - 1);

  auto add_vertex = [&](std::size_t v) {
    in_tree[v] = 1;
    for (const auto& inc : graph.neighbors(v)) {
      if (!in_tree[inc.neighbor]) heap.emplace(weights[inc.edge], inc.edge);
    }
  };
  add_vertex(0);
  while (!heap.empty() && chosen.size() + 1 < n) {
    const auto [w, e] = heap.top();
    heap.pop();
    const auto& edge = graph.edge(e);
    const bool a_in = in_tree[edge.a];
    const bool b_in = in_tree[edge.b];
    if (a_in && b_in) continue;
    chosen.push_back(e);
    add_vertex(a_in ? edge.b : edge.a);
  }
  if (chosen.size() + 1 < n) {
    for (std::size_t v = 0; v < n; ++v) {
      if (!in_tree[v]) throw DisconnectedGraphError(v);
    }
  }
  return SpanningTree(graph, std::move(chosen));
}

inline SpanningTree prim_mst(const SpatialGraph& graph, const std::vector<double>& weights) {
  return prim_mst(graph, std::span<const double>(weights));
}

// Low weights inside clusters, high weights across, so that any MST takes all
// within-cluster edges it can before crossing a boundary.
inline std::vector<double> assign_compatibility_weights(const SpatialGraph& graph,
                                                        const Partition& partition, Rng& rng,
                                                        const CompatibilityWeightRanges& ranges = {}) {
  if (partition.n_areas() != graph.n_areas()) {
    throw std::invalid_argument("partition does not cover the graph's areas");
  }
  std::vector<double> w(graph.n_edges());
  for (std::size_t e = 0; e < graph.n_edges(); ++e) {
    const auto& edge = graph.edge(e);
    if (partition.label(edge.a) == partition.label(edge.b)) {
      w[e] = uniform(rng, ranges.within_lo, ranges.within_hi);
    } else {
      w[e] = uniform(rng, ranges.across_lo, ranges.across_hi);
    }
  }
  return w;
}

// True when every cluster induces a connected subgraph of `graph`.
// On failure, `bad_cluster` receives the first offending cluster id.
inline bool is_contiguous(const SpatialGraph& graph, const Partition& partition,
                          std::size_t* bad_cluster = nullptr) {
  detail::DisjointSets sets(graph.n_areas());
  for (const auto& e : graph.edges()) {
    if (partition.label(e.a) == partition.label(e.b)) sets.unite(e.a, e.b);
  }
  for (std::size_t c = 0; c < partition.k(); ++c) {
    const auto members = partition.members(c);
    const auto root = sets.find(members.front());
    for (auto v : members) {
      if (sets.find(v) != root) {
        if (bad_cluster) *bad_cluster = c;
        return false;
      }
    }
  }
  return true;
}

inline SpanningTree sample_compatible_tree(const SpatialGraph& graph, const Partition& partition,
                                           Rng& rng, const CompatibilityWeightRanges& ranges = {}) {
  std::size_t bad = 0;
  if (!is_contiguous(graph, partition, &bad)) throw IncompatiblePartitionError(bad);
  const auto weights = assign_compatibility_weights(graph, partition, rng, ranges);
  return prim_mst(graph, weights);
}

inline Partition partition_from_indicators(const SpanningTree& tree, const EdgeIndicators& bits) {
  const auto n = tree.n_areas();
  if (bits.size() != tree.edges().size()) {
    throw std::invalid_argument("indicator vector length must equal n_areas - 1");
  }
  detail::DisjointSets sets(n);
  for (std::size_t l = 0; l < bits.size(); ++l) {
    if (bits[l]) sets.unite(tree.tree_edge(l).a, tree.tree_edge(l).b);
  }
  return detail::components_as_partition(sets, n);
}

// Keep a tree edge iff its endpoints share a cluster.
inline EdgeIndicators indicators_from_partition(const SpanningTree& tree, const Partition& partition) {
  EdgeIndicators bits(tree.edges().size());
  for (std::size_t l = 0; l < bits.size(); ++l) {
    const auto& e = tree.tree_edge(l);
    bits[l] = partition.label(e.a) == partition.label(e.b) ? 1 : 0;
  }
  return bits;
}

inline bool is_compatible(const SpanningTree& tree, const Partition& partition) {
  if (partition.n_areas() != tree.n_areas()) return false;
  return partition_from_indicators(tree, indicators_from_partition(tree, partition)) == partition;
}

// Grows k contiguous clusters from random seeds by randomized breadth-first
// expansion. Used to build synthetic ground truths.
inline Partition random_contiguous_partition(const SpatialGraph& graph, std::size_t k, Rng& rng) {
  const auto n = graph.n_areas();
  if (k == 0 || k > n) throw std::invalid_argument("cluster count must be in 1..n_areas");
  graph.require_connected();
  std::vector<std::int64_t> labels(n, -1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::pair<std::size_t, std::size_t>> frontier;  // (area, label)
  for (std::size_t c = 0; c < k; ++c) {
    labels[order[c]] = static_cast<std::int64_t>(c);
    for (const auto& inc : graph.neighbors(order[c])) frontier.emplace_back(inc.neighbor, c);
  }
  while (!frontier.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, frontier.size() - 1);
    const auto idx = pick(rng);
    const auto [v, c] = frontier[idx];
    frontier[idx] = frontier.back();
    frontier.pop_back();
    if (labels[v] >= 0) continue;
    labels[v] = static_cast<std::int64_t>(c);
    for (const auto& inc : graph.neighbors(v)) {
      if (labels[inc.neighbor] < 0) frontier.emplace_back(inc.neighbor, c);
    }
  }
  return Partition(labels);
}

}  // namespace stregion
