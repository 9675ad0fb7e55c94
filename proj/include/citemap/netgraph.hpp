#pragma once

// Undirected similarity/citation networks, structural statistics, edge
// overlap and density-matched random baselines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "citemap/common.hpp"
#include "citemap/corpus.hpp"
#include "citemap/embedding_matrix.hpp"

namespace citemap {

struct Edge {
  std::size_t to = 0;
  double weight = 1.0;
  bool operator==(const Edge&) const = default;
};

// Simple undirected weighted graph; adjacency lists sorted by neighbor index.
class Graph {
 public:
  struct EdgeSpec {
    std::size_t a;
    std::size_t b;
    double weight;
  };

  Graph() = default;

  // Self-loops are rejected; a repeated pair keeps its first weight.
  Graph(std::vector<std::string> ids, const std::vector<EdgeSpec>& edges)
      : ids_(std::move(ids)), adj_(ids_.size()) {
    index_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i)
      if (!index_.emplace(ids_[i], i).second) throw ValidationError("graph: duplicate node id '" + ids_[i] + "'");
    for (const auto& e : edges) {
      if (e.a >= ids_.size() || e.b >= ids_.size()) throw ValidationError("graph: edge endpoint out of range");
      if (e.a == e.b) throw ValidationError("graph: self-loop on '" + ids_[e.a] + "'");
      adj_[e.a].push_back({e.b, e.weight});
      adj_[e.b].push_back({e.a, e.weight});
    }
    for (auto& list : adj_) {
      std::stable_sort(list.begin(), list.end(), [](const Edge& x, const Edge& y) { return x.to < y.to; });
      list.erase(std::unique(list.begin(), list.end(), [](const Edge& x, const Edge& y) { return x.to == y.to; }),
                 list.end());
      edge_ends_ += list.size();
    }
  }

  std::size_t node_count() const { return ids_.size(); }
  std::size_t edge_count() const { return edge_ends_ / 2; }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<Edge>& neighbors(std::size_t i) const { return adj_[i]; }
  std::size_t degree(std::size_t i) const { return adj_[i].size(); }

  std::optional<std::size_t> index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool has_edge(std::size_t a, std::size_t b) const {
    const auto& list = adj_[a];
    auto it = std::lower_bound(list.begin(), list.end(), b, [](const Edge& e, std::size_t v) { return e.to < v; });
    return it != list.end() && it->to == b;
  }

  double total_weight() const {
    double w = 0.0;
    for (std::size_t i = 0; i < adj_.size(); ++i)
      for (const auto& e : adj_[i])
        if (e.to > i) w += e.weight;
    return w;
  }

  // Each undirected edge once, as (smaller index, larger index).
  std::vector<EdgeSpec> edges() const {
    std::vector<EdgeSpec> out;
    out.reserve(edge_count());
    for (std::size_t i = 0; i < adj_.size(); ++i)
      for (const auto& e : adj_[i])
        if (e.to > i) out.push_back({i, e.to, e.weight});
    return out;
  }

  bool operator==(const Graph& o) const { return ids_ == o.ids_ && adj_ == o.adj_; }

 private:
  std::vector<std::string> ids_;
  std::vector<std::vector<Edge>> adj_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t edge_ends_ = 0;
};

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

// Exact k-NN by cosine. Each node selects its top-k (ties by ascending id,
// self excluded); the graph is the undirected union of the selections, so an
// edge exists iff either endpoint selected the other. Similarities are
// evaluated in row blocks of `block_rows` to bound memory.
inline Graph build_knn_graph(const EmbeddingMatrix& matrix, std::size_t k, std::size_t block_rows = 256) {
  const std::size_t n = matrix.rows();
  if (k < 1) throw ValidationError("k-NN graph: k must be >= 1");
  if (k >= n) throw ValidationError("k-NN graph: k=" + std::to_string(k) + " needs more than " + std::to_string(n) + " rows");
  if (block_rows < 1) block_rows = 1;
  const RowMatrix unit = normalized_rows(matrix.vectors());
  const auto& ids = matrix.ids();

  std::vector<std::vector<std::size_t>> selected(n);
  const std::size_t blocks = (n + block_rows - 1) / block_rows;
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t lo = b * block_rows;
    const std::size_t hi = std::min(n, lo + block_rows);
    const RowMatrix sims = unit.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo)) *
                           unit.transpose();
    std::vector<std::size_t> cand(n - 1);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto srow = sims.row(static_cast<Eigen::Index>(i - lo));
      std::size_t c = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) cand[c++] = j;
      auto better = [&](std::size_t x, std::size_t y) {
        const double sx = srow(static_cast<Eigen::Index>(x));
        const double sy = srow(static_cast<Eigen::Index>(y));
        if (sx != sy) return sx > sy;
        return ids[x] < ids[y];
      };
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(), better);
      selected[i].assign(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k));
    }
  });

  std::vector<Graph::EdgeSpec> edges;
  edges.reserve(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : selected[i]) {
      const std::size_t a = std::min(i, j);
      const std::size_t b = std::max(i, j);
      edges.push_back({a, b, unit.row(static_cast<Eigen::Index>(a)).dot(unit.row(static_cast<Eigen::Index>(b)))});
    }
  }
  return Graph(ids, edges);
}

// One undirected unit-weight edge per resolvable citation; external
// references are skipped.
inline Graph build_citation_graph(const Corpus& corpus) {
  std::vector<std::string> ids;
  ids.reserve(corpus.size());
  for (const auto& d : corpus.documents()) ids.push_back(d.id);
  std::vector<Graph::EdgeSpec> edges;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (const auto& r : corpus[i].references)
      if (auto j = corpus.position(r.cited_id)) edges.push_back({i, *j, 1.0});
  return Graph(std::move(ids), edges);
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

enum class ClusteringVariant { average_local, global_transitivity };

struct GraphStats {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  double average_degree = 0.0;
  double density = 0.0;
  bool is_connected = false;
  std::size_t component_count = 0;
  std::size_t isolated_nodes = 0;
  double clustering_coefficient = 0.0;
  double avg_shortest_path = 0.0;
  std::size_t sample_size = 0;
};

// Component id per node (0-based, in order of first node), via BFS.
inline std::vector<std::size_t> connected_components(const Graph& g, std::size_t* count = nullptr) {
  constexpr auto unset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> comp(g.node_count(), unset);
  std::size_t c = 0;
  std::deque<std::size_t> queue;
  for (std::size_t s = 0; s < g.node_count(); ++s) {
    if (comp[s] != unset) continue;
    comp[s] = c;
    queue.push_back(s);
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      for (const auto& e : g.neighbors(v))
        if (comp[e.to] == unset) {
          comp[e.to] = c;
          queue.push_back(e.to);
        }
    }
    ++c;
  }
  if (count) *count = c;
  return comp;
}

// Number of triangles through each node.
inline std::vector<std::size_t> triangle_counts(const Graph& g) {
  std::vector<std::size_t> tri(g.node_count(), 0);
  parallel_for(g.node_count(), [&](std::size_t i) {
    const auto& ni = g.neighbors(i);
    std::size_t twice = 0;
    for (const auto& e : ni) {
      const auto& nj = g.neighbors(e.to);
      auto a = ni.begin();
      auto b = nj.begin();
      while (a != ni.end() && b != nj.end()) {
        if (a->to < b->to)
          ++a;
        else if (b->to < a->to)
          ++b;
        else {
          ++twice;
          ++a;
          ++b;
        }
      }
    }
    tri[i] = twice / 2;
  });
  return tri;
}

inline double clustering_coefficient(const Graph& g, ClusteringVariant variant = ClusteringVariant::average_local) {
  const std::size_t n = g.node_count();
  if (n == 0) return 0.0;
  const auto tri = triangle_counts(g);
  if (variant == ClusteringVariant::average_local) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(g.degree(i));
      if (d >= 2) sum += static_cast<double>(tri[i]) / (d * (d - 1) / 2.0);
    }
    return sum / static_cast<double>(n);
  }
  double closed = 0.0;
  double triples = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(g.degree(i));
    closed += static_cast<double>(tri[i]);
    triples += d * (d - 1) / 2.0;
  }
  return triples > 0.0 ? closed / triples : 0.0;
}

// Components by BFS; mean local clustering (degree < 2 contributes 0); mean
// shortest path over all finite, nonzero distances reached from
// min(path_sample_size, nodes) seeded random sources.
inline GraphStats graph_statistics(const Graph& g, std::size_t path_sample_size, std::uint64_t seed,
                                   ClusteringVariant variant = ClusteringVariant::average_local) {
  if (path_sample_size < 1) throw ValidationError("path sample size must be >= 1");
  GraphStats s;
  s.nodes = g.node_count();
  s.edges = g.edge_count();
  if (s.nodes == 0) return s;
  const double n = static_cast<double>(s.nodes);
  s.average_degree = 2.0 * static_cast<double>(s.edges) / n;
  s.density = s.nodes > 1 ? 2.0 * static_cast<double>(s.edges) / (n * (n - 1.0)) : 0.0;
  connected_components(g, &s.component_count);
  s.is_connected = s.component_count == 1;
  for (std::size_t i = 0; i < s.nodes; ++i)
    if (g.degree(i) == 0) ++s.isolated_nodes;
  s.clustering_coefficient = clustering_coefficient(g, variant);

  std::vector<std::size_t> sources(s.nodes);
  std::iota(sources.begin(), sources.end(), std::size_t{0});
  if (path_sample_size < s.nodes) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < path_sample_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, s.nodes - 1);
      std::swap(sources[i], sources[pick(rng)]);
    }
    sources.resize(path_sample_size);
    std::sort(sources.begin(), sources.end());
  }
  s.sample_size = sources.size();

  std::vector<std::uint64_t> dist_sum(sources.size(), 0);
  std::vector<std::uint64_t> reached(sources.size(), 0);
  parallel_for(sources.size(), [&](std::size_t k) {
    constexpr auto unset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> dist(s.nodes, unset);
    std::deque<std::size_t> queue{sources[k]};
    dist[sources[k]] = 0;
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      for (const auto& e : g.neighbors(v))
        if (dist[e.to] == unset) {
          dist[e.to] = dist[v] + 1;
          dist_sum[k] += dist[e.to];
          ++reached[k];
          queue.push_back(e.to);
        }
    }
  });
  const std::uint64_t total = std::accumulate(dist_sum.begin(), dist_sum.end(), std::uint64_t{0});
  const std::uint64_t pairs = std::accumulate(reached.begin(), reached.end(), std::uint64_t{0});
  s.avg_shortest_path = pairs ? static_cast<double>(total) / static_cast<double>(pairs) : 0.0;
  return s;
}

struct EdgeOverlap {
  std::size_t shared = 0;
  std::size_t only_g1 = 0;
  std::size_t only_g2 = 0;
  bool operator==(const EdgeOverlap&) const = default;
};

// Counts over unordered node-id pairs.
inline EdgeOverlap edge_overlap(const Graph& g1, const Graph& g2) {
  auto pair_key = [](const std::string& a, const std::string& b) {
    return a < b ? a + '\x1f' + b : b + '\x1f' + a;
  };
  std::unordered_set<std::string> first;
  first.reserve(g1.edge_count() * 2);
  for (const auto& e : g1.edges()) first.insert(pair_key(g1.ids()[e.a], g1.ids()[e.b]));
  EdgeOverlap o;
  for (const auto& e : g2.edges()) {
    if (first.count(pair_key(g2.ids()[e.a], g2.ids()[e.b])))
      ++o.shared;
    else
      ++o.only_g2;
  }
  o.only_g1 = g1.edge_count() - o.shared;
  return o;
}

// Uniform random simple graph on the same nodes with the same edge count.
// Pairs are drawn without replacement; for dense targets the complement is
// drawn instead.
inline Graph random_graph_like(const Graph& g, std::uint64_t seed) {
  const std::size_t n = g.node_count();
  if (n < 2) throw ValidationError("random_graph_like needs at least 2 nodes");
  const std::uint64_t possible = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t m = g.edge_count();
  if (m > possible) throw ValidationError("requested edges exceed possible pairs");

  const bool complement = m > possible / 2;
  const std::uint64_t draws = complement ? possible - m : m;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::unordered_set<std::uint64_t> chosen;
  std::vector<std::uint64_t> order;
  chosen.reserve(draws * 2);
  order.reserve(draws);
  while (order.size() < draws) {
    std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    const std::uint64_t key = static_cast<std::uint64_t>(a) * n + b;
    if (chosen.insert(key).second) order.push_back(key);
  }
  std::vector<Graph::EdgeSpec> edges;
  edges.reserve(m);
  if (!complement) {
    for (auto key : order) edges.push_back({static_cast<std::size_t>(key / n), static_cast<std::size_t>(key % n), 1.0});
  } else {
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (!chosen.count(static_cast<std::uint64_t>(a) * n + b)) edges.push_back({a, b, 1.0});
  }
  return Graph(g.ids(), edges);
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

// "id_a<TAB>id_b<TAB>weight" with id_a < id_b, rows sorted.
inline void write_edge_list(std::ostream& out, const Graph& g, const std::string& comment = "") {
  if (!comment.empty()) out << '#' << comment << '\n';
  out << "#nodes=" << g.node_count() << '\n';
  out << "id_a\tid_b\tweight\n";
  std::vector<std::tuple<std::string, std::string, double>> rows;
  rows.reserve(g.edge_count());
  for (const auto& e : g.edges()) {
    const auto& a = g.ids()[e.a];
    const auto& b = g.ids()[e.b];
    rows.emplace_back(std::min(a, b), std::max(a, b), e.weight);
  }
  std::sort(rows.begin(), rows.end());
  for (const auto& [a, b, w] : rows) out << a << '\t' << b << '\t' << format_double(w) << '\n';
}

// Nodes are `node_ids` when given (ids absent from it are an error);
// otherwise the sorted set of endpoint ids.
inline Graph read_edge_list(std::istream& in, const std::vector<std::string>* node_ids = nullptr) {
  auto rows = read_tsv(in, {"id_a", "id_b", "weight"});
  std::vector<std::string> ids;
  if (node_ids) {
    ids = *node_ids;
  } else {
    std::set<std::string> all;
    for (const auto& r : rows) {
      all.insert(r.cells[0]);
      all.insert(r.cells[1]);
    }
    ids.assign(all.begin(), all.end());
  }
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
  std::vector<Graph::EdgeSpec> edges;
  edges.reserve(rows.size());
  for (const auto& r : rows) {
    auto a = index.find(r.cells[0]);
    auto b = index.find(r.cells[1]);
    if (a == index.end() || b == index.end()) throw ParseError("edge endpoint not among the graph nodes", r.line);
    edges.push_back({a->second, b->second, parse_double(r.cells[2], r.line)});
  }
  return Graph(std::move(ids), edges);
}

// Table with one column per named graph.
inline void write_stats_report(std::ostream& out, const std::vector<std::pair<std::string, GraphStats>>& stats,
                               const std::string& comment = "") {
  if (!comment.empty()) out << '#' << comment << '\n';
  out << "metric";
  for (const auto& [name, _] : stats) out << '\t' << name;
  out << '\n';
  auto row = [&](const char* metric, auto get) {
    out << metric;
    for (const auto& [_, s] : stats) out << '\t' << get(s);
    out << '\n';
  };
  row("nodes", [](const GraphStats& s) { return std::to_string(s.nodes); });
  row("edges", [](const GraphStats& s) { return std::to_string(s.edges); });
  row("average_degree", [](const GraphStats& s) { return format_double(s.average_degree); });
  row("density", [](const GraphStats& s) { return format_double(s.density); });
  row("is_connected", [](const GraphStats& s) { return std::string(s.is_connected ? "true" : "false"); });
  row("component_count", [](const GraphStats& s) { return std::to_string(s.component_count); });
  row("isolated_nodes", [](const GraphStats& s) { return std::to_string(s.isolated_nodes); });
  row("clustering_coefficient", [](const GraphStats& s) { return format_double(s.clustering_coefficient); });
  row("avg_shortest_path", [](const GraphStats& s) { return format_double(s.avg_shortest_path); });
  row("sample_size", [](const GraphStats& s) { return std::to_string(s.sample_size); });
}

}  // namespace citemap
