#pragma once

// Leiden community detection (CPM or modularity), clustering accuracy
// against label similarity, resolution sweeps and relative accuracy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "citemap/common.hpp"
#include "citemap/corpus.hpp"
#include "citemap/netgraph.hpp"

namespace citemap {

enum class QualityFunction { cpm, modularity };

inline const char* quality_function_name(QualityFunction q) { return q == QualityFunction::cpm ? "cpm" : "modularity"; }

inline QualityFunction quality_function_from_name(const std::string& s) {
  if (s == "cpm") return QualityFunction::cpm;
  if (s == "modularity") return QualityFunction::modularity;
  throw ValidationError("unknown quality function '" + s + "'");
}

struct Partition {
  std::vector<std::string> ids;
  std::vector<int> community;  // 1-based, aligned with ids
  double quality = 0.0;
  double resolution = 1.0;
  QualityFunction quality_function = QualityFunction::cpm;
  std::uint64_t seed = 0;
  // Quality of the starting partition followed by the quality after each
  // outer iteration.
  std::vector<double> history;

  int community_count() const { return community.empty() ? 0 : *std::max_element(community.begin(), community.end()); }
};

// CPM: sum_c [e_c - gamma * n_c (n_c - 1) / 2] with e_c the internal edge
// weight and n_c the node count. Modularity: (1/m) sum_c [e_c - gamma K_c^2 / (4m)].
inline double partition_quality(const Graph& g, const std::vector<int>& membership, QualityFunction qf,
                                double resolution) {
  std::unordered_map<int, double> internal;
  std::unordered_map<int, double> size;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    double strength = 0.0;
    for (const auto& e : g.neighbors(i)) {
      strength += e.weight;
      if (e.to > i && membership[e.to] == membership[i]) internal[membership[i]] += e.weight;
    }
    size[membership[i]] += qf == QualityFunction::cpm ? 1.0 : strength;
  }
  double q = 0.0;
  if (qf == QualityFunction::cpm) {
    for (const auto& [c, n] : size) q += internal[c] - resolution * n * (n - 1.0) / 2.0;
    return q;
  }
  const double m = g.total_weight();
  if (m <= 0.0) return 0.0;
  for (const auto& [c, k] : size) q += internal[c] - resolution * k * k / (4.0 * m);
  return q / m;
}

namespace detail {

// Working graph for one Leiden level. Node weights are node counts (CPM) or
// strengths (modularity); self_weight holds edge weight folded into a node.
struct LeidenGraph {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;
  std::vector<double> node_weight;
  std::vector<double> self_weight;

  std::size_t size() const { return adj.size(); }
};

class Leiden {
 public:
  Leiden(QualityFunction qf, double resolution, double total_weight, std::uint64_t seed)
      : rng_(seed), resolution_(qf == QualityFunction::cpm ? resolution : resolution / (2.0 * total_weight)) {}

  // Moves nodes greedily between communities using a queue, revisiting
  // neighbors of moved nodes. Returns true if any node moved.
  bool move_nodes_fast(const LeidenGraph& g, std::vector<std::size_t>& comm) {
    const std::size_t n = g.size();
    std::vector<double> comm_weight(n, 0.0);
    std::vector<std::size_t> comm_count(n, 0);
    for (std::size_t v = 0; v < n; ++v) {
      comm_weight[comm[v]] += g.node_weight[v];
      ++comm_count[comm[v]];
    }
    std::vector<std::size_t> empty;
    for (std::size_t c = n; c-- > 0;)
      if (comm_count[c] == 0) empty.push_back(c);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);
    std::deque<std::size_t> queue(order.begin(), order.end());
    std::vector<char> queued(n, 1);

    std::vector<double> link(n, 0.0);
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> touched;
    bool moved_any = false;
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      queued[v] = 0;
      const std::size_t from = comm[v];
      const double sv = g.node_weight[v];

      touched.clear();
      for (const auto& [u, w] : g.adj[v]) {
        if (!seen[comm[u]]) {
          seen[comm[u]] = 1;
          touched.push_back(comm[u]);
        }
        link[comm[u]] += w;
      }
      const double w_from = link[from];
      const double rest_from = comm_weight[from] - sv;

      std::size_t best = from;
      double best_gain = 0.0;
      for (std::size_t c : touched) {
        if (c == from) continue;
        const double gain = link[c] - w_from - resolution_ * sv * (comm_weight[c] - rest_from);
        if (gain > best_gain) {
          best_gain = gain;
          best = c;
        }
      }
      if (comm_count[from] > 1 && !empty.empty()) {
        const double gain = -w_from + resolution_ * sv * rest_from;
        if (gain > best_gain) {
          best_gain = gain;
          best = empty.back();
        }
      }
      for (std::size_t c : touched) {
        link[c] = 0.0;
        seen[c] = 0;
      }

      if (best != from && best_gain > kMinGain) {
        if (!empty.empty() && best == empty.back()) empty.pop_back();
        comm_weight[from] -= sv;
        comm_weight[best] += sv;
        if (--comm_count[from] == 0) empty.push_back(from);
        ++comm_count[best];
        comm[v] = best;
        moved_any = true;
        for (const auto& [u, w] : g.adj[v])
          if (!queued[u] && comm[u] != best) {
            queued[u] = 1;
            queue.push_back(u);
          }
      }
    }
    return moved_any;
  }

  // Refinement: within each community, well-connected singleton nodes merge
  // into well-connected refined subsets, chosen with probability
  // proportional to exp(gain / theta) among non-negative gains.
  std::vector<std::size_t> refine(const LeidenGraph& g, const std::vector<std::size_t>& comm) {
    const std::size_t n = g.size();
    std::vector<std::size_t> refined(n);
    std::iota(refined.begin(), refined.end(), std::size_t{0});
    std::vector<double> ref_weight(g.node_weight);
    std::vector<std::size_t> ref_count(n, 1);
    std::vector<double> ref_external(n, 0.0);  // weight to the rest of the parent community
    std::vector<double> comm_weight(n, 0.0);
    for (std::size_t v = 0; v < n; ++v) {
      comm_weight[comm[v]] += g.node_weight[v];
      for (const auto& [u, w] : g.adj[v])
        if (comm[u] == comm[v]) ref_external[v] += w;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);

    std::vector<double> link(n, 0.0);
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> touched;
    std::vector<std::pair<std::size_t, double>> candidates;
    for (std::size_t v : order) {
      const double sv = g.node_weight[v];
      const double total = comm_weight[comm[v]];
      if (ref_count[refined[v]] != 1) continue;
      if (ref_external[v] < resolution_ * sv * (total - sv) - kMinGain) continue;  // v not well connected

      touched.clear();
      for (const auto& [u, w] : g.adj[v]) {
        if (comm[u] != comm[v]) continue;
        if (!seen[refined[u]]) {
          seen[refined[u]] = 1;
          touched.push_back(refined[u]);
        }
        link[refined[u]] += w;
      }
      candidates.clear();
      candidates.emplace_back(refined[v], 0.0);
      double best = 0.0;
      for (std::size_t c : touched) {
        if (c == refined[v]) continue;
        if (ref_external[c] < resolution_ * ref_weight[c] * (total - ref_weight[c]) - kMinGain) continue;
        const double gain = link[c] - resolution_ * sv * ref_weight[c];
        if (gain >= 0.0) {
          candidates.emplace_back(c, gain);
          best = std::max(best, gain);
        }
      }
      std::size_t target = refined[v];
      if (candidates.size() > 1) {
        std::vector<double> p;
        p.reserve(candidates.size());
        for (const auto& [c, gain] : candidates) p.push_back(std::exp((gain - best) / kTheta));
        std::discrete_distribution<std::size_t> choose(p.begin(), p.end());
        target = candidates[choose(rng_)].first;
      }
      if (target != refined[v]) {
        const std::size_t own = refined[v];
        ref_external[target] = ref_external[target] + ref_external[own] - 2.0 * link[target];
        ref_weight[target] += sv;
        ++ref_count[target];
        ref_weight[own] = 0.0;
        ref_count[own] = 0;
        refined[v] = target;
      }
      for (std::size_t c : touched) {
        link[c] = 0.0;
        seen[c] = 0;
      }
    }
    return refined;
  }

 private:
  static constexpr double kMinGain = 1e-10;
  static constexpr double kTheta = 0.01;
  std::mt19937_64 rng_;
  double resolution_;
};

// Renumbers labels to 0..k-1 in order of first appearance.
inline std::size_t compact_labels(std::vector<std::size_t>& labels) {
  std::unordered_map<std::size_t, std::size_t> map;
  for (auto& l : labels) {
    auto it = map.emplace(l, map.size()).first;
    l = it->second;
  }
  return map.size();
}

inline LeidenGraph aggregate(const LeidenGraph& g, const std::vector<std::size_t>& groups, std::size_t k) {
  LeidenGraph out;
  out.adj.resize(k);
  out.node_weight.assign(k, 0.0);
  out.self_weight.assign(k, 0.0);
  std::vector<std::map<std::size_t, double>> merged(k);
  for (std::size_t v = 0; v < g.size(); ++v) {
    const std::size_t a = groups[v];
    out.node_weight[a] += g.node_weight[v];
    out.self_weight[a] += g.self_weight[v];
    for (const auto& [u, w] : g.adj[v]) {
      const std::size_t b = groups[u];
      if (a == b) {
        if (u > v) out.self_weight[a] += w;
      } else {
        merged[a][b] += w;
      }
    }
  }
  for (std::size_t a = 0; a < k; ++a) out.adj[a].assign(merged[a].begin(), merged[a].end());
  return out;
}

// Splits each community into its connected components.
inline std::vector<std::size_t> split_disconnected(const LeidenGraph& g, const std::vector<std::size_t>& comm) {
  constexpr auto unset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> out(g.size(), unset);
  std::size_t next = 0;
  for (std::size_t s = 0; s < g.size(); ++s) {
    if (out[s] != unset) continue;
    std::vector<std::size_t> stack{s};
    out[s] = next;
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      for (const auto& [u, w] : g.adj[v])
        if (out[u] == unset && comm[u] == comm[s]) {
          out[u] = next;
          stack.push_back(u);
        }
    }
    ++next;
  }
  return out;
}

}  // namespace detail

struct LeidenOptions {
  // Outer iterations stop once an iteration fails to improve quality.
  int max_iterations = 50;
  // Independent runs from singletons; the best quality wins (ties: earliest).
  int random_starts = 10;
};

namespace detail {

struct LeidenRun {
  std::vector<std::size_t> membership;
  double quality = 0.0;
  std::vector<double> history;
};

// One run from singletons: local moving, refinement and aggregation, repeated
// on the aggregate graph until every community is a single aggregate node;
// outer iterations restart from the previous partition until quality stops
// improving.
inline LeidenRun leiden_run(const Graph& g, QualityFunction qf, double resolution, std::uint64_t seed,
                            int max_iterations) {
  const std::size_t n = g.node_count();
  const double total_weight = g.total_weight();

  LeidenGraph base;
  base.adj.resize(n);
  base.node_weight.assign(n, 0.0);
  base.self_weight.assign(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    double strength = 0.0;
    for (const auto& e : g.neighbors(v)) {
      base.adj[v].emplace_back(e.to, e.weight);
      strength += e.weight;
    }
    base.node_weight[v] = qf == QualityFunction::cpm ? 1.0 : strength;
  }

  std::vector<std::size_t> membership(n);
  std::iota(membership.begin(), membership.end(), std::size_t{0});
  auto as_int = [](const std::vector<std::size_t>& m) {
    std::vector<int> out(m.begin(), m.end());
    return out;
  };

  LeidenRun result;
  double quality = partition_quality(g, as_int(membership), qf, resolution);
  result.history.push_back(quality);

  Leiden engine(qf, resolution, total_weight > 0.0 ? total_weight : 1.0, seed);
  for (int iter = 0; iter < max_iterations; ++iter) {
    LeidenGraph work = base;
    std::vector<std::size_t> comm = membership;
    std::vector<std::size_t> node_of(n);  // original node -> aggregate node
    std::iota(node_of.begin(), node_of.end(), std::size_t{0});
    for (;;) {
      engine.move_nodes_fast(work, comm);
      std::vector<std::size_t> labels = comm;
      if (compact_labels(labels) == work.size()) break;
      std::vector<std::size_t> refined = engine.refine(work, comm);
      const std::size_t k = compact_labels(refined);
      if (k == work.size()) {
        // Refinement merged nothing; keep the moved partition, split into
        // connected pieces, and stop descending.
        comm = split_disconnected(work, comm);
        break;
      }
      std::vector<std::size_t> next_comm(k);
      for (std::size_t v = 0; v < work.size(); ++v) next_comm[refined[v]] = comm[v];
      compact_labels(next_comm);
      work = aggregate(work, refined, k);
      for (auto& a : node_of) a = refined[a];
      comm = std::move(next_comm);
    }
    std::vector<std::size_t> next(n);
    for (std::size_t v = 0; v < n; ++v) next[v] = comm[node_of[v]];
    compact_labels(next);
    const double q = partition_quality(g, as_int(next), qf, resolution);
    if (q > quality + 1e-12) {
      membership = std::move(next);
      quality = q;
      result.history.push_back(quality);
    } else {
      result.history.push_back(quality);
      break;
    }
  }

  result.membership = std::move(membership);
  result.quality = quality;
  return result;
}

}  // namespace detail

// Best of opts.random_starts Leiden runs; start 0 uses `seed` directly.
// Communities are numbered from 1 by decreasing size (ties by smallest member
// position).
inline Partition leiden(const Graph& g, QualityFunction qf, double resolution, std::uint64_t seed,
                        const LeidenOptions& opts = {}) {
  if (g.node_count() == 0) throw ValidationError("leiden: empty graph");
  if (!(resolution > 0.0)) throw ValidationError("leiden: resolution must be > 0");
  if (opts.random_starts < 1) throw ValidationError("leiden: random_starts must be >= 1");
  const std::size_t n = g.node_count();
  detail::LeidenRun best;
  for (int s = 0; s < opts.random_starts; ++s) {
    const std::uint64_t start_seed = s == 0 ? seed : substream_seed(seed, "start" + std::to_string(s));
    auto run = detail::leiden_run(g, qf, resolution, start_seed, opts.max_iterations);
    if (s == 0 || run.quality > best.quality + 1e-12) best = std::move(run);
  }
  std::vector<std::size_t>& membership = best.membership;

  Partition result;
  result.ids = g.ids();
  result.resolution = resolution;
  result.quality_function = qf;
  result.seed = seed;
  result.history = std::move(best.history);

  // Relabel 1..k by decreasing size, ties by first member position.
  const std::size_t k = detail::compact_labels(membership);
  std::vector<std::size_t> sizes(k, 0);
  for (auto c : membership) ++sizes[c];
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
  std::vector<int> rank(k);
  for (std::size_t r = 0; r < k; ++r) rank[order[r]] = static_cast<int>(r) + 1;
  result.community.resize(n);
  for (std::size_t v = 0; v < n; ++v) result.community[v] = rank[membership[v]];
  result.quality = best.quality;
  return result;
}

// ---------------------------------------------------------------------------
// Clustering accuracy
// ---------------------------------------------------------------------------

// Cosine of binary label-indicator vectors; 0 if either set is empty.
inline double label_similarity(const Document& a, const Document& b) {
  std::set<std::string> la(a.labels.begin(), a.labels.end());
  std::set<std::string> lb(b.labels.begin(), b.labels.end());
  if (la.empty() || lb.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& l : la) common += lb.count(l);
  return static_cast<double>(common) / std::sqrt(static_cast<double>(la.size()) * static_cast<double>(lb.size()));
}

// Pairwise ground-truth similarity; must return values in [0, 1].
using PairSimilarity = std::function<double(const Document&, const Document&)>;

// A = (1/N) sum_{i<j} [c_i = c_j] r_ij with N = n(n-1)/2 over the partition's
// documents. Only same-community pairs are visited.
inline double clustering_accuracy(const Partition& partition, const Corpus& corpus,
                                  const PairSimilarity& similarity = label_similarity) {
  const std::size_t n = partition.ids.size();
  if (n == 0) throw ValidationError("clustering_accuracy: empty partition");
  if (n < 2) throw ValidationError("clustering_accuracy: need at least 2 documents");
  std::map<int, std::vector<const Document*>> members;
  for (std::size_t i = 0; i < n; ++i) members[partition.community[i]].push_back(&corpus.at(partition.ids[i]));
  std::vector<const std::vector<const Document*>*> groups;
  for (const auto& [c, docs] : members) groups.push_back(&docs);
  std::vector<double> sums(groups.size(), 0.0);
  parallel_for(groups.size(), [&](std::size_t g) {
    const auto& docs = *groups[g];
    double s = 0.0;
    for (std::size_t i = 0; i < docs.size(); ++i)
      for (std::size_t j = i + 1; j < docs.size(); ++j) s += similarity(*docs[i], *docs[j]);
    sums[g] = s;
  });
  double total = 0.0;
  for (double s : sums) total += s;
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return total / pairs;
}

struct AccuracyRow {
  std::string method;
  double resolution = 0.0;
  int communities = 0;
  double accuracy = 0.0;
};

using AccuracyTable = std::vector<AccuracyRow>;

// One Leiden run and accuracy per resolution, in list order.
inline AccuracyTable granularity_sweep(const Graph& g, const Corpus& corpus, QualityFunction qf,
                                       const std::vector<double>& resolutions, std::uint64_t seed,
                                       const std::string& method = "embedding", const LeidenOptions& opts = {}) {
  if (resolutions.empty()) throw ValidationError("granularity_sweep: empty resolution list");
  AccuracyTable table(resolutions.size());
  parallel_for(resolutions.size(), [&](std::size_t i) {
    const Partition p = leiden(g, qf, resolutions[i], seed, opts);
    table[i] = {method, resolutions[i], p.community_count(), clustering_accuracy(p, corpus)};
  });
  return table;
}

// score(X) = mean over levels of A_level^X / mean_Y A_level^Y, where a level
// is a resolution value shared by all methods.
inline std::map<std::string, double> relative_accuracy(const AccuracyTable& table) {
  if (table.empty()) throw ValidationError("relative_accuracy: empty table");
  std::map<double, std::map<std::string, double>> by_level;
  std::set<std::string> methods;
  for (const auto& r : table) {
    if (!by_level[r.resolution].emplace(r.method, r.accuracy).second)
      throw ValidationError("relative_accuracy: duplicate entry for method '" + r.method + "'");
    methods.insert(r.method);
  }
  std::map<std::string, double> score;
  for (const auto& [level, accs] : by_level) {
    if (accs.size() != methods.size())
      throw ValidationError("relative_accuracy: level " + format_double(level) + " lacks some methods");
    double mean = 0.0;
    for (const auto& [m, a] : accs) mean += a;
    mean /= static_cast<double>(accs.size());
    if (!(mean > 0.0)) throw ValidationError("relative_accuracy: zero mean accuracy at level " + format_double(level));
    for (const auto& [m, a] : accs) score[m] += a / mean;
  }
  for (auto& [m, s] : score) s /= static_cast<double>(by_level.size());
  return score;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline void write_partition(std::ostream& out, const Partition& p, const std::string& comment = "") {
  if (!comment.empty()) out << '#' << comment << '\n';
  out << "#quality_function=" << quality_function_name(p.quality_function) << " resolution=" << format_double(p.resolution)
      << " seed=" << p.seed << " quality=" << format_double(p.quality) << '\n';
  out << "doc_id\tcommunity_id\n";
  for (std::size_t i = 0; i < p.ids.size(); ++i) out << p.ids[i] << '\t' << p.community[i] << '\n';
}

inline Partition read_partition(std::istream& in) {
  std::vector<std::string> meta;
  auto rows = read_tsv(in, {"doc_id", "community_id"}, &meta);
  Partition p;
  for (const auto& m : meta) {
    for (const auto& [k, v] : parse_meta(m)) {
      if (k == "quality_function") p.quality_function = quality_function_from_name(v);
      if (k == "resolution") p.resolution = parse_double(v);
      if (k == "seed") p.seed = parse_uint64(v);
      if (k == "quality") p.quality = parse_double(v);
    }
  }
  for (const auto& r : rows) {
    p.ids.push_back(r.cells[0]);
    const auto c = parse_int(r.cells[1], r.line);
    if (c < 1) throw ParseError("community ids must be positive", r.line);
    p.community.push_back(static_cast<int>(c));
  }
  return p;
}

inline void write_accuracy_table(std::ostream& out, const AccuracyTable& t, const std::string& comment = "") {
  if (!comment.empty()) out << '#' << comment << '\n';
  out << "method\tresolution\tcommunities\taccuracy\n";
  for (const auto& r : t)
    out << r.method << '\t' << format_double(r.resolution) << '\t' << r.communities << '\t' << format_double(r.accuracy)
        << '\n';
}

inline AccuracyTable read_accuracy_table(std::istream& in) {
  auto rows = read_tsv(in, {"method", "resolution", "communities", "accuracy"});
  AccuracyTable t;
  for (const auto& r : rows)
    t.push_back({r.cells[0], parse_double(r.cells[1], r.line), static_cast<int>(parse_int(r.cells[2], r.line)),
                 parse_double(r.cells[3], r.line)});
  return t;
}

}  // namespace citemap
