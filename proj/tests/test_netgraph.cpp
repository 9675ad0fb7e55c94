#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "citemap/netgraph.hpp"
#include "test_util.hpp"

using namespace citemap;
using testutil::doc;
using testutil::ref;

namespace {

EmbeddingMatrix random_matrix(std::size_t n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix v(static_cast<Eigen::Index>(n), dim);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) v(static_cast<Eigen::Index>(i), j) = normal(rng);
    ids.push_back("v" + std::to_string(i));
  }
  return EmbeddingMatrix(std::move(ids), std::move(v));
}

Graph from_pairs(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("n" + std::to_string(i));
  std::vector<Graph::EdgeSpec> edges;
  for (auto [a, b] : pairs) edges.push_back({a, b, 1.0});
  return Graph(ids, edges);
}

// All-pairs cosine, per-node full sort, union of top-k selections.
std::set<std::pair<std::size_t, std::size_t>> knn_oracle(const EmbeddingMatrix& m, std::size_t k) {
  std::set<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::vector<std::pair<double, std::string>> order;
    for (std::size_t j = 0; j < m.rows(); ++j)
      if (j != i) order.push_back({-cosine_similarity(m.row(i), m.row(j)), m.ids()[j]});
    std::sort(order.begin(), order.end());
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t j = m.require(order[r].second);
      edges.insert({std::min(i, j), std::max(i, j)});
    }
  }
  return edges;
}

}  // namespace

TEST(Graph, RejectsSelfLoopsAndDeduplicates) {
  EXPECT_THROW(from_pairs(3, {{1, 1}}), ValidationError);
  EXPECT_THROW(from_pairs(3, {{0, 5}}), ValidationError);
  const auto g = from_pairs(3, {{0, 1}, {1, 0}, {1, 2}});
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_TRUE(g.has_edge(1, 0));
  EXPECT_FALSE(g.has_edge(0, 2));
  for (std::size_t i = 0; i < 3; ++i)
    for (const auto& e : g.neighbors(i)) EXPECT_TRUE(g.has_edge(e.to, i));
}

TEST(Knn, ThreePointsChain) {
  RowMatrix v(3, 2);
  v << 1, 0, std::cos(M_PI / 6), std::sin(M_PI / 6), 0, 1;
  const auto g = build_knn_graph(EmbeddingMatrix({"a", "b", "c"}, v), 1);
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_TRUE(g.has_edge(0, 1));
  EXPECT_TRUE(g.has_edge(1, 2));
  EXPECT_FALSE(g.has_edge(0, 2));
  EXPECT_NEAR(g.neighbors(0)[0].weight, std::cos(M_PI / 6), 1e-12);
}

TEST(Knn, MatchesBruteForceOnFiveHundredVectors) {
  const auto m = random_matrix(500, 16, 1);
  const auto oracle = knn_oracle(m, 20);
  for (std::size_t block : {std::size_t{256}, std::size_t{7}}) {
    const auto g = build_knn_graph(m, 20, block);
    std::set<std::pair<std::size_t, std::size_t>> got;
    for (const auto& e : g.edges()) {
      got.insert({e.a, e.b});
      EXPECT_NEAR(e.weight, cosine_similarity(m.row(e.a), m.row(e.b)), 1e-12);
    }
    EXPECT_EQ(got, oracle);
    const auto s = graph_statistics(g, 10, 1);
    EXPECT_GE(s.average_degree, 20.0);
    EXPECT_LE(s.average_degree, 40.0);
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      EXPECT_GE(g.degree(i), 20u);
      EXPECT_LE(g.degree(i), 499u);
    }
  }
}

TEST(Knn, TiesBrokenByAscendingId) {
  RowMatrix v(4, 2);
  v << 1, 0, 0, 1, 0, 1, 0, 1;
  const auto g = build_knn_graph(EmbeddingMatrix({"q", "c", "a", "b"}, v), 1);
  // q's vector is orthogonal to all others, so q selects the smallest id.
  EXPECT_TRUE(g.has_edge(0, 2));
  EXPECT_FALSE(g.has_edge(0, 1));
  EXPECT_FALSE(g.has_edge(0, 3));
}

TEST(Knn, KMustBeBelowNodeCount) {
  const auto m = random_matrix(5, 3, 2);
  EXPECT_THROW(build_knn_graph(m, 5), ValidationError);
  EXPECT_THROW(build_knn_graph(m, 0), ValidationError);
  EXPECT_NO_THROW(build_knn_graph(m, 4));
}

TEST(Knn, IndependentOfThreadCount) {
  const auto m = random_matrix(300, 8, 3);
  set_default_threads(1);
  const auto one = build_knn_graph(m, 10, 32);
  set_default_threads(4);
  const auto four = build_knn_graph(m, 10, 32);
  set_default_threads(1);
  EXPECT_EQ(one, four);
}

TEST(CitationGraph, EdgesAndExternalReferences) {
  const Corpus c({doc("d1", {}, {ref("d2", 1, 0, 0, 0), ref("ext", 1, 0, 0, 0)}), doc("d2", {}, {ref("d1", 0, 1, 0, 0)}),
                  doc("d3")});
  const auto g = build_citation_graph(c);
  EXPECT_EQ(g.node_count(), 3u);
  EXPECT_EQ(g.edge_count(), 1u);
  EXPECT_TRUE(g.has_edge(0, 1));

  const Corpus external({doc("a", {}, {ref("x", 1, 0, 0, 0)}), doc("b", {}, {ref("y", 1, 0, 0, 0)})});
  const auto s = graph_statistics(build_citation_graph(external), 5, 1);
  EXPECT_EQ(s.edges, 0u);
  EXPECT_EQ(s.isolated_nodes, 2u);
}

TEST(Stats, Triangle) {
  const auto s = graph_statistics(from_pairs(3, {{0, 1}, {1, 2}, {0, 2}}), 10, 1);
  EXPECT_DOUBLE_EQ(s.clustering_coefficient, 1.0);
  EXPECT_DOUBLE_EQ(s.avg_shortest_path, 1.0);
  EXPECT_TRUE(s.is_connected);
  EXPECT_DOUBLE_EQ(s.density, 1.0);
  EXPECT_DOUBLE_EQ(s.average_degree, 2.0);
}

TEST(Stats, PathGraph) {
  const auto s = graph_statistics(from_pairs(4, {{0, 1}, {1, 2}, {2, 3}}), 10, 1);
  EXPECT_EQ(s.clustering_coefficient, 0.0);
  EXPECT_EQ(s.component_count, 1u);
  // Distances: 1,2,3 from ends, 1,1,2 from inner nodes, both directions.
  EXPECT_DOUBLE_EQ(s.avg_shortest_path, 20.0 / 12.0);
}

TEST(Stats, TwoTriangles) {
  const auto s = graph_statistics(from_pairs(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}}), 10, 1);
  EXPECT_EQ(s.component_count, 2u);
  EXPECT_FALSE(s.is_connected);
  EXPECT_DOUBLE_EQ(s.avg_shortest_path, 1.0);
  EXPECT_DOUBLE_EQ(s.density, 6.0 / 15.0);
}

TEST(Stats, LocalVersusGlobalClustering) {
  // Triangle 0-1-2 with pendant 3 on node 2.
  const auto g = from_pairs(4, {{0, 1}, {1, 2}, {0, 2}, {2, 3}});
  EXPECT_DOUBLE_EQ(clustering_coefficient(g), (1.0 + 1.0 + 1.0 / 3.0 + 0.0) / 4.0);
  EXPECT_DOUBLE_EQ(clustering_coefficient(g, ClusteringVariant::global_transitivity), 3.0 / 5.0);
}

TEST(Stats, SampledSourcesAreSeededAndBounded) {
  const auto g = build_knn_graph(random_matrix(200, 6, 4), 5);
  const auto a = graph_statistics(g, 30, 9);
  const auto b = graph_statistics(g, 30, 9);
  EXPECT_EQ(a.sample_size, 30u);
  EXPECT_EQ(a.avg_shortest_path, b.avg_shortest_path);
  EXPECT_GT(a.avg_shortest_path, 1.0);
  EXPECT_THROW(graph_statistics(g, 0, 1), ValidationError);
}

TEST(Overlap, IdenticalDisjointAndMixed) {
  const auto g = from_pairs(4, {{0, 1}, {1, 2}});
  EXPECT_EQ(edge_overlap(g, g), (EdgeOverlap{2, 0, 0}));
  EXPECT_EQ(edge_overlap(g, from_pairs(4, {{2, 3}, {0, 3}})), (EdgeOverlap{0, 2, 2}));
  EXPECT_EQ(edge_overlap(g, from_pairs(4, {{1, 0}, {0, 3}})), (EdgeOverlap{1, 1, 1}));
}

TEST(Overlap, MatchesByIdNotIndex) {
  const Graph g1({"a", "b", "c"}, {{0, 1, 1.0}});
  const Graph g2({"c", "b", "a"}, {{1, 2, 1.0}});
  EXPECT_EQ(edge_overlap(g1, g2), (EdgeOverlap{1, 0, 0}));
}

TEST(RandomGraph, SameEdgeCountSeededAndSimple) {
  const auto g = build_knn_graph(random_matrix(100, 4, 5), 6);
  const auto r1 = random_graph_like(g, 3);
  EXPECT_EQ(r1.edge_count(), g.edge_count());
  EXPECT_EQ(r1.ids(), g.ids());
  EXPECT_EQ(r1, random_graph_like(g, 3));
  EXPECT_NE(r1, random_graph_like(g, 4));
  // Dense target goes through the complement draw.
  const auto dense = from_pairs(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 2}, {1, 3}, {1, 4}, {2, 3}});
  EXPECT_EQ(random_graph_like(dense, 1).edge_count(), 8u);
  EXPECT_THROW(random_graph_like(from_pairs(1, {}), 1), ValidationError);
}

TEST(RandomGraph, ClusteringNearDensity) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < 31000; ++i) pairs.push_back({i % 2000, (i % 2000 + 1 + i / 2000) % 2000});
  const auto base = from_pairs(2000, pairs);
  ASSERT_EQ(base.edge_count(), 31000u);
  const auto s = graph_statistics(random_graph_like(base, 11), 20, 1);
  EXPECT_LT(s.clustering_coefficient, 5.0 * s.density);
  EXPECT_GT(s.clustering_coefficient, s.density / 5.0);
}

TEST(EdgeFiles, RoundTripSortedRows) {
  const Graph g({"b", "a", "c"}, {{0, 1, 0.5}, {1, 2, 0.25}});
  std::stringstream buf;
  write_edge_list(buf, g, "stage=graph");
  const std::string text = buf.str();
  EXPECT_LT(text.find("a\tb\t"), text.find("a\tc\t"));
  const auto ids = g.ids();
  EXPECT_EQ(read_edge_list(buf, &ids), g);
  std::istringstream bad("id_a\tid_b\tweight\na\tzz\t1\n");
  EXPECT_THROW(read_edge_list(bad, &ids), ParseError);
}
