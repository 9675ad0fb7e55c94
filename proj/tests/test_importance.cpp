#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "citemap/embedder.hpp"
#include "citemap/importance.hpp"
#include "test_util.hpp"

using namespace citemap;
using testutil::doc;
using testutil::ref;

namespace {

FeatureTable table_from(const std::vector<std::array<int, 4>>& rows) {
  FeatureTable t;
  t.features = FeatureSet{};  // intro, results, discussion, self
  int i = 0;
  for (const auto& r : rows) {
    CitationFeatures c;
    c.citing_id = "a" + std::to_string(i);
    c.cited_id = "b" + std::to_string(i++);
    c.f_intro = r[0];
    c.f_results = r[1];
    c.f_discussion = r[2];
    c.s_self = r[3];
    t.rows.push_back(c);
  }
  return t;
}

double sum_weights(const ImportanceWeights& w) {
  double s = 0.0;
  for (const auto& [f, v] : w.weights) s += v;
  return s;
}

}  // namespace

TEST(Extract, CountsAndSelfCitation) {
  const Corpus c({doc("d", {"A1"}, {ref("r1", 1, 0, 2, 0)}), doc("r1", {"A1", "A9"})});
  const auto t = extract_citation_features(c, FeatureSet{});
  ASSERT_EQ(t.rows.size(), 1u);
  const auto& row = t.rows[0];
  EXPECT_EQ(row.f_intro, 1);
  EXPECT_EQ(row.f_results, 2);
  EXPECT_EQ(row.f_discussion, 0);
  EXPECT_EQ(row.s_self, 1);
  EXPECT_TRUE(row.resolved);
}

TEST(Extract, OneRowPerReferenceEntry) {
  const Corpus c({doc("d1", {}, {ref("d2", 1, 0, 0, 0), ref("d3", 0, 1, 0, 0), ref("x", 1, 0, 0, 0)}),
                  doc("d2", {}, {ref("d3", 0, 0, 1, 0)}), doc("d3", {}, {ref("d1", 0, 0, 0, 1)})});
  EXPECT_EQ(extract_citation_features(c, FeatureSet{}).rows.size(), 5u);
  EXPECT_EQ(extract_citation_features(c, FeatureSet{}, nullptr, {false}).rows.size(), 4u);
}

TEST(Extract, TitleSimilarityOfIdenticalTextsIsOne) {
  auto a = doc("a", {}, {ref("b", 1, 0, 0, 0)});
  auto b = doc("b");
  b.title = a.title;
  b.abstract = a.abstract;
  const Corpus c({a, b});
  FeatureSet fs;
  fs.include_title_similarity = true;
  EXPECT_THROW(extract_citation_features(c, fs), ValidationError);
  const auto base = base_embeddings(c, BaseEncoderConfig{});
  const auto t = extract_citation_features(c, fs, &base);
  EXPECT_NEAR(t.rows[0].t_sim, 1.0, 1e-9);
}

TEST(EntropyWeights, PublishedEntropiesGiveExpectedWeights) {
  const auto w = weights_from_entropies({0.96, 0.91, 0.92, 0.89});
  EXPECT_NEAR(w[0], 0.125, 1e-12);
  EXPECT_NEAR(w[1], 0.28125, 1e-12);
  EXPECT_NEAR(w[2], 0.25, 1e-12);
  EXPECT_NEAR(w[3], 0.34375, 1e-12);
  // Published weights (percent) for intro, results, discussion, self.
  const double published[] = {11.73, 29.33, 24.38, 34.57};
  for (int j = 0; j < 4; ++j) EXPECT_LE(std::abs(100.0 * w[j] - published[j]), 1.5);
}

TEST(EntropyWeights, FiveRowOracle) {
  const auto t = table_from({{1, 2, 0, 1}, {2, 0, 1, 0}, {1, 1, 1, 0}, {3, 0, 2, 1}, {1, 4, 0, 0}});
  const auto w = entropy_weights(t);
  // Hand-evaluated column entropies and weights.
  EXPECT_NEAR(w.entropies[0].second, 0.9283832117695865, 1e-9);
  EXPECT_NEAR(w.entropies[1].second, 0.5938097293030347, 1e-9);
  EXPECT_NEAR(w.entropies[2].second, 0.6460148371100896, 1e-9);
  EXPECT_NEAR(w.entropies[3].second, 0.43067655807339306, 1e-9);
  EXPECT_NEAR(w.weight(Feature::intro), 0.051114115760470175, 1e-9);
  EXPECT_NEAR(w.weight(Feature::results), 0.28990488166522355, 1e-9);
  EXPECT_NEAR(w.weight(Feature::discussion), 0.25264521127687134, 1e-9);
  EXPECT_NEAR(w.weight(Feature::self_citation), 0.40633579129743497, 1e-9);
}

TEST(EntropyWeights, ConstantColumnGetsZeroWeight) {
  const auto t = table_from({{2, 1, 0, 1}, {2, 3, 1, 0}, {2, 0, 4, 0}});
  const auto w = entropy_weights(t);
  EXPECT_NEAR(w.weight(Feature::intro), 0.0, 1e-12);
}

TEST(EntropyWeights, AllZeroColumnWarnsAndAllZeroTableFails) {
  const auto t = table_from({{1, 0, 0, 1}, {2, 0, 1, 0}, {0, 0, 4, 0}});
  const auto w = entropy_weights(t);
  EXPECT_EQ(w.weight(Feature::results), 0.0);
  EXPECT_EQ(w.warnings.size(), 1u);
  EXPECT_THROW(entropy_weights(table_from({{0, 0, 0, 0}, {0, 0, 0, 0}})), ValidationError);
  EXPECT_THROW(entropy_weights(table_from({{1, 2, 3, 1}})), ValidationError);
}

TEST(EntropyWeights, NegativeTitleSimilarityIsShifted) {
  auto t = table_from({{1, 2, 0, 1}, {2, 0, 1, 0}, {1, 1, 1, 0}});
  t.features.include_title_similarity = true;
  t.rows[0].t_sim = -0.5;
  t.rows[1].t_sim = 0.2;
  t.rows[2].t_sim = 0.9;
  const auto w = entropy_weights(t);
  // Shifted column (0, 0.7, 1.4).
  const double p1 = 0.7 / 2.1, p2 = 1.4 / 2.1;
  const double e = -(p1 * std::log(p1) + p2 * std::log(p2)) / std::log(3.0);
  double et = -1;
  for (const auto& [f, v] : w.entropies)
    if (f == Feature::title_similarity) et = v;
  EXPECT_NEAR(et, e, 1e-12);
}

TEST(EntropyWeights, PropertiesOnRandomTables) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> count(0, 5), bit(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::array<int, 4>> rows(20);
    for (auto& r : rows) r = {count(rng) + 1, count(rng), count(rng), bit(rng)};
    rows[0][3] = 1;
    const auto w = entropy_weights(table_from(rows));
    EXPECT_NEAR(sum_weights(w), 1.0, 1e-9);
    for (const auto& [f, v] : w.weights) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    auto shuffled = rows;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto w2 = entropy_weights(table_from(shuffled));
    for (std::size_t j = 0; j < w.weights.size(); ++j) EXPECT_NEAR(w.weights[j].second, w2.weights[j].second, 1e-12);
  }
}

TEST(EntropyWeights, ConstantColumnPreservesRankingOfOthers) {
  // intro constant: its weight is 0 and the remaining weights are unchanged.
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> count(0, 5), bit(0, 1);
  std::vector<std::array<int, 4>> rows(30);
  for (auto& r : rows) r = {3, count(rng) + 1, count(rng), bit(rng)};
  auto with_const = table_from(rows);
  auto without = with_const;
  without.features.include_intro = false;
  const auto a = score_citations(with_const, entropy_weights(with_const));
  const auto b = score_citations(without, entropy_weights(without));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i].importance, b[i].importance, 1e-12);
}

TEST(UniformWeights, EqualShares) {
  FeatureSet fs;
  auto w = uniform_weights(fs);
  for (const auto& [f, v] : w.weights) EXPECT_DOUBLE_EQ(v, 0.25);
  FeatureSet one{true, false, false, false, false, false};
  EXPECT_DOUBLE_EQ(uniform_weights(one).weights.at(0).second, 1.0);
  FeatureSet five{true, true, true, true, true, false};
  w = uniform_weights(five);
  EXPECT_EQ(w.weights.size(), 5u);
  for (const auto& [f, v] : w.weights) EXPECT_DOUBLE_EQ(v, 0.2);
  EXPECT_NEAR(sum_weights(w), 1.0, 1e-15);
  FeatureSet none{false, false, false, false, false, false};
  EXPECT_THROW(uniform_weights(none), ValidationError);
}

TEST(Score, PublishedWeightsExample) {
  const auto t = table_from({{1, 2, 0, 1}, {0, 0, 0, 0}});
  ImportanceWeights w;
  w.weights = {{Feature::intro, 0.1173},
               {Feature::results, 0.2933},
               {Feature::discussion, 0.2438},
               {Feature::self_citation, 0.3457}};
  const auto s = score_citations(t, w);
  EXPECT_NEAR(s[0].importance, 1.0496, 1e-12);
  EXPECT_EQ(s[1].importance, 0.0);
}

TEST(Score, WeightedSumOnRandomRows) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> count(0, 9), bit(0, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::array<int, 4>> rows(50);
  for (auto& r : rows) r = {count(rng), count(rng), count(rng), bit(rng)};
  const auto t = table_from(rows);
  ImportanceWeights w;
  const double wi = u(rng), wr = u(rng), wd = u(rng), ws = u(rng);
  w.weights = {{Feature::intro, wi}, {Feature::results, wr}, {Feature::discussion, wd}, {Feature::self_citation, ws}};
  const auto s = score_citations(t, w);
  for (std::size_t i = 0; i < rows.size(); ++i)
    EXPECT_NEAR(s[i].importance, wi * rows[i][0] + wr * rows[i][1] + wd * rows[i][2] + ws * rows[i][3], 1e-12);
}

TEST(Score, LinearInWeightsAndFeatures) {
  const auto t = table_from({{1, 2, 0, 1}, {3, 1, 1, 0}, {0, 0, 2, 1}});
  const auto w = entropy_weights(t);
  auto doubled = w;
  for (auto& [f, v] : doubled.weights) v *= 2.0;
  const auto a = score_citations(t, w);
  const auto b = score_citations(t, doubled);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i].importance, 2.0 * a[i].importance, 1e-12);

  auto scaled = t;
  for (auto& r : scaled.rows) {
    r.f_intro *= 3;
    r.f_results *= 3;
    r.f_discussion *= 3;
    r.s_self *= 3;
  }
  const auto c = score_citations(scaled, w);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(c[i].importance, 3.0 * a[i].importance, 1e-12);
}

TEST(Score, MismatchedWeightsRejected) {
  const auto t = table_from({{1, 2, 0, 1}, {3, 1, 1, 0}});
  ImportanceWeights w;
  w.weights = {{Feature::intro, 1.0}};
  EXPECT_THROW(score_citations(t, w), ValidationError);
}

TEST(Score, SyntheticIntraCitationsOutscoreNoise) {
  SyntheticSpec spec;
  spec.sibling_refs = 0;
  const Corpus c = generate_synthetic_corpus(spec, 3);
  const auto t = extract_citation_features(c, FeatureSet{});
  const auto s = score_citations(t, entropy_weights(t));
  double intra = 0, noise = 0;
  int ni = 0, nn = 0;
  for (const auto& sc : s) {
    const Document* cited = c.find(sc.cited_id);
    if (!cited) continue;
    if (cited->labels == c.at(sc.citing_id).labels) {
      intra += sc.importance;
      ++ni;
    } else {
      noise += sc.importance;
      ++nn;
    }
  }
  ASSERT_GT(ni, 0);
  ASSERT_GT(nn, 0);
  EXPECT_GT(intra / ni, noise / nn);
}

TEST(Files, FeatureTableScoresAndWeightsRoundTrip) {
  const auto t = table_from({{1, 2, 0, 1}, {3, 1, 1, 0}, {0, 0, 2, 1}});
  std::stringstream buf;
  write_feature_table(buf, t, "note");
  const auto back = read_feature_table(buf);
  EXPECT_EQ(back.features, t.features);
  ASSERT_EQ(back.rows.size(), 3u);
  EXPECT_EQ(back.rows[1].f_intro, 3);
  EXPECT_EQ(back.rows[2].s_self, 1);

  const auto w = entropy_weights(t);
  const auto s = score_citations(t, w);
  std::stringstream sbuf;
  write_scores(sbuf, s);
  EXPECT_EQ(read_scores(sbuf), s);

  const auto wb = weights_from_json(weights_to_json(w));
  ASSERT_EQ(wb.weights.size(), w.weights.size());
  for (std::size_t j = 0; j < w.weights.size(); ++j) EXPECT_EQ(wb.weights[j], w.weights[j]);
}
