#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "citemap/evalmetrics.hpp"
#include "test_util.hpp"

using namespace citemap;

namespace {

EmbeddingMatrix random_matrix(std::size_t n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix v(static_cast<Eigen::Index>(n), dim);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) v(static_cast<Eigen::Index>(i), j) = normal(rng);
    ids.push_back("c" + std::to_string(100 + i));
  }
  return EmbeddingMatrix(std::move(ids), std::move(v));
}

std::vector<std::string> names(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(100 + i));
  return out;
}

std::vector<ScoredCitation> fixture_scores(const Corpus& c) {
  const auto table = extract_citation_features(c, FeatureSet{});
  return score_citations(table, entropy_weights(table));
}

}  // namespace

TEST(RankCandidates, IdenticalFirstAndPermutation) {
  const auto m = random_matrix(31, 8, 1);
  RankingTask task{m.ids()[0], {}, {}};
  task.candidates.assign(m.ids().begin() + 1, m.ids().end());
  auto ranking = rank_candidates(m, task);
  ASSERT_EQ(ranking.size(), 30u);
  auto sorted = ranking;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, task.candidates);

  RowMatrix v = m.vectors();
  v.row(17) = 2.5 * v.row(0);
  const EmbeddingMatrix dup(m.ids(), v);
  EXPECT_EQ(rank_candidates(dup, task).front(), m.ids()[17]);
  task.candidates.push_back("missing");
  EXPECT_THROW(rank_candidates(m, task), ValidationError);
}

TEST(RankCandidates, MatchesBruteForceSort) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = random_matrix(11, 5, seed);
    RankingTask task{m.ids()[0], {m.ids().begin() + 1, m.ids().end()}, {}};
    std::vector<std::string> expected = task.candidates;
    // Rank by counting how many candidates beat each one.
    std::vector<std::pair<std::size_t, std::string>> place;
    for (const auto& a : expected) {
      std::size_t beaten_by = 0;
      const double sa = cosine_similarity(m.row(0), m.row(m.require(a)));
      for (const auto& b : expected) {
        const double sb = cosine_similarity(m.row(0), m.row(m.require(b)));
        beaten_by += sb > sa || (sb == sa && b < a);
      }
      place.push_back({beaten_by, a});
    }
    std::sort(place.begin(), place.end());
    for (std::size_t i = 0; i < place.size(); ++i) expected[i] = place[i].second;
    EXPECT_EQ(rank_candidates(m, task), expected);
  }
}

TEST(RankCandidates, TiesByAscendingIdAndNegativeL2) {
  RowMatrix v(4, 2);
  v << 1, 0, 0, 1, 0, 1, 2, 0;
  const EmbeddingMatrix m({"t", "z", "y", "far"}, v);
  const RankingTask task{"t", {"z", "y", "far"}, {"y"}};
  EXPECT_EQ(rank_candidates(m, task), (std::vector<std::string>{"far", "y", "z"}));
  EXPECT_EQ(rank_candidates(m, task, RankingSimilarity::negative_l2), (std::vector<std::string>{"far", "y", "z"}));
  v.row(3) << 5, 0;
  EXPECT_EQ(rank_candidates(EmbeddingMatrix({"t", "z", "y", "far"}, v), task, RankingSimilarity::negative_l2),
            (std::vector<std::string>{"y", "z", "far"}));
}

TEST(AveragePrecision, Examples) {
  const auto cands = names("c", 30);
  const std::set<std::string> top5(cands.begin(), cands.begin() + 5);
  EXPECT_DOUBLE_EQ(average_precision(cands, top5), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(cands, {cands[1]}), 0.5);
  EXPECT_THROW(average_precision(cands, {}), ValidationError);
  EXPECT_THROW(map_score({}), ValidationError);
}

TEST(AveragePrecision, ThreeTaskMeanByHand) {
  const std::vector<RankedTask> tasks = {
      {{"a", "b", "c", "d"}, {"a", "c"}},
      {{"x", "y", "z"}, {"z"}},
      {{"p", "q", "r", "s", "t"}, {"q", "s", "t"}},
  };
  const double ap1 = (1.0 / 1.0 + 2.0 / 3.0) / 2.0;
  const double ap2 = 1.0 / 3.0;
  const double ap3 = (1.0 / 2.0 + 2.0 / 4.0 + 3.0 / 5.0) / 3.0;
  EXPECT_NEAR(map_score(tasks), (ap1 + ap2 + ap3) / 3.0, 1e-12);
}

TEST(Ndcg, Examples) {
  const auto cands = names("c", 30);
  EXPECT_DOUBLE_EQ(ndcg(cands, {cands[0], cands[1], cands[2]}), 1.0);
  EXPECT_DOUBLE_EQ(ndcg(cands, {cands[0]}), 1.0);
  EXPECT_DOUBLE_EQ(ndcg(cands, {cands[2]}), 0.5);
  EXPECT_THROW(ndcg(cands, {}), ValidationError);
  // Relevant at ranks 2 and 4 of 4.
  const std::vector<std::string> r = {"a", "b", "c", "d"};
  EXPECT_NEAR(ndcg(r, {"b", "d"}), (1.0 / std::log2(3.0) + 1.0 / std::log2(5.0)) / (1.0 + 1.0 / std::log2(3.0)), 1e-12);
  // A cutoff of 2 drops rank 4 and shortens the ideal list to two hits.
  EXPECT_NEAR(ndcg(r, {"b", "d"}, 2), (1.0 / std::log2(3.0)) / (1.0 + 1.0 / std::log2(3.0)), 1e-12);
  EXPECT_NEAR(ndcg(r, {"b", "c", "d"}, 1), 0.0, 1e-12);
}

TEST(PrecisionAt1, Examples) {
  const RankedTask hit{{"a", "b"}, {"a"}};
  const RankedTask miss{{"a", "b"}, {"b"}};
  EXPECT_EQ(precision_at_1({hit, hit}), 1.0);
  EXPECT_EQ(precision_at_1({miss, miss}), 0.0);
  EXPECT_EQ(precision_at_1({hit, miss, hit, hit}), 0.75);
  EXPECT_THROW(precision_at_1({}), ValidationError);
}

TEST(MacroF1, Examples) {
  EXPECT_DOUBLE_EQ(macro_f1({"a", "b", "c"}, {"a", "b", "c"}), 1.0);
  EXPECT_NEAR(macro_f1({"a", "a", "a", "a"}, {"a", "a", "b", "b"}), 1.0 / 3.0, 1e-12);
  EXPECT_THROW(macro_f1({"a"}, {"a", "b"}), ValidationError);
  EXPECT_THROW(macro_f1({}, {}), ValidationError);
}

TEST(MacroF1, ThreeClassConfusionByHand) {
  // gold a a a b b c, predicted a a b b c c:
  // a: tp 2 fp 0 fn 1 -> F1 0.8; b: tp 1 fp 1 fn 1 -> 0.5; c: tp 1 fp 1 fn 0 -> 2/3.
  EXPECT_NEAR(macro_f1({"a", "a", "b", "b", "c", "c"}, {"a", "a", "a", "b", "b", "c"}), (0.8 + 0.5 + 2.0 / 3.0) / 3.0,
              1e-12);
  // A predicted class absent from gold only costs precision elsewhere.
  EXPECT_NEAR(macro_f1({"a", "z"}, {"a", "a"}), 2.0 * 1.0 * 0.5 / 1.5, 1e-12);
}

TEST(MetricProperties, RangeOrderInvarianceAndPerfectRanking) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RankedTask> tasks;
    for (int t = 0; t < 5; ++t) {
      auto ranking = names("c", 12);
      std::shuffle(ranking.begin(), ranking.end(), rng);
      std::set<std::string> rel;
      const std::size_t k = 1 + rng() % 5;
      auto pool = ranking;
      std::shuffle(pool.begin(), pool.end(), rng);
      rel.insert(pool.begin(), pool.begin() + static_cast<long>(k));
      tasks.push_back({ranking, rel});
    }
    for (double v : {map_score(tasks), mean_ndcg(tasks), precision_at_1(tasks)}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    auto shuffled = tasks;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_NEAR(map_score(shuffled), map_score(tasks), 1e-12);
    EXPECT_NEAR(mean_ndcg(shuffled), mean_ndcg(tasks), 1e-12);
    EXPECT_EQ(precision_at_1(shuffled), precision_at_1(tasks));

    for (const auto& t : tasks) {
      bool top = true;
      for (std::size_t r = 0; r < t.relevant.size(); ++r) top = top && t.relevant.count(t.ranking[r]);
      const double ap = average_precision(t.ranking, t.relevant);
      const double g = ndcg(t.ranking, t.relevant);
      EXPECT_EQ(top, std::abs(ap - 1.0) < 1e-12);
      EXPECT_EQ(top, std::abs(g - 1.0) < 1e-12);
    }
  }
}

TEST(MetricProperties, MovingRelevantItemUpNeverHurts) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    auto ranking = names("c", 10);
    std::shuffle(ranking.begin(), ranking.end(), rng);
    std::set<std::string> rel;
    for (const auto& id : ranking)
      if (rng() % 3 == 0) rel.insert(id);
    if (rel.empty()) rel.insert(ranking.back());
    std::vector<std::size_t> rel_pos, other_pos;
    for (std::size_t i = 0; i < ranking.size(); ++i) (rel.count(ranking[i]) ? rel_pos : other_pos).push_back(i);
    const std::size_t i = rel_pos[rng() % rel_pos.size()];
    std::vector<std::size_t> above;
    for (auto j : other_pos)
      if (j < i) above.push_back(j);
    if (above.empty()) continue;
    auto swapped = ranking;
    std::swap(swapped[i], swapped[above[rng() % above.size()]]);
    EXPECT_GE(average_precision(swapped, rel), average_precision(ranking, rel) - 1e-12);
    EXPECT_GE(ndcg(swapped, rel), ndcg(ranking, rel) - 1e-12);
    EXPECT_GE(ndcg(swapped, rel, 3), ndcg(ranking, rel, 3) - 1e-12);
  }
}

TEST(NearestCentroid, CentroidVectorSingleClassAndErrors) {
  RowMatrix v(5, 2);
  v << 1, 0, 1, 0.2, 0, 1, 0.1, 1, 1, 0.1;
  const EmbeddingMatrix m({"a1", "a2", "b1", "b2", "q"}, v);
  LabeledSplit split{{{"a1", "A"}, {"a2", "A"}, {"b1", "B"}, {"b2", "B"}}, {{"q", "A"}}};
  EXPECT_EQ(nearest_centroid_classify(m, split), std::vector<std::string>{"A"});
  // Query equal to B's centroid.
  RowMatrix w = v;
  w.row(4) = (v.row(2) + v.row(3)) / 2.0;
  EXPECT_EQ(nearest_centroid_classify(EmbeddingMatrix(m.ids(), w), split), std::vector<std::string>{"B"});

  const LabeledSplit single{{{"a1", "A"}}, {{"b1", "A"}, {"q", "A"}}};
  EXPECT_EQ(nearest_centroid_classify(m, single), (std::vector<std::string>{"A", "A"}));
  const LabeledSplit untrained{{{"a1", "A"}}, {{"b1", "B"}}};
  EXPECT_THROW(nearest_centroid_classify(m, untrained), ValidationError);
}

TEST(NearestCentroid, TiesGoToSmallerClassName) {
  RowMatrix v(3, 2);
  v << 1, 0, 0, 1, 1, 1;
  const EmbeddingMatrix m({"x", "y", "q"}, v);
  EXPECT_EQ(nearest_centroid_classify(m, {{{"x", "zeta"}, {"y", "alpha"}}, {{"q", "zeta"}}}),
            std::vector<std::string>{"alpha"});
}

TEST(NearestCentroid, SeparatedPlantedClassesPerfect) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 0.2);
  std::vector<Document> docs;
  RowMatrix v(80, 6);
  std::vector<std::string> ids;
  for (int i = 0; i < 80; ++i) {
    auto d = testutil::doc("d" + std::to_string(100 + i));
    d.labels = {i % 2 ? "odd" : "even"};
    docs.push_back(d);
    ids.push_back(d.id);
    for (int j = 0; j < 6; ++j) v(i, j) = normal(rng) + (j == i % 2 ? 3.0 : 0.0);
  }
  const Corpus c(docs);
  const auto split = label_split(c, 0.5, 9);
  EXPECT_EQ(split.train.size(), 40u);
  EXPECT_EQ(split.test.size(), 40u);
  std::vector<std::string> gold;
  for (const auto& item : split.test) gold.push_back(item.label);
  EXPECT_EQ(macro_f1(nearest_centroid_classify(EmbeddingMatrix(ids, v), split), gold), 1.0);
}

TEST(LabelSplit, SeededCoversClassesAndKeepsSingletonsInTrain) {
  std::vector<Document> docs;
  for (int i = 0; i < 13; ++i) {
    auto d = testutil::doc("d" + std::to_string(100 + i));
    if (i < 12) d.labels = {i % 3 == 0 ? "a" : "b"};
    docs.push_back(d);
  }
  docs[12].labels = {"solo"};
  const Corpus c(docs);
  const auto s1 = label_split(c, 0.75, 1);
  const auto s2 = label_split(c, 0.75, 1);
  ASSERT_EQ(s1.train.size(), s2.train.size());
  for (std::size_t i = 0; i < s1.train.size(); ++i) EXPECT_EQ(s1.train[i].id, s2.train[i].id);
  EXPECT_EQ(s1.train.size() + s1.test.size(), 13u);
  std::set<std::string> train_classes;
  for (const auto& it : s1.train) train_classes.insert(it.label);
  for (const auto& it : s1.test) {
    EXPECT_TRUE(train_classes.count(it.label));
    EXPECT_NE(it.label, "solo");
  }
}

TEST(CitationTasks, StructureOnFixture) {
  const auto c = load_corpus(testutil::fixture("synthetic_corpus.jsonl"));
  const auto scored = fixture_scores(c);
  std::vector<std::string> targets;
  for (std::size_t i = 0; i < c.size(); i += 7) targets.push_back(c[i].id);
  const auto tasks = citation_ranking_tasks(c, scored, targets, 5, 30, 17);
  ASSERT_FALSE(tasks.empty());
  const auto ranked = ranked_references(c, scored);
  for (const auto& t : tasks) {
    EXPECT_NO_THROW(t.validate());
    EXPECT_EQ(t.candidates.size(), 30u);
    EXPECT_EQ(t.relevant.size(), 5u);
    const auto& refs = ranked[*c.position(t.target)];
    for (std::size_t i = 0; i < 5; ++i) EXPECT_TRUE(t.relevant.count(refs[i].cited_id));
    std::set<std::string> cited;
    for (const auto& r : c.at(t.target).references) cited.insert(r.cited_id);
    std::size_t non_cited = 0;
    for (const auto& id : t.candidates) non_cited += !cited.count(id);
    EXPECT_EQ(non_cited, 30u - std::min<std::size_t>(refs.size(), 30));
  }
  const auto again = citation_ranking_tasks(c, scored, targets, 5, 30, 17);
  ASSERT_EQ(again.size(), tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) EXPECT_EQ(again[i].candidates, tasks[i].candidates);
  EXPECT_THROW(citation_ranking_tasks(c, scored, targets, 5, 5, 17), ValidationError);
  EXPECT_THROW(citation_ranking_tasks(c, scored, {"nope"}, 5, 30, 17), ValidationError);
}

TEST(CitationTasks, SkipsTargetsWithTooFewReferences) {
  const Corpus c({testutil::doc("a", {}, {testutil::ref("b", 1, 0, 0, 0)}), testutil::doc("b"), testutil::doc("c"),
                  testutil::doc("d")});
  const std::vector<ScoredCitation> scored = {{"a", "b", 1.0}};
  EXPECT_TRUE(citation_ranking_tasks(c, scored, {"a", "b"}, 2, 3, 1).empty());
  const auto one = citation_ranking_tasks(c, scored, {"a"}, 1, 3, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].candidates, (std::vector<std::string>{"b", "c", "d"}));
  EXPECT_EQ(one[0].relevant, std::set<std::string>{"b"});
}

TEST(EvaluateRanking, PerfectEmbeddingScoresOne) {
  RowMatrix v(5, 2);
  v << 1, 0, 0.9, 0.1, 0.8, 0.2, 0, 1, -1, 0;
  const EmbeddingMatrix m({"t", "r1", "r2", "n1", "n2"}, v);
  const std::vector<RankingTask> tasks = {{"t", {"n1", "n2", "r1", "r2"}, {"r1", "r2"}}};
  const auto report = evaluate_ranking(m, tasks);
  EXPECT_EQ(report.tasks, 1u);
  EXPECT_DOUBLE_EQ(report.map, 1.0);
  EXPECT_DOUBLE_EQ(report.ndcg, 1.0);
  EXPECT_DOUBLE_EQ(report.p_at_1, 1.0);
  const std::vector<RankingTask> bad = {{"t", {"n1", "t"}, {"n1"}}};
  EXPECT_THROW(evaluate_ranking(m, bad), ValidationError);
}

TEST(TaskFiles, RoundTripAndMalformed) {
  const std::vector<RankingTask> tasks = {{"t1", {"a", "b", "c"}, {"b"}}, {"t2", {"x", "y"}, {"x", "y"}}};
  std::stringstream buf;
  write_tasks(buf, tasks, "stage=evaluate");
  const auto back = read_tasks(buf);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].target, tasks[i].target);
    EXPECT_EQ(back[i].candidates, tasks[i].candidates);
    EXPECT_EQ(back[i].relevant, tasks[i].relevant);
  }
  std::istringstream split_rows("target\tcandidate\tis_relevant\nt1\ta\t1\nt2\tb\t1\nt1\tc\t0\n");
  EXPECT_THROW(read_tasks(split_rows), ParseError);
  std::istringstream bad_flag("target\tcandidate\tis_relevant\nt1\ta\t2\n");
  EXPECT_THROW(read_tasks(bad_flag), ParseError);
  std::istringstream no_relevant("target\tcandidate\tis_relevant\nt1\ta\t0\n");
  EXPECT_THROW(read_tasks(no_relevant), ValidationError);
}
