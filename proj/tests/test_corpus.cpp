#include <gtest/gtest.h>

#include <sstream>
#include <set>

#include "citemap/corpus.hpp"
#include "test_util.hpp"

using namespace citemap;
using testutil::doc;
using testutil::ref;

namespace {

std::string record(const std::string& id, const std::string& refs = "[]") {
  return R"({"id":")" + id +
         R"(","title":"t","abstract":"a","authors":["A1"],"year":2001,"venue":"v","fields":["f"],"categories":["c"],"labels":["l"],"references":)" +
         refs + "}";
}

}  // namespace

TEST(CorpusLoad, ThreeValidRecords) {
  std::istringstream in(record("d1") + "\n" + record("d2") + "\n" + record("d3") + "\n");
  const Corpus c = read_corpus(in);
  EXPECT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0].id, "d1");
  EXPECT_EQ(c[2].id, "d3");
  EXPECT_EQ(*c.position("d2"), 1u);
}

TEST(CorpusLoad, DuplicateIdNamesTheId) {
  std::istringstream in(record("d1") + "\n" + record("d1") + "\n");
  try {
    read_corpus(in);
    FAIL() << "expected an error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("d1"), std::string::npos);
    EXPECT_EQ(e.line_number, 2u);
  }
}

TEST(CorpusLoad, ZeroCountReferenceRejected) {
  std::istringstream in(
      record("d1", R"([{"cited_id":"x","counts":{"intro":0,"methods":0,"results":0,"discussion":0}}])") + "\n");
  EXPECT_THROW(read_corpus(in), ValidationError);
}

TEST(CorpusLoad, MalformedLineReportsLineNumber) {
  std::istringstream in(record("d1") + "\n{not json\n");
  try {
    read_corpus(in);
    FAIL() << "expected an error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line_number, 2u);
  }
}

TEST(CorpusLoad, MissingFieldRejected) {
  std::istringstream in(R"({"id":"d1","title":"t"})"
                        "\n");
  EXPECT_THROW(read_corpus(in), ParseError);
}

TEST(CorpusLoad, UnknownKeysOnlyRejectedWhenStrict) {
  auto rec = record("d1");
  rec.insert(rec.size() - 1, R"(,"extra":1)");
  std::istringstream lenient(rec + "\n");
  EXPECT_EQ(read_corpus(lenient).size(), 1u);
  std::istringstream strict(rec + "\n");
  EXPECT_THROW(read_corpus(strict, true), ParseError);
}

TEST(CorpusLoad, MissingFileIsMissingArtifact) {
  EXPECT_THROW(load_corpus("/nonexistent/corpus.jsonl"), MissingArtifactError);
}

TEST(CorpusInvariants, YearRangeAndSelfCitation) {
  auto d = doc("d1");
  d.year = 1800;
  EXPECT_THROW(Corpus({d}), ValidationError);
  EXPECT_THROW(Corpus({doc("d1", {}, {ref("d1", 1, 0, 0, 0)})}), ValidationError);
  EXPECT_THROW(Corpus({doc("d1", {}, {ref("x", 1, 0, 0, 0), ref("x", 0, 1, 0, 0)})}), ValidationError);
  EXPECT_THROW(Corpus({doc("")}), ValidationError);
}

TEST(CorpusRoundTrip, SaveThenLoadIsFieldForField) {
  auto d1 = doc("d1", {"A1", "A2"}, {ref("d2", 1, 2, 3, 4), ref("ext", 1, 0, 0, 0)});
  d1.venue = "Venue \"quoted\"";
  d1.fields = {"phys", "chem"};
  d1.categories = {"c1"};
  d1.labels = {"l1", "l2"};
  d1.title = "Ünïcode title";
  const Corpus c({d1, doc("d2", {"A3"})});
  std::stringstream buf;
  write_corpus(buf, c);
  const Corpus back = read_corpus(buf, true);
  EXPECT_EQ(back, c);
}

TEST(CorpusValidate, ReportsUnresolvedEmptyAndAnomalies) {
  auto d2 = doc("d2");
  d2.abstract = "";
  const Corpus c({doc("d1", {}, {ref("zzz", 1, 0, 0, 0), ref("d2", 1, 0, 0, 0)}), d2});
  const auto rep = validate_corpus(c);
  ASSERT_EQ(rep.unresolved.size(), 1u);
  EXPECT_EQ(rep.unresolved[0].cited_id, "zzz");
  ASSERT_EQ(rep.empty_abstract.size(), 1u);
  EXPECT_EQ(rep.empty_abstract[0], "d2");

  const Corpus clean({doc("d1", {}, {ref("d2", 1, 0, 0, 0)}), doc("d2")});
  EXPECT_TRUE(validate_corpus(clean).empty());

  const Corpus heavy({doc("d1", {}, {ref("d2", 200, 0, 0, 0)}), doc("d2")});
  EXPECT_EQ(validate_corpus(heavy).count_anomalies.size(), 1u);
}

TEST(SelfCitation, SharedAuthor) {
  EXPECT_TRUE(is_self_citation(doc("a", {"A1", "A2"}), doc("b", {"A2", "A3"})));
  EXPECT_FALSE(is_self_citation(doc("a", {"A1"}), doc("b", {"A2"})));
  EXPECT_FALSE(is_self_citation(doc("a", {}), doc("b", {"A1"})));
}

TEST(SelfCitation, SymmetricOnRandomAuthorSets) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pick(0, 9), len(0, 4);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::string> a, b;
    for (int i = len(rng); i > 0; --i) a.push_back("A" + std::to_string(pick(rng)));
    for (int i = len(rng); i > 0; --i) b.push_back("A" + std::to_string(pick(rng)));
    EXPECT_EQ(is_self_citation(doc("x", a), doc("y", b)), is_self_citation(doc("y", b), doc("x", a)));
  }
}

TEST(Synthetic, FourTopicsOfFifty) {
  SyntheticSpec spec;
  const Corpus c = generate_synthetic_corpus(spec, 7);
  ASSERT_EQ(c.size(), 200u);
  for (const auto& d : c.documents()) {
    ASSERT_EQ(d.labels.size(), 1u);
    EXPECT_EQ(d.categories.front(), d.labels.front());
  }
  std::map<std::string, int> per_topic;
  for (const auto& d : c.documents()) ++per_topic[d.labels.front()];
  EXPECT_EQ(per_topic.size(), 4u);
  for (const auto& [t, n] : per_topic) EXPECT_EQ(n, 50);
}

TEST(Synthetic, DeterministicBytes) {
  SyntheticSpec spec;
  std::ostringstream a, b, other;
  write_corpus(a, generate_synthetic_corpus(spec, 7));
  write_corpus(b, generate_synthetic_corpus(spec, 7));
  write_corpus(other, generate_synthetic_corpus(spec, 8));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), other.str());
}

TEST(Synthetic, ZeroIntraRateHasNoWithinTopicReferences) {
  SyntheticSpec spec;
  spec.intra_refs = 0;
  const Corpus c = generate_synthetic_corpus(spec, 1);
  for (const auto& d : c.documents())
    for (const auto& r : d.references) {
      const Document* cited = c.find(r.cited_id);
      if (cited) EXPECT_NE(cited->labels.front(), d.labels.front()) << d.id << " -> " << r.cited_id;
    }
}

TEST(Synthetic, InfeasibleSpecRejected) {
  SyntheticSpec spec;
  spec.docs_per_topic = 5;
  spec.intra_refs = 10;
  EXPECT_THROW(generate_synthetic_corpus(spec, 1), ValidationError);
}

TEST(Synthetic, CommittedFixtureMatchesGenerator) {
  // The fixture config's synthetic block regenerates the committed corpus.
  std::ifstream cfg_in(testutil::fixture("pipeline.json"));
  const auto cfg = nlohmann::json::parse(cfg_in);
  const auto spec = cfg.at("synthetic").get<SyntheticSpec>();
  std::ostringstream regenerated;
  write_corpus(regenerated, generate_synthetic_corpus(spec, cfg.at("seed").get<std::uint64_t>()));
  std::ifstream committed(testutil::fixture("synthetic_corpus.jsonl"));
  std::stringstream committed_text;
  committed_text << committed.rdbuf();
  EXPECT_EQ(regenerated.str(), committed_text.str());
}
