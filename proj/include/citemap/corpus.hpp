#pragma once

// Document data model, corpus loading/validation and the planted-structure
// synthetic corpus generator used by tests and fixtures.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "citemap/common.hpp"

namespace citemap {

struct SectionCounts {
  int intro = 0;
  int methods = 0;
  int results = 0;
  int discussion = 0;

  int total() const { return intro + methods + results + discussion; }
  bool operator==(const SectionCounts&) const = default;
};

struct ReferenceEntry {
  std::string cited_id;
  SectionCounts counts;

  bool operator==(const ReferenceEntry&) const = default;
};

struct Document {
  std::string id;
  std::string title;
  std::string abstract;
  std::vector<std::string> authors;
  int year = 2000;
  std::string venue;
  std::vector<std::string> fields;
  std::vector<std::string> categories;
  std::vector<std::string> labels;
  std::vector<ReferenceEntry> references;

  bool operator==(const Document&) const = default;
};

// Immutable after construction. Documents keep file order; `position` maps
// ids back to that order.
class Corpus {
 public:
  Corpus() = default;

  // Throws ValidationError on a violated document invariant.
  explicit Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
    index_.reserve(docs_.size());
    for (std::size_t i = 0; i < docs_.size(); ++i) {
      const Document& d = docs_[i];
      check_document(d);
      if (!index_.emplace(d.id, i).second) throw ValidationError("duplicate document id '" + d.id + "'");
    }
  }

  const std::vector<Document>& documents() const { return docs_; }
  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }
  const Document& operator[](std::size_t i) const { return docs_[i]; }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  std::optional<std::size_t> position(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const Document* find(const std::string& id) const {
    auto p = position(id);
    return p ? &docs_[*p] : nullptr;
  }

  const Document& at(const std::string& id) const {
    const Document* d = find(id);
    if (!d) throw ValidationError("unknown document id '" + id + "'");
    return *d;
  }

  bool operator==(const Corpus& o) const { return docs_ == o.docs_; }

  static void check_document(const Document& d) {
    if (d.id.empty()) throw ValidationError("document with empty id");
    if (d.year < 1900 || d.year > 2100)
      throw ValidationError("document '" + d.id + "': year " + std::to_string(d.year) + " outside [1900, 2100]");
    std::unordered_set<std::string> seen;
    for (const auto& r : d.references) {
      if (r.cited_id == d.id) throw ValidationError("document '" + d.id + "' cites itself");
      if (!seen.insert(r.cited_id).second)
        throw ValidationError("document '" + d.id + "' has duplicate reference to '" + r.cited_id + "'");
      const auto& c = r.counts;
      if (c.intro < 0 || c.methods < 0 || c.results < 0 || c.discussion < 0)
        throw ValidationError("document '" + d.id + "': negative count for '" + r.cited_id + "'");
      if (c.total() < 1)
        throw ValidationError("document '" + d.id + "': zero-count reference to '" + r.cited_id + "'");
    }
  }

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> index_;
};

// True iff the two author sets share at least one author id.
inline bool is_self_citation(const Document& citing, const Document& cited) {
  for (const auto& a : citing.authors)
    if (std::find(cited.authors.begin(), cited.authors.end(), a) != cited.authors.end()) return true;
  return false;
}

// ---------------------------------------------------------------------------
// JSON lines format
// ---------------------------------------------------------------------------

namespace detail {

inline const std::vector<std::string>& document_keys() {
  static const std::vector<std::string> keys = {"id",     "title",  "abstract",   "authors", "year",
                                                "venue",  "fields", "categories", "labels",  "references"};
  return keys;
}

inline std::vector<std::string> string_array(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array()) throw ValidationError(std::string("field '") + key + "' must be an array");
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_string()) throw ValidationError(std::string("field '") + key + "' must hold strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

inline int count_value(const nlohmann::json& counts, const char* key) {
  const auto& v = counts.at(key);
  if (!v.is_number_integer()) throw ValidationError(std::string("count '") + key + "' must be an integer");
  return v.get<int>();
}

}  // namespace detail

inline nlohmann::json to_json(const Document& d) {
  nlohmann::json refs = nlohmann::json::array();
  for (const auto& r : d.references) {
    refs.push_back({{"cited_id", r.cited_id},
                    {"counts",
                     {{"intro", r.counts.intro},
                      {"methods", r.counts.methods},
                      {"results", r.counts.results},
                      {"discussion", r.counts.discussion}}}});
  }
  return {{"id", d.id},         {"title", d.title},   {"abstract", d.abstract},     {"authors", d.authors},
          {"year", d.year},     {"venue", d.venue},   {"fields", d.fields},         {"categories", d.categories},
          {"labels", d.labels}, {"references", refs}};
}

inline Document document_from_json(const nlohmann::json& j, bool strict) {
  if (!j.is_object()) throw ValidationError("record is not an object");
  for (const auto& key : detail::document_keys())
    if (!j.contains(key)) throw ValidationError("missing required field '" + key + "'");
  if (strict) {
    for (const auto& [key, _] : j.items()) {
      const auto& keys = detail::document_keys();
      if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw ValidationError("unknown field '" + key + "'");
    }
  }
  Document d;
  try {
    d.id = j.at("id").get<std::string>();
    d.title = j.at("title").get<std::string>();
    d.abstract = j.at("abstract").get<std::string>();
    d.venue = j.at("venue").get<std::string>();
    if (!j.at("year").is_number_integer()) throw ValidationError("field 'year' must be an integer");
    d.year = j.at("year").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(e.what());
  }
  d.authors = detail::string_array(j, "authors");
  d.fields = detail::string_array(j, "fields");
  d.categories = detail::string_array(j, "categories");
  d.labels = detail::string_array(j, "labels");
  const auto& refs = j.at("references");
  if (!refs.is_array()) throw ValidationError("field 'references' must be an array");
  for (const auto& r : refs) {
    if (!r.is_object() || !r.contains("cited_id") || !r.contains("counts") || !r.at("cited_id").is_string())
      throw ValidationError("reference entries need 'cited_id' and 'counts'");
    const auto& c = r.at("counts");
    if (!c.is_object()) throw ValidationError("reference 'counts' must be an object");
    for (const char* key : {"intro", "methods", "results", "discussion"})
      if (!c.contains(key)) throw ValidationError(std::string("reference counts missing '") + key + "'");
    ReferenceEntry e;
    e.cited_id = r.at("cited_id").get<std::string>();
    e.counts = {detail::count_value(c, "intro"), detail::count_value(c, "methods"),
                detail::count_value(c, "results"), detail::count_value(c, "discussion")};
    d.references.push_back(std::move(e));
  }
  Corpus::check_document(d);
  return d;
}

inline Corpus read_corpus(std::istream& in, bool strict = false) {
  std::vector<Document> docs;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), lineno);
    }
    Document d;
    try {
      d = document_from_json(j, strict);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), lineno);
    }
    if (!ids.insert(d.id).second) throw ParseError("duplicate document id '" + d.id + "'", lineno);
    docs.push_back(std::move(d));
  }
  return Corpus(std::move(docs));
}

inline Corpus load_corpus(const std::string& path, bool strict = false) {
  auto in = open_input(path);
  return read_corpus(in, strict);
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& d : corpus.documents()) out << to_json(d).dump() << '\n';
}

inline void save_corpus(const std::string& path, const Corpus& corpus) {
  auto out = open_output(path);
  write_corpus(out, corpus);
}

// ---------------------------------------------------------------------------
// Validation report
// ---------------------------------------------------------------------------

struct UnresolvedReference {
  std::string citing_id;
  std::string cited_id;
  bool operator==(const UnresolvedReference&) const = default;
};

struct ValidationReport {
  std::vector<UnresolvedReference> unresolved;
  std::vector<std::string> empty_title;
  std::vector<std::string> empty_abstract;
  std::vector<std::string> count_anomalies;

  bool empty() const {
    return unresolved.empty() && empty_title.empty() && empty_abstract.empty() && count_anomalies.empty();
  }
};

inline ValidationReport validate_corpus(const Corpus& corpus) {
  ValidationReport rep;
  for (const auto& d : corpus.documents()) {
    if (d.title.empty()) rep.empty_title.push_back(d.id);
    if (d.abstract.empty()) rep.empty_abstract.push_back(d.id);
    for (const auto& r : d.references) {
      if (!corpus.contains(r.cited_id)) rep.unresolved.push_back({d.id, r.cited_id});
      if (r.counts.total() > 100)
        rep.count_anomalies.push_back(d.id + " -> " + r.cited_id + ": " + std::to_string(r.counts.total()) +
                                      " in-text citations");
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Synthetic corpora with planted topics
// ---------------------------------------------------------------------------

// Each topic splits into subtopics. A document cites `intra_refs` documents of
// its own subtopic with substantive counts (Results/Discussion heavy),
// `sibling_refs` documents from other subtopics of its topic and `noise_refs`
// documents of other topics with perfunctory counts (Introduction-only for
// noise, Introduction plus occasional Methods for siblings), and
// `external_refs` ids outside the corpus.
struct SyntheticSpec {
  int topics = 4;
  int docs_per_topic = 50;
  int subtopics_per_topic = 1;
  int vocab_per_topic = 30;
  int vocab_per_subtopic = 20;
  int shared_vocab = 1000;
  int title_tokens = 8;
  int abstract_tokens = 60;
  double topic_token_rate = 0.12;
  double subtopic_token_rate = 0.08;
  int intra_refs = 6;
  int sibling_refs = 0;
  int noise_refs = 3;
  int external_refs = 1;
  int authors_per_doc = 3;
  int author_pool_per_topic = 40;
  int broad_fields = 5;
  double cross_category_rate = 0.2;
  int first_year = 2000;
  int last_year = 2022;

  bool operator==(const SyntheticSpec&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SyntheticSpec, topics, docs_per_topic, subtopics_per_topic,
                                                vocab_per_topic, vocab_per_subtopic, shared_vocab, title_tokens,
                                                abstract_tokens, topic_token_rate, subtopic_token_rate, intra_refs,
                                                sibling_refs, noise_refs, external_refs, authors_per_doc,
                                                author_pool_per_topic, broad_fields, cross_category_rate, first_year,
                                                last_year)

inline std::string synthetic_topic_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "topic%02d", t);
  return buf;
}

inline Corpus generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
  const auto fail = [](const std::string& msg) { throw ValidationError("infeasible synthetic corpus settings: " + msg); };
  if (spec.topics < 1 || spec.docs_per_topic < 1) fail("need at least one topic and one document per topic");
  if (spec.subtopics_per_topic < 1 || spec.docs_per_topic % spec.subtopics_per_topic != 0)
    fail("docs_per_topic must be a positive multiple of subtopics_per_topic");
  if (spec.intra_refs < 0 || spec.sibling_refs < 0 || spec.noise_refs < 0 || spec.external_refs < 0)
    fail("reference counts must be nonnegative");
  const int per_sub = spec.docs_per_topic / spec.subtopics_per_topic;
  if (spec.intra_refs > per_sub - 1)
    fail("intra_refs " + std::to_string(spec.intra_refs) + " exceeds the " + std::to_string(per_sub - 1) +
         " other documents of a subtopic");
  if (spec.sibling_refs > spec.docs_per_topic - per_sub)
    fail("sibling_refs exceeds the documents in sibling subtopics");
  if (spec.noise_refs > (spec.topics - 1) * spec.docs_per_topic)
    fail("noise_refs exceeds the documents in other topics");
  if (spec.authors_per_doc < 0 || spec.authors_per_doc > spec.author_pool_per_topic)
    fail("authors_per_doc exceeds the topic author pool");
  if (spec.title_tokens + spec.abstract_tokens < 1) fail("documents need at least one token");
  if (spec.vocab_per_topic < 1 || spec.vocab_per_subtopic < 1 || spec.shared_vocab < 1)
    fail("vocabularies must be non-empty");
  if (spec.broad_fields < 1) fail("need at least one broad field");
  if (spec.first_year > spec.last_year || spec.first_year < 1900 || spec.last_year > 2100)
    fail("year range outside [1900, 2100]");

  std::mt19937_64 rng(seed);
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto chance = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };

  const int n = spec.topics * spec.docs_per_topic;
  auto doc_id = [](int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "doc%05d", i);
    return std::string(buf);
  };
  auto topic_of = [&](int i) { return i / spec.docs_per_topic; };
  auto subtopic_of = [&](int i) { return (i % spec.docs_per_topic) / per_sub; };

  // Draws `count` distinct members of [0, pool) excluding anything in `taken`.
  auto draw_distinct = [&](int count, int pool, const auto& map_index, std::unordered_set<int>& taken) {
    std::vector<int> out;
    int guard = 0;
    while (static_cast<int>(out.size()) < count) {
      const int j = map_index(uniform(0, pool - 1));
      if (taken.insert(j).second) out.push_back(j);
      if (++guard > 1000000) throw Error("synthetic reference draw did not converge");
    }
    return out;
  };

  auto word = [&](int t, int s) {
    std::string w;
    if (s >= 0 && chance(spec.subtopic_token_rate)) {
      w = "t" + std::to_string(t) + "s" + std::to_string(s) + "w" + std::to_string(uniform(0, spec.vocab_per_subtopic - 1));
    } else if (chance(spec.topic_token_rate)) {
      w = "t" + std::to_string(t) + "w" + std::to_string(uniform(0, spec.vocab_per_topic - 1));
    } else {
      w = "g" + std::to_string(uniform(0, spec.shared_vocab - 1));
    }
    return w;
  };
  auto text = [&](int t, int s, int len) {
    std::string out;
    for (int k = 0; k < len; ++k) {
      if (k) out += ' ';
      out += word(t, s);
    }
    return out;
  };

  std::vector<Document> docs;
  docs.reserve(n);
  int external_counter = 0;
  for (int i = 0; i < n; ++i) {
    const int t = topic_of(i);
    const int s = spec.subtopics_per_topic > 1 ? subtopic_of(i) : -1;
    Document d;
    d.id = doc_id(i);
    d.title = text(t, s, spec.title_tokens);
    d.abstract = text(t, s, spec.abstract_tokens);
    std::set<int> author_idx;
    while (static_cast<int>(author_idx.size()) < spec.authors_per_doc)
      author_idx.insert(uniform(0, spec.author_pool_per_topic - 1));
    for (int a : author_idx) d.authors.push_back("a" + std::to_string(t) + "_" + std::to_string(a));
    d.year = uniform(spec.first_year, spec.last_year);
    d.venue = "venue" + std::to_string(t) + "_" + std::to_string(uniform(0, 2));
    d.fields.push_back("field" + std::to_string(t % spec.broad_fields));
    d.categories.push_back(synthetic_topic_name(t));
    if (spec.topics > 1 && chance(spec.cross_category_rate)) {
      int other = uniform(0, spec.topics - 2);
      if (other >= t) ++other;
      d.categories.push_back(synthetic_topic_name(other));
    }
    d.labels.push_back(synthetic_topic_name(t));

    std::unordered_set<int> taken{i};
    const int topic_base = t * spec.docs_per_topic;
    const int sub_base = topic_base + (i % spec.docs_per_topic) / per_sub * per_sub;
    auto intra = draw_distinct(spec.intra_refs, per_sub, [&](int k) { return sub_base + k; }, taken);
    auto sibling = draw_distinct(
        spec.sibling_refs, spec.docs_per_topic - per_sub,
        [&](int k) {
          int j = topic_base + k;
          return j >= sub_base ? j + per_sub : j;
        },
        taken);
    auto noise = draw_distinct(
        spec.noise_refs, (spec.topics - 1) * spec.docs_per_topic,
        [&](int k) { return k >= topic_base ? k + spec.docs_per_topic : k; }, taken);

    for (int j : intra) {
      SectionCounts c{uniform(0, 1), uniform(0, 2), uniform(1, 3), uniform(0, 3)};
      d.references.push_back({doc_id(j), c});
    }
    for (int j : sibling) d.references.push_back({doc_id(j), {uniform(1, 2), uniform(0, 1), 0, 0}});
    for (int j : noise) d.references.push_back({doc_id(j), {uniform(1, 2), 0, 0, 0}});
    for (int e = 0; e < spec.external_refs; ++e)
      d.references.push_back({"ext" + std::to_string(external_counter++), {1, 0, 0, 0}});
    docs.push_back(std::move(d));
  }
  return Corpus(std::move(docs));
}

}  // namespace citemap
