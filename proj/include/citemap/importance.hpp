#pragma once

// Citation importance: per-pair feature extraction, entropy-weight
// estimation and the weighted-sum importance score.

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "citemap/common.hpp"
#include "citemap/corpus.hpp"
#include "citemap/embedding_matrix.hpp"

namespace citemap {

enum class Feature { intro, methods, results, discussion, self_citation, title_similarity };

inline constexpr std::array<Feature, 6> kAllFeatures = {Feature::intro,      Feature::methods,
                                                         Feature::results,    Feature::discussion,
                                                         Feature::self_citation, Feature::title_similarity};

inline const char* feature_name(Feature f) {
  switch (f) {
    case Feature::intro: return "intro";
    case Feature::methods: return "methods";
    case Feature::results: return "results";
    case Feature::discussion: return "discussion";
    case Feature::self_citation: return "self";
    case Feature::title_similarity: return "title_sim";
  }
  return "?";
}

inline Feature feature_from_name(const std::string& s) {
  for (Feature f : kAllFeatures)
    if (s == feature_name(f)) return f;
  throw ValidationError("unknown feature '" + s + "'");
}

struct FeatureSet {
  bool include_intro = true;
  bool include_methods = false;
  bool include_results = true;
  bool include_discussion = true;
  bool include_self_citation = true;
  bool include_title_similarity = false;

  bool enabled(Feature f) const {
    switch (f) {
      case Feature::intro: return include_intro;
      case Feature::methods: return include_methods;
      case Feature::results: return include_results;
      case Feature::discussion: return include_discussion;
      case Feature::self_citation: return include_self_citation;
      case Feature::title_similarity: return include_title_similarity;
    }
    return false;
  }

  std::vector<Feature> enabled_features() const {
    std::vector<Feature> out;
    for (Feature f : kAllFeatures)
      if (enabled(f)) out.push_back(f);
    return out;
  }

  void validate() const {
    if (enabled_features().empty()) throw ValidationError("feature set enables no features");
  }

  bool operator==(const FeatureSet&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FeatureSet, include_intro, include_methods, include_results,
                                                include_discussion, include_self_citation, include_title_similarity)

struct CitationFeatures {
  std::string citing_id;
  std::string cited_id;
  int f_intro = 0;
  int f_methods = 0;
  int f_results = 0;
  int f_discussion = 0;
  int s_self = 0;
  double t_sim = 0.0;
  bool resolved = true;

  double value(Feature f) const {
    switch (f) {
      case Feature::intro: return f_intro;
      case Feature::methods: return f_methods;
      case Feature::results: return f_results;
      case Feature::discussion: return f_discussion;
      case Feature::self_citation: return s_self;
      case Feature::title_similarity: return t_sim;
    }
    return 0.0;
  }
};

struct FeatureTable {
  FeatureSet features;
  std::vector<CitationFeatures> rows;
};

struct ExtractOptions {
  // Keep references whose cited id is outside the corpus (they inform the
  // weights but never become triplet members).
  bool include_external = true;
};

inline FeatureTable extract_citation_features(const Corpus& corpus, const FeatureSet& fs,
                                              const EmbeddingMatrix* base_vectors = nullptr,
                                              const ExtractOptions& opts = {}) {
  fs.validate();
  if (fs.include_title_similarity && !base_vectors)
    throw ValidationError("title similarity requested but no base vectors supplied");
  FeatureTable table{fs, {}};
  for (const auto& doc : corpus.documents()) {
    for (const auto& ref : doc.references) {
      const Document* cited = corpus.find(ref.cited_id);
      if (!cited && !opts.include_external) continue;
      CitationFeatures row;
      row.citing_id = doc.id;
      row.cited_id = ref.cited_id;
      row.f_intro = ref.counts.intro;
      row.f_methods = ref.counts.methods;
      row.f_results = ref.counts.results;
      row.f_discussion = ref.counts.discussion;
      row.resolved = cited != nullptr;
      row.s_self = cited && is_self_citation(doc, *cited) ? 1 : 0;
      if (fs.include_title_similarity && cited) {
        auto a = base_vectors->position(doc.id);
        auto b = base_vectors->position(cited->id);
        if (!a || !b)
          throw ValidationError("base vectors missing for citation " + doc.id + " -> " + cited->id);
        row.t_sim = cosine_similarity(base_vectors->row(*a), base_vectors->row(*b));
      }
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

enum class WeightMethod { entropy, uniform };

inline const char* weight_method_name(WeightMethod m) { return m == WeightMethod::entropy ? "entropy" : "uniform"; }

struct ImportanceWeights {
  WeightMethod method = WeightMethod::entropy;
  std::vector<std::pair<Feature, double>> weights;
  // Normalized Shannon entropy per feature; empty for uniform weights.
  std::vector<std::pair<Feature, double>> entropies;
  std::vector<std::string> warnings;

  double weight(Feature f) const {
    for (const auto& [g, w] : weights)
      if (g == f) return w;
    return 0.0;
  }
};

// w_j = (1 - e_j) / sum_k (1 - e_k).
inline std::vector<double> weights_from_entropies(const std::vector<double>& entropies) {
  std::vector<double> d(entropies.size());
  double total = 0.0;
  for (std::size_t j = 0; j < entropies.size(); ++j) {
    d[j] = std::max(0.0, 1.0 - entropies[j]);
    total += d[j];
  }
  if (!(total > 0.0)) throw ValidationError("every feature has maximal entropy; weights are undefined");
  for (double& v : d) v /= total;
  return d;
}

// Normalized entropy of one nonnegative column: -(1/ln n) sum p ln p with
// p_i = x_i / sum x and 0 ln 0 := 0. Returns 1 for an all-zero column.
inline double column_entropy(const std::vector<double>& column) {
  const std::size_t n = column.size();
  double sum = 0.0;
  for (double x : column) sum += x;
  if (sum <= 0.0) return 1.0;
  double h = 0.0;
  for (double x : column) {
    if (x <= 0.0) continue;
    const double p = x / sum;
    h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(n));
}

inline ImportanceWeights entropy_weights(const FeatureTable& table) {
  const std::size_t n = table.rows.size();
  if (n < 2) throw ValidationError("entropy weights need at least 2 rows, got " + std::to_string(n));
  const auto features = table.features.enabled_features();
  if (features.empty()) throw ValidationError("feature set enables no features");

  ImportanceWeights w;
  w.method = WeightMethod::entropy;
  std::vector<double> entropies;
  std::size_t zero_columns = 0;
  for (Feature f : features) {
    std::vector<double> col(n);
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = table.rows[i].value(f);
      lo = std::min(lo, col[i]);
    }
    const bool shiftable = f == Feature::self_citation || f == Feature::title_similarity;
    if (shiftable && lo < 0.0)
      for (double& x : col) x -= lo;
    if (!shiftable && lo < 0.0)
      throw ValidationError(std::string("negative values in count column '") + feature_name(f) + "'");
    bool all_zero = std::all_of(col.begin(), col.end(), [](double x) { return x == 0.0; });
    if (all_zero) {
      ++zero_columns;
      w.warnings.push_back(std::string("feature '") + feature_name(f) + "' is all zero; weight 0");
    }
    entropies.push_back(column_entropy(col));
  }
  if (zero_columns == features.size()) throw ValidationError("every enabled feature column is all zero");
  const auto ws = weights_from_entropies(entropies);
  for (std::size_t j = 0; j < features.size(); ++j) {
    w.weights.emplace_back(features[j], ws[j]);
    w.entropies.emplace_back(features[j], entropies[j]);
  }
  return w;
}

inline ImportanceWeights uniform_weights(const FeatureSet& fs) {
  fs.validate();
  const auto features = fs.enabled_features();
  ImportanceWeights w;
  w.method = WeightMethod::uniform;
  for (Feature f : features) w.weights.emplace_back(f, 1.0 / static_cast<double>(features.size()));
  return w;
}

// ---------------------------------------------------------------------------
// Scores
// ---------------------------------------------------------------------------

struct ScoredCitation {
  std::string citing_id;
  std::string cited_id;
  double importance = 0.0;

  bool operator==(const ScoredCitation&) const = default;
};

// importance = sum_j w_j x_j over the table's enabled features, raw counts.
inline std::vector<ScoredCitation> score_citations(const FeatureTable& table, const ImportanceWeights& w) {
  const auto features = table.features.enabled_features();
  if (features.size() != w.weights.size())
    throw ValidationError("weights cover " + std::to_string(w.weights.size()) + " features, table enables " +
                          std::to_string(features.size()));
  for (Feature f : features) {
    bool found = std::any_of(w.weights.begin(), w.weights.end(), [&](const auto& p) { return p.first == f; });
    if (!found) throw ValidationError(std::string("no weight for enabled feature '") + feature_name(f) + "'");
  }
  std::vector<ScoredCitation> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    double s = 0.0;
    for (const auto& [f, wf] : w.weights) s += wf * row.value(f);
    out.push_back({row.citing_id, row.cited_id, s});
  }
  return out;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& feature_table_header() {
  static const std::vector<std::string> h = {"citing_id", "cited_id", "intro",    "methods",  "results",
                                             "discussion", "self",    "title_sim", "resolved"};
  return h;
}

inline void write_feature_table(std::ostream& out, const FeatureTable& t, const std::string& comment = "") {
  if (!comment.empty()) out << '#' << comment << '\n';
  out << "#features=";
  bool first = true;
  for (Feature f : t.features.enabled_features()) {
    out << (first ? "" : ",") << feature_name(f);
    first = false;
  }
  out << '\n';
  const auto& h = feature_table_header();
  for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "\t" : "") << h[i];
  out << '\n';
  for (const auto& r : t.rows) {
    out << r.citing_id << '\t' << r.cited_id << '\t' << r.f_intro << '\t' << r.f_methods << '\t' << r.f_results
        << '\t' << r.f_discussion << '\t' << r.s_self << '\t' << format_double(r.t_sim) << '\t'
        << (r.resolved ? 1 : 0) << '\n';
  }
}

inline FeatureTable read_feature_table(std::istream& in) {
  std::vector<std::string> meta;
  auto rows = read_tsv(in, feature_table_header(), &meta);
  FeatureTable t;
  bool have_features = false;
  for (const auto& m : meta) {
    if (m.rfind("features=", 0) != 0) continue;
    t.features = FeatureSet{false, false, false, false, false, false};
    for (const auto& name : split(m.substr(9), ',')) {
      switch (feature_from_name(name)) {
        case Feature::intro: t.features.include_intro = true; break;
        case Feature::methods: t.features.include_methods = true; break;
        case Feature::results: t.features.include_results = true; break;
        case Feature::discussion: t.features.include_discussion = true; break;
        case Feature::self_citation: t.features.include_self_citation = true; break;
        case Feature::title_similarity: t.features.include_title_similarity = true; break;
      }
    }
    have_features = true;
  }
  if (!have_features) throw ParseError("feature table lacks '#features=' line");
  for (const auto& r : rows) {
    const auto& c = r.cells;
    CitationFeatures f;
    f.citing_id = c[0];
    f.cited_id = c[1];
    f.f_intro = static_cast<int>(parse_int(c[2], r.line));
    f.f_methods = static_cast<int>(parse_int(c[3], r.line));
    f.f_results = static_cast<int>(parse_int(c[4], r.line));
    f.f_discussion = static_cast<int>(parse_int(c[5], r.line));
    f.s_self = static_cast<int>(parse_int(c[6], r.line));
    f.t_sim = parse_double(c[7], r.line);
    f.resolved = parse_int(c[8], r.line) != 0;
    t.rows.push_back(std::move(f));
  }
  return t;
}

inline void write_scores(std::ostream& out, const std::vector<ScoredCitation>& scores, const std::string& comment = "") {
  if (!comment.empty()) out << '#' << comment << '\n';
  out << "citing_id\tcited_id\timportance\n";
  for (const auto& s : scores) out << s.citing_id << '\t' << s.cited_id << '\t' << format_double(s.importance) << '\n';
}

inline std::vector<ScoredCitation> read_scores(std::istream& in) {
  auto rows = read_tsv(in, {"citing_id", "cited_id", "importance"});
  std::vector<ScoredCitation> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({r.cells[0], r.cells[1], parse_double(r.cells[2], r.line)});
  return out;
}

inline nlohmann::json weights_to_json(const ImportanceWeights& w) {
  nlohmann::json j;
  j["method"] = weight_method_name(w.method);
  j["weights"] = nlohmann::json::object();
  for (const auto& [f, v] : w.weights) j["weights"][feature_name(f)] = v;
  if (!w.entropies.empty()) {
    j["entropies"] = nlohmann::json::object();
    for (const auto& [f, v] : w.entropies) j["entropies"][feature_name(f)] = v;
  }
  j["warnings"] = w.warnings;
  return j;
}

inline ImportanceWeights weights_from_json(const nlohmann::json& j) {
  ImportanceWeights w;
  const auto method = j.at("method").get<std::string>();
  if (method == "entropy")
    w.method = WeightMethod::entropy;
  else if (method == "uniform")
    w.method = WeightMethod::uniform;
  else
    throw ValidationError("unknown weight method '" + method + "'");
  // Canonical feature order regardless of key order in the object.
  for (Feature f : kAllFeatures) {
    if (j.at("weights").contains(feature_name(f))) w.weights.emplace_back(f, j["weights"][feature_name(f)].get<double>());
    if (j.contains("entropies") && j["entropies"].contains(feature_name(f)))
      w.entropies.emplace_back(f, j["entropies"][feature_name(f)].get<double>());
  }
  if (j.contains("warnings")) w.warnings = j["warnings"].get<std::vector<std::string>>();
  return w;
}

}  // namespace citemap
