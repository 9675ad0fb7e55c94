#pragma once

// Importance-aware triplet sampling with hard negatives, the contradiction
// filter and the anchor-level train/validation split.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "citemap/common.hpp"
#include "citemap/corpus.hpp"
#include "citemap/importance.hpp"

namespace citemap {

enum class NegativeKind { hard, easy };

inline const char* negative_kind_name(NegativeKind k) { return k == NegativeKind::hard ? "hard" : "easy"; }

struct Triplet {
  std::string anchor_id;
  std::string positive_id;
  std::string negative_id;
  NegativeKind kind = NegativeKind::easy;

  bool operator==(const Triplet&) const = default;
};

using TripletSet = std::vector<Triplet>;

struct SamplerConfig {
  long long n_total = 10000;
  int k_per_anchor = 5;
  int h_hard = 2;
  std::uint64_t seed = 42;

  void validate() const {
    if (n_total < 1) throw ValidationError("sampler: N must be >= 1");
    if (k_per_anchor < 1) throw ValidationError("sampler: K must be >= 1");
    if (h_hard < 0 || h_hard > k_per_anchor) throw ValidationError("sampler: H must lie in [0, K]");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SamplerConfig, n_total, k_per_anchor, h_hard, seed)

// A resolvable reference of an anchor with its importance.
struct RankedReference {
  std::string cited_id;
  double importance = 0.0;
};

// Importance descending, ties by ascending cited id.
inline void sort_by_importance(std::vector<RankedReference>& refs) {
  std::sort(refs.begin(), refs.end(), [](const RankedReference& a, const RankedReference& b) {
    if (a.importance != b.importance) return a.importance > b.importance;
    return a.cited_id < b.cited_id;
  });
}

// Resolvable, scored references per corpus position. Throws if a resolvable
// reference has no score.
inline std::vector<std::vector<RankedReference>> ranked_references(const Corpus& corpus,
                                                                   const std::vector<ScoredCitation>& scored) {
  std::unordered_map<std::string, std::unordered_map<std::string, double>> lookup;
  for (const auto& s : scored) lookup[s.citing_id][s.cited_id] = s.importance;
  std::vector<std::vector<RankedReference>> out(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& doc = corpus[i];
    auto found = lookup.find(doc.id);
    for (const auto& ref : doc.references) {
      if (!corpus.contains(ref.cited_id)) continue;
      if (found == lookup.end() || !found->second.count(ref.cited_id))
        throw ValidationError("no importance score for citation " + doc.id + " -> " + ref.cited_id);
      out[i].push_back({ref.cited_id, found->second.at(ref.cited_id)});
    }
    sort_by_importance(out[i]);
  }
  return out;
}

// One K-block for a single anchor. `refs` must already be sorted by
// importance and hold at least K + min(H, K) entries.
inline TripletSet sample_anchor_block(const Corpus& corpus, const Document& anchor,
                                      std::vector<RankedReference> refs, const SamplerConfig& cfg) {
  std::unordered_set<std::string> original;
  for (const auto& r : anchor.references) original.insert(r.cited_id);
  std::size_t excluded = 1;
  for (const auto& id : original)
    if (corpus.contains(id)) ++excluded;
  if (excluded >= corpus.size()) throw ValidationError("corpus too small to supply easy negatives for '" + anchor.id + "'");

  std::mt19937_64 rng(substream_seed(cfg.seed, anchor.id));
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);

  TripletSet block;
  std::size_t front = 0;
  std::size_t back = refs.size();
  int hard = 0;
  for (int i = 0; i < cfg.k_per_anchor; ++i) {
    const std::string& positive = refs[front++].cited_id;
    if (hard < cfg.h_hard) {
      const std::string& negative = refs[--back].cited_id;
      ++hard;
      block.push_back({anchor.id, positive, negative, NegativeKind::hard});
    } else {
      const Document* neg = nullptr;
      do {
        neg = &corpus[pick(rng)];
      } while (neg->id == anchor.id || original.count(neg->id));
      block.push_back({anchor.id, positive, neg->id, NegativeKind::easy});
    }
  }
  return block;
}

// Anchors are drawn without replacement in seeded random order; each
// contributes one block of K triplets until at least N are collected.
inline TripletSet sample_triplets(const Corpus& corpus, const std::vector<ScoredCitation>& scored,
                                  const SamplerConfig& cfg) {
  cfg.validate();
  auto ranked = ranked_references(corpus, scored);
  const std::size_t need = static_cast<std::size_t>(cfg.k_per_anchor + std::min(cfg.h_hard, cfg.k_per_anchor));
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (ranked[i].size() >= need) eligible.push_back(i);
  if (eligible.empty())
    throw ValidationError("no eligible anchors: none has " + std::to_string(need) + " resolvable references");

  std::mt19937_64 rng(cfg.seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);

  const auto k = static_cast<long long>(cfg.k_per_anchor);
  const auto anchors_needed = static_cast<std::size_t>((cfg.n_total + k - 1) / k);
  if (anchors_needed > eligible.size())
    throw ValidationError("requested " + std::to_string(cfg.n_total) + " triplets but only " +
                          std::to_string(eligible.size()) + " eligible anchors (" +
                          std::to_string(eligible.size() * cfg.k_per_anchor) + " triplets) exist");

  std::vector<TripletSet> blocks(anchors_needed);
  parallel_for(anchors_needed, [&](std::size_t b) {
    const std::size_t pos = eligible[b];
    blocks[b] = sample_anchor_block(corpus, corpus[pos], ranked[pos], cfg);
  });
  TripletSet out;
  out.reserve(anchors_needed * cfg.k_per_anchor);
  for (auto& blk : blocks) out.insert(out.end(), blk.begin(), blk.end());
  return out;
}

enum class ContradictionScope { global_pairs, same_anchor };

// Removes every triplet that uses a document pair which appears elsewhere
// with the opposite role (positive vs negative). Order is preserved.
inline TripletSet filter_contradictions(const TripletSet& ts,
                                        ContradictionScope scope = ContradictionScope::global_pairs) {
  using Key = std::pair<std::string, std::string>;
  auto key = [&](const std::string& anchor, const std::string& other) -> Key {
    if (scope == ContradictionScope::same_anchor) return {anchor, other};
    return anchor < other ? Key{anchor, other} : Key{other, anchor};
  };
  std::map<Key, unsigned> roles;  // bit 0: positive, bit 1: negative
  for (const auto& t : ts) {
    roles[key(t.anchor_id, t.positive_id)] |= 1u;
    roles[key(t.anchor_id, t.negative_id)] |= 2u;
  }
  TripletSet out;
  out.reserve(ts.size());
  for (const auto& t : ts) {
    if (roles[key(t.anchor_id, t.positive_id)] == 3u || roles[key(t.anchor_id, t.negative_id)] == 3u) continue;
    out.push_back(t);
  }
  return out;
}

struct TripletSplit {
  TripletSet train;
  TripletSet validation;
};

// Seeded anchor-level split: all triplets of an anchor land on the same side.
inline TripletSplit split_train_validation(const TripletSet& ts, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train fraction must lie in (0, 1)");
  std::vector<std::string> anchors;
  std::unordered_set<std::string> seen;
  for (const auto& t : ts)
    if (seen.insert(t.anchor_id).second) anchors.push_back(t.anchor_id);
  if (anchors.size() < 2) throw ValidationError("split needs at least 2 distinct anchors");
  std::mt19937_64 rng(seed);
  std::shuffle(anchors.begin(), anchors.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(anchors.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, anchors.size() - 1);
  std::unordered_set<std::string> train_anchors(anchors.begin(), anchors.begin() + static_cast<std::ptrdiff_t>(n_train));
  TripletSplit split;
  for (const auto& t : ts) (train_anchors.count(t.anchor_id) ? split.train : split.validation).push_back(t);
  return split;
}

// Splits by membership of the anchor in `held_out`.
inline TripletSplit split_by_anchor_set(const TripletSet& ts, const std::unordered_set<std::string>& held_out) {
  TripletSplit split;
  for (const auto& t : ts) (held_out.count(t.anchor_id) ? split.validation : split.train).push_back(t);
  return split;
}

inline void write_triplets(std::ostream& out, const TripletSet& ts, const std::string& comment = "") {
  if (!comment.empty()) out << '#' << comment << '\n';
  out << "anchor_id\tpositive_id\tnegative_id\tkind\n";
  for (const auto& t : ts)
    out << t.anchor_id << '\t' << t.positive_id << '\t' << t.negative_id << '\t' << negative_kind_name(t.kind) << '\n';
}

inline TripletSet read_triplets(std::istream& in) {
  auto rows = read_tsv(in, {"anchor_id", "positive_id", "negative_id", "kind"});
  TripletSet ts;
  ts.reserve(rows.size());
  for (const auto& r : rows) {
    NegativeKind kind;
    if (r.cells[3] == "hard")
      kind = NegativeKind::hard;
    else if (r.cells[3] == "easy")
      kind = NegativeKind::easy;
    else
      throw ParseError("unknown triplet kind '" + r.cells[3] + "'", r.line);
    ts.push_back({r.cells[0], r.cells[1], r.cells[2], kind});
  }
  return ts;
}

}  // namespace citemap
