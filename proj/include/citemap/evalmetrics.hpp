#pragma once

// Ranking and classification metrics over document embeddings: candidate
// ranking, MAP, nDCG, P@1, macro-F1 and a nearest-centroid classifier.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "citemap/common.hpp"
#include "citemap/corpus.hpp"
#include "citemap/embedding_matrix.hpp"
#include "citemap/importance.hpp"
#include "citemap/sampler.hpp"

namespace citemap {

struct RankingTask {
  std::string target;
  std::vector<std::string> candidates;
  std::set<std::string> relevant;

  void validate() const {
    if (relevant.empty()) throw ValidationError("ranking task '" + target + "' has no relevant candidates");
    std::set<std::string> cand(candidates.begin(), candidates.end());
    if (cand.size() != candidates.size()) throw ValidationError("ranking task '" + target + "' repeats a candidate");
    if (cand.count(target)) throw ValidationError("ranking task '" + target + "' lists its target as a candidate");
    for (const auto& r : relevant)
      if (!cand.count(r)) throw ValidationError("ranking task '" + target + "': relevant '" + r + "' not a candidate");
  }
};

struct RankedTask {
  std::vector<std::string> ranking;
  std::set<std::string> relevant;
};

enum class RankingSimilarity { cosine, negative_l2 };

// Candidates by descending similarity to the target, ties by ascending id.
inline std::vector<std::string> rank_candidates(const EmbeddingMatrix& matrix, const RankingTask& task,
                                                RankingSimilarity sim = RankingSimilarity::cosine) {
  const auto target = matrix.row(matrix.require(task.target));
  std::vector<std::pair<double, std::string>> scored;
  scored.reserve(task.candidates.size());
  for (const auto& c : task.candidates) {
    const auto v = matrix.row(matrix.require(c));
    const double s = sim == RankingSimilarity::cosine ? cosine_similarity(target, v) : -(target - v).norm();
    scored.emplace_back(s, c);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  out.reserve(scored.size());
  for (auto& [s, id] : scored) out.push_back(std::move(id));
  return out;
}

// (1/|rel|) * sum over relevant items at rank r of (relevant so far / r).
inline double average_precision(const std::vector<std::string>& ranking, const std::set<std::string>& relevant) {
  if (relevant.empty()) throw ValidationError("average precision needs a non-empty relevant set");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (!relevant.count(ranking[r])) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(relevant.size());
}

inline double map_score(const std::vector<RankedTask>& tasks) {
  if (tasks.empty()) throw ValidationError("MAP needs at least one task");
  double sum = 0.0;
  for (const auto& t : tasks) sum += average_precision(t.ranking, t.relevant);
  return sum / static_cast<double>(tasks.size());
}

// Binary gains, discount 1/log2(r + 1) from rank 1; the cutoff applies to
// both the ranking and the ideal ranking.
inline double ndcg(const std::vector<std::string>& ranking, const std::set<std::string>& relevant,
                   std::optional<std::size_t> cutoff = std::nullopt) {
  if (relevant.empty()) throw ValidationError("nDCG needs a non-empty relevant set");
  const std::size_t depth = std::min(ranking.size(), cutoff.value_or(ranking.size()));
  double dcg = 0.0;
  for (std::size_t r = 0; r < depth; ++r)
    if (relevant.count(ranking[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  const std::size_t ideal_hits = std::min(relevant.size(), cutoff.value_or(relevant.size()));
  double ideal = 0.0;
  for (std::size_t r = 0; r < ideal_hits; ++r) ideal += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / ideal;
}

inline double mean_ndcg(const std::vector<RankedTask>& tasks, std::optional<std::size_t> cutoff = std::nullopt) {
  if (tasks.empty()) throw ValidationError("nDCG needs at least one task");
  double sum = 0.0;
  for (const auto& t : tasks) sum += ndcg(t.ranking, t.relevant, cutoff);
  return sum / static_cast<double>(tasks.size());
}

inline double precision_at_1(const std::vector<RankedTask>& tasks) {
  if (tasks.empty()) throw ValidationError("P@1 needs at least one task");
  std::size_t hits = 0;
  for (const auto& t : tasks)
    if (!t.ranking.empty() && t.relevant.count(t.ranking.front())) ++hits;
  return static_cast<double>(hits) / static_cast<double>(tasks.size());
}

// Unweighted mean over gold classes of per-class F1 (0 when P + R = 0).
inline double macro_f1(const std::vector<std::string>& predictions, const std::vector<std::string>& gold) {
  if (predictions.size() != gold.size())
    throw ValidationError("macro_f1: " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(gold.size()) + " gold labels");
  if (gold.empty()) throw ValidationError("macro_f1: no gold labels");
  std::set<std::string> classes(gold.begin(), gold.end());
  double sum = 0.0;
  for (const auto& c : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const bool p = predictions[i] == c;
      const bool g = gold[i] == c;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
    const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    sum += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  return sum / static_cast<double>(classes.size());
}

struct LabeledItem {
  std::string id;
  std::string label;
};

struct LabeledSplit {
  std::vector<LabeledItem> train;
  std::vector<LabeledItem> test;
};

// Class centroids are mean train vectors; each test item takes the centroid
// with the highest cosine, ties by ascending class name.
inline std::vector<std::string> nearest_centroid_classify(const EmbeddingMatrix& matrix, const LabeledSplit& split) {
  std::map<std::string, std::pair<Vector, std::size_t>> centroids;
  for (const auto& item : split.train) {
    auto& [sum, count] = centroids[item.label];
    if (count == 0) sum = Vector::Zero(static_cast<Eigen::Index>(matrix.dim()));
    sum += matrix.row(matrix.require(item.id)).transpose();
    ++count;
  }
  for (const auto& item : split.test)
    if (!centroids.count(item.label))
      throw ValidationError("class '" + item.label + "' has no training items");
  std::vector<std::string> out;
  out.reserve(split.test.size());
  for (const auto& item : split.test) {
    const auto v = matrix.row(matrix.require(item.id));
    const std::string* best = nullptr;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (const auto& [label, c] : centroids) {
      const double s = cosine_similarity(v, (c.first / static_cast<double>(c.second)).transpose());
      if (s > best_sim) {
        best_sim = s;
        best = &label;
      }
    }
    out.push_back(*best);
  }
  return out;
}

// Seeded split of documents by their first label; classes with a single
// document go to train.
inline LabeledSplit label_split(const Corpus& corpus, double train_fraction, std::uint64_t seed) {
  std::map<std::string, std::vector<std::string>> by_class;
  for (const auto& d : corpus.documents())
    if (!d.labels.empty()) by_class[d.labels.front()].push_back(d.id);
  std::mt19937_64 rng(seed);
  LabeledSplit split;
  for (auto& [label, ids] : by_class) {
    std::shuffle(ids.begin(), ids.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) (i < n_train ? split.train : split.test).push_back({ids[i], label});
  }
  return split;
}

// Citation-derived ranking tasks. For each target with at least
// `n_relevant` resolvable references: the relevant set is its n_relevant
// most important references; its remaining references fill the candidate
// pool as non-relevant items, then uncited documents drawn at random until
// n_candidates. Targets without enough references are skipped.
inline std::vector<RankingTask> citation_ranking_tasks(const Corpus& corpus, const std::vector<ScoredCitation>& scored,
                                                       const std::vector<std::string>& targets, std::size_t n_relevant,
                                                       std::size_t n_candidates, std::uint64_t seed) {
  if (n_relevant < 1 || n_candidates <= n_relevant)
    throw ValidationError("citation tasks need 1 <= n_relevant < n_candidates");
  const auto ranked = ranked_references(corpus, scored);
  std::vector<RankingTask> tasks;
  for (const auto& target : targets) {
    const auto pos = corpus.position(target);
    if (!pos) throw ValidationError("unknown target '" + target + "'");
    const auto& refs = ranked[*pos];
    if (refs.size() < n_relevant) continue;
    std::unordered_set<std::string> cited;
    for (const auto& r : corpus[*pos].references) cited.insert(r.cited_id);
    std::size_t uncited = 0;
    for (const auto& d : corpus.documents()) uncited += d.id != target && !cited.count(d.id);
    if (uncited + std::min(refs.size(), n_candidates) < n_candidates) continue;

    RankingTask task;
    task.target = target;
    for (std::size_t i = 0; i < refs.size() && task.candidates.size() < n_candidates; ++i) {
      task.candidates.push_back(refs[i].cited_id);
      if (i < n_relevant) task.relevant.insert(refs[i].cited_id);
    }
    std::mt19937_64 rng(substream_seed(seed, target));
    std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
    std::unordered_set<std::string> used(task.candidates.begin(), task.candidates.end());
    while (task.candidates.size() < n_candidates) {
      const auto& id = corpus[pick(rng)].id;
      if (id == target || cited.count(id) || used.count(id)) continue;
      used.insert(id);
      task.candidates.push_back(id);
    }
    std::sort(task.candidates.begin(), task.candidates.end());
    tasks.push_back(std::move(task));
  }
  return tasks;
}

struct RankingReport {
  std::size_t tasks = 0;
  double map = 0.0;
  double ndcg = 0.0;
  double p_at_1 = 0.0;
};

inline RankingReport evaluate_ranking(const EmbeddingMatrix& matrix, const std::vector<RankingTask>& tasks,
                                      RankingSimilarity sim = RankingSimilarity::cosine) {
  std::vector<RankedTask> ranked(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    tasks[i].validate();
    ranked[i] = {rank_candidates(matrix, tasks[i], sim), tasks[i].relevant};
  });
  return {tasks.size(), map_score(ranked), mean_ndcg(ranked), precision_at_1(ranked)};
}

// ---------------------------------------------------------------------------
// Task files: "target<TAB>candidate<TAB>is_relevant", grouped by target.
// ---------------------------------------------------------------------------

inline void write_tasks(std::ostream& out, const std::vector<RankingTask>& tasks, const std::string& comment = "") {
  if (!comment.empty()) out << '#' << comment << '\n';
  out << "target\tcandidate\tis_relevant\n";
  for (const auto& t : tasks)
    for (const auto& c : t.candidates) out << t.target << '\t' << c << '\t' << (t.relevant.count(c) ? 1 : 0) << '\n';
}

inline std::vector<RankingTask> read_tasks(std::istream& in) {
  auto rows = read_tsv(in, {"target", "candidate", "is_relevant"});
  std::vector<RankingTask> tasks;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    auto [it, fresh] = index.emplace(r.cells[0], tasks.size());
    if (fresh) {
      tasks.push_back({r.cells[0], {}, {}});
    } else if (tasks.back().target != r.cells[0]) {
      throw ParseError("task rows for target '" + r.cells[0] + "' are not contiguous", r.line);
    }
    auto& t = tasks[it->second];
    t.candidates.push_back(r.cells[1]);
    const auto rel = parse_int(r.cells[2], r.line);
    if (rel != 0 && rel != 1) throw ParseError("is_relevant must be 0 or 1", r.line);
    if (rel) t.relevant.insert(r.cells[1]);
  }
  for (const auto& t : tasks) t.validate();
  return tasks;
}

}  // namespace citemap
