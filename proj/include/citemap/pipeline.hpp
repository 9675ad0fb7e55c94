#pragma once

// Stage-file pipeline: each stage reads upstream artifacts from a work
// directory, writes its own, and records hashes in manifest.json.
//
// Requires OpenSSL (libcrypto) for SHA-256.

#include <fcntl.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "citemap/common.hpp"
#include "citemap/communities.hpp"
#include "citemap/corpus.hpp"
#include "citemap/embedder.hpp"
#include "citemap/embedding_matrix.hpp"
#include "citemap/evalmetrics.hpp"
#include "citemap/importance.hpp"
#include "citemap/netgraph.hpp"
#include "citemap/sampler.hpp"
#include "citemap/scimap.hpp"

namespace citemap {

struct PipelineConfig {
  std::string corpus = "corpus.jsonl";
  std::string workdir = "work";
  std::uint64_t seed = 42;

  // scoring
  FeatureSet features;
  std::string weight_method = "entropy";
  bool include_external = true;

  // sampling; the sampler's own seed field is replaced by the global seed
  SamplerConfig sampler;
  std::string contradiction_scope = "global";
  double heldout_fraction = 0.2;

  // model
  BaseEncoderConfig base;
  int dim_out = 64;
  TrainConfig train;

  // graphs and clustering
  int knn_k = 20;
  std::size_t path_sample_size = 200;
  std::string quality_function = "cpm";
  double cluster_resolution = 0.1;
  int leiden_starts = 10;
  std::vector<double> resolutions = {0.02, 0.05, 0.1, 0.2, 0.4};

  // map
  std::string layout = "stress";
  std::string map_color = "field";
  std::string category_similarity;  // optional TSV; identity when empty

  // evaluation
  std::string eval_tasks;  // optional task file; citation-derived when empty
  int eval_relevant = 5;
  int eval_candidates = 30;

  // margin x H grid
  std::vector<double> sweep_margins = {0.0, 0.5, 1.0};
  std::vector<int> sweep_h = {0, 1, 2, 3, 4, 5};

  SyntheticSpec synthetic;

  void validate() const {
    features.validate();
    if (weight_method != "entropy" && weight_method != "uniform")
      throw ValidationError("weight_method must be 'entropy' or 'uniform'");
    sampler.validate();
    if (contradiction_scope != "global" && contradiction_scope != "same_anchor")
      throw ValidationError("contradiction_scope must be 'global' or 'same_anchor'");
    if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) throw ValidationError("heldout_fraction must lie in (0, 1)");
    base.validate();
    if (dim_out < 1) throw ValidationError("dim_out must be >= 1");
    train.validate();
    if (knn_k < 1) throw ValidationError("knn_k must be >= 1");
    if (path_sample_size < 1) throw ValidationError("path_sample_size must be >= 1");
    quality_function_from_name(quality_function);
    if (leiden_starts < 1) throw ValidationError("leiden_starts must be >= 1");
    if (resolutions.empty()) throw ValidationError("resolutions must be non-empty");
    layout_method_from_name(layout);
    map_color_from_name(map_color);
    if (eval_relevant < 1 || eval_candidates <= eval_relevant)
      throw ValidationError("evaluation needs 1 <= eval_relevant < eval_candidates");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PipelineConfig, corpus, workdir, seed, features, weight_method,
                                                include_external, sampler, contradiction_scope, heldout_fraction,
                                                base, dim_out, train, knn_k, path_sample_size, quality_function,
                                                cluster_resolution, leiden_starts, resolutions, layout, map_color,
                                                category_similarity, eval_tasks, eval_relevant, eval_candidates,
                                                sweep_margins, sweep_h, synthetic)

// Rejects keys the config does not define, at any nesting level.
inline void check_config_keys(const nlohmann::json& given, const nlohmann::json& known, const std::string& prefix = "") {
  if (!given.is_object()) return;
  for (const auto& [k, v] : given.items()) {
    if (!known.contains(k)) throw ValidationError("unknown config key '" + prefix + k + "'");
    if (v.is_object() && known[k].is_object()) check_config_keys(v, known[k], prefix + k + ".");
  }
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  check_config_keys(j, nlohmann::json(PipelineConfig{}));
  PipelineConfig cfg;
  try {
    cfg = j.get<PipelineConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// Relative paths in the config resolve against the config file's directory.
inline PipelineConfig load_config(const std::string& path) {
  auto in = open_input(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  auto cfg = config_from_json(j);
  const auto dir = std::filesystem::path(path).parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (dir / p).lexically_normal().string();
  };
  resolve(cfg.corpus);
  resolve(cfg.workdir);
  resolve(cfg.category_similarity);
  resolve(cfg.eval_tasks);
  return cfg;
}

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_, data, n) != 1) throw Error("SHA-256 update failed");
  }

  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, md, &len) != 1) throw Error("SHA-256 final failed");
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += digits[md[i] >> 4];
      out += digits[md[i] & 15];
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

inline std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

inline std::string sha256_file(const std::string& path) {
  auto in = open_input(path, std::ios::in | std::ios::binary);
  Sha256 h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

// Hash of the settings that shape artifact content. Paths are left out so
// the same settings in two work directories share a hash.
inline std::string config_hash(const PipelineConfig& cfg) {
  nlohmann::json j = cfg;
  j.erase("corpus");
  j.erase("workdir");
  j.erase("category_similarity");
  j.erase("eval_tasks");
  return sha256_hex(j.dump()).substr(0, 16);
}

// ---------------------------------------------------------------------------
// Work directory
// ---------------------------------------------------------------------------

enum class Stage { score, sample, train, embed, graph, stats, overlap, cluster, accuracy, map, eval, sweep };

inline const std::vector<std::pair<Stage, const char*>>& stage_names() {
  static const std::vector<std::pair<Stage, const char*>> names = {
      {Stage::score, "score"},     {Stage::sample, "sample"},     {Stage::train, "train"},
      {Stage::embed, "embed"},     {Stage::graph, "graph"},       {Stage::stats, "stats"},
      {Stage::overlap, "overlap"}, {Stage::cluster, "cluster"},   {Stage::accuracy, "accuracy"},
      {Stage::map, "map"},         {Stage::eval, "eval"},         {Stage::sweep, "sweep"}};
  return names;
}

inline const char* stage_name(Stage s) {
  for (const auto& [st, name] : stage_names())
    if (st == s) return name;
  return "?";
}

inline Stage stage_from_name(const std::string& s) {
  for (const auto& [st, name] : stage_names())
    if (s == name) return st;
  throw ValidationError("unknown stage '" + s + "'");
}

// The ten stages of a full run, in dependency order.
inline const std::vector<Stage>& pipeline_stages() {
  static const std::vector<Stage> stages = {Stage::score, Stage::sample,  Stage::train,    Stage::embed,
                                            Stage::graph, Stage::stats,   Stage::cluster,  Stage::accuracy,
                                            Stage::map,   Stage::eval};
  return stages;
}

namespace artifact {
inline constexpr const char* features = "features.tsv";
inline constexpr const char* weights = "weights.json";
inline constexpr const char* scores = "scores.tsv";
inline constexpr const char* triplets = "triplets.tsv";
inline constexpr const char* train_triplets = "train_triplets.tsv";
inline constexpr const char* validation_triplets = "validation_triplets.tsv";
inline constexpr const char* heldout = "heldout.tsv";
inline constexpr const char* model = "model.json";
inline constexpr const char* history = "history.tsv";
inline constexpr const char* embeddings = "embeddings.tsv";
inline constexpr const char* knn_edges = "knn_edges.tsv";
inline constexpr const char* citation_edges = "citation_edges.tsv";
inline constexpr const char* stats = "stats.tsv";
inline constexpr const char* overlap = "overlap.tsv";
inline constexpr const char* partition = "partition.tsv";
inline constexpr const char* accuracy = "accuracy.tsv";
inline constexpr const char* relative = "relative.tsv";
inline constexpr const char* map = "map.tsv";
inline constexpr const char* map_svg = "map.tsv.svg";
inline constexpr const char* tasks = "tasks.tsv";
inline constexpr const char* eval = "eval.tsv";
inline constexpr const char* sweep = "sweep.tsv";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* lock = ".citemap.lock";
}  // namespace artifact

// Exclusive per-workdir lock held for the lifetime of the object.
class WorkdirLock {
 public:
  explicit WorkdirLock(const std::string& workdir) : path_((std::filesystem::path(workdir) / artifact::lock).string()) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) throw Error("work directory is locked by another run (" + path_ + ")");
    const std::string pid = std::to_string(::getpid()) + "\n";
    if (::write(fd_, pid.data(), pid.size()) < 0) {
      // the pid is informational only
    }
  }
  ~WorkdirLock() {
    ::close(fd_);
    std::remove(path_.c_str());
  }
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  std::string path_;
  int fd_ = -1;
};

// ---------------------------------------------------------------------------
// In-memory building blocks shared by the stages and the sweep
// ---------------------------------------------------------------------------

inline std::uint64_t stage_seed(const PipelineConfig& cfg, std::string_view purpose) {
  return substream_seed(cfg.seed, purpose);
}

// Seeded fixed fraction of documents whose triplets are held out and which
// serve as evaluation targets; independent of K and H so every sweep cell
// sees the same held-out set.
inline std::vector<std::string> held_out_documents(const Corpus& corpus, double fraction, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& d : corpus.documents()) ids.push_back(d.id);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
  ids.resize(std::min(n, ids.size()));
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline ImportanceWeights compute_weights(const FeatureTable& table, const PipelineConfig& cfg) {
  return cfg.weight_method == "entropy" ? entropy_weights(table) : uniform_weights(cfg.features);
}

struct ScoreResult {
  FeatureTable table;
  ImportanceWeights weights;
  std::vector<ScoredCitation> scores;
};

inline ScoreResult score_corpus(const Corpus& corpus, const PipelineConfig& cfg) {
  std::optional<EmbeddingMatrix> base;
  if (cfg.features.include_title_similarity) base = base_embeddings(corpus, cfg.base);
  ScoreResult r;
  r.table = extract_citation_features(corpus, cfg.features, base ? &*base : nullptr, {cfg.include_external});
  r.weights = compute_weights(r.table, cfg);
  r.scores = score_citations(r.table, r.weights);
  return r;
}

inline SamplerConfig sampler_config(const PipelineConfig& cfg, std::optional<int> h_override = std::nullopt) {
  SamplerConfig s = cfg.sampler;
  s.seed = stage_seed(cfg, "sample");
  if (h_override) s.h_hard = *h_override;
  return s;
}

inline TrainConfig train_config(const PipelineConfig& cfg, std::optional<double> margin_override = std::nullopt) {
  TrainConfig t = cfg.train;
  t.seed = stage_seed(cfg, "train");
  if (margin_override) t.margin = *margin_override;
  return t;
}

inline EmbeddingModel initial_model(const PipelineConfig& cfg) {
  return init_model(cfg.base, cfg.dim_out, stage_seed(cfg, "init"));
}

// Sample, drop contradictory triplets, and split off the held-out anchors.
inline TripletSplit prepare_triplets(const Corpus& corpus, const std::vector<ScoredCitation>& scores,
                                     const SamplerConfig& sampler, const std::string& scope,
                                     const std::vector<std::string>& held_out, TripletSet* all = nullptr) {
  auto ts = filter_contradictions(sample_triplets(corpus, scores, sampler),
                                  scope == "global" ? ContradictionScope::global_pairs : ContradictionScope::same_anchor);
  auto split = split_by_anchor_set(ts, {held_out.begin(), held_out.end()});
  if (split.train.empty()) throw ValidationError("no training triplets left after holding out anchors");
  if (all) *all = std::move(ts);
  return split;
}

inline std::vector<RankingTask> derived_tasks(const Corpus& corpus, const std::vector<ScoredCitation>& scores,
                                              const std::vector<std::string>& held_out, const PipelineConfig& cfg) {
  auto tasks = citation_ranking_tasks(corpus, scores, held_out, static_cast<std::size_t>(cfg.eval_relevant),
                                      static_cast<std::size_t>(cfg.eval_candidates), stage_seed(cfg, "tasks"));
  if (tasks.empty()) throw ValidationError("no held-out document has enough references for a ranking task");
  return tasks;
}

struct SweepRow {
  double margin = 0.0;
  int h = 0;
  std::size_t train_triplets = 0;
  std::size_t validation_triplets = 0;
  double final_train_loss = 0.0;
  double validation_satisfaction = 0.0;
  double validation_map = 0.0;
};

// One model per (margin, H) cell, evaluated on the held-out triplets of that
// cell and on a ranking task set shared by all cells.
inline std::vector<SweepRow> run_sweep(const Corpus& corpus, const std::vector<ScoredCitation>& scores,
                                       const std::vector<std::string>& held_out, const PipelineConfig& cfg,
                                       const std::vector<double>& margins, const std::vector<int>& h_values) {
  if (margins.empty() || h_values.empty()) throw ValidationError("sweep needs non-empty margin and H lists");
  const auto tasks = derived_tasks(corpus, scores, held_out, cfg);
  const auto init = initial_model(cfg);
  std::vector<SweepRow> rows;
  for (int h : h_values) {
    const auto split = prepare_triplets(corpus, scores, sampler_config(cfg, h), cfg.contradiction_scope, held_out);
    for (double m : margins) {
      const auto res = train(init, split.train, corpus, train_config(cfg, m));
      const auto emb = embed_corpus(corpus, res.model);
      SweepRow row;
      row.margin = m;
      row.h = h;
      row.train_triplets = split.train.size();
      row.validation_triplets = split.validation.size();
      row.final_train_loss = res.history.train_loss.empty() ? 0.0 : res.history.train_loss.back();
      row.validation_satisfaction = split.validation.empty() ? 0.0 : triplet_satisfaction(emb, split.validation);
      row.validation_map = evaluate_ranking(emb, tasks).map;
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_sweep(std::ostream& out, const std::vector<SweepRow>& rows, const std::string& comment = "") {
  if (!comment.empty()) out << '#' << comment << '\n';
  out << "margin\th\ttrain_triplets\tvalidation_triplets\tfinal_train_loss\tvalidation_satisfaction\tvalidation_map\n";
  for (const auto& r : rows)
    out << format_double(r.margin) << '\t' << r.h << '\t' << r.train_triplets << '\t' << r.validation_triplets << '\t'
        << format_double(r.final_train_loss) << '\t' << format_double(r.validation_satisfaction) << '\t'
        << format_double(r.validation_map) << '\n';
}

inline std::vector<SweepRow> read_sweep(std::istream& in) {
  auto rows = read_tsv(in, {"margin", "h", "train_triplets", "validation_triplets", "final_train_loss",
                            "validation_satisfaction", "validation_map"});
  std::vector<SweepRow> out;
  for (const auto& r : rows)
    out.push_back({parse_double(r.cells[0], r.line), static_cast<int>(parse_int(r.cells[1], r.line)),
                   static_cast<std::size_t>(parse_int(r.cells[2], r.line)),
                   static_cast<std::size_t>(parse_int(r.cells[3], r.line)), parse_double(r.cells[4], r.line),
                   parse_double(r.cells[5], r.line), parse_double(r.cells[6], r.line)});
  return out;
}

inline CategorySimilarity load_category_similarity(const std::string& path) {
  auto in = open_input(path);
  std::vector<std::string> header;
  std::vector<std::vector<double>> values;
  std::vector<std::string> names;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line, '\t');
    if (header.empty()) {
      if (cells.size() < 2) throw ParseError("category similarity header needs at least one category", lineno);
      header.assign(cells.begin() + 1, cells.end());
      continue;
    }
    if (cells.size() != header.size() + 1) throw ParseError("category similarity row has the wrong width", lineno);
    names.push_back(cells[0]);
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(parse_double(cells[c], lineno));
    values.push_back(std::move(row));
  }
  if (names != header) throw ValidationError("category similarity rows must match the header order");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(names.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i)
    for (std::size_t j = 0; j < names.size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i][j];
  return CategorySimilarity(names, m);
}

// ---------------------------------------------------------------------------
// Stage runner
// ---------------------------------------------------------------------------

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, bool strict = false)
      : cfg_(std::move(cfg)), strict_(strict), hash_(config_hash(cfg_)) {
    cfg_.validate();
  }

  const PipelineConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }

  std::string path(const std::string& name) const { return (std::filesystem::path(cfg_.workdir) / name).string(); }

  std::string header(Stage s) const {
    return std::string("stage=") + stage_name(s) + " config_hash=" + hash_ + " seed=" + std::to_string(cfg_.seed);
  }

  void run(Stage s) {
    std::filesystem::create_directories(cfg_.workdir);
    WorkdirLock lock(cfg_.workdir);
    inputs_.clear();
    outputs_.clear();
    switch (s) {
      case Stage::score: score(); break;
      case Stage::sample: sample(); break;
      case Stage::train: train_stage(); break;
      case Stage::embed: embed(); break;
      case Stage::graph: graph(); break;
      case Stage::stats: stats(); break;
      case Stage::overlap: overlap(); break;
      case Stage::cluster: cluster(); break;
      case Stage::accuracy: accuracy(); break;
      case Stage::map: map(); break;
      case Stage::eval: eval(); break;
      case Stage::sweep: sweep(cfg_.sweep_margins, cfg_.sweep_h); break;
    }
    record(s);
  }

  void run_all() {
    for (Stage s : pipeline_stages()) run(s);
  }

  // The grid of the sweep stage with explicit lists.
  void run_sweep_grid(const std::vector<double>& margins, const std::vector<int>& h_values) {
    std::filesystem::create_directories(cfg_.workdir);
    WorkdirLock lock(cfg_.workdir);
    inputs_.clear();
    outputs_.clear();
    sweep(margins, h_values);
    record(Stage::sweep);
  }

 private:
  // ---- artifact access -----------------------------------------------------

  std::string input(const std::string& file) {
    if (!std::filesystem::exists(file)) throw MissingArtifactError(file);
    // Work-directory artifacts are keyed by file name, like the outputs.
    const auto fp = std::filesystem::path(file);
    const bool local = fp.parent_path() == std::filesystem::path(cfg_.workdir);
    inputs_[local ? fp.filename().string() : file] = sha256_file(file);
    return file;
  }
  std::string work_input(const char* name) { return input(path(name)); }

  std::ofstream output(const char* name) {
    outputs_.push_back(name);
    return open_output(path(name));
  }

  const Corpus& corpus() {
    if (!corpus_) corpus_ = load_corpus(input(cfg_.corpus), strict_);
    else input(cfg_.corpus);
    return *corpus_;
  }

  std::vector<ScoredCitation> scores() {
    auto in = open_input(work_input(artifact::scores));
    return read_scores(in);
  }

  std::vector<std::string> held_out() {
    auto in = open_input(work_input(artifact::heldout));
    std::vector<std::string> ids;
    for (const auto& r : read_tsv(in, {"doc_id"})) ids.push_back(r.cells[0]);
    return ids;
  }

  TripletSet triplets(const char* name) {
    auto in = open_input(work_input(name));
    return read_triplets(in);
  }

  EmbeddingMatrix embeddings() { return load_embeddings(work_input(artifact::embeddings)); }

  Graph edges(const char* name, const Corpus& c) {
    std::vector<std::string> ids;
    for (const auto& d : c.documents()) ids.push_back(d.id);
    auto in = open_input(work_input(name));
    return read_edge_list(in, &ids);
  }

  CategorySimilarity category_similarity(const Corpus& c) {
    if (cfg_.category_similarity.empty()) return CategorySimilarity::identity(corpus_categories(c));
    input(cfg_.category_similarity);
    return load_category_similarity(cfg_.category_similarity);
  }

  // ---- stages ------------------------------------------------------------

  void score() {
    const auto& c = corpus();
    const auto r = score_corpus(c, cfg_);
    {
      auto out = output(artifact::features);
      write_feature_table(out, r.table, header(Stage::score));
    }
    {
      nlohmann::json j{{"header", header_json(Stage::score)}, {"weights", weights_to_json(r.weights)}};
      auto out = output(artifact::weights);
      out << j.dump(2) << '\n';
    }
    auto out = output(artifact::scores);
    write_scores(out, r.scores, header(Stage::score));
  }

  void sample() {
    const auto& c = corpus();
    const auto sc = scores();
    const auto ho = held_out_documents(c, cfg_.heldout_fraction, stage_seed(cfg_, "heldout"));
    TripletSet all;
    const auto split = prepare_triplets(c, sc, sampler_config(cfg_), cfg_.contradiction_scope, ho, &all);
    {
      auto out = output(artifact::triplets);
      write_triplets(out, all, header(Stage::sample));
    }
    {
      auto out = output(artifact::train_triplets);
      write_triplets(out, split.train, header(Stage::sample));
    }
    {
      auto out = output(artifact::validation_triplets);
      write_triplets(out, split.validation, header(Stage::sample));
    }
    auto out = output(artifact::heldout);
    out << '#' << header(Stage::sample) << "\ndoc_id\n";
    for (const auto& id : ho) out << id << '\n';
  }

  void train_stage() {
    const auto& c = corpus();
    const auto tr = triplets(artifact::train_triplets);
    const auto va = triplets(artifact::validation_triplets);
    const auto res = train(initial_model(cfg_), tr, c, train_config(cfg_), va.empty() ? nullptr : &va);
    {
      nlohmann::json j{{"header", header_json(Stage::train)}, {"model", model_to_json(res.model)}};
      auto out = output(artifact::model);
      out << j.dump() << '\n';
    }
    auto out = output(artifact::history);
    write_history(out, res.history, header(Stage::train));
  }

  EmbeddingModel model() {
    auto in = open_input(work_input(artifact::model));
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string(artifact::model) + ": " + e.what());
    }
    return model_from_json(j.at("model"));
  }

  void embed() {
    const auto& c = corpus();
    const auto emb = embed_corpus(c, model());
    auto out = output(artifact::embeddings);
    write_embeddings_text(out, emb, header(Stage::embed));
  }

  void graph() {
    const auto& c = corpus();
    const auto emb = embeddings();
    {
      auto out = output(artifact::knn_edges);
      write_edge_list(out, build_knn_graph(emb, static_cast<std::size_t>(cfg_.knn_k)), header(Stage::graph));
    }
    auto out = output(artifact::citation_edges);
    write_edge_list(out, build_citation_graph(c), header(Stage::graph));
  }

  void stats() {
    const auto& c = corpus();
    const auto knn = edges(artifact::knn_edges, c);
    const auto cit = edges(artifact::citation_edges, c);
    const auto seed = stage_seed(cfg_, "stats");
    std::vector<std::pair<std::string, GraphStats>> table;
    table.emplace_back("knn", graph_statistics(knn, cfg_.path_sample_size, seed));
    table.emplace_back("knn_random",
                       graph_statistics(random_graph_like(knn, substream_seed(seed, "knn")), cfg_.path_sample_size, seed));
    table.emplace_back("citation", graph_statistics(cit, cfg_.path_sample_size, seed));
    table.emplace_back("citation_random", graph_statistics(random_graph_like(cit, substream_seed(seed, "citation")),
                                                           cfg_.path_sample_size, seed));
    auto out = output(artifact::stats);
    write_stats_report(out, table, header(Stage::stats));
  }

  void overlap() {
    const auto& c = corpus();
    const auto ov = edge_overlap(edges(artifact::knn_edges, c), edges(artifact::citation_edges, c));
    auto out = output(artifact::overlap);
    out << '#' << header(Stage::overlap) << "\nmetric\tvalue\n";
    out << "shared\t" << ov.shared << "\nonly_knn\t" << ov.only_g1 << "\nonly_citation\t" << ov.only_g2 << '\n';
  }

  LeidenOptions leiden_options() const {
    LeidenOptions o;
    o.random_starts = cfg_.leiden_starts;
    return o;
  }

  void cluster() {
    const auto& c = corpus();
    const auto p = leiden(edges(artifact::knn_edges, c), quality_function_from_name(cfg_.quality_function),
                          cfg_.cluster_resolution, stage_seed(cfg_, "cluster"), leiden_options());
    auto out = output(artifact::partition);
    write_partition(out, p, header(Stage::cluster));
  }

  void accuracy() {
    const auto& c = corpus();
    const auto qf = quality_function_from_name(cfg_.quality_function);
    const auto seed = stage_seed(cfg_, "cluster");
    auto table = granularity_sweep(edges(artifact::knn_edges, c), c, qf, cfg_.resolutions, seed, "embedding",
                                   leiden_options());
    auto cit = granularity_sweep(edges(artifact::citation_edges, c), c, qf, cfg_.resolutions, seed, "citation",
                                 leiden_options());
    table.insert(table.end(), cit.begin(), cit.end());
    {
      auto out = output(artifact::accuracy);
      write_accuracy_table(out, table, header(Stage::accuracy));
    }
    auto out = output(artifact::relative);
    out << '#' << header(Stage::accuracy) << "\nmethod\trelative_accuracy\n";
    for (const auto& [method, v] : relative_accuracy(table)) out << method << '\t' << format_double(v) << '\n';
  }

  void map() {
    const auto& c = corpus();
    Partition p;
    {
      auto in = open_input(work_input(artifact::partition));
      p = read_partition(in);
    }
    const auto emb = embeddings();
    auto topics = topic_vectors(p, emb);
    const auto layout = layout_2d(topics, layout_method_from_name(cfg_.layout), stage_seed(cfg_, "map"));
    apply_layout(topics, layout);
    const auto div = overlay_interdisciplinarity(p, c, category_similarity(c), corpus_categories(c).size());
    assign_overlays(topics, overlay_field(p, c), div, overlay_mean_year(p, c));
    {
      auto out = output(artifact::map);
      write_map_table(out, topics, header(Stage::map));
    }
    std::ostringstream svg;
    write_map_svg(svg, topics, map_color_from_name(cfg_.map_color));
    auto text = svg.str();
    const auto eol = text.find('\n') + 1;
    text.insert(eol, "<!-- " + header(Stage::map) + " -->\n");
    auto out = output(artifact::map_svg);
    out << text;
  }

  void eval() {
    const auto& c = corpus();
    std::vector<RankingTask> tasks;
    if (!cfg_.eval_tasks.empty()) {
      auto in = open_input(input(cfg_.eval_tasks));
      tasks = read_tasks(in);
    } else {
      tasks = derived_tasks(c, scores(), held_out(), cfg_);
      auto out = output(artifact::tasks);
      write_tasks(out, tasks, header(Stage::eval));
    }
    const auto validation = triplets(artifact::validation_triplets);
    const auto trained = embeddings();
    const auto untrained = embed_corpus(c, initial_model(cfg_));
    const auto split = label_split(c, 1.0 - cfg_.heldout_fraction, stage_seed(cfg_, "labels"));

    auto report = [&](const EmbeddingMatrix& m) {
      std::map<std::string, std::string> r;
      const auto rank = evaluate_ranking(m, tasks);
      r["tasks"] = std::to_string(rank.tasks);
      r["map"] = format_double(rank.map);
      r["ndcg"] = format_double(rank.ndcg);
      r["p_at_1"] = format_double(rank.p_at_1);
      r["validation_satisfaction"] =
          validation.empty() ? std::string("nan") : format_double(triplet_satisfaction(m, validation));
      if (!split.test.empty()) {
        std::vector<std::string> gold;
        for (const auto& item : split.test) gold.push_back(item.label);
        r["macro_f1"] = format_double(macro_f1(nearest_centroid_classify(m, split), gold));
      }
      return r;
    };
    const auto a = report(untrained);
    const auto b = report(trained);
    auto out = output(artifact::eval);
    out << '#' << header(Stage::eval) << "\nmetric\tuntrained\ttrained\n";
    for (const char* k : {"tasks", "map", "ndcg", "p_at_1", "validation_satisfaction", "macro_f1"})
      if (a.count(k)) out << k << '\t' << a.at(k) << '\t' << b.at(k) << '\n';
  }

  void sweep(const std::vector<double>& margins, const std::vector<int>& h_values) {
    const auto& c = corpus();
    const auto rows = run_sweep(c, scores(), held_out(), cfg_, margins, h_values);
    auto out = output(artifact::sweep);
    write_sweep(out, rows, header(Stage::sweep));
  }

  // ---- manifest ----------------------------------------------------------

  nlohmann::json header_json(Stage s) const {
    return {{"stage", stage_name(s)}, {"config_hash", hash_}, {"seed", cfg_.seed}};
  }

  static std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
  }

  void record(Stage s) {
    const auto mpath = path(artifact::manifest);
    nlohmann::json manifest = nlohmann::json::object();
    if (std::filesystem::exists(mpath)) {
      auto in = open_input(mpath);
      try {
        manifest = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error&) {
        manifest = nlohmann::json::object();
      }
    }
    nlohmann::json entry;
    entry["config_hash"] = hash_;
    entry["seed"] = cfg_.seed;
    entry["inputs"] = nlohmann::json::object();
    for (const auto& [file, h] : inputs_) entry["inputs"][file] = h;
    entry["outputs"] = nlohmann::json::object();
    for (const auto& name : outputs_) entry["outputs"][name] = sha256_file(path(name));
    entry["finished_at"] = timestamp();
    manifest["stages"][stage_name(s)] = entry;
    auto out = open_output(mpath);
    out << manifest.dump(2) << '\n';
  }

  PipelineConfig cfg_;
  bool strict_ = false;
  std::string hash_;
  std::optional<Corpus> corpus_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
};

}  // namespace citemap
