#pragma once

// Document vectors: a deterministic hashed-token mean-pooling base encoder
// followed by a linear projection head trained with the triplet margin loss.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "citemap/common.hpp"
#include "citemap/corpus.hpp"
#include "citemap/embedding_matrix.hpp"
#include "citemap/sampler.hpp"

namespace citemap {

struct BaseEncoderConfig {
  int dim_base = 256;
  std::uint64_t hash_seed = 1;
  int max_tokens = 512;

  void validate() const {
    if (dim_base < 2) throw ValidationError("dim_base must be >= 2");
    if (max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
  }
  bool operator==(const BaseEncoderConfig&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BaseEncoderConfig, dim_base, hash_seed, max_tokens)

// Lowercases ASCII letters and splits on anything that is not an ASCII
// letter/digit. Bytes >= 0x80 are kept inside tokens so UTF-8 sequences stay
// intact.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(c >= 0x80 ? c : std::tolower(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// Title then abstract, truncated at max_tokens.
inline std::vector<std::string> document_tokens(const Document& doc, int max_tokens) {
  auto tokens = tokenize(doc.title);
  auto rest = tokenize(doc.abstract);
  tokens.insert(tokens.end(), rest.begin(), rest.end());
  if (static_cast<int>(tokens.size()) > max_tokens) tokens.resize(static_cast<std::size_t>(max_tokens));
  return tokens;
}

// Pseudo-random unit vector for a token type, fixed by (hash_seed, token).
inline Vector token_vector(const std::string& token, const BaseEncoderConfig& cfg) {
  std::mt19937_64 rng(substream_seed(cfg.hash_seed, token));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(cfg.dim_base);
  for (int i = 0; i < cfg.dim_base; ++i) v[i] = normal(rng);
  return v / v.norm();
}

// Caches token vectors; not thread-safe.
class BaseEncoder {
 public:
  explicit BaseEncoder(BaseEncoderConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const BaseEncoderConfig& config() const { return cfg_; }

  Vector embed(const Document& doc) {
    const auto tokens = document_tokens(doc, cfg_.max_tokens);
    if (tokens.empty()) throw ValidationError("document '" + doc.id + "' has no tokens");
    Vector sum = Vector::Zero(cfg_.dim_base);
    for (const auto& t : tokens) sum += lookup(t);
    sum /= static_cast<double>(tokens.size());
    const double n = sum.norm();
    if (!(n > 0.0)) throw ValidationError("document '" + doc.id + "' pools to a zero vector");
    return sum / n;
  }

 private:
  const Vector& lookup(const std::string& token) {
    auto it = cache_.find(token);
    if (it == cache_.end()) it = cache_.emplace(token, token_vector(token, cfg_)).first;
    return it->second;
  }

  BaseEncoderConfig cfg_;
  std::unordered_map<std::string, Vector> cache_;
};

inline Vector base_embed(const Document& doc, const BaseEncoderConfig& cfg) { return BaseEncoder(cfg).embed(doc); }

// Unit-norm base vectors for every document, corpus order.
inline EmbeddingMatrix base_embeddings(const Corpus& corpus, const BaseEncoderConfig& cfg) {
  BaseEncoder enc(cfg);
  RowMatrix m(static_cast<Eigen::Index>(corpus.size()), cfg.dim_base);
  std::vector<std::string> ids;
  ids.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = enc.embed(corpus[i]).transpose();
    ids.push_back(corpus[i].id);
  }
  return EmbeddingMatrix(std::move(ids), std::move(m));
}

// ---------------------------------------------------------------------------
// Projection head
// ---------------------------------------------------------------------------

struct EmbeddingModel {
  BaseEncoderConfig base;
  Eigen::MatrixXd projection;  // dim_out x dim_base

  int dim_out() const { return static_cast<int>(projection.rows()); }

  void validate() const {
    base.validate();
    if (projection.cols() != base.dim_base)
      throw ValidationError("projection has " + std::to_string(projection.cols()) + " columns, dim_base is " +
                            std::to_string(base.dim_base));
    if (projection.rows() < 1) throw ValidationError("projection needs at least one output dimension");
    if (!projection.allFinite()) throw ValidationError("projection contains non-finite entries");
  }

  bool operator==(const EmbeddingModel& o) const { return base == o.base && projection == o.projection; }
};

// Gaussian entries with variance 1/dim_out, so projected distances start
// close to base-space distances.
inline EmbeddingModel init_model(const BaseEncoderConfig& base, int dim_out, std::uint64_t seed) {
  base.validate();
  if (dim_out < 1) throw ValidationError("dim_out must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim_out)));
  EmbeddingModel m{base, Eigen::MatrixXd(dim_out, base.dim_base)};
  for (Eigen::Index r = 0; r < m.projection.rows(); ++r)
    for (Eigen::Index c = 0; c < m.projection.cols(); ++c) m.projection(r, c) = normal(rng);
  return m;
}

inline Vector project(const EmbeddingModel& model, const Vector& v) {
  if (v.size() != model.projection.cols())
    throw ValidationError("project: vector has dimension " + std::to_string(v.size()) + ", model expects " +
                          std::to_string(model.projection.cols()));
  return model.projection * v;
}

// max(||a - p|| - ||a - n|| + m, 0).
template <typename A, typename P, typename N>
double triplet_loss(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<P>& p, const Eigen::MatrixBase<N>& n,
                    double margin) {
  if (a.size() != p.size() || a.size() != n.size()) throw ValidationError("triplet_loss: dimension mismatch");
  return std::max((a - p).norm() - (a - n).norm() + margin, 0.0);
}

inline double model_triplet_loss(const Eigen::MatrixXd& w, const Vector& xa, const Vector& xp, const Vector& xn,
                                 double margin) {
  return std::max((w * (xa - xp)).norm() - (w * (xa - xn)).norm() + margin, 0.0);
}

inline constexpr double kDistanceGuard = 1e-12;

// Gradient of the loss w.r.t. the projection matrix. With u = xa - xp and
// z = xa - xn: dL/dW = (Wu) u^T / (|Wu| + eps) - (Wz) z^T / (|Wz| + eps) while
// the hinge is active, zero otherwise (including exactly at the boundary).
inline Eigen::MatrixXd loss_gradients(const EmbeddingModel& model, const Vector& xa, const Vector& xp,
                                      const Vector& xn, double margin, double* loss_out = nullptr) {
  const auto& w = model.projection;
  if (xa.size() != w.cols() || xp.size() != w.cols() || xn.size() != w.cols())
    throw ValidationError("loss_gradients: dimension mismatch");
  const Vector u = xa - xp;
  const Vector z = xa - xn;
  const Vector wu = w * u;
  const Vector wz = w * z;
  const double dp = wu.norm();
  const double dn = wz.norm();
  const double loss = dp - dn + margin;
  if (loss_out) *loss_out = std::max(loss, 0.0);
  if (!(loss > 0.0)) return Eigen::MatrixXd::Zero(w.rows(), w.cols());
  return (wu / (dp + kDistanceGuard)) * u.transpose() - (wz / (dn + kDistanceGuard)) * z.transpose();
}

// Max over entries of |analytic - central| / max(|analytic|, |central|, 1e-8).
inline double finite_difference_check(const EmbeddingModel& model, const Vector& xa, const Vector& xp,
                                      const Vector& xn, double margin, double h) {
  if (!(h > 0.0)) throw ValidationError("finite difference step must be positive");
  const Eigen::MatrixXd analytic = loss_gradients(model, xa, xp, xn, margin);
  Eigen::MatrixXd w = model.projection;
  double worst = 0.0;
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      const double saved = w(r, c);
      w(r, c) = saved + h;
      const double up = model_triplet_loss(w, xa, xp, xn, margin);
      w(r, c) = saved - h;
      const double down = model_triplet_loss(w, xa, xp, xn, margin);
      w(r, c) = saved;
      const double central = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic(r, c)), std::abs(central), 1e-8});
      worst = std::max(worst, std::abs(analytic(r, c) - central) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class OptimizerKind { sgd, adamw };

NLOHMANN_JSON_SERIALIZE_ENUM(OptimizerKind, {{OptimizerKind::sgd, "sgd"}, {OptimizerKind::adamw, "adamw"}})

struct TrainConfig {
  double margin = 1.0;
  // Head learning rate. Full transformer fine-tuning would use 2e-5.
  double learning_rate = 1e-2;
  int batch_size = 8;
  int grad_accumulation = 4;
  int epochs = 2;
  double warmup_fraction = 0.1;
  OptimizerKind optimizer = OptimizerKind::adamw;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double weight_decay = 0.01;
  std::uint64_t seed = 42;

  void validate() const {
    if (!(margin >= 0.0)) throw ValidationError("margin must be >= 0");
    if (!(learning_rate >= 0.0)) throw ValidationError("learning_rate must be >= 0");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (grad_accumulation < 1) throw ValidationError("grad_accumulation must be >= 1");
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ValidationError("warmup_fraction must lie in [0, 1)");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, margin, learning_rate, batch_size, grad_accumulation,
                                                epochs, warmup_fraction, optimizer, beta1, beta2, adam_epsilon,
                                                weight_decay, seed)

struct TrainingHistory {
  std::vector<double> train_loss;       // mean per-triplet loss seen during each epoch
  std::vector<double> validation_loss;  // mean loss on the validation set after each epoch
  std::vector<double> learning_rates;   // rate used at each optimizer step
  long long steps = 0;
};

// Linear warmup over the first warmup_fraction of steps, then linear decay to 0.
inline double scheduled_rate(double base, long long step, long long total_steps, double warmup_fraction) {
  const auto warmup = static_cast<long long>(std::floor(warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total_steps == warmup) return base;
  return base * std::max(0.0, static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup));
}

// Base vectors for the distinct ids used by a triplet set.
class TripletVectors {
 public:
  TripletVectors(const Corpus& corpus, const BaseEncoderConfig& cfg, const std::vector<const TripletSet*>& sets)
      : encoder_(cfg) {
    for (const auto* ts : sets)
      for (const auto& t : *ts)
        for (const auto* id : {&t.anchor_id, &t.positive_id, &t.negative_id}) ensure(corpus, *id);
  }

  const Vector& operator()(const std::string& id) const { return vectors_.at(id); }

 private:
  void ensure(const Corpus& corpus, const std::string& id) {
    if (vectors_.count(id)) return;
    const Document* d = corpus.find(id);
    if (!d) throw ValidationError("triplet references unknown document '" + id + "'");
    vectors_.emplace(id, encoder_.embed(*d));
  }

  BaseEncoder encoder_;
  std::unordered_map<std::string, Vector> vectors_;
};

inline double mean_triplet_loss(const EmbeddingModel& model, const TripletSet& ts, const TripletVectors& vecs,
                                double margin) {
  if (ts.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : ts)
    sum += model_triplet_loss(model.projection, vecs(t.anchor_id), vecs(t.positive_id), vecs(t.negative_id), margin);
  return sum / static_cast<double>(ts.size());
}

struct TrainResult {
  EmbeddingModel model;
  TrainingHistory history;
};

// Mini-batch training: seeded shuffle per epoch, per-batch mean gradients
// averaged over grad_accumulation batches per optimizer step. A trailing
// partial accumulation at the end of an epoch still triggers a step.
inline TrainResult train(const EmbeddingModel& init, const TripletSet& triplets, const Corpus& corpus,
                         const TrainConfig& cfg, const TripletSet* validation = nullptr) {
  cfg.validate();
  init.validate();
  if (triplets.empty()) throw ValidationError("training needs a non-empty triplet set");
  TrainResult res{init, {}};
  if (cfg.epochs == 0) return res;

  std::vector<const TripletSet*> sets{&triplets};
  if (validation) sets.push_back(validation);
  const TripletVectors vecs(corpus, init.base, sets);

  const auto n = static_cast<long long>(triplets.size());
  const long long batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long long steps_per_epoch = (batches_per_epoch + cfg.grad_accumulation - 1) / cfg.grad_accumulation;
  const long long total_steps = steps_per_epoch * cfg.epochs;

  Eigen::MatrixXd& w = res.model.projection;
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  Eigen::MatrixXd accum = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  long long step = 0;

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix64(cfg.seed ^ mix64(static_cast<std::uint64_t>(epoch) + 1)));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    int pending = 0;
    auto apply_step = [&] {
      const Eigen::MatrixXd g = accum / static_cast<double>(pending);
      const double lr = scheduled_rate(cfg.learning_rate, step, total_steps, cfg.warmup_fraction);
      ++step;
      if (cfg.optimizer == OptimizerKind::sgd) {
        w -= lr * g;
      } else {
        m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
        m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        w -= lr * cfg.weight_decay * w;
        w.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.adam_epsilon);
      }
      res.history.learning_rates.push_back(lr);
      accum.setZero();
      pending = 0;
    };

    for (long long b = 0; b < batches_per_epoch; ++b) {
      const long long lo = b * cfg.batch_size;
      const long long hi = std::min(n, lo + cfg.batch_size);
      Eigen::MatrixXd batch_grad = Eigen::MatrixXd::Zero(w.rows(), w.cols());
      for (long long i = lo; i < hi; ++i) {
        const auto& t = triplets[order[static_cast<std::size_t>(i)]];
        double loss = 0.0;
        batch_grad += loss_gradients(res.model, vecs(t.anchor_id), vecs(t.positive_id), vecs(t.negative_id),
                                     cfg.margin, &loss);
        epoch_loss += loss;
      }
      accum += batch_grad / static_cast<double>(hi - lo);
      if (++pending == cfg.grad_accumulation) apply_step();
    }
    if (pending > 0) apply_step();
    res.history.train_loss.push_back(epoch_loss / static_cast<double>(n));
    if (validation && !validation->empty())
      res.history.validation_loss.push_back(mean_triplet_loss(res.model, *validation, vecs, cfg.margin));
  }
  res.history.steps = step;
  return res;
}

// Row i = projection of the base vector of document i, corpus order.
inline EmbeddingMatrix embed_corpus(const Corpus& corpus, const EmbeddingModel& model) {
  model.validate();
  const EmbeddingMatrix base = base_embeddings(corpus, model.base);
  RowMatrix out = base.vectors() * model.projection.transpose();
  return EmbeddingMatrix(base.ids(), std::move(out));
}

struct Neighbor {
  std::string id;
  double similarity = 0.0;
  bool operator==(const Neighbor&) const = default;
};

// Exhaustive top-n by cosine, query excluded, ties by ascending id.
inline std::vector<Neighbor> nearest_documents(const EmbeddingMatrix& matrix, const std::string& query_id,
                                               std::size_t n) {
  if (n < 1) throw ValidationError("nearest_documents: n must be >= 1");
  const std::size_t q = matrix.require(query_id);
  std::vector<Neighbor> all;
  all.reserve(matrix.rows());
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    if (i == q) continue;
    all.push_back({matrix.ids()[i], cosine_similarity(matrix.row(q), matrix.row(i))});
  }
  auto better = [](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
  };
  const std::size_t keep = std::min(n, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), better);
  all.resize(keep);
  return all;
}

// Fraction of triplets with ||a - p|| < ||a - n|| under the matrix's vectors.
inline double triplet_satisfaction(const EmbeddingMatrix& matrix, const TripletSet& ts) {
  if (ts.empty()) throw ValidationError("triplet_satisfaction: empty triplet set");
  std::size_t ok = 0;
  for (const auto& t : ts) {
    const auto a = matrix.row(matrix.require(t.anchor_id));
    const auto p = matrix.row(matrix.require(t.positive_id));
    const auto n = matrix.row(matrix.require(t.negative_id));
    if ((a - p).norm() < (a - n).norm()) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(ts.size());
}

// ---------------------------------------------------------------------------
// Model and history files
// ---------------------------------------------------------------------------

inline nlohmann::json model_to_json(const EmbeddingModel& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.projection.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.projection.cols()));
    for (Eigen::Index c = 0; c < m.projection.cols(); ++c) row[static_cast<std::size_t>(c)] = m.projection(r, c);
    rows.push_back(row);
  }
  return {{"base", m.base}, {"dim_out", m.dim_out()}, {"projection", rows}};
}

inline EmbeddingModel model_from_json(const nlohmann::json& j) {
  EmbeddingModel m;
  m.base = j.at("base").get<BaseEncoderConfig>();
  const int dim_out = j.at("dim_out").get<int>();
  const auto& rows = j.at("projection");
  if (static_cast<int>(rows.size()) != dim_out) throw ValidationError("model projection row count mismatch");
  m.projection.resize(dim_out, m.base.dim_base);
  for (int r = 0; r < dim_out; ++r) {
    const auto row = rows[static_cast<std::size_t>(r)].get<std::vector<double>>();
    if (static_cast<int>(row.size()) != m.base.dim_base) throw ValidationError("model projection column count mismatch");
    for (int c = 0; c < m.base.dim_base; ++c) m.projection(r, c) = row[static_cast<std::size_t>(c)];
  }
  m.validate();
  return m;
}

inline void write_history(std::ostream& out, const TrainingHistory& h, const std::string& comment = "") {
  if (!comment.empty()) out << '#' << comment << '\n';
  out << "#steps=" << h.steps << '\n';
  out << "epoch\ttrain_loss\tvalidation_loss\n";
  for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
    out << e + 1 << '\t' << format_double(h.train_loss[e]) << '\t'
        << (e < h.validation_loss.size() ? format_double(h.validation_loss[e]) : std::string("nan")) << '\n';
  }
}

}  // namespace citemap
