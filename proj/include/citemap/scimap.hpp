#pragma once

// Research-topic vectors, 2-D layout (PCA or stress majorization), the
// field / interdisciplinarity / mean-year overlays and map export.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "citemap/common.hpp"
#include "citemap/communities.hpp"
#include "citemap/corpus.hpp"
#include "citemap/embedding_matrix.hpp"

namespace citemap {

struct Topic {
  int community = 0;
  std::vector<std::string> members;
  Vector vector;
  std::size_t size = 0;
  double x = 0.0;
  double y = 0.0;
  std::string field = "unknown";
  double interdisciplinarity = 0.0;
  double mean_year = 0.0;
};

// One topic per community, ordered by community id; vector = mean member row.
inline std::vector<Topic> topic_vectors(const Partition& partition, const EmbeddingMatrix& matrix) {
  std::map<int, Topic> by_comm;
  for (std::size_t i = 0; i < partition.ids.size(); ++i) {
    const auto pos = matrix.position(partition.ids[i]);
    if (!pos) throw ValidationError("partition id '" + partition.ids[i] + "' absent from the embedding matrix");
    Topic& t = by_comm[partition.community[i]];
    if (t.members.empty()) {
      t.community = partition.community[i];
      t.vector = Vector::Zero(static_cast<Eigen::Index>(matrix.dim()));
    }
    t.members.push_back(partition.ids[i]);
    t.vector += matrix.row(*pos).transpose();
  }
  std::vector<Topic> topics;
  topics.reserve(by_comm.size());
  for (auto& [c, t] : by_comm) {
    t.size = t.members.size();
    t.vector /= static_cast<double>(t.size);
    topics.push_back(std::move(t));
  }
  return topics;
}

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

enum class LayoutMethod { pca, stress };

inline LayoutMethod layout_method_from_name(const std::string& s) {
  if (s == "pca") return LayoutMethod::pca;
  if (s == "stress") return LayoutMethod::stress;
  throw ValidationError("unknown layout method '" + s + "'");
}

struct Layout {
  Eigen::MatrixX2d coords;  // one row per topic
  std::vector<std::string> warnings;
  int iterations = 0;
};

struct StressOptions {
  double tolerance = 1e-6;
  int max_iterations = 500;
};

// Raw stress: sum_{i<j} (||x_i - x_j|| - d_ij)^2.
inline double layout_stress(const Eigen::MatrixX2d& x, const Eigen::MatrixXd& d) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      const double diff = (x.row(i) - x.row(j)).norm() - d(i, j);
      s += diff * diff;
    }
  return s;
}

namespace detail {

inline Eigen::MatrixXd topic_matrix(const std::vector<Topic>& topics) {
  const Eigen::Index dim = topics.front().vector.size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(topics.size()), dim);
  for (std::size_t i = 0; i < topics.size(); ++i) {
    if (topics[i].vector.size() != dim) throw ValidationError("layout: topic vectors differ in dimension");
    m.row(static_cast<Eigen::Index>(i)) = topics[i].vector.transpose();
  }
  return m;
}

}  // namespace detail

// pca: projection on the top two principal axes of the mean-centered topic
// matrix, each axis signed so its largest-magnitude loading is positive.
// stress: SMACOF (Guttman transform) started from the PCA layout, stopping
// when the relative stress change drops below the tolerance.
inline Layout layout_2d(const std::vector<Topic>& topics, LayoutMethod method, std::uint64_t seed,
                        const StressOptions& opts = {}) {
  if (topics.size() < 2) throw ValidationError("layout needs at least 2 topics");
  const Eigen::MatrixXd m = detail::topic_matrix(topics);
  const Eigen::Index n = m.rows();
  const Eigen::MatrixXd centered = m.rowwise() - m.colwise().mean();
  Layout out;
  out.coords = Eigen::MatrixX2d::Zero(n, 2);

  if (centered.norm() == 0.0) {
    out.warnings.push_back("all topic vectors identical; using jittered coordinates");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) out.coords.row(i) << jitter(rng), jitter(rng);
    return out;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(centered.transpose() * centered);
  const Eigen::Index dim = m.cols();
  for (int axis = 0; axis < 2 && axis < dim; ++axis) {
    Eigen::VectorXd loading = eig.eigenvectors().col(dim - 1 - axis);
    Eigen::Index arg = 0;
    loading.cwiseAbs().maxCoeff(&arg);
    if (loading(arg) < 0) loading = -loading;
    if (eig.eigenvalues()(dim - 1 - axis) <= 1e-12 * eig.eigenvalues()(dim - 1)) continue;
    out.coords.col(axis) = centered * loading;
  }
  if (method == LayoutMethod::pca) return out;

  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (m.row(i) - m.row(j)).norm();
  Eigen::MatrixX2d x = out.coords;
  double stress = layout_stress(x, d);
  for (int it = 0; it < opts.max_iterations; ++it) {
    Eigen::MatrixX2d next = Eigen::MatrixX2d::Zero(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double dist = (x.row(i) - x.row(j)).norm();
        const double b = dist > 0.0 ? d(i, j) / dist : 0.0;
        next.row(i) += b * (x.row(i) - x.row(j));
      }
    }
    next /= static_cast<double>(n);
    const double next_stress = layout_stress(next, d);
    x = next;
    out.iterations = it + 1;
    const double change = stress > 0.0 ? (stress - next_stress) / stress : 0.0;
    stress = next_stress;
    if (std::abs(change) < opts.tolerance) break;
  }
  out.coords = x;
  return out;
}

inline void apply_layout(std::vector<Topic>& topics, const Layout& layout) {
  for (std::size_t i = 0; i < topics.size(); ++i) {
    topics[i].x = layout.coords(static_cast<Eigen::Index>(i), 0);
    topics[i].y = layout.coords(static_cast<Eigen::Index>(i), 1);
  }
}

// ---------------------------------------------------------------------------
// Overlays, keyed by community id
// ---------------------------------------------------------------------------

namespace detail {

inline std::map<int, std::vector<const Document*>> members_by_community(const Partition& p, const Corpus& corpus) {
  std::map<int, std::vector<const Document*>> out;
  for (std::size_t i = 0; i < p.ids.size(); ++i) out[p.community[i]].push_back(&corpus.at(p.ids[i]));
  return out;
}

}  // namespace detail

// Modal field over every member's field entries; ties lexicographic.
inline std::map<int, std::string> overlay_field(const Partition& p, const Corpus& corpus) {
  std::map<int, std::string> out;
  for (const auto& [c, docs] : detail::members_by_community(p, corpus)) {
    std::map<std::string, std::size_t> counts;
    for (const auto* d : docs)
      for (const auto& f : d->fields) ++counts[f];
    std::string best = "unknown";
    std::size_t best_count = 0;
    for (const auto& [f, k] : counts)
      if (k > best_count) {
        best = f;
        best_count = k;
      }
    out[c] = best;
  }
  return out;
}

inline std::map<int, double> overlay_mean_year(const Partition& p, const Corpus& corpus) {
  std::map<int, double> out;
  for (const auto& [c, docs] : detail::members_by_community(p, corpus)) {
    double sum = 0.0;
    for (const auto* d : docs) sum += d->year;
    out[c] = sum / static_cast<double>(docs.size());
  }
  return out;
}

class CategorySimilarity {
 public:
  CategorySimilarity() = default;

  CategorySimilarity(std::vector<std::string> categories, Eigen::MatrixXd sim)
      : categories_(std::move(categories)), sim_(std::move(sim)) {
    const auto n = static_cast<Eigen::Index>(categories_.size());
    if (sim_.rows() != n || sim_.cols() != n) throw ValidationError("category similarity: matrix size mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(sim_(i, i) - 1.0) > 1e-12) throw ValidationError("category similarity: diagonal must be 1");
      for (Eigen::Index j = 0; j < n; ++j) {
        if (std::abs(sim_(i, j) - sim_(j, i)) > 1e-12) throw ValidationError("category similarity: not symmetric");
        if (sim_(i, j) < 0.0 || sim_(i, j) > 1.0) throw ValidationError("category similarity: entries must lie in [0, 1]");
      }
      if (!index_.emplace(categories_[static_cast<std::size_t>(i)], static_cast<std::size_t>(i)).second)
        throw ValidationError("category similarity: duplicate category");
    }
  }

  // All off-diagonal similarities 0.
  static CategorySimilarity identity(std::vector<std::string> categories) {
    const auto n = static_cast<Eigen::Index>(categories.size());
    return CategorySimilarity(std::move(categories), Eigen::MatrixXd::Identity(n, n));
  }

  double operator()(const std::string& a, const std::string& b) const {
    auto ia = index_.find(a);
    auto ib = index_.find(b);
    if (ia == index_.end()) throw ValidationError("category '" + a + "' missing from the similarity matrix");
    if (ib == index_.end()) throw ValidationError("category '" + b + "' missing from the similarity matrix");
    return sim_(static_cast<Eigen::Index>(ia->second), static_cast<Eigen::Index>(ib->second));
  }

  const std::vector<std::string>& categories() const { return categories_; }

 private:
  std::vector<std::string> categories_;
  Eigen::MatrixXd sim_;
  std::map<std::string, std::size_t> index_;
};

struct DiversityFactors {
  double variety = 0.0;
  double balance = 0.0;
  double disparity = 0.0;
  double value() const { return variety * balance * disparity; }
};

// Variety n/total, balance 1 - Gini of the proportions, disparity the mean
// of (1 - s_ij) over ordered distinct pairs. Fewer than two categories give 0.
inline DiversityFactors category_diversity(const std::map<std::string, double>& counts, const CategorySimilarity& sim,
                                           std::size_t total_categories) {
  if (total_categories < 1) throw ValidationError("total_categories must be >= 1");
  DiversityFactors f;
  const std::size_t n = counts.size();
  if (n <= 1) return f;
  double sum = 0.0;
  std::vector<double> p;
  std::vector<const std::string*> names;
  for (const auto& [c, k] : counts) {
    sum += k;
    p.push_back(k);
    names.push_back(&c);
  }
  for (double& v : p) v /= sum;
  double abs_diff = 0.0;
  double dissim = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      abs_diff += std::abs(p[i] - p[j]);
      if (i != j) dissim += 1.0 - sim(*names[i], *names[j]);
    }
  const double nd = static_cast<double>(n);
  f.variety = nd / static_cast<double>(total_categories);
  f.balance = 1.0 - abs_diff / (2.0 * nd);  // Gini with sum(p) = 1
  f.disparity = dissim / (nd * (nd - 1.0));
  return f;
}

inline std::map<int, double> overlay_interdisciplinarity(const Partition& p, const Corpus& corpus,
                                                         const CategorySimilarity& sim, std::size_t total_categories) {
  if (total_categories < 1) throw ValidationError("total_categories must be >= 1");
  std::map<int, double> out;
  for (const auto& [c, docs] : detail::members_by_community(p, corpus)) {
    std::map<std::string, double> counts;
    for (const auto* d : docs)
      for (const auto& cat : d->categories) counts[cat] += 1.0;
    for (const auto& [cat, _] : counts) (void)sim(cat, cat);
    out[c] = category_diversity(counts, sim, total_categories).value();
  }
  return out;
}

inline void assign_overlays(std::vector<Topic>& topics, const std::map<int, std::string>& fields,
                            const std::map<int, double>& interdisciplinarity, const std::map<int, double>& mean_year) {
  for (auto& t : topics) {
    if (auto it = fields.find(t.community); it != fields.end()) t.field = it->second;
    if (auto it = interdisciplinarity.find(t.community); it != interdisciplinarity.end()) t.interdisciplinarity = it->second;
    if (auto it = mean_year.find(t.community); it != mean_year.end()) t.mean_year = it->second;
  }
}

// Sorted distinct categories over the corpus.
inline std::vector<std::string> corpus_categories(const Corpus& corpus) {
  std::set<std::string> all;
  for (const auto& d : corpus.documents()) all.insert(d.categories.begin(), d.categories.end());
  return {all.begin(), all.end()};
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

enum class MapColor { field, interdisciplinarity, mean_year };

inline MapColor map_color_from_name(const std::string& s) {
  if (s == "field") return MapColor::field;
  if (s == "interdisciplinarity") return MapColor::interdisciplinarity;
  if (s == "mean_year") return MapColor::mean_year;
  throw ValidationError("unknown overlay '" + s + "'");
}

inline const std::vector<std::string>& map_table_header() {
  static const std::vector<std::string> h = {"topic_id", "size", "x", "y", "field", "interdisciplinarity", "mean_year"};
  return h;
}

inline void write_map_table(std::ostream& out, const std::vector<Topic>& topics, const std::string& comment = "") {
  if (!comment.empty()) out << '#' << comment << '\n';
  const auto& h = map_table_header();
  for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "\t" : "") << h[i];
  out << '\n';
  for (const auto& t : topics)
    out << t.community << '\t' << t.size << '\t' << format_double(t.x) << '\t' << format_double(t.y) << '\t' << t.field
        << '\t' << format_double(t.interdisciplinarity) << '\t' << format_double(t.mean_year) << '\n';
}

// Topics without members or vectors; only the table columns.
inline std::vector<Topic> read_map_table(std::istream& in) {
  auto rows = read_tsv(in, map_table_header());
  std::vector<Topic> topics;
  for (const auto& r : rows) {
    Topic t;
    t.community = static_cast<int>(parse_int(r.cells[0], r.line));
    t.size = static_cast<std::size_t>(parse_int(r.cells[1], r.line));
    t.x = parse_double(r.cells[2], r.line);
    t.y = parse_double(r.cells[3], r.line);
    t.field = r.cells[4];
    t.interdisciplinarity = parse_double(r.cells[5], r.line);
    t.mean_year = parse_double(r.cells[6], r.line);
    topics.push_back(std::move(t));
  }
  return topics;
}

namespace detail {

inline std::string hex_color(double r, double g, double b) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(r * 255)),
                static_cast<int>(std::lround(g * 255)), static_cast<int>(std::lround(b * 255)));
  return buf;
}

// Light yellow to dark blue.
inline std::string sequential_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return hex_color(1.0 - 0.85 * t, 0.97 - 0.6 * t, 0.7 + 0.1 * t - 0.3 * t * t);
}

inline const std::vector<std::string>& categorical_palette() {
  static const std::vector<std::string> p = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                             "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return p;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

// Scatter of topics: dot area proportional to size, colored by `color`, with
// a legend. The viewBox is the padded bounding box of the coordinates
// (y flipped so larger y is up).
inline void write_map_svg(std::ostream& out, const std::vector<Topic>& topics, MapColor color) {
  if (topics.empty()) throw ValidationError("map export: no topics");
  double xmin = topics[0].x, xmax = topics[0].x, ymin = topics[0].y, ymax = topics[0].y;
  std::size_t max_size = 1;
  for (const auto& t : topics) {
    xmin = std::min(xmin, t.x);
    xmax = std::max(xmax, t.x);
    ymin = std::min(ymin, t.y);
    ymax = std::max(ymax, t.y);
    max_size = std::max(max_size, t.size);
  }
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-9});
  const double max_r = 0.05 * span;
  const double pad = 0.1 * span + max_r;
  const double legend_w = 0.45 * span;
  const double vx = xmin - pad;
  const double vy = -ymax - pad;
  const double vw = (xmax - xmin) + 2 * pad + legend_w;
  const double vh = (ymax - ymin) + 2 * pad;

  std::vector<std::string> fills(topics.size());
  std::vector<std::pair<std::string, std::string>> legend;
  if (color == MapColor::field) {
    std::set<std::string> names;
    for (const auto& t : topics) names.insert(t.field);
    std::map<std::string, std::string> palette;
    std::size_t k = 0;
    for (const auto& f : names) {
      palette[f] = detail::categorical_palette()[k++ % detail::categorical_palette().size()];
      legend.emplace_back(f, palette[f]);
    }
    for (std::size_t i = 0; i < topics.size(); ++i) fills[i] = palette[topics[i].field];
  } else {
    auto value = [&](const Topic& t) { return color == MapColor::mean_year ? t.mean_year : t.interdisciplinarity; };
    double lo = value(topics[0]), hi = value(topics[0]);
    for (const auto& t : topics) {
      lo = std::min(lo, value(t));
      hi = std::max(hi, value(t));
    }
    auto norm = [&](double v) { return hi > lo ? (v - lo) / (hi - lo) : 0.5; };
    for (std::size_t i = 0; i < topics.size(); ++i) fills[i] = detail::sequential_color(norm(value(topics[i])));
    if (hi > lo) {
      legend.emplace_back(format_double(lo), detail::sequential_color(0.0));
      legend.emplace_back(format_double(hi), detail::sequential_color(1.0));
    } else {
      legend.emplace_back(format_double(lo), detail::sequential_color(0.5));
    }
  }

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"800\" height=\""
      << static_cast<int>(std::lround(800.0 * vh / vw)) << "\" viewBox=\"" << format_double(vx) << ' '
      << format_double(vy) << ' ' << format_double(vw) << ' ' << format_double(vh) << "\">\n";
  out << "<g id=\"topics\" fill-opacity=\"0.8\">\n";
  for (std::size_t i = 0; i < topics.size(); ++i) {
    const auto& t = topics[i];
    const double r = max_r * std::sqrt(static_cast<double>(t.size) / static_cast<double>(max_size));
    out << "<circle cx=\"" << format_double(t.x) << "\" cy=\"" << format_double(-t.y) << "\" r=\""
        << format_double(r) << "\" fill=\"" << fills[i] << "\"><title>topic " << t.community << " ("
        << t.size << ")</title></circle>\n";
  }
  out << "</g>\n<g id=\"legend\" font-family=\"sans-serif\" font-size=\"" << format_double(0.03 * span) << "\">\n";
  const double lx = xmax + pad;
  double ly = -ymax;
  for (const auto& [label, fill] : legend) {
    out << "<rect x=\"" << format_double(lx) << "\" y=\"" << format_double(ly) << "\" width=\""
        << format_double(0.03 * span) << "\" height=\"" << format_double(0.03 * span) << "\" fill=\"" << fill
        << "\"/>\n";
    out << "<text x=\"" << format_double(lx + 0.05 * span) << "\" y=\"" << format_double(ly + 0.025 * span) << "\">"
        << detail::xml_escape(label) << "</text>\n";
    ly += 0.05 * span;
  }
  out << "</g>\n</svg>\n";
}

// Writes <out_path> (table) and, when svg is set, <out_path>.svg.
inline void export_map(const std::vector<Topic>& topics, const std::string& out_path, bool svg,
                       MapColor color = MapColor::field, const std::string& comment = "") {
  {
    auto out = open_output(out_path);
    write_map_table(out, topics, comment);
  }
  if (svg) {
    auto out = open_output(out_path + ".svg");
    write_map_svg(out, topics, color);
  }
}

}  // namespace citemap
