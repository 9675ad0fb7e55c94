#pragma once

// Per-document vectors keyed by id, plus the text ("#dim=") and binary
// ("CMEM") file formats. Values are stored as doubles in memory and as 32-bit
// floats on disk.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "citemap/common.hpp"

namespace citemap {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  EmbeddingMatrix(std::vector<std::string> ids, RowMatrix vectors) : ids_(std::move(ids)), vectors_(std::move(vectors)) {
    if (static_cast<Eigen::Index>(ids_.size()) != vectors_.rows())
      throw ValidationError("embedding matrix: " + std::to_string(ids_.size()) + " ids for " +
                            std::to_string(vectors_.rows()) + " rows");
    if (!vectors_.allFinite()) throw ValidationError("embedding matrix contains non-finite values");
    index_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i)
      if (!index_.emplace(ids_[i], i).second) throw ValidationError("embedding matrix: duplicate id '" + ids_[i] + "'");
  }

  const std::vector<std::string>& ids() const { return ids_; }
  const RowMatrix& vectors() const { return vectors_; }
  std::size_t rows() const { return ids_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }

  auto row(std::size_t i) const { return vectors_.row(static_cast<Eigen::Index>(i)); }

  std::optional<std::size_t> position(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t require(const std::string& id) const {
    auto p = position(id);
    if (!p) throw ValidationError("id '" + id + "' not in embedding matrix");
    return *p;
  }

  bool operator==(const EmbeddingMatrix& o) const { return ids_ == o.ids_ && vectors_ == o.vectors_; }

  // Rows rounded to 32-bit precision, i.e. what a save/load cycle returns.
  EmbeddingMatrix rounded_to_float() const {
    RowMatrix v = vectors_.cast<float>().cast<double>();
    return EmbeddingMatrix(ids_, std::move(v));
  }

 private:
  std::vector<std::string> ids_;
  RowMatrix vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Cosine similarity; 0 when either vector is zero.
template <typename A, typename B>
double cosine_similarity(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

// Each row scaled to unit length (zero rows stay zero).
inline RowMatrix normalized_rows(const RowMatrix& m) {
  RowMatrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0.0) out.row(i) /= n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text format: "#dim=<d>" then "id<TAB>v1<TAB>...<TAB>vd" per row. Other
// lines starting with '#' are provenance comments.
// ---------------------------------------------------------------------------

inline void write_embeddings_text(std::ostream& out, const EmbeddingMatrix& m, const std::string& comment = "") {
  if (!comment.empty()) out << '#' << comment << '\n';
  out << "#dim=" << m.dim() << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << m.ids()[i];
    for (std::size_t j = 0; j < m.dim(); ++j) out << '\t' << format_float(static_cast<float>(m.vectors()(i, j)));
    out << '\n';
  }
}

inline EmbeddingMatrix read_embeddings_text(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::size_t> dim;
  std::vector<std::string> ids;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("#dim=", 0) == 0) dim = static_cast<std::size_t>(parse_int(line.substr(5), lineno));
      continue;
    }
    if (!dim) throw ParseError("embedding row before '#dim=' header", lineno);
    auto cells = split(line, '\t');
    if (cells.size() != *dim + 1)
      throw ParseError("expected " + std::to_string(*dim + 1) + " columns, got " + std::to_string(cells.size()), lineno);
    ids.push_back(cells[0]);
    for (std::size_t j = 1; j < cells.size(); ++j) values.push_back(parse_float(cells[j], lineno));
  }
  if (!dim) throw ParseError("missing '#dim=' header");
  RowMatrix v(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(*dim));
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = values[static_cast<std::size_t>(i * v.cols() + j)];
  return EmbeddingMatrix(std::move(ids), std::move(v));
}

// ---------------------------------------------------------------------------
// Binary format, little-endian:
//   "CMEM" | u32 version | u32 dim | u64 rows | rows x (u32 len, id bytes, dim x f32)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw ParseError("truncated binary embedding file");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline constexpr std::uint32_t kEmbeddingBinaryVersion = 1;

inline void write_embeddings_binary(std::ostream& out, const EmbeddingMatrix& m) {
  out.write("CMEM", 4);
  detail::put_le<std::uint32_t>(out, kEmbeddingBinaryVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.dim()));
  detail::put_le<std::uint64_t>(out, m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto& id = m.ids()[i];
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (std::size_t j = 0; j < m.dim(); ++j) {
      const float f = static_cast<float>(m.vectors()(i, j));
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      detail::put_le<std::uint32_t>(out, bits);
    }
  }
}

inline EmbeddingMatrix read_embeddings_binary(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "CMEM", 4) != 0) throw ParseError("bad magic, expected CMEM");
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kEmbeddingBinaryVersion) throw ParseError("unsupported CMEM version " + std::to_string(version));
  const auto dim = detail::get_le<std::uint32_t>(in);
  const auto rows = detail::get_le<std::uint64_t>(in);
  std::vector<std::string> ids;
  RowMatrix v(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (std::uint64_t i = 0; i < rows; ++i) {
    const auto len = detail::get_le<std::uint32_t>(in);
    std::string id(len, '\0');
    if (len && !in.read(id.data(), len)) throw ParseError("truncated binary embedding file");
    ids.push_back(std::move(id));
    for (std::uint32_t j = 0; j < dim; ++j) {
      const auto bits = detail::get_le<std::uint32_t>(in);
      float f;
      std::memcpy(&f, &bits, sizeof f);
      v(static_cast<Eigen::Index>(i), j) = f;
    }
  }
  return EmbeddingMatrix(std::move(ids), std::move(v));
}

inline void save_embeddings(const std::string& path, const EmbeddingMatrix& m, bool binary,
                            const std::string& comment = "") {
  auto out = open_output(path, binary ? std::ios::out | std::ios::binary : std::ios::out);
  if (binary)
    write_embeddings_binary(out, m);
  else
    write_embeddings_text(out, m, comment);
}

// Detects the format from the leading magic bytes.
inline EmbeddingMatrix load_embeddings(const std::string& path) {
  auto in = open_input(path, std::ios::in | std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  const bool binary = in.gcount() == 4 && std::memcmp(magic, "CMEM", 4) == 0;
  in.clear();
  in.seekg(0);
  return binary ? read_embeddings_binary(in) : read_embeddings_text(in);
}

}  // namespace citemap
