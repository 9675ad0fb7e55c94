#pragma once

// Shared plumbing: error types, TSV helpers, number formatting, seeded
// substreams and a deterministic parallel_for.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

namespace citemap {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user input or violated precondition. CLI exit code 1.
struct ValidationError : Error {
  using Error::Error;
};

// Malformed file content; carries the 1-based line number when known.
struct ParseError : ValidationError {
  ParseError(const std::string& what, std::size_t line = 0)
      : ValidationError(line ? "line " + std::to_string(line) + ": " + what : what),
        line_number(line) {}
  std::size_t line_number;
};

// An upstream stage output is absent. CLI exit code 2.
struct MissingArtifactError : Error {
  explicit MissingArtifactError(const std::string& path)
      : Error("missing artifact: " + path), path(path) {}
  std::string path;
};

// ---------------------------------------------------------------------------
// Threads
// ---------------------------------------------------------------------------

inline std::atomic<unsigned>& default_threads() {
  static std::atomic<unsigned> n{1};
  return n;
}

inline void set_default_threads(unsigned n) { default_threads() = n == 0 ? 1 : n; }

// Runs body(i) for i in [0, n). Each index is visited exactly once and the
// body must only write to slots owned by i, so results do not depend on the
// worker count.
template <typename Body>
void parallel_for(std::size_t n, Body&& body, unsigned threads = 0) {
  if (threads == 0) threads = default_threads();
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed) return;
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Hashing for seeded substreams
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// splitmix64 finalizer; decorrelates nearby seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view key) {
  return mix64(fnv1a64(key, mix64(seed)));
}

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_float(float v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::size_t line = 0) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError("not a number: '" + std::string(s) + "'", line);
  return v;
}

inline float parse_float(std::string_view s, std::size_t line = 0) {
  float v = 0.0f;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError("not a number: '" + std::string(s) + "'", line);
  return v;
}

inline long long parse_int(std::string_view s, std::size_t line = 0) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError("not an integer: '" + std::string(s) + "'", line);
  return v;
}

inline std::uint64_t parse_uint64(std::string_view s, std::size_t line = 0) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError("not an unsigned integer: '" + std::string(s) + "'", line);
  return v;
}

// One TSV line with its 1-based line number.
struct TsvRow {
  std::size_t line = 0;
  std::vector<std::string> cells;
};

// Reads a tab-separated table. Lines starting with '#' are metadata and are
// returned through `meta` (without the '#'). The first non-meta line is the
// column header and must equal `expected_header` when that is non-empty.
inline std::vector<TsvRow> read_tsv(std::istream& in, const std::vector<std::string>& expected_header,
                                    std::vector<std::string>* meta = nullptr) {
  std::vector<TsvRow> rows;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (meta) meta->push_back(line.substr(1));
      continue;
    }
    auto cells = split(line, '\t');
    if (!header_seen) {
      header_seen = true;
      if (!expected_header.empty() && cells != expected_header)
        throw ParseError("unexpected column header", lineno);
      continue;
    }
    if (!expected_header.empty() && cells.size() != expected_header.size())
      throw ParseError("expected " + std::to_string(expected_header.size()) + " columns, got " +
                           std::to_string(cells.size()),
                       lineno);
    rows.push_back({lineno, std::move(cells)});
  }
  if (!header_seen) throw ParseError("missing column header");
  return rows;
}

inline std::ifstream open_input(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw MissingArtifactError(path);
  return in;
}

inline std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  return out;
}

// Parses "key=value key=value" metadata as written in '#' header lines.
inline std::vector<std::pair<std::string, std::string>> parse_meta(std::string_view s) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream is{std::string(s)};
  std::string tok;
  while (is >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    kv.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  return kv;
}

}  // namespace citemap
