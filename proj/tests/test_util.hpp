#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "citemap/corpus.hpp"

namespace testutil {

inline std::string fixture(const std::string& name) { return std::string(CITEMAP_FIXTURE_DIR) + "/" + name; }

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("citemap_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline citemap::Document doc(const std::string& id, std::vector<std::string> authors = {},
                             std::vector<citemap::ReferenceEntry> refs = {}) {
  citemap::Document d;
  d.id = id;
  d.title = "title of " + id;
  d.abstract = "abstract words for " + id;
  d.authors = std::move(authors);
  d.year = 2010;
  d.references = std::move(refs);
  return d;
}

inline citemap::ReferenceEntry ref(const std::string& cited, int intro, int methods, int results, int discussion) {
  return {cited, {intro, methods, results, discussion}};
}

}  // namespace testutil
