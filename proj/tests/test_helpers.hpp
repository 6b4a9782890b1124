#pragma once

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>

#include "ldem/corpus.hpp"
#include "ldem/rng.hpp"

namespace ldem::testing {

inline DomainCorpus corpus_from_strings(const std::string& id,
                                        const std::vector<std::string>& lines) {
  std::vector<TokenList> docs;
  for (const auto& line : lines) docs.push_back(tokenize(line));
  return corpus_from_documents(id, std::move(docs));
}

inline DomainCorpus corpus_from_tokens(const std::string& id,
                                       const std::vector<TokenList>& docs) {
  return corpus_from_documents(id, docs);
}

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ldem_test_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Random sparse feature vector with nnz entries below f, counts in [1, 20].
inline FeatureVector random_feature_vector(const std::string& word,
                                           std::uint32_t f, std::size_t nnz,
                                           Rng& rng) {
  FeatureVector fv;
  fv.word = word;
  std::map<std::uint32_t, std::uint32_t> counts;
  while (counts.size() < nnz) {
    counts[static_cast<std::uint32_t>(rng.below(f))] =
        static_cast<std::uint32_t>(1 + rng.below(20));
  }
  fv.counts.assign(counts.begin(), counts.end());
  return fv;
}

}  // namespace ldem::testing
