#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ldem {

using TokenList = std::vector<std::string>;
using WordIndex = std::unordered_map<std::string, std::uint32_t>;

// One topical domain: an ordered set of documents, each a token sequence.
struct DomainCorpus {
  std::string domain_id;
  std::vector<TokenList> documents;
  std::size_t token_count = 0;  // sum of document lengths
};

// Word list sorted by descending frequency, ties broken lexicographically.
struct Vocabulary {
  std::vector<std::pair<std::string, std::uint64_t>> entries;
  WordIndex index;  // word -> rank

  static Vocabulary from_counts(
      const std::unordered_map<std::string, std::uint64_t>& counts,
      std::uint64_t min_count = 1, std::size_t max_size = 0);

  std::size_t size() const { return entries.size(); }
  bool contains(const std::string& w) const { return index.count(w) != 0; }
};

// Sparse co-occurrence counts of one word over a fixed feature vocabulary.
// Entries are (feature rank, count), rank-ascending, counts > 0.
struct FeatureVector {
  std::string word;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> counts;

  double l1() const {
    double s = 0;
    for (auto& [r, c] : counts) s += c;
    return s;
  }
  bool operator==(const FeatureVector&) const = default;
};

// word -> (context word -> multiplicity)
using ContextBag = std::map<std::string, std::map<std::string, std::uint64_t>>;

struct TokenizeStats {
  std::size_t invalid_sequences = 0;
};

// Lowercased maximal runs of token characters; everything else separates.
// ASCII alphanumerics and valid non-ASCII codepoints are token characters.
// Each invalid UTF-8 run becomes a single U+FFFD replacement token.
TokenList tokenize(std::string_view text, TokenizeStats* stats = nullptr);

// Directory of UTF-8 plain-text files, one document per line. Files are
// read in lexicographic name order.
DomainCorpus load_corpus_dir(const std::filesystem::path& dir,
                             const std::string& domain_id);

DomainCorpus corpus_from_documents(std::string domain_id,
                                   std::vector<TokenList> documents);

Vocabulary build_vocab(const DomainCorpus& corpus, std::uint64_t min_count);

// Top-f words by frequency summed across all corpora.
Vocabulary build_feature_vocab(const std::vector<const DomainCorpus*>& corpora,
                               std::size_t f);

// Serialized size used by the sub-corpus budget: token bytes plus one
// separator byte per token.
std::size_t serialized_token_bytes(const TokenList& doc);

// Draws documents uniformly at random without replacement, independently
// per sub-corpus, keeping each sampled document that still fits in
// target_bytes. Throws if not a single document fits.
std::pair<DomainCorpus, DomainCorpus> subsample_corpus(
    const DomainCorpus& corpus, std::size_t target_bytes, std::uint64_t seed);

// For each occurrence of an in-vocab word, collects in-vocab tokens within
// +-window positions. Windows never cross document boundaries.
ContextBag scan_context_words(const DomainCorpus& corpus,
                              const Vocabulary& vocab, int window);

// Co-occurrence counts of every corpus word (or only words of *restrict,
// when given) against the feature vocabulary. All-zero vectors are omitted.
std::map<std::string, FeatureVector> build_feature_vectors(
    const DomainCorpus& corpus, const WordIndex& feature_index, int window,
    const Vocabulary* restrict_vocab = nullptr);

}  // namespace ldem
