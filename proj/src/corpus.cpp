#include "ldem/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ldem/rng.hpp"

namespace ldem {

namespace {

constexpr const char* kReplacementToken = "\xEF\xBF\xBD";  // U+FFFD

// Length of the valid UTF-8 sequence starting at s[i], or 0 if invalid.
std::size_t utf8_sequence_length(std::string_view s, std::size_t i) {
  const unsigned char b0 = s[i];
  std::size_t len;
  if (b0 < 0x80) return 1;
  if (b0 >= 0xC2 && b0 <= 0xDF) len = 2;
  else if (b0 >= 0xE0 && b0 <= 0xEF) len = 3;
  else if (b0 >= 0xF0 && b0 <= 0xF4) len = 4;
  else return 0;
  if (i + len > s.size()) return 0;
  for (std::size_t k = 1; k < len; ++k) {
    const unsigned char b = s[i + k];
    if (b < 0x80 || b > 0xBF) return 0;
  }
  return len;
}

}  // namespace

TokenList tokenize(std::string_view text, TokenizeStats* stats) {
  TokenList tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char b = text[i];
    if (b < 0x80) {
      if (std::isalnum(b)) {
        cur.push_back(static_cast<char>(std::tolower(b)));
      } else {
        flush();
      }
      ++i;
      continue;
    }
    const std::size_t len = utf8_sequence_length(text, i);
    if (len > 0) {
      cur.append(text.substr(i, len));
      i += len;
      continue;
    }
    // Invalid run: resync at the next valid boundary, one token per run.
    flush();
    do {
      ++i;
    } while (i < text.size() && static_cast<unsigned char>(text[i]) >= 0x80 &&
             utf8_sequence_length(text, i) == 0);
    tokens.push_back(kReplacementToken);
    if (stats) ++stats->invalid_sequences;
  }
  flush();
  return tokens;
}

DomainCorpus corpus_from_documents(std::string domain_id,
                                   std::vector<TokenList> documents) {
  if (domain_id.empty()) throw std::invalid_argument("empty domain_id");
  DomainCorpus c;
  c.domain_id = std::move(domain_id);
  c.documents = std::move(documents);
  for (const auto& d : c.documents) c.token_count += d.size();
  return c;
}

DomainCorpus load_corpus_dir(const std::filesystem::path& dir,
                             const std::string& domain_id) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("not a corpus directory: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<TokenList> docs;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw std::runtime_error("cannot read " + f.string());
    std::string line;
    while (std::getline(in, line)) {
      TokenList doc = tokenize(line);
      if (!doc.empty()) docs.push_back(std::move(doc));
    }
  }
  return corpus_from_documents(domain_id, std::move(docs));
}

Vocabulary Vocabulary::from_counts(
    const std::unordered_map<std::string, std::uint64_t>& counts,
    std::uint64_t min_count, std::size_t max_size) {
  Vocabulary v;
  v.entries.reserve(counts.size());
  for (const auto& [w, c] : counts) {
    if (c >= min_count) v.entries.emplace_back(w, c);
  }
  std::sort(v.entries.begin(), v.entries.end(),
            [](const auto& a, const auto& b) {
              if (a.second != b.second) return a.second > b.second;
              return a.first < b.first;
            });
  if (max_size > 0 && v.entries.size() > max_size) v.entries.resize(max_size);
  v.index.reserve(v.entries.size());
  for (std::uint32_t r = 0; r < v.entries.size(); ++r) {
    v.index.emplace(v.entries[r].first, r);
  }
  return v;
}

Vocabulary build_vocab(const DomainCorpus& corpus, std::uint64_t min_count) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& doc : corpus.documents) {
    for (const auto& tok : doc) ++counts[tok];
  }
  return Vocabulary::from_counts(counts, min_count);
}

Vocabulary build_feature_vocab(const std::vector<const DomainCorpus*>& corpora,
                               std::size_t f) {
  if (f < 1) throw std::invalid_argument("f must be >= 1");
  if (corpora.empty()) throw std::invalid_argument("no corpora given");
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const DomainCorpus* c : corpora) {
    for (const auto& doc : c->documents) {
      for (const auto& tok : doc) ++counts[tok];
    }
  }
  return Vocabulary::from_counts(counts, 1, f);
}

std::size_t serialized_token_bytes(const TokenList& doc) {
  std::size_t n = 0;
  for (const auto& t : doc) n += t.size() + 1;
  return n;
}

namespace {

DomainCorpus sample_one(const DomainCorpus& corpus, std::size_t target_bytes,
                        Rng& rng, const std::string& suffix) {
  std::vector<std::size_t> order(corpus.documents.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<TokenList> docs;
  std::size_t used = 0;
  for (std::size_t idx : order) {
    const std::size_t sz = serialized_token_bytes(corpus.documents[idx]);
    if (used + sz > target_bytes) continue;
    docs.push_back(corpus.documents[idx]);
    used += sz;
  }
  if (docs.empty()) {
    throw std::runtime_error("subsample_corpus: no document fits in " +
                             std::to_string(target_bytes) + " bytes");
  }
  return corpus_from_documents(corpus.domain_id + suffix, std::move(docs));
}

}  // namespace

std::pair<DomainCorpus, DomainCorpus> subsample_corpus(
    const DomainCorpus& corpus, std::size_t target_bytes, std::uint64_t seed) {
  if (corpus.documents.empty()) {
    throw std::invalid_argument("subsample_corpus: empty corpus");
  }
  if (target_bytes == 0) {
    throw std::invalid_argument("subsample_corpus: target_bytes must be > 0");
  }
  Rng r1(seed, 1), r2(seed, 2);
  return {sample_one(corpus, target_bytes, r1, "#1"),
          sample_one(corpus, target_bytes, r2, "#2")};
}

ContextBag scan_context_words(const DomainCorpus& corpus,
                              const Vocabulary& vocab, int window) {
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  ContextBag bag;
  for (const auto& doc : corpus.documents) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(doc.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      if (!vocab.contains(doc[i])) continue;
      auto& center = bag[doc[i]];
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - window);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + window);
      for (std::ptrdiff_t j = lo; j <= hi; ++j) {
        if (j == i) continue;
        if (vocab.contains(doc[j])) ++center[doc[j]];
      }
    }
  }
  // Words whose every occurrence has an empty window still get an entry.
  for (auto it = bag.begin(); it != bag.end();) {
    it = it->second.empty() ? bag.erase(it) : std::next(it);
  }
  return bag;
}

std::map<std::string, FeatureVector> build_feature_vectors(
    const DomainCorpus& corpus, const WordIndex& feature_index, int window,
    const Vocabulary* restrict_vocab) {
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (feature_index.empty()) {
    throw std::invalid_argument("empty feature vocabulary");
  }
  std::map<std::string, std::map<std::uint32_t, std::uint32_t>> acc;
  for (const auto& doc : corpus.documents) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(doc.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      if (restrict_vocab && !restrict_vocab->contains(doc[i])) continue;
      auto& counts = acc[doc[i]];
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - window);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + window);
      for (std::ptrdiff_t j = lo; j <= hi; ++j) {
        if (j == i) continue;
        auto it = feature_index.find(doc[j]);
        if (it != feature_index.end()) ++counts[it->second];
      }
    }
  }
  std::map<std::string, FeatureVector> out;
  for (auto& [word, counts] : acc) {
    if (counts.empty()) continue;  // all-zero vectors are dropped
    FeatureVector fv;
    fv.word = word;
    fv.counts.assign(counts.begin(), counts.end());
    out.emplace(word, std::move(fv));
  }
  return out;
}

}  // namespace ldem
