#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ldem/knowledge_base.hpp"

namespace ldem {

// Borrowed context bags keyed by new-domain word, with per-source-domain
// provenance: word -> source domain -> (context word -> count).
struct RelevantKnowledge {
  std::map<std::string, std::map<std::string, std::map<std::string, std::uint64_t>>>
      entries;

  bool empty() const { return entries.empty(); }

  // Multiset union of all contributing bags for one word.
  std::map<std::string, std::uint64_t> aggregated(const std::string& word) const;

  // Total (word, context word) multiplicity across all sources.
  std::uint64_t total_pairs() const;

  bool operator==(const RelevantKnowledge&) const = default;
};

struct RetrievalConfig {
  double delta = 0.7;  // similarity threshold, in [0, 1]
  // Zero means: take the value from the KB manifest.
  std::uint64_t subcorpus_bytes = 0;
  int context_window = 0;
  int feature_window = 0;
  std::uint64_t min_count = 0;
  AdaptConfig adapt;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct RetrievalResult {
  RelevantKnowledge relevant;
  DomainKnowledge new_knowledge;
  MetaLearnerParams adapted_model;
  std::size_t scored_pairs = 0;
  std::size_t kept_pairs = 0;       // (word, domain) contributions kept
  std::uint64_t borrowed_mass = 0;  // total borrowed context multiplicity
  std::uint64_t corpus_mass = 0;    // new-domain context-bag multiplicity
  std::size_t skipped_words = 0;    // shared words lacking a usable vector
};

// Per-word scorer over (past vector, new vector); nullopt skips the word.
using PairScorer = std::function<std::optional<double>(
    const std::string& word, const FeatureVector& past,
    const FeatureVector& fresh)>;

// The retrieval scoring loop (shared vocabulary, threshold, bag
// aggregation) with an arbitrary scorer. Contributions with score >= delta
// keep the past domain's full context bag for the word.
RelevantKnowledge retrieve_with_scorer(const KnowledgeBase& kb,
                                       const DomainKnowledge& new_knowledge,
                                       const PairScorer& scorer, double delta,
                                       RetrievalResult* stats = nullptr);

// Same loop with meta-learner scoring over sub-corpus-1 vectors,
// batch-parallel per past domain.
RelevantKnowledge retrieve_with_model(const KnowledgeBase& kb,
                                      const DomainKnowledge& new_knowledge,
                                      const MetaLearnerParams& model,
                                      double delta, unsigned threads = 0,
                                      RetrievalResult* stats = nullptr);

// Full pipeline for a new domain corpus: build (V, C, E), adapt the base
// meta-learner, score against every past domain, aggregate above delta.
RetrievalResult retrieve_relevant(const KnowledgeBase& kb,
                                  const DomainCorpus& new_corpus,
                                  const RetrievalConfig& config);

// Builds just the new domain's knowledge (V, C, E) with KB parameters.
DomainKnowledge build_domain_knowledge(const KnowledgeBase& kb,
                                       const DomainCorpus& corpus,
                                       const RetrievalConfig& config);

// Lines of "word TAB source-domain TAB context-word TAB count".
void save_relevant(const RelevantKnowledge& rel,
                   const std::filesystem::path& path);
RelevantKnowledge load_relevant(const std::filesystem::path& path);

// Non-parametric baseline: borrows whole past-domain sentences whose TFIDF
// vector has cosine >= threshold against the new-domain corpus vector.
// idf = ln((1+N)/(1+df)) + 1 over the union of past-domain documents.
std::vector<TokenList> tfidf_retrieve(
    const std::vector<const DomainCorpus*>& past_corpora,
    const DomainCorpus& new_corpus, double threshold);

}  // namespace ldem
