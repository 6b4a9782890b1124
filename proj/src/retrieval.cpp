#include "ldem/retrieval.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace ldem {

std::map<std::string, std::uint64_t> RelevantKnowledge::aggregated(
    const std::string& word) const {
  std::map<std::string, std::uint64_t> out;
  auto it = entries.find(word);
  if (it == entries.end()) return out;
  for (const auto& [dom, bag] : it->second) {
    for (const auto& [cw, n] : bag) out[cw] += n;
  }
  return out;
}

std::uint64_t RelevantKnowledge::total_pairs() const {
  std::uint64_t total = 0;
  for (const auto& [w, doms] : entries) {
    for (const auto& [dom, bag] : doms) {
      for (const auto& [cw, n] : bag) total += n;
    }
  }
  return total;
}

RelevantKnowledge retrieve_with_scorer(const KnowledgeBase& kb,
                                       const DomainKnowledge& new_knowledge,
                                       const PairScorer& scorer, double delta,
                                       RetrievalResult* stats) {
  RelevantKnowledge rel;
  for (const auto& [domain_id, past] : kb.domains) {
    for (const auto& [word, count] : past.vocab.entries) {
      if (!new_knowledge.vocab.contains(word)) continue;
      auto ip = past.vectors_k1.find(word);
      auto in = new_knowledge.vectors_k1.find(word);
      if (ip == past.vectors_k1.end() || in == new_knowledge.vectors_k1.end()) {
        if (stats) ++stats->skipped_words;
        continue;
      }
      const auto score = scorer(word, ip->second, in->second);
      if (stats) ++stats->scored_pairs;
      if (!score) {
        if (stats) ++stats->skipped_words;
        continue;
      }
      if (*score < delta) continue;
      auto ctx = past.contexts.find(word);
      if (ctx == past.contexts.end() || ctx->second.empty()) continue;
      rel.entries[word][domain_id] = ctx->second;
      if (stats) {
        ++stats->kept_pairs;
        for (const auto& [cw, n] : ctx->second) stats->borrowed_mass += n;
      }
    }
  }
  return rel;
}

RelevantKnowledge retrieve_with_model(const KnowledgeBase& kb,
                                      const DomainKnowledge& new_knowledge,
                                      const MetaLearnerParams& model,
                                      double delta, unsigned threads,
                                      RetrievalResult* stats) {
  RelevantKnowledge rel;
  for (const auto& [domain_id, past] : kb.domains) {
    // O = V_j intersect V_{n+1}, restricted to words with a sub-corpus-1
    // vector on both sides.
    std::vector<const std::string*> words;
    std::vector<ScorePair> pairs;
    for (const auto& [word, count] : past.vocab.entries) {
      if (!new_knowledge.vocab.contains(word)) continue;
      auto ip = past.vectors_k1.find(word);
      auto in = new_knowledge.vectors_k1.find(word);
      if (ip == past.vectors_k1.end() || in == new_knowledge.vectors_k1.end()) {
        if (stats) ++stats->skipped_words;
        continue;
      }
      words.push_back(&ip->first);
      pairs.emplace_back(&ip->second, &in->second);
    }
    const auto scores = batch_inference(model, pairs, threads);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (stats) ++stats->scored_pairs;
      if (!scores[i]) {
        if (stats) ++stats->skipped_words;
        continue;
      }
      if (*scores[i] < delta) continue;
      auto ctx = past.contexts.find(*words[i]);
      if (ctx == past.contexts.end() || ctx->second.empty()) continue;
      rel.entries[*words[i]][domain_id] = ctx->second;
      if (stats) {
        ++stats->kept_pairs;
        for (const auto& [cw, n] : ctx->second) stats->borrowed_mass += n;
      }
    }
  }
  return rel;
}

DomainKnowledge build_domain_knowledge(const KnowledgeBase& kb,
                                       const DomainCorpus& corpus,
                                       const RetrievalConfig& config) {
  const std::uint64_t min_count =
      config.min_count ? config.min_count : kb.manifest.min_count;
  const int ctx_window =
      config.context_window ? config.context_window : kb.manifest.context_window;
  const int feat_window =
      config.feature_window ? config.feature_window : kb.manifest.feature_window;
  const std::uint64_t bytes =
      config.subcorpus_bytes ? config.subcorpus_bytes : kb.manifest.subcorpus_bytes;
  if (bytes == 0) {
    throw std::invalid_argument("sub-corpus byte budget is unset");
  }
  DomainKnowledge k;
  k.vocab = build_vocab(corpus, min_count);
  k.contexts = scan_context_words(corpus, k.vocab, ctx_window);
  const auto [sub1, sub2] = subsample_corpus(corpus, bytes, config.seed);
  k.vectors_k1 =
      build_feature_vectors(sub1, kb.feature_index, feat_window, &k.vocab);
  k.vectors_k2 =
      build_feature_vectors(sub2, kb.feature_index, feat_window, &k.vocab);
  return k;
}

RetrievalResult retrieve_relevant(const KnowledgeBase& kb,
                                  const DomainCorpus& new_corpus,
                                  const RetrievalConfig& config) {
  if (config.delta < 0.0 || config.delta > 1.0) {
    throw std::invalid_argument("delta must be in [0, 1]");
  }
  if (kb.domains.empty()) {
    throw std::invalid_argument("knowledge base has no past domains");
  }
  if (new_corpus.documents.empty()) {
    throw std::invalid_argument("new domain corpus is empty");
  }
  RetrievalResult result;
  result.new_knowledge = build_domain_knowledge(kb, new_corpus, config);

  std::vector<DomainVectors> past;
  past.reserve(kb.domains.size());
  for (const auto& [id, k] : kb.domains) {
    past.push_back({id, &k.vectors_k1, &k.vectors_k2});
  }
  DomainVectors fresh{new_corpus.domain_id, &result.new_knowledge.vectors_k1,
                      &result.new_knowledge.vectors_k2};
  AdaptConfig adapt = config.adapt;
  adapt.train.seed = config.seed;
  result.adapted_model = adapt_meta(kb.base_model, past, fresh, adapt);

  result.relevant =
      retrieve_with_model(kb, result.new_knowledge, result.adapted_model,
                          config.delta, config.threads, &result);
  for (const auto& [w, ctx] : result.new_knowledge.contexts) {
    for (const auto& [cw, n] : ctx) result.corpus_mass += n;
  }
  return result;
}

void save_relevant(const RelevantKnowledge& rel,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [word, doms] : rel.entries) {
    for (const auto& [dom, bag] : doms) {
      for (const auto& [cw, n] : bag) {
        out << word << '\t' << dom << '\t' << cw << '\t' << n << '\n';
      }
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

RelevantKnowledge load_relevant(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  RelevantKnowledge rel;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    const auto t3 = line.find('\t', t2 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos ||
        t3 == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": malformed relevant-knowledge line");
    }
    rel.entries[line.substr(0, t1)][line.substr(t1 + 1, t2 - t1 - 1)]
               [line.substr(t2 + 1, t3 - t2 - 1)] =
        std::stoull(line.substr(t3 + 1));
  }
  return rel;
}

std::vector<TokenList> tfidf_retrieve(
    const std::vector<const DomainCorpus*>& past_corpora,
    const DomainCorpus& new_corpus, double threshold) {
  if (past_corpora.empty()) {
    throw std::invalid_argument("tfidf_retrieve: no past corpora");
  }
  if (threshold < 0.0 || threshold > 1.0) {
    throw std::invalid_argument("tfidf_retrieve: threshold must be in [0, 1]");
  }
  // Document frequencies over the union of past-domain documents.
  std::unordered_map<std::string, std::uint64_t> df;
  std::uint64_t n_docs = 0;
  for (const DomainCorpus* c : past_corpora) {
    for (const auto& doc : c->documents) {
      ++n_docs;
      std::unordered_map<std::string, int> seen;
      for (const auto& tok : doc) {
        if (seen.emplace(tok, 1).second) ++df[tok];
      }
    }
  }
  auto idf = [&](const std::string& w) {
    auto it = df.find(w);
    const double d = it == df.end() ? 0.0 : double(it->second);
    return std::log((1.0 + double(n_docs)) / (1.0 + d)) + 1.0;
  };

  // Reference vector: term frequency over the whole new corpus, idf-weighted.
  std::unordered_map<std::string, double> ref;
  for (const auto& doc : new_corpus.documents) {
    for (const auto& tok : doc) ref[tok] += 1.0;
  }
  double ref_norm2 = 0.0;
  for (auto& [w, tf] : ref) {
    tf *= idf(w);
    ref_norm2 += tf * tf;
  }
  const double ref_norm = std::sqrt(ref_norm2);

  std::vector<TokenList> borrowed;
  if (ref_norm == 0.0) return borrowed;
  for (const DomainCorpus* c : past_corpora) {
    for (const auto& doc : c->documents) {
      std::unordered_map<std::string, double> vec;
      for (const auto& tok : doc) vec[tok] += 1.0;
      double dot = 0.0, norm2 = 0.0;
      for (auto& [w, tf] : vec) {
        tf *= idf(w);
        norm2 += tf * tf;
        auto it = ref.find(w);
        if (it != ref.end()) dot += tf * it->second;
      }
      if (norm2 == 0.0) continue;
      const double cos = dot / (std::sqrt(norm2) * ref_norm);
      if (cos >= threshold) borrowed.push_back(doc);
    }
  }
  return borrowed;
}

}  // namespace ldem
