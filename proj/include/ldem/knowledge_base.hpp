#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ldem/corpus.hpp"
#include "ldem/metalearner.hpp"

namespace ldem {

// Everything retained for one past domain: vocabulary, context bag over
// the full corpus, and per-sub-corpus feature vectors.
struct DomainKnowledge {
  Vocabulary vocab;
  ContextBag contexts;
  std::map<std::string, FeatureVector> vectors_k1;
  std::map<std::string, FeatureVector> vectors_k2;
};

struct KbManifest {
  std::uint32_t format_version = 1;
  std::uint32_t f = 0;
  int context_window = 5;  // window for domain context bags
  int feature_window = 5;  // window for feature vectors
  std::uint64_t subcorpus_bytes = 0;
  std::uint64_t min_count = 5;
  bool trained = false;  // base meta-learner has been fit
};

// Persistent store: feature vocabulary, base meta-learner, and per-domain
// knowledge. On disk it is a directory:
//   manifest.json        version, parameters, per-file CRC32 checksums
//   feature_vocab.txt    one word per line, rank = line number
//   meta_model.bin
//   domains/<id>/vocab.tsv | contexts.tsv | vectors_k1.tsv | vectors_k2.tsv
// All text files are UTF-8, TAB-separated, LF-terminated.
struct KnowledgeBase {
  std::vector<std::string> feature_words;
  WordIndex feature_index;
  MetaLearnerParams base_model;
  std::map<std::string, DomainKnowledge> domains;
  KbManifest manifest;
};

// Throws on f mismatch between the model and the vocabulary.
KnowledgeBase kb_init(const Vocabulary& feature_vocab,
                      MetaLearnerParams base_model, KbManifest manifest);

// Throws on duplicate id, unsafe id, or feature ranks out of range.
void kb_add_domain(KnowledgeBase& kb, const std::string& domain_id,
                   DomainKnowledge knowledge);

void kb_replace_model(KnowledgeBase& kb, MetaLearnerParams model);

// Checks every stored feature rank against |feature_words|.
void kb_validate(const KnowledgeBase& kb);

void kb_save(const KnowledgeBase& kb, const std::filesystem::path& dir);
KnowledgeBase kb_load(const std::filesystem::path& dir);

bool kb_equal(const KnowledgeBase& a, const KnowledgeBase& b);

}  // namespace ldem
