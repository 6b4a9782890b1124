#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ldem/corpus.hpp"
#include "ldem/retrieval.hpp"
#include "ldem/rng.hpp"

namespace ldem {

struct SgConfig {
  int dim = 300;
  int window = 5;
  int negatives = 5;
  double subsample = 1e-3;       // frequent-word subsampling threshold
  double learning_rate = 0.025;  // decays linearly to 1e-4 x initial
  int epochs = 5;
  std::uint64_t min_count = 5;
  std::uint64_t seed = 1;
  unsigned workers = 1;    // 1 = deterministic; >1 = lock-free data-parallel
  double mix_weight = 1.0; // multiplicity scale for relevant-knowledge pairs
  std::size_t table_size = 10'000'000;
  double power = 0.75;     // negative-sampling distribution exponent
};

// Input (u) and output (v) vector tables over a fixed word order. Rows
// align with `words` positions; loaded models carry zero v tables.
struct EmbeddingModel {
  std::vector<std::string> words;
  WordIndex index;
  std::vector<std::uint64_t> freqs;  // zero for loaded models
  int dim = 0;
  std::vector<float> u;
  std::vector<float> v;

  const float* u_row(std::size_t r) const { return u.data() + r * dim; }
  float* u_row(std::size_t r) { return u.data() + r * dim; }
  const float* v_row(std::size_t r) const { return v.data() + r * dim; }
  float* v_row(std::size_t r) { return v.data() + r * dim; }
};

struct TrainLog {
  // Objective estimate on a frozen pair sample: index 0 before training,
  // then one entry per epoch.
  std::vector<double> objective;
  std::size_t corpus_pairs = 0;
  std::size_t relevant_pairs = 0;
  std::size_t dropped_relevant = 0;  // pairs with a word outside the vocab
};

// Unigram^power sampling table.
class NegativeSampler {
 public:
  NegativeSampler(const Vocabulary& vocab, double power, std::size_t table_size);
  std::uint32_t sample(Rng& rng) const {
    return table_[rng.below(table_.size())];
  }
  double probability(std::uint32_t rank) const { return probs_[rank]; }

 private:
  std::vector<std::uint32_t> table_;
  std::vector<double> probs_;
};

struct TrainingPair {
  std::uint32_t center;
  std::uint32_t context;
};

// One pair per (word, context-word) multiplicity in the bags of `rel`,
// mapped to ranks of `vocab`; pairs touching an out-of-vocab word are
// dropped and counted.
std::vector<TrainingPair> relevant_pairs(const RelevantKnowledge& rel,
                                         const Vocabulary& vocab,
                                         std::size_t* dropped = nullptr);

EmbeddingModel train_skipgram(const DomainCorpus& corpus, const SgConfig& config,
                              TrainLog* log = nullptr);

// Joint objective: corpus pairs and relevant-knowledge pairs in one
// uniformly shuffled stream per epoch; negatives for both come from the
// new-domain unigram table. With empty `rel` this is exactly train_skipgram.
EmbeddingModel train_augmented(const DomainCorpus& corpus,
                               const RelevantKnowledge& rel,
                               const SgConfig& config, TrainLog* log = nullptr);

// One skip-gram step's objective and analytic gradients (positive context
// plus fixed negatives), double precision; used by training and checkable
// against finite differences.
double sg_pair_objective(const std::vector<double>& u_center,
                         const std::vector<double>& v_context,
                         const std::vector<std::vector<double>>& v_negatives);
void sg_pair_gradients(const std::vector<double>& u_center,
                       const std::vector<double>& v_context,
                       const std::vector<std::vector<double>>& v_negatives,
                       std::vector<double>& g_center,
                       std::vector<double>& g_context,
                       std::vector<std::vector<double>>& g_negatives);

// word2vec text format: "vocab_size dim\n" then "word f1 ... fd\n" with
// 9-significant-digit floats. Only u vectors are written.
void save_embeddings(const EmbeddingModel& model,
                     const std::filesystem::path& path);
EmbeddingModel load_embeddings(const std::filesystem::path& path);

enum class MissingPolicy { kZeroFill, kStrict };

// Union vocabulary; each word's vector is a's (zero-filled when absent
// under kZeroFill) concatenated with b's. kStrict requires equal vocabularies.
EmbeddingModel concat_embeddings(const EmbeddingModel& a,
                                 const EmbeddingModel& b, MissingPolicy policy);

}  // namespace ldem
