#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ldem/corpus.hpp"

namespace ldem {

// Pairwise similarity model:
//   score = sigmoid(W2 . abs(W1.(a/|a|1) - W1.(b/|b|1)) + b2)
// W1 is h x f; in memory it is stored feature-major (w1[i*h + r]) so a
// sparse input touches contiguous blocks. Weights are double in memory and
// 32-bit floats on disk.
struct MetaLearnerParams {
  std::uint32_t f = 0;
  std::uint32_t h = 0;
  std::vector<double> w1;  // size f*h, feature-major
  std::vector<double> w2;  // size h
  double b2 = 0.0;

  double w1_at(std::uint32_t row, std::uint32_t feature) const {
    return w1[std::size_t(feature) * h + row];
  }
  bool operator==(const MetaLearnerParams&) const = default;
};

struct PairExample {
  FeatureVector a;
  FeatureVector b;
  int label = 0;  // 1 = same-domain positive, 0 = cross-domain negative
};

struct MetaTrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  std::uint32_t hidden = 200;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

MetaLearnerParams init_meta_params(std::uint32_t f, std::uint32_t h,
                                   std::uint64_t seed);

// out must have room for h doubles; computes W1 . (x / |x|1).
void meta_project(const MetaLearnerParams& params, const FeatureVector& x,
                  double* out);

// Throws std::invalid_argument on an all-zero input.
double meta_forward(const MetaLearnerParams& params, const FeatureVector& a,
                    const FeatureVector& b);

// Mean binary cross-entropy over the batch; exact analytic gradients
// (abs subgradient at 0 is 0). grads must be shaped like params.
double meta_loss_and_grad(const MetaLearnerParams& params,
                          std::span<const PairExample> batch,
                          MetaLearnerParams& grads);

// Feature-vector maps of one domain's two sub-corpora.
struct DomainVectors {
  std::string domain_id;
  const std::map<std::string, FeatureVector>* k1 = nullptr;
  const std::map<std::string, FeatureVector>* k2 = nullptr;
};

// Positives pair a word's two sub-corpus vectors within one domain;
// negatives pair the word's vector with the same word from another domain
// (same sub-corpus index). Throws if no pair at all can be formed.
std::vector<PairExample> make_pair_examples(
    const std::vector<DomainVectors>& domains, std::size_t words_per_domain,
    double neg_ratio, std::uint64_t seed);

// Precision/recall/F1 of the positive class at score threshold 0.5.
EpochMetrics evaluate_pairs(const MetaLearnerParams& params,
                            std::span<const PairExample> examples);

// Mini-batch Adam from a fresh initialization; returns the parameters of
// the epoch with the best validation F1.
MetaLearnerParams train_base(std::span<const PairExample> train,
                             std::span<const PairExample> valid,
                             std::uint32_t f, const MetaTrainConfig& config,
                             std::vector<EpochMetrics>* log = nullptr);

struct AdaptConfig {
  std::size_t words = 3000;
  double neg_ratio = 1.0;
  std::size_t min_examples = 4;
  MetaTrainConfig train;  // hidden size is ignored; the base shape is kept
};

// Fine-tunes a copy of the base model on new-domain pairs: positives from
// the new domain's two sub-corpora, negatives against past-domain vectors
// of the same word. The base is not mutated.
MetaLearnerParams adapt_meta(const MetaLearnerParams& base,
                             const std::vector<DomainVectors>& past,
                             const DomainVectors& new_domain,
                             const AdaptConfig& config,
                             std::vector<EpochMetrics>* log = nullptr);

using ScorePair = std::pair<const FeatureVector*, const FeatureVector*>;

// Scores pairs in input order; nullopt marks an all-zero operand. Parallel
// schedules produce output identical to the sequential loop. threads == 0
// means hardware concurrency.
std::vector<std::optional<double>> batch_inference(
    const MetaLearnerParams& params, const std::vector<ScorePair>& pairs,
    unsigned threads = 0);

// Versioned binary: magic "LDMM", u32 version, u32 f, u32 h, then
// little-endian f32: W1 row-major (h x f), W2, b2.
void save_meta(const MetaLearnerParams& params,
               const std::filesystem::path& path);
MetaLearnerParams load_meta(const std::filesystem::path& path);

// Quantizes weights through 32-bit floats (the persisted precision).
MetaLearnerParams quantize_meta(MetaLearnerParams params);

}  // namespace ldem
