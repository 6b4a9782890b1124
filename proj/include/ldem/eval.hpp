#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ldem/corpus.hpp"
#include "ldem/embedding.hpp"

namespace ldem {

struct LabeledDataset {
  std::vector<std::pair<TokenList, std::string>> examples;
  std::vector<std::string> classes;  // sorted, unique
};

// One example per line: "label TAB text".
LabeledDataset load_labeled_dataset(const std::filesystem::path& path);
LabeledDataset dataset_from_examples(
    std::vector<std::pair<TokenList, std::string>> examples);

struct FeaturizeStats {
  std::size_t all_oov_documents = 0;
  std::size_t empty_documents = 0;
};

// Mean of in-vocabulary u vectors per document; zero vector when nothing
// is in vocabulary.
std::vector<std::vector<double>> featurize_documents(
    const LabeledDataset& dataset, const EmbeddingModel& embeddings,
    FeaturizeStats* stats = nullptr);

struct EvalReport {
  std::string name;
  std::vector<double> accuracies;  // one per seed
  double mean_accuracy = 0;
  double stdev_accuracy = 0;
  std::map<std::string, double> class_f1;  // averaged over seeds
};

struct ClassifierConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 200;
  std::size_t patience = 20;
  double test_fraction = 0.2;  // held out once; the rest splits 7:1
};

// Multinomial logistic regression over document features; the test split
// is fixed across seeds, each seed reshuffles training and initialization.
EvalReport train_eval_classifier(const std::vector<std::vector<double>>& features,
                                 const std::vector<std::string>& labels,
                                 const std::vector<std::uint64_t>& seeds,
                                 const ClassifierConfig& config = {});

// Top-k neighbors of `word` by cosine over u vectors, query excluded,
// ties broken lexicographically. Throws on an out-of-vocabulary query.
std::vector<std::pair<std::string, double>> nearest_neighbors(
    const EmbeddingModel& embeddings, const std::string& word, std::size_t k);

}  // namespace ldem
