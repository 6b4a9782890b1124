#include "ldem/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "ldem/rng.hpp"

namespace ldem {

LabeledDataset dataset_from_examples(
    std::vector<std::pair<TokenList, std::string>> examples) {
  LabeledDataset ds;
  ds.examples = std::move(examples);
  std::set<std::string> classes;
  for (const auto& [doc, label] : ds.examples) classes.insert(label);
  ds.classes.assign(classes.begin(), classes.end());
  return ds;
}

LabeledDataset load_labeled_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::pair<TokenList, std::string>> examples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected 'label TAB text'");
    }
    examples.emplace_back(tokenize(line.substr(tab + 1)), line.substr(0, tab));
  }
  return dataset_from_examples(std::move(examples));
}

std::vector<std::vector<double>> featurize_documents(
    const LabeledDataset& dataset, const EmbeddingModel& embeddings,
    FeaturizeStats* stats) {
  std::vector<std::vector<double>> out;
  out.reserve(dataset.examples.size());
  const int d = embeddings.dim;
  for (const auto& [doc, label] : dataset.examples) {
    std::vector<double> vec(d, 0.0);
    std::size_t n = 0;
    for (const auto& tok : doc) {
      auto it = embeddings.index.find(tok);
      if (it == embeddings.index.end()) continue;
      const float* row = embeddings.u_row(it->second);
      for (int k = 0; k < d; ++k) vec[k] += row[k];
      ++n;
    }
    if (n > 0) {
      for (double& x : vec) x /= double(n);
    } else if (stats) {
      doc.empty() ? ++stats->empty_documents : ++stats->all_oov_documents;
    }
    out.push_back(std::move(vec));
  }
  return out;
}

namespace {

// Softmax regression trained with mini-batch SGD; returns test accuracy
// and per-class F1 on the test indices.
struct FitResult {
  double accuracy = 0;
  std::map<std::string, double> class_f1;
};

FitResult fit_once(const std::vector<std::vector<double>>& x,
                   const std::vector<std::size_t>& y, std::size_t n_classes,
                   const std::vector<std::string>& class_names,
                   const std::vector<std::size_t>& train_idx,
                   const std::vector<std::size_t>& valid_idx,
                   const std::vector<std::size_t>& test_idx,
                   const ClassifierConfig& config, std::uint64_t seed) {
  const std::size_t d = x.empty() ? 0 : x[0].size();
  std::vector<double> w(n_classes * d), b(n_classes, 0.0);
  Rng rng(seed, 0xC1F);
  for (double& v : w) v = rng.range(-0.01, 0.01);

  std::vector<double> logits(n_classes), probs(n_classes);
  auto predict = [&](const std::vector<double>& xi) {
    double mx = -1e300;
    for (std::size_t c = 0; c < n_classes; ++c) {
      double z = b[c];
      const double* wc = w.data() + c * d;
      for (std::size_t k = 0; k < d; ++k) z += wc[k] * xi[k];
      logits[c] = z;
      mx = std::max(mx, z);
    }
    double sum = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
      probs[c] = std::exp(logits[c] - mx);
      sum += probs[c];
    }
    for (double& p : probs) p /= sum;
  };
  auto accuracy_on = [&](const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i : idx) {
      predict(x[i]);
      const std::size_t pred =
          std::max_element(probs.begin(), probs.end()) - probs.begin();
      if (pred == y[i]) ++hit;
    }
    return double(hit) / double(idx.size());
  };

  std::vector<std::size_t> order = train_idx;
  std::vector<double> best_w = w, best_b = b;
  double best_valid = -1.0;
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double lr = config.learning_rate / double(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& xi = x[order[i]];
        predict(xi);
        for (std::size_t c = 0; c < n_classes; ++c) {
          const double g = probs[c] - (c == y[order[i]] ? 1.0 : 0.0);
          double* wc = w.data() + c * d;
          for (std::size_t k = 0; k < d; ++k) wc[k] -= lr * g * xi[k];
          b[c] -= lr * g;
        }
      }
    }
    const double va = accuracy_on(valid_idx.empty() ? train_idx : valid_idx);
    if (va > best_valid) {
      best_valid = va;
      best_w = w;
      best_b = b;
      since_best = 0;
    } else if (++since_best > config.patience) {
      break;
    }
  }
  w = best_w;
  b = best_b;

  FitResult res;
  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  std::size_t hit = 0;
  for (std::size_t i : test_idx) {
    predict(x[i]);
    const std::size_t pred =
        std::max_element(probs.begin(), probs.end()) - probs.begin();
    if (pred == y[i]) {
      ++hit;
      ++tp[pred];
    } else {
      ++fp[pred];
      ++fn[y[i]];
    }
  }
  res.accuracy = test_idx.empty() ? 0.0 : double(hit) / double(test_idx.size());
  for (std::size_t c = 0; c < n_classes; ++c) {
    const double p = tp[c] + fp[c] == 0 ? 0.0 : double(tp[c]) / double(tp[c] + fp[c]);
    const double r = tp[c] + fn[c] == 0 ? 0.0 : double(tp[c]) / double(tp[c] + fn[c]);
    res.class_f1[class_names[c]] = p + r == 0 ? 0.0 : 2 * p * r / (p + r);
  }
  return res;
}

}  // namespace

EvalReport train_eval_classifier(const std::vector<std::vector<double>>& features,
                                 const std::vector<std::string>& labels,
                                 const std::vector<std::uint64_t>& seeds,
                                 const ClassifierConfig& config) {
  if (features.size() != labels.size()) {
    throw std::invalid_argument("features/labels size mismatch");
  }
  if (features.empty()) throw std::invalid_argument("empty dataset");
  if (seeds.empty()) throw std::invalid_argument("no seeds given");
  std::set<std::string> class_set(labels.begin(), labels.end());
  if (class_set.size() < 2) {
    throw std::invalid_argument("need at least 2 classes");
  }
  std::vector<std::string> class_names(class_set.begin(), class_set.end());
  std::map<std::string, std::size_t> class_idx;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    class_idx[class_names[c]] = c;
  }
  std::vector<std::size_t> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) y[i] = class_idx[labels[i]];

  // Fixed test split; per-seed runs differ only in shuffling and init.
  std::vector<std::size_t> all(features.size());
  std::iota(all.begin(), all.end(), 0);
  Rng split_rng(0xD1CE);
  split_rng.shuffle(all);
  const std::size_t n_test = std::max<std::size_t>(
      1, static_cast<std::size_t>(double(all.size()) * config.test_fraction));
  std::vector<std::size_t> test_idx(all.begin(), all.begin() + n_test);
  std::vector<std::size_t> rest(all.begin() + n_test, all.end());
  // 7:1 train/validation split of the remainder.
  const std::size_t n_valid = rest.size() / 8;
  std::vector<std::size_t> valid_idx(rest.begin(), rest.begin() + n_valid);
  std::vector<std::size_t> train_idx(rest.begin() + n_valid, rest.end());
  if (train_idx.empty()) throw std::invalid_argument("dataset too small");

  EvalReport report;
  std::map<std::string, double> f1_sum;
  for (std::uint64_t seed : seeds) {
    FitResult r = fit_once(features, y, class_names.size(), class_names,
                           train_idx, valid_idx, test_idx, config, seed);
    report.accuracies.push_back(r.accuracy);
    for (const auto& [cls, f1] : r.class_f1) f1_sum[cls] += f1;
  }
  const double n = double(report.accuracies.size());
  report.mean_accuracy =
      std::accumulate(report.accuracies.begin(), report.accuracies.end(), 0.0) / n;
  double var = 0;
  for (double a : report.accuracies) {
    var += (a - report.mean_accuracy) * (a - report.mean_accuracy);
  }
  report.stdev_accuracy = std::sqrt(var / n);
  for (const auto& [cls, sum] : f1_sum) report.class_f1[cls] = sum / n;
  return report;
}

std::vector<std::pair<std::string, double>> nearest_neighbors(
    const EmbeddingModel& embeddings, const std::string& word, std::size_t k) {
  auto it = embeddings.index.find(word);
  if (it == embeddings.index.end()) {
    throw std::invalid_argument("nearest_neighbors: '" + word +
                                "' not in vocabulary");
  }
  const int d = embeddings.dim;
  auto norm = [&](const float* row) {
    double s = 0;
    for (int i = 0; i < d; ++i) s += double(row[i]) * row[i];
    return std::sqrt(s);
  };
  const float* q = embeddings.u_row(it->second);
  const double qn = norm(q);
  std::vector<std::pair<std::string, double>> scored;
  for (std::size_t r = 0; r < embeddings.words.size(); ++r) {
    if (r == it->second) continue;
    const float* row = embeddings.u_row(r);
    const double rn = norm(row);
    double dot = 0;
    for (int i = 0; i < d; ++i) dot += double(q[i]) * row[i];
    const double cos = qn == 0 || rn == 0 ? 0.0 : dot / (qn * rn);
    scored.emplace_back(embeddings.words[r], cos);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

}  // namespace ldem
