#include "ldem/embedding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "ldem/rng.hpp"

namespace ldem {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

NegativeSampler::NegativeSampler(const Vocabulary& vocab, double power,
                                 std::size_t table_size) {
  if (vocab.entries.empty()) {
    throw std::invalid_argument("NegativeSampler: empty vocabulary");
  }
  if (table_size == 0) throw std::invalid_argument("table_size must be > 0");
  probs_.resize(vocab.entries.size());
  double z = 0.0;
  for (std::size_t r = 0; r < vocab.entries.size(); ++r) {
    probs_[r] = std::pow(double(vocab.entries[r].second), power);
    z += probs_[r];
  }
  for (double& p : probs_) p /= z;

  table_.resize(table_size);
  std::size_t word = 0;
  double cumulative = probs_[0];
  for (std::size_t i = 0; i < table_size; ++i) {
    table_[i] = static_cast<std::uint32_t>(word);
    if (double(i + 1) / double(table_size) > cumulative &&
        word + 1 < probs_.size()) {
      ++word;
      cumulative += probs_[word];
    }
  }
}

std::vector<TrainingPair> relevant_pairs(const RelevantKnowledge& rel,
                                         const Vocabulary& vocab,
                                         std::size_t* dropped) {
  std::vector<TrainingPair> pairs;
  std::size_t skipped = 0;
  for (const auto& [word, doms] : rel.entries) {
    auto wi = vocab.index.find(word);
    for (const auto& [dom, bag] : doms) {
      for (const auto& [cw, n] : bag) {
        auto ci = vocab.index.find(cw);
        if (wi == vocab.index.end() || ci == vocab.index.end()) {
          skipped += n;
          continue;
        }
        for (std::uint64_t i = 0; i < n; ++i) {
          pairs.push_back({wi->second, ci->second});
        }
      }
    }
  }
  if (dropped) *dropped = skipped;
  return pairs;
}

double sg_pair_objective(const std::vector<double>& u_center,
                         const std::vector<double>& v_context,
                         const std::vector<std::vector<double>>& v_negatives) {
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  double obj = std::log(sigmoid(dot(u_center, v_context)));
  for (const auto& vn : v_negatives) {
    obj += std::log(sigmoid(-dot(u_center, vn)));
  }
  return obj;
}

void sg_pair_gradients(const std::vector<double>& u_center,
                       const std::vector<double>& v_context,
                       const std::vector<std::vector<double>>& v_negatives,
                       std::vector<double>& g_center,
                       std::vector<double>& g_context,
                       std::vector<std::vector<double>>& g_negatives) {
  const std::size_t d = u_center.size();
  g_center.assign(d, 0.0);
  g_context.assign(d, 0.0);
  g_negatives.assign(v_negatives.size(), std::vector<double>(d, 0.0));
  auto dot = [&](const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < d; ++i) s += u_center[i] * b[i];
    return s;
  };
  // d/dx log sigma(x) = 1 - sigma(x); label 1 for the context, 0 for negs.
  double g = 1.0 - sigmoid(dot(v_context));
  for (std::size_t i = 0; i < d; ++i) {
    g_center[i] += g * v_context[i];
    g_context[i] += g * u_center[i];
  }
  for (std::size_t k = 0; k < v_negatives.size(); ++k) {
    g = -sigmoid(dot(v_negatives[k]));
    for (std::size_t i = 0; i < d; ++i) {
      g_center[i] += g * v_negatives[k][i];
      g_negatives[k][i] += g * u_center[i];
    }
  }
}

namespace {

struct FrozenSample {
  std::vector<TrainingPair> pairs;
  std::vector<std::vector<std::uint32_t>> negatives;  // per pair
};

double objective_estimate(const EmbeddingModel& m, const FrozenSample& sample) {
  if (sample.pairs.empty()) return 0.0;
  double total = 0.0;
  const int d = m.dim;
  for (std::size_t i = 0; i < sample.pairs.size(); ++i) {
    const float* u = m.u_row(sample.pairs[i].center);
    const float* v = m.v_row(sample.pairs[i].context);
    double dot = 0;
    for (int k = 0; k < d; ++k) dot += double(u[k]) * v[k];
    total += std::log(std::max(sigmoid(dot), 1e-300));
    for (std::uint32_t neg : sample.negatives[i]) {
      const float* vn = m.v_row(neg);
      dot = 0;
      for (int k = 0; k < d; ++k) dot += double(u[k]) * vn[k];
      total += std::log(std::max(sigmoid(-dot), 1e-300));
    }
  }
  return total / double(sample.pairs.size());
}

struct Trainer {
  EmbeddingModel& model;
  const NegativeSampler& sampler;
  const SgConfig& config;
  double lr_floor;
  std::size_t total_planned = 0;

  void run_pairs(std::span<const TrainingPair> pairs, Rng& rng,
                 std::atomic<std::size_t>& processed) {
    const int d = model.dim;
    std::vector<double> gu(d);
    for (const TrainingPair& p : pairs) {
      const std::size_t done = processed.fetch_add(1);
      double lr = config.learning_rate *
                  (1.0 - double(done) / double(std::max<std::size_t>(
                                            1, total_planned)));
      lr = std::max(lr, lr_floor);
      float* u = model.u_row(p.center);
      std::fill(gu.begin(), gu.end(), 0.0);
      for (int slot = 0; slot <= config.negatives; ++slot) {
        std::uint32_t target;
        double label;
        if (slot == 0) {
          target = p.context;
          label = 1.0;
        } else {
          target = sampler.sample(rng);
          if (target == p.context) continue;
          label = 0.0;
        }
        float* v = model.v_row(target);
        double dot = 0;
        for (int k = 0; k < d; ++k) dot += double(u[k]) * v[k];
        const double g = (label - sigmoid(dot)) * lr;
        for (int k = 0; k < d; ++k) {
          gu[k] += g * v[k];
          v[k] += static_cast<float>(g * u[k]);
        }
      }
      for (int k = 0; k < d; ++k) u[k] += static_cast<float>(gu[k]);
    }
  }
};

}  // namespace

EmbeddingModel train_augmented(const DomainCorpus& corpus,
                               const RelevantKnowledge& rel,
                               const SgConfig& config, TrainLog* log) {
  if (config.dim < 1 || config.window < 1 || config.epochs < 0 ||
      config.negatives < 0 || config.subsample <= 0.0 ||
      config.subsample > 1.0) {
    throw std::invalid_argument("invalid skip-gram configuration");
  }
  const Vocabulary vocab = build_vocab(corpus, config.min_count);
  if (vocab.entries.empty()) {
    throw std::runtime_error(
        "train_skipgram: vocabulary empty after min_count filtering");
  }

  EmbeddingModel model;
  model.dim = config.dim;
  for (const auto& [w, c] : vocab.entries) {
    model.words.push_back(w);
    model.freqs.push_back(c);
  }
  model.index = vocab.index;
  model.u.resize(model.words.size() * std::size_t(config.dim));
  model.v.assign(model.words.size() * std::size_t(config.dim), 0.0f);
  {
    Rng init_rng(config.seed, 0x1417);
    const double s = 0.5 / config.dim;
    for (float& x : model.u) x = static_cast<float>(init_rng.range(-s, s));
  }

  const NegativeSampler sampler(vocab, config.power, config.table_size);

  // Per-word keep probability for frequent-word subsampling.
  std::vector<double> keep(vocab.entries.size());
  {
    double total = 0;
    for (const auto& [w, c] : vocab.entries) total += double(c);
    for (std::size_t r = 0; r < vocab.entries.size(); ++r) {
      const double fr = double(vocab.entries[r].second) / total;
      keep[r] = std::min(1.0, std::sqrt(config.subsample / fr) +
                                  config.subsample / fr);
    }
  }

  // Documents as in-vocab rank sequences.
  std::vector<std::vector<std::uint32_t>> docs;
  for (const auto& doc : corpus.documents) {
    std::vector<std::uint32_t> ranks;
    for (const auto& tok : doc) {
      auto it = vocab.index.find(tok);
      if (it != vocab.index.end()) ranks.push_back(it->second);
    }
    if (!ranks.empty()) docs.push_back(std::move(ranks));
  }

  std::size_t dropped = 0;
  const std::vector<TrainingPair> rel_base = relevant_pairs(rel, vocab, &dropped);
  if (log) log->dropped_relevant = dropped;

  const std::size_t whole = static_cast<std::size_t>(config.mix_weight);
  const double frac = config.mix_weight - double(whole);

  Rng rng(config.seed, 0x5C);
  Trainer trainer{model, sampler, config,
                  config.learning_rate * 1e-4};
  FrozenSample sample;
  std::atomic<std::size_t> processed{0};
  std::vector<std::uint32_t> kept;
  std::vector<TrainingPair> stream;

  for (int epoch = 1; epoch <= std::max(config.epochs, 1); ++epoch) {
    const bool train_this_epoch = epoch <= config.epochs;
    stream.clear();
    for (const auto& doc : docs) {
      kept.clear();
      for (std::uint32_t r : doc) {
        if (keep[r] >= 1.0 || rng.uniform() < keep[r]) kept.push_back(r);
      }
      const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(kept.size());
      for (std::ptrdiff_t i = 0; i < n; ++i) {
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - config.window);
        const std::ptrdiff_t hi =
            std::min<std::ptrdiff_t>(n - 1, i + config.window);
        for (std::ptrdiff_t j = lo; j <= hi; ++j) {
          if (j != i) stream.push_back({kept[i], kept[j]});
        }
      }
    }
    const std::size_t corpus_pairs = stream.size();
    for (const TrainingPair& p : rel_base) {
      for (std::size_t c = 0; c < whole; ++c) stream.push_back(p);
      if (frac > 0.0 && rng.uniform() < frac) stream.push_back(p);
    }
    rng.shuffle(stream);

    if (epoch == 1) {
      trainer.total_planned = stream.size() * std::size_t(std::max(config.epochs, 1));
      if (log) {
        log->corpus_pairs = corpus_pairs;
        log->relevant_pairs = stream.size() - corpus_pairs;
      }
      // Freeze the objective sample before any update.
      Rng srng(config.seed, 0x0B7);
      const std::size_t n_sample = std::min<std::size_t>(20000, stream.size());
      for (std::size_t i = 0; i < n_sample; ++i) {
        sample.pairs.push_back(stream[i]);
        std::vector<std::uint32_t> negs;
        for (int k = 0; k < config.negatives; ++k) {
          const std::uint32_t neg = sampler.sample(srng);
          if (neg != stream[i].context) negs.push_back(neg);
        }
        sample.negatives.push_back(std::move(negs));
      }
      if (log) log->objective.push_back(objective_estimate(model, sample));
    }
    if (!train_this_epoch) break;

    if (config.workers <= 1) {
      trainer.run_pairs(stream, rng, processed);
    } else {
      // Lock-free data-parallel mode: overlapping unsynchronized updates
      // are an accepted approximation; output is not bit-reproducible.
      const std::size_t chunk =
          (stream.size() + config.workers - 1) / config.workers;
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < config.workers; ++w) {
        const std::size_t lo = std::min(stream.size(), std::size_t(w) * chunk);
        const std::size_t hi = std::min(stream.size(), lo + chunk);
        if (lo >= hi) continue;
        pool.emplace_back([&, lo, hi, w, epoch] {
          Rng wrng(config.seed, 0x1000u * epoch + w + 7);
          trainer.run_pairs(
              std::span<const TrainingPair>(stream.data() + lo, hi - lo), wrng,
              processed);
        });
      }
      for (auto& t : pool) t.join();
    }
    if (log) log->objective.push_back(objective_estimate(model, sample));
  }
  return model;
}

EmbeddingModel train_skipgram(const DomainCorpus& corpus, const SgConfig& config,
                              TrainLog* log) {
  return train_augmented(corpus, RelevantKnowledge{}, config, log);
}

void save_embeddings(const EmbeddingModel& model,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << model.words.size() << ' ' << model.dim << '\n';
  char buf[32];
  for (std::size_t r = 0; r < model.words.size(); ++r) {
    out << model.words[r];
    const float* row = model.u_row(r);
    for (int k = 0; k < model.dim; ++k) {
      std::snprintf(buf, sizeof buf, " %.9g", double(row[k]));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

EmbeddingModel load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("empty embedding file " + path.string());
  }
  std::istringstream header(line);
  std::size_t n_words = 0;
  int dim = 0;
  if (!(header >> n_words >> dim) || dim < 1) {
    throw std::runtime_error("malformed embedding header in " + path.string());
  }
  std::string trailing;
  if (header >> trailing) {
    throw std::runtime_error("malformed embedding header in " + path.string());
  }
  EmbeddingModel model;
  model.dim = dim;
  model.u.reserve(n_words * std::size_t(dim));
  for (std::size_t r = 0; r < n_words; ++r) {
    if (!std::getline(in, line)) {
      throw std::runtime_error("truncated embedding file " + path.string());
    }
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) {
      throw std::runtime_error("malformed embedding row " + std::to_string(r));
    }
    if (!model.index.emplace(word, static_cast<std::uint32_t>(r)).second) {
      throw std::runtime_error("duplicate word '" + word + "' in " +
                               path.string());
    }
    model.words.push_back(word);
    for (int k = 0; k < dim; ++k) {
      double x;
      if (!(ls >> x)) {
        throw std::runtime_error("row for '" + word + "' has fewer than " +
                                 std::to_string(dim) + " values");
      }
      model.u.push_back(static_cast<float>(x));
    }
    double extra;
    if (ls >> extra) {
      throw std::runtime_error("row for '" + word + "' has more than " +
                               std::to_string(dim) + " values");
    }
  }
  model.freqs.assign(model.words.size(), 0);
  model.v.assign(model.u.size(), 0.0f);
  return model;
}

EmbeddingModel concat_embeddings(const EmbeddingModel& a,
                                 const EmbeddingModel& b,
                                 MissingPolicy policy) {
  if (policy == MissingPolicy::kStrict) {
    std::set<std::string> sa(a.words.begin(), a.words.end());
    std::set<std::string> sb(b.words.begin(), b.words.end());
    if (sa != sb) {
      throw std::runtime_error(
          "concat_embeddings: vocabularies differ under strict policy");
    }
  }
  EmbeddingModel out;
  out.dim = a.dim + b.dim;
  auto add_word = [&](const std::string& w) {
    if (out.index.count(w)) return;
    out.index.emplace(w, static_cast<std::uint32_t>(out.words.size()));
    out.words.push_back(w);
    auto ia = a.index.find(w);
    for (int k = 0; k < a.dim; ++k) {
      out.u.push_back(ia == a.index.end() ? 0.0f : a.u_row(ia->second)[k]);
    }
    auto ib = b.index.find(w);
    for (int k = 0; k < b.dim; ++k) {
      out.u.push_back(ib == b.index.end() ? 0.0f : b.u_row(ib->second)[k]);
    }
  };
  for (const auto& w : a.words) add_word(w);
  for (const auto& w : b.words) add_word(w);
  out.freqs.assign(out.words.size(), 0);
  out.v.assign(out.u.size(), 0.0f);
  return out;
}

}  // namespace ldem
