#include "ldem/metalearner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "ldem/rng.hpp"

namespace ldem {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_vector(const MetaLearnerParams& p, const FeatureVector& x) {
  if (x.counts.empty()) {
    throw std::invalid_argument("meta_forward: all-zero feature vector for '" +
                                x.word + "'");
  }
  if (!x.counts.empty() && x.counts.back().first >= p.f) {
    throw std::out_of_range("feature rank " +
                            std::to_string(x.counts.back().first) +
                            " >= f=" + std::to_string(p.f));
  }
}

double forward_logit(const MetaLearnerParams& p, const FeatureVector& a,
                     const FeatureVector& b, std::vector<double>& za,
                     std::vector<double>& zb) {
  za.assign(p.h, 0.0);
  zb.assign(p.h, 0.0);
  meta_project(p, a, za.data());
  meta_project(p, b, zb.data());
  double z = p.b2;
  for (std::uint32_t r = 0; r < p.h; ++r) {
    z += p.w2[r] * std::fabs(za[r] - zb[r]);
  }
  return z;
}

}  // namespace

void meta_project(const MetaLearnerParams& params, const FeatureVector& x,
                  double* out) {
  const double inv = 1.0 / x.l1();
  const std::uint32_t h = params.h;
  for (const auto& [rank, count] : x.counts) {
    const double v = count * inv;
    const double* col = params.w1.data() + std::size_t(rank) * h;
    for (std::uint32_t r = 0; r < h; ++r) out[r] += v * col[r];
  }
}

double meta_forward(const MetaLearnerParams& params, const FeatureVector& a,
                    const FeatureVector& b) {
  check_vector(params, a);
  check_vector(params, b);
  std::vector<double> za, zb;
  return sigmoid(forward_logit(params, a, b, za, zb));
}

double meta_loss_and_grad(const MetaLearnerParams& params,
                          std::span<const PairExample> batch,
                          MetaLearnerParams& grads) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  grads.f = params.f;
  grads.h = params.h;
  grads.w1.assign(params.w1.size(), 0.0);
  grads.w2.assign(params.w2.size(), 0.0);
  grads.b2 = 0.0;

  const std::uint32_t h = params.h;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  std::vector<double> za, zb, gp(h), gq(h);
  for (const PairExample& ex : batch) {
    check_vector(params, ex.a);
    check_vector(params, ex.b);
    const double z = forward_logit(params, ex.a, ex.b, za, zb);
    const double y = ex.label;
    // Stable BCE: max(z,0) - z*y + log(1 + exp(-|z|))
    loss += (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)))) *
            inv_n;
    const double g = (sigmoid(z) - y) * inv_n;  // dL/dz
    grads.b2 += g;
    for (std::uint32_t r = 0; r < h; ++r) {
      const double d = za[r] - zb[r];
      grads.w2[r] += g * std::fabs(d);
      const double sgn = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
      gp[r] = g * params.w2[r] * sgn;
      gq[r] = -gp[r];
    }
    const double inv_a = 1.0 / ex.a.l1();
    for (const auto& [rank, count] : ex.a.counts) {
      const double v = count * inv_a;
      double* col = grads.w1.data() + std::size_t(rank) * h;
      for (std::uint32_t r = 0; r < h; ++r) col[r] += gp[r] * v;
    }
    const double inv_b = 1.0 / ex.b.l1();
    for (const auto& [rank, count] : ex.b.counts) {
      const double v = count * inv_b;
      double* col = grads.w1.data() + std::size_t(rank) * h;
      for (std::uint32_t r = 0; r < h; ++r) col[r] += gq[r] * v;
    }
  }
  return loss;
}

MetaLearnerParams init_meta_params(std::uint32_t f, std::uint32_t h,
                                   std::uint64_t seed) {
  if (f < 1 || h < 1) throw std::invalid_argument("f and h must be >= 1");
  MetaLearnerParams p;
  p.f = f;
  p.h = h;
  p.w1.resize(std::size_t(f) * h);
  p.w2.resize(h);
  Rng rng(seed, 0xABu);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(f));
  for (double& w : p.w1) w = rng.range(-s1, s1);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
  for (double& w : p.w2) w = rng.range(-s2, s2);
  p.b2 = 0.0;
  return p;
}

std::vector<PairExample> make_pair_examples(
    const std::vector<DomainVectors>& domains, std::size_t words_per_domain,
    double neg_ratio, std::uint64_t seed) {
  if (domains.empty()) {
    throw std::invalid_argument("make_pair_examples: no domains");
  }
  Rng rng(seed, 0x9A17);
  std::vector<PairExample> out;
  double acc = 0.0;
  for (std::size_t j = 0; j < domains.size(); ++j) {
    const DomainVectors& dom = domains[j];
    std::vector<const std::string*> eligible;
    for (const auto& [w, fv] : *dom.k1) {
      if (dom.k2->count(w)) eligible.push_back(&w);
    }
    rng.shuffle(eligible);
    const std::size_t take = std::min(words_per_domain, eligible.size());
    for (std::size_t t = 0; t < take; ++t) {
      const std::string& w = *eligible[t];
      out.push_back({dom.k1->at(w), dom.k2->at(w), 1});
      acc += neg_ratio;
      while (acc >= 1.0) {
        acc -= 1.0;
        // Same sub-corpus index on both sides, per the pairing scheme.
        const int k = rng.below(2) == 0 ? 1 : 2;
        std::vector<std::size_t> others;
        for (std::size_t o = 0; o < domains.size(); ++o) {
          if (o == j) continue;
          const auto* m = k == 1 ? domains[o].k1 : domains[o].k2;
          if (m->count(w)) others.push_back(o);
        }
        if (others.empty()) continue;  // word unique to this domain
        const std::size_t o = others[rng.below(others.size())];
        const auto* mine = k == 1 ? dom.k1 : dom.k2;
        const auto* theirs = k == 1 ? domains[o].k1 : domains[o].k2;
        out.push_back({mine->at(w), theirs->at(w), 0});
      }
    }
  }
  if (out.empty()) {
    throw std::runtime_error("make_pair_examples: no valid pair could be formed");
  }
  return out;
}

EpochMetrics evaluate_pairs(const MetaLearnerParams& params,
                            std::span<const PairExample> examples) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const PairExample& ex : examples) {
    const bool pred = meta_forward(params, ex.a, ex.b) >= 0.5;
    if (pred && ex.label == 1) ++tp;
    else if (pred && ex.label == 0) ++fp;
    else if (!pred && ex.label == 1) ++fn;
  }
  EpochMetrics m;
  m.precision = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
  m.f1 = m.precision + m.recall == 0
             ? 0.0
             : 2 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

namespace {

struct AdamState {
  std::vector<double> m_w1, v_w1, m_w2, v_w2;
  double m_b2 = 0, v_b2 = 0;
  std::size_t t = 0;

  explicit AdamState(const MetaLearnerParams& p)
      : m_w1(p.w1.size()), v_w1(p.w1.size()),
        m_w2(p.w2.size()), v_w2(p.w2.size()) {}

  void step(MetaLearnerParams& p, const MetaLearnerParams& g, double lr) {
    constexpr double b1 = 0.9, b2m = 0.999, eps = 1e-8;
    ++t;
    const double c1 = 1.0 - std::pow(b1, double(t));
    const double c2 = 1.0 - std::pow(b2m, double(t));
    auto upd = [&](double& w, double grad, double& m, double& v) {
      m = b1 * m + (1 - b1) * grad;
      v = b2m * v + (1 - b2m) * grad * grad;
      w -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
    };
    for (std::size_t i = 0; i < p.w1.size(); ++i) {
      upd(p.w1[i], g.w1[i], m_w1[i], v_w1[i]);
    }
    for (std::size_t i = 0; i < p.w2.size(); ++i) {
      upd(p.w2[i], g.w2[i], m_w2[i], v_w2[i]);
    }
    upd(p.b2, g.b2, m_b2, v_b2);
  }
};

// Shared loop for base training and adaptation: Adam over shuffled
// mini-batches, early stop on validation F1, best-epoch weights returned.
MetaLearnerParams train_loop(MetaLearnerParams params,
                             std::span<const PairExample> train,
                             std::span<const PairExample> valid,
                             const MetaTrainConfig& config,
                             std::vector<EpochMetrics>* log) {
  if (train.empty()) throw std::invalid_argument("empty training split");
  MetaLearnerParams best = params;
  double best_f1 = -1.0;
  std::size_t since_best = 0;
  AdamState adam(params);
  Rng rng(config.seed, 0x7EA);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  MetaLearnerParams grads;
  std::vector<PairExample> batch;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      batch.clear();
      const std::size_t end =
          std::min(order.size(), start + config.batch_size);
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
      epoch_loss += meta_loss_and_grad(params, batch, grads);
      adam.step(params, grads, config.learning_rate);
      ++batches;
    }
    EpochMetrics m = evaluate_pairs(params, valid.empty() ? train : valid);
    m.epoch = epoch;
    m.train_loss = epoch_loss / double(batches);
    if (log) log->push_back(m);
    if (m.f1 > best_f1) {
      best_f1 = m.f1;
      best = params;
      since_best = 0;
    } else if (++since_best > config.patience) {
      break;
    }
  }
  return config.epochs == 0 ? params : best;
}

}  // namespace

MetaLearnerParams train_base(std::span<const PairExample> train,
                             std::span<const PairExample> valid,
                             std::uint32_t f, const MetaTrainConfig& config,
                             std::vector<EpochMetrics>* log) {
  MetaLearnerParams params = init_meta_params(f, config.hidden, config.seed);
  if (config.epochs == 0) return params;
  return train_loop(std::move(params), train, valid, config, log);
}

MetaLearnerParams adapt_meta(const MetaLearnerParams& base,
                             const std::vector<DomainVectors>& past,
                             const DomainVectors& new_domain,
                             const AdaptConfig& config,
                             std::vector<EpochMetrics>* log) {
  if (config.train.epochs == 0) return base;
  Rng rng(config.train.seed, 0xADA);

  std::vector<const std::string*> eligible;
  for (const auto& [w, fv] : *new_domain.k1) {
    if (new_domain.k2->count(w)) eligible.push_back(&w);
  }
  rng.shuffle(eligible);
  const std::size_t take = std::min(config.words, eligible.size());

  std::vector<PairExample> examples;
  double acc = 0.0;
  for (std::size_t t = 0; t < take; ++t) {
    const std::string& w = *eligible[t];
    examples.push_back({new_domain.k1->at(w), new_domain.k2->at(w), 1});
    acc += config.neg_ratio;
    while (acc >= 1.0) {
      acc -= 1.0;
      // Negative: (x_{w,n+1,1}, x_{w,j,2}) with j drawn uniformly among
      // past domains containing w.
      std::vector<std::size_t> cands;
      for (std::size_t o = 0; o < past.size(); ++o) {
        if (past[o].k2->count(w)) cands.push_back(o);
      }
      if (cands.empty()) continue;
      const std::size_t o = cands[rng.below(cands.size())];
      examples.push_back({new_domain.k1->at(w), past[o].k2->at(w), 0});
    }
  }
  if (examples.size() < config.min_examples) {
    throw std::runtime_error("adapt_meta: only " +
                             std::to_string(examples.size()) +
                             " tuning examples (< " +
                             std::to_string(config.min_examples) + ")");
  }
  rng.shuffle(examples);
  // 7:1 train/validation split of the tuning examples.
  const std::size_t n_valid = std::max<std::size_t>(1, examples.size() / 8);
  const std::size_t n_train = examples.size() - n_valid;
  std::span<const PairExample> tr(examples.data(), n_train);
  std::span<const PairExample> va(examples.data() + n_train, n_valid);
  return train_loop(base, tr, va, config.train, log);
}

std::vector<std::optional<double>> batch_inference(
    const MetaLearnerParams& params, const std::vector<ScorePair>& pairs,
    unsigned threads) {
  std::vector<std::optional<double>> out(pairs.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<std::size_t>(threads, std::max<std::size_t>(1, pairs.size()));

  auto work = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> za, zb;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& [a, b] = pairs[i];
      if (a->counts.empty() || b->counts.empty()) continue;  // stays nullopt
      out[i] = sigmoid(forward_logit(params, *a, *b, za, zb));
    }
  };
  if (threads == 1) {
    work(0, pairs.size());
    return out;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (pairs.size() + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t lo = std::min(pairs.size(), std::size_t(t) * chunk);
    const std::size_t hi = std::min(pairs.size(), lo + chunk);
    if (lo < hi) pool.emplace_back(work, lo, hi);
  }
  for (auto& th : pool) th.join();
  return out;
}

namespace {

constexpr char kMagic[4] = {'L', 'D', 'M', 'M'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_f32(std::ostream& os, float v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
float read_f32(std::istream& is) {
  float v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

void save_meta(const MetaLearnerParams& params,
               const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, params.f);
  write_u32(os, params.h);
  // Row-major h x f on disk.
  for (std::uint32_t r = 0; r < params.h; ++r) {
    for (std::uint32_t i = 0; i < params.f; ++i) {
      write_f32(os, static_cast<float>(params.w1_at(r, i)));
    }
  }
  for (double w : params.w2) write_f32(os, static_cast<float>(w));
  write_f32(os, static_cast<float>(params.b2));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

MetaLearnerParams load_meta(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("bad model magic in " + path.string());
  }
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw std::runtime_error("unsupported model version " +
                             std::to_string(version));
  }
  MetaLearnerParams p;
  p.f = read_u32(is);
  p.h = read_u32(is);
  if (!is || p.f < 1 || p.h < 1) {
    throw std::runtime_error("bad model header in " + path.string());
  }
  p.w1.resize(std::size_t(p.f) * p.h);
  for (std::uint32_t r = 0; r < p.h; ++r) {
    for (std::uint32_t i = 0; i < p.f; ++i) {
      p.w1[std::size_t(i) * p.h + r] = read_f32(is);
    }
  }
  p.w2.resize(p.h);
  for (double& w : p.w2) w = read_f32(is);
  p.b2 = read_f32(is);
  if (!is) throw std::runtime_error("truncated model file " + path.string());
  return p;
}

MetaLearnerParams quantize_meta(MetaLearnerParams params) {
  for (double& w : params.w1) w = static_cast<float>(w);
  for (double& w : params.w2) w = static_cast<float>(w);
  params.b2 = static_cast<float>(params.b2);
  return params;
}

}  // namespace ldem
