#include <cmath>

#include "doctest.h"
#include "ldem/metalearner.hpp"
#include "ldem/rng.hpp"
#include "test_helpers.hpp"

using namespace ldem;
using ldem::testing::random_feature_vector;
using ldem::testing::TempDir;

namespace {

FeatureVector scaled(const FeatureVector& x, std::uint32_t c) {
  FeatureVector out = x;
  for (auto& [rank, count] : out.counts) count *= c;
  return out;
}

}  // namespace

TEST_CASE("meta_forward identical inputs give sigmoid(b2)") {
  Rng rng(3);
  MetaLearnerParams p = init_meta_params(10, 4, 1);
  p.b2 = 0.0;
  const FeatureVector x = random_feature_vector("w", 10, 4, rng);
  CHECK(meta_forward(p, x, x) == doctest::Approx(0.5).epsilon(1e-15));

  p.b2 = 0.3;
  const double expect = 1.0 / (1.0 + std::exp(-0.3));
  for (int i = 0; i < 50; ++i) {
    const FeatureVector y = random_feature_vector("w", 10, 1 + rng.below(9), rng);
    CHECK(meta_forward(p, y, y) == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("meta_forward symmetry and scale invariance") {
  Rng rng(5);
  const MetaLearnerParams p = init_meta_params(20, 6, 2);
  for (int i = 0; i < 200; ++i) {
    const FeatureVector x = random_feature_vector("w", 20, 1 + rng.below(10), rng);
    const FeatureVector y = random_feature_vector("w", 20, 1 + rng.below(10), rng);
    CHECK(meta_forward(p, x, y) == meta_forward(p, y, x));
    CHECK(std::fabs(meta_forward(p, scaled(x, 3), y) - meta_forward(p, x, y)) <
          1e-12);
  }
}

TEST_CASE("meta_forward rejects all-zero vectors") {
  Rng rng(1);
  const MetaLearnerParams p = init_meta_params(10, 4, 1);
  const FeatureVector x = random_feature_vector("w", 10, 3, rng);
  FeatureVector zero;
  zero.word = "z";
  CHECK_THROWS_AS(meta_forward(p, x, zero), std::invalid_argument);
  CHECK_THROWS_AS(meta_forward(p, zero, x), std::invalid_argument);
}

TEST_CASE("meta_loss on an identical positive pair with b2=0 is -log(0.5)") {
  Rng rng(9);
  MetaLearnerParams p = init_meta_params(10, 4, 1);
  p.b2 = 0.0;
  const FeatureVector x = random_feature_vector("w", 10, 5, rng);
  std::vector<PairExample> batch{{x, x, 1}};
  MetaLearnerParams grads;
  const double loss = meta_loss_and_grad(p, batch, grads);
  CHECK(loss == doctest::Approx(-std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("meta gradients match central finite differences") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    MetaLearnerParams p = init_meta_params(10, 4, 100 + trial);
    p.b2 = rng.range(-0.5, 0.5);
    std::vector<PairExample> batch;
    for (int i = 0; i < 6; ++i) {
      batch.push_back({random_feature_vector("w", 10, 1 + rng.below(6), rng),
                       random_feature_vector("w", 10, 1 + rng.below(6), rng),
                       int(rng.below(2))});
    }
    MetaLearnerParams grads;
    meta_loss_and_grad(p, batch, grads);

    const double eps = 1e-5;
    auto fd = [&](double* param) {
      const double save = *param;
      *param = save + eps;
      MetaLearnerParams scratch;
      const double up = meta_loss_and_grad(p, batch, scratch);
      *param = save - eps;
      const double dn = meta_loss_and_grad(p, batch, scratch);
      *param = save;
      return (up - dn) / (2 * eps);
    };
    auto close = [](double a, double b) {
      return std::fabs(a - b) <= 1e-4 * std::max(1.0, std::max(std::fabs(a), std::fabs(b)));
    };
    for (std::size_t i = 0; i < p.w1.size(); i += 7) {
      CHECK(close(fd(&p.w1[i]), grads.w1[i]));
    }
    for (std::size_t i = 0; i < p.w2.size(); ++i) {
      CHECK(close(fd(&p.w2[i]), grads.w2[i]));
    }
    CHECK(close(fd(&p.b2), grads.b2));
  }
}

namespace {

// Two domains sharing a word set, with distinguishable sub-corpus vectors.
struct PairFixture {
  std::vector<std::map<std::string, FeatureVector>> maps;
  std::vector<DomainVectors> domains;

  explicit PairFixture(std::size_t n_domains, std::size_t n_words,
                       std::uint32_t f, std::uint64_t seed) {
    Rng rng(seed);
    maps.resize(n_domains * 2);
    for (std::size_t d = 0; d < n_domains; ++d) {
      for (std::size_t w = 0; w < n_words; ++w) {
        const std::string word = "w" + std::to_string(w);
        maps[2 * d][word] = random_feature_vector(word, f, 1 + rng.below(5), rng);
        maps[2 * d + 1][word] =
            random_feature_vector(word, f, 1 + rng.below(5), rng);
      }
    }
    for (std::size_t d = 0; d < n_domains; ++d) {
      domains.push_back({"dom" + std::to_string(d), &maps[2 * d], &maps[2 * d + 1]});
    }
  }
};

}  // namespace

TEST_CASE("make_pair_examples is deterministic and balanced") {
  PairFixture fx(3, 10, 16, 4);
  const auto e1 = make_pair_examples(fx.domains, 5, 1.0, 99);
  const auto e2 = make_pair_examples(fx.domains, 5, 1.0, 99);
  REQUIRE(e1.size() == e2.size());
  for (std::size_t i = 0; i < e1.size(); ++i) {
    CHECK(e1[i].a == e2[i].a);
    CHECK(e1[i].b == e2[i].b);
    CHECK(e1[i].label == e2[i].label);
  }
  std::size_t pos = 0, neg = 0;
  for (const auto& e : e1) (e.label ? pos : neg)++;
  CHECK(pos == 15);  // 5 words x 3 domains
  CHECK(neg == 15);  // all words shared, so every negative lands
  for (const auto& e : e1) CHECK(e.a.word == e.b.word);
}

TEST_CASE("make_pair_examples with disjoint domains yields positives only") {
  Rng rng(6);
  std::map<std::string, FeatureVector> a1, a2, b1, b2;
  a1["x"] = random_feature_vector("x", 8, 3, rng);
  a2["x"] = random_feature_vector("x", 8, 3, rng);
  b1["y"] = random_feature_vector("y", 8, 3, rng);
  b2["y"] = random_feature_vector("y", 8, 3, rng);
  std::vector<DomainVectors> domains{{"a", &a1, &a2}, {"b", &b1, &b2}};
  const auto examples = make_pair_examples(domains, 10, 2.0, 1);
  CHECK(examples.size() == 2);
  for (const auto& e : examples) CHECK(e.label == 1);
}

TEST_CASE("train_base with zero epochs returns the initialization") {
  PairFixture fx(3, 10, 16, 8);
  const auto examples = make_pair_examples(fx.domains, 5, 1.0, 3);
  MetaTrainConfig cfg;
  cfg.epochs = 0;
  cfg.hidden = 4;
  cfg.seed = 21;
  const MetaLearnerParams trained = train_base(examples, examples, 16, cfg);
  CHECK(trained == init_meta_params(16, 4, 21));
}

TEST_CASE("training loss decreases on a separable synthetic set") {
  // Positives differ in low ranks only; negatives differ in high ranks.
  Rng rng(12);
  std::vector<PairExample> examples;
  for (int i = 0; i < 120; ++i) {
    FeatureVector a = random_feature_vector("w", 20, 3, rng);
    FeatureVector b = a;
    if (i % 2 == 0) {
      examples.push_back({a, b, 1});
    } else {
      for (auto& [rank, count] : b.counts) rank = (rank + 10) % 20;
      std::sort(b.counts.begin(), b.counts.end());
      examples.push_back({a, b, 0});
    }
  }
  MetaTrainConfig cfg;
  cfg.epochs = 5;
  cfg.hidden = 8;
  cfg.seed = 5;
  std::vector<EpochMetrics> log;
  train_base(examples, examples, 20, cfg, &log);
  REQUIRE(log.size() == 5);
  for (std::size_t i = 1; i < log.size(); ++i) {
    CHECK(log[i].train_loss < log[i - 1].train_loss);
  }
}

TEST_CASE("adapt_meta with zero epochs returns the base, unmutated") {
  PairFixture fx(3, 10, 16, 30);
  const MetaLearnerParams base = init_meta_params(16, 4, 7);
  AdaptConfig cfg;
  cfg.train.epochs = 0;
  const MetaLearnerParams adapted =
      adapt_meta(base, {fx.domains[0], fx.domains[1]}, fx.domains[2], cfg);
  CHECK(adapted == base);
}

TEST_CASE("adapt_meta fine-tunes without mutating the base") {
  PairFixture fx(4, 20, 16, 31);
  const MetaLearnerParams base = init_meta_params(16, 4, 7);
  const MetaLearnerParams before = base;
  AdaptConfig cfg;
  cfg.words = 10;
  cfg.train.epochs = 3;
  cfg.train.seed = 2;
  const MetaLearnerParams adapted =
      adapt_meta(base, {fx.domains[0], fx.domains[1], fx.domains[2]},
                 fx.domains[3], cfg);
  CHECK(base == before);
  CHECK(!(adapted == base));
}

TEST_CASE("adapt_meta errors below the example minimum") {
  PairFixture fx(2, 1, 16, 32);
  const MetaLearnerParams base = init_meta_params(16, 4, 7);
  AdaptConfig cfg;
  cfg.min_examples = 50;
  CHECK_THROWS(adapt_meta(base, {fx.domains[0]}, fx.domains[1], cfg));
}

TEST_CASE("batch_inference matches meta_forward and flags zero vectors") {
  Rng rng(40);
  const MetaLearnerParams p = init_meta_params(32, 8, 3);
  std::vector<FeatureVector> pool;
  for (int i = 0; i < 64; ++i) {
    pool.push_back(random_feature_vector("w", 32, 1 + rng.below(8), rng));
  }
  FeatureVector zero;
  zero.word = "z";

  std::vector<ScorePair> pairs;
  for (int i = 0; i < 10000; ++i) {
    pairs.emplace_back(&pool[rng.below(pool.size())],
                       &pool[rng.below(pool.size())]);
  }
  pairs.emplace_back(&zero, &pool[0]);

  const auto parallel = batch_inference(p, pairs, 4);
  REQUIRE(parallel.size() == pairs.size());
  CHECK(!parallel.back().has_value());
  // Bit-for-bit identical to the sequential loop.
  for (std::size_t i = 0; i + 1 < pairs.size(); ++i) {
    REQUIRE(parallel[i].has_value());
    CHECK(*parallel[i] == meta_forward(p, *pairs[i].first, *pairs[i].second));
  }

  const auto single = batch_inference(p, {pairs[0]}, 1);
  CHECK(*single[0] == meta_forward(p, *pairs[0].first, *pairs[0].second));
}

TEST_CASE("meta model file round-trips at 32-bit precision") {
  TempDir tmp;
  const MetaLearnerParams p = quantize_meta(init_meta_params(12, 5, 77));
  const auto path = tmp.path() / "model.bin";
  save_meta(p, path);
  const MetaLearnerParams q = load_meta(path);
  CHECK(p == q);

  CHECK_THROWS(load_meta(tmp.path() / "missing.bin"));
}
