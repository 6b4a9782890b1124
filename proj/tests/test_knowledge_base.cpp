#include <fstream>

#include "doctest.h"
#include "ldem/knowledge_base.hpp"
#include "ldem/rng.hpp"
#include "test_helpers.hpp"

using namespace ldem;
using ldem::testing::random_feature_vector;
using ldem::testing::TempDir;

namespace {

Vocabulary feature_vocab(std::uint32_t f) {
  std::unordered_map<std::string, std::uint64_t> counts;
  for (std::uint32_t i = 0; i < f; ++i) {
    counts["feat" + std::to_string(i)] = f - i;
  }
  return Vocabulary::from_counts(counts);
}

DomainKnowledge random_domain(std::uint32_t f, std::size_t n_words, Rng& rng) {
  DomainKnowledge k;
  std::unordered_map<std::string, std::uint64_t> counts;
  for (std::size_t w = 0; w < n_words; ++w) {
    const std::string word = "word" + std::to_string(w);
    counts[word] = 1 + rng.below(50);
  }
  k.vocab = Vocabulary::from_counts(counts);
  for (const auto& [word, c] : k.vocab.entries) {
    if (rng.below(4) == 0) continue;
    auto& bag = k.contexts[word];
    const std::size_t n_ctx = 1 + rng.below(4);
    for (std::size_t i = 0; i < n_ctx; ++i) {
      bag["word" + std::to_string(rng.below(n_words))] = 1 + rng.below(9);
    }
    k.vectors_k1[word] = random_feature_vector(word, f, 1 + rng.below(5), rng);
    if (rng.below(3) != 0) {
      k.vectors_k2[word] = random_feature_vector(word, f, 1 + rng.below(5), rng);
    }
  }
  return k;
}

KnowledgeBase random_kb(std::uint64_t seed, std::uint32_t f = 12,
                        std::size_t n_domains = 3) {
  Rng rng(seed);
  KbManifest m;
  m.subcorpus_bytes = 4096;
  KnowledgeBase kb = kb_init(feature_vocab(f), init_meta_params(f, 4, seed), m);
  for (std::size_t d = 0; d < n_domains; ++d) {
    kb_add_domain(kb, "domain_" + std::to_string(d), random_domain(f, 20, rng));
  }
  return kb;
}

}  // namespace

TEST_CASE("kb_init rejects mismatched model dimensions") {
  KbManifest m;
  CHECK_THROWS_AS(kb_init(feature_vocab(10), init_meta_params(11, 4, 1), m),
                  std::invalid_argument);
  const KnowledgeBase kb = kb_init(feature_vocab(10), init_meta_params(10, 4, 1), m);
  CHECK(kb.domains.empty());
  CHECK(kb.manifest.f == 10);
}

TEST_CASE("kb_add_domain stores and guards") {
  KnowledgeBase kb = random_kb(1);
  Rng rng(2);
  DomainKnowledge k = random_domain(12, 5, rng);
  const DomainKnowledge copy = k;
  kb_add_domain(kb, "fresh", std::move(k));
  CHECK(kb.domains.at("fresh").vocab.entries == copy.vocab.entries);
  CHECK(kb.domains.at("fresh").vectors_k1 == copy.vectors_k1);

  CHECK_THROWS_AS(kb_add_domain(kb, "fresh", random_domain(12, 5, rng)),
                  std::invalid_argument);
  CHECK_THROWS(kb_add_domain(kb, "../escape", random_domain(12, 5, rng)));

  DomainKnowledge bad = random_domain(12, 5, rng);
  bad.vectors_k1.begin()->second.counts.push_back({99, 1});
  CHECK_THROWS(kb_add_domain(kb, "bad", std::move(bad)));
}

TEST_CASE("kb save/load round-trip on randomized instances") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TempDir tmp;
    const KnowledgeBase kb = random_kb(seed);
    kb_save(kb, tmp.path() / "kb");
    const KnowledgeBase loaded = kb_load(tmp.path() / "kb");
    CHECK(kb_equal(kb, loaded));
  }
}

TEST_CASE("empty-domain kb round-trips") {
  TempDir tmp;
  KbManifest m;
  m.subcorpus_bytes = 1024;
  const KnowledgeBase kb = kb_init(feature_vocab(6), init_meta_params(6, 3, 2), m);
  kb_save(kb, tmp.path() / "kb");
  CHECK(kb_equal(kb, kb_load(tmp.path() / "kb")));
}

TEST_CASE("corrupted file fails the checksum loudly") {
  TempDir tmp;
  kb_save(random_kb(3), tmp.path() / "kb");
  {
    std::ofstream out(tmp.path() / "kb" / "feature_vocab.txt",
                      std::ios::app | std::ios::binary);
    out << "tampered\n";
  }
  CHECK_THROWS_WITH_AS(kb_load(tmp.path() / "kb"),
                       doctest::Contains("checksum mismatch"),
                       std::runtime_error);
}

TEST_CASE("future format version is rejected explicitly") {
  TempDir tmp;
  kb_save(random_kb(4), tmp.path() / "kb");
  // Rewrite the manifest with a bumped version.
  std::ifstream in(tmp.path() / "kb" / "manifest.json");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  in.close();
  const auto pos = text.find("\"format_version\": 1");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 19, "\"format_version\": 99");
  std::ofstream out(tmp.path() / "kb" / "manifest.json", std::ios::binary);
  out << text;
  out.close();
  CHECK_THROWS_WITH_AS(kb_load(tmp.path() / "kb"),
                       doctest::Contains("version"), std::runtime_error);
}

TEST_CASE("kb_validate finds dangling ranks") {
  KnowledgeBase kb = random_kb(5);
  kb_validate(kb);  // clean
  kb.domains.begin()->second.vectors_k2.begin()->second.counts.push_back({500, 2});
  CHECK_THROWS(kb_validate(kb));
}

TEST_CASE("saving over an existing kb drops stale domains") {
  TempDir tmp;
  KnowledgeBase kb = random_kb(6);
  kb_save(kb, tmp.path() / "kb");
  kb.domains.erase(kb.domains.begin());
  kb_save(kb, tmp.path() / "kb");
  const KnowledgeBase loaded = kb_load(tmp.path() / "kb");
  CHECK(kb_equal(kb, loaded));
}
