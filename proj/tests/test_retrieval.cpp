#include <algorithm>

#include "doctest.h"
#include "ldem/retrieval.hpp"
#include "ldem/rng.hpp"
#include "test_helpers.hpp"

using namespace ldem;
using ldem::testing::corpus_from_tokens;
using ldem::testing::random_feature_vector;
using ldem::testing::TempDir;

namespace {

Vocabulary vocab_of(const std::vector<std::string>& words) {
  std::unordered_map<std::string, std::uint64_t> counts;
  for (std::size_t i = 0; i < words.size(); ++i) counts[words[i]] = i + 1;
  return Vocabulary::from_counts(counts);
}

// KB whose domains share a configurable word set, with random vectors and
// context bags; the base model shape is f x h.
struct KbFixture {
  KnowledgeBase kb;

  KbFixture(std::size_t n_domains, std::size_t n_words, std::uint32_t f,
            std::uint64_t seed) {
    Rng rng(seed);
    std::unordered_map<std::string, std::uint64_t> feat;
    for (std::uint32_t i = 0; i < f; ++i) feat["f" + std::to_string(i)] = f - i;
    KbManifest m;
    m.subcorpus_bytes = 1 << 16;
    m.min_count = 1;
    kb = kb_init(Vocabulary::from_counts(feat), init_meta_params(f, 4, seed), m);
    for (std::size_t d = 0; d < n_domains; ++d) {
      DomainKnowledge k;
      std::vector<std::string> words;
      for (std::size_t w = 0; w < n_words; ++w) {
        words.push_back("w" + std::to_string(w));
      }
      k.vocab = vocab_of(words);
      for (const auto& word : words) {
        if (rng.below(8) == 0) continue;  // some words lack vectors
        k.vectors_k1[word] = random_feature_vector(word, f, 1 + rng.below(6), rng);
        k.vectors_k2[word] = random_feature_vector(word, f, 1 + rng.below(6), rng);
        auto& bag = k.contexts[word];
        const std::size_t n_ctx = 1 + rng.below(3);
        for (std::size_t i = 0; i < n_ctx; ++i) {
          bag["c" + std::to_string(rng.below(20))] = 1 + rng.below(5);
        }
      }
      kb_add_domain(kb, "dom" + std::to_string(d), std::move(k));
    }
  }
};

DomainKnowledge make_new_knowledge(std::size_t n_words, std::uint32_t f,
                                   std::uint64_t seed) {
  Rng rng(seed);
  DomainKnowledge k;
  std::vector<std::string> words;
  for (std::size_t w = 0; w < n_words; ++w) {
    words.push_back("w" + std::to_string(w));
  }
  k.vocab = vocab_of(words);
  for (const auto& word : words) {
    k.vectors_k1[word] = random_feature_vector(word, f, 1 + rng.below(6), rng);
    k.vectors_k2[word] = random_feature_vector(word, f, 1 + rng.below(6), rng);
  }
  return k;
}

// Independent oracle: plain loop over words x domains applying meta_forward.
RelevantKnowledge brute_force_retrieve(const KnowledgeBase& kb,
                                       const DomainKnowledge& fresh,
                                       const MetaLearnerParams& model,
                                       double delta) {
  RelevantKnowledge rel;
  for (const auto& [dom, past] : kb.domains) {
    for (const auto& [word, c] : past.vocab.entries) {
      if (!fresh.vocab.contains(word)) continue;
      if (!past.vectors_k1.count(word) || !fresh.vectors_k1.count(word)) continue;
      const double s = meta_forward(model, past.vectors_k1.at(word),
                                    fresh.vectors_k1.at(word));
      if (s < delta) continue;
      auto it = past.contexts.find(word);
      if (it == past.contexts.end() || it->second.empty()) continue;
      rel.entries[word][dom] = it->second;
    }
  }
  return rel;
}

}  // namespace

TEST_CASE("threshold semantics with a stub scorer") {
  Rng rng(10);
  KbManifest m;
  m.subcorpus_bytes = 1024;
  KnowledgeBase kb = kb_init(vocab_of({"f0", "f1", "f2", "f3"}),
                             init_meta_params(4, 2, 1), m);
  for (const std::string dom : {"dom0", "dom1"}) {
    DomainKnowledge k;
    k.vocab = vocab_of({"w0"});
    k.vectors_k1["w0"] = random_feature_vector("w0", 4, 2, rng);
    k.vectors_k2["w0"] = random_feature_vector("w0", 4, 2, rng);
    k.contexts["w0"] = {{"ctx_" + dom, 1}};
    kb_add_domain(kb, dom, std::move(k));
  }
  DomainKnowledge fresh;
  fresh.vocab = vocab_of({"w0"});
  fresh.vectors_k1["w0"] = random_feature_vector("w0", 4, 2, rng);
  fresh.vectors_k2["w0"] = random_feature_vector("w0", 4, 2, rng);

  // w0 scores 0.9 against dom0's context and 0.3 against dom1's.
  int calls = 0;
  PairScorer stub = [&](const std::string&, const FeatureVector&,
                        const FeatureVector&) -> std::optional<double> {
    return ++calls == 1 ? 0.9 : 0.3;
  };
  const RelevantKnowledge rel = retrieve_with_scorer(kb, fresh, stub, 0.7);
  REQUIRE(rel.entries.count("w0"));
  CHECK(rel.entries.at("w0").size() == 1);
  CHECK(rel.entries.at("w0").count("dom0") == 1);
  CHECK(rel.entries.at("w0").at("dom0") ==
        kb.domains.at("dom0").contexts.at("w0"));
}

TEST_CASE("retrieve_with_model equals the brute-force oracle") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    KbFixture fx(2 + seed % 4, 30, 16, seed);
    const DomainKnowledge fresh = make_new_knowledge(30, 16, seed + 100);
    const MetaLearnerParams model = init_meta_params(16, 4, seed + 7);
    for (double delta : {0.0, 0.5, 0.7, 1.0}) {
      const RelevantKnowledge got =
          retrieve_with_model(fx.kb, fresh, model, delta, 3);
      const RelevantKnowledge want =
          brute_force_retrieve(fx.kb, fresh, model, delta);
      CHECK(got == want);
    }
  }
}

TEST_CASE("retrieval is monotone in delta") {
  KbFixture fx(4, 40, 16, 21);
  const DomainKnowledge fresh = make_new_knowledge(40, 16, 22);
  const MetaLearnerParams model = init_meta_params(16, 4, 23);
  RelevantKnowledge prev = retrieve_with_model(fx.kb, fresh, model, 0.0);
  CHECK(!prev.empty());  // delta 0 keeps every scoreable shared word
  for (double delta : {0.3, 0.5, 0.7, 0.9, 1.0}) {
    const RelevantKnowledge cur = retrieve_with_model(fx.kb, fresh, model, delta);
    for (const auto& [word, doms] : cur.entries) {
      REQUIRE(prev.entries.count(word));
      for (const auto& [dom, bag] : doms) {
        CHECK(prev.entries.at(word).count(dom) == 1);
      }
    }
    prev = cur;
  }
  // A threshold above every score keeps nothing.
  const RelevantKnowledge none =
      retrieve_with_scorer(fx.kb, fresh,
                           [](const std::string&, const FeatureVector&,
                              const FeatureVector&) -> std::optional<double> {
                             return 0.999;
                           },
                           1.0);
  CHECK(none.empty());
}

TEST_CASE("aggregation is the multiset union of contributing bags") {
  RelevantKnowledge rel;
  rel.entries["w"]["a"] = {{"x", 2}, {"y", 1}};
  rel.entries["w"]["b"] = {{"x", 3}, {"z", 4}};
  const auto agg = rel.aggregated("w");
  CHECK(agg == std::map<std::string, std::uint64_t>{{"x", 5}, {"y", 1}, {"z", 4}});
  CHECK(rel.total_pairs() == 10);
  CHECK(rel.aggregated("missing").empty());
}

TEST_CASE("relevant knowledge file round-trips") {
  TempDir tmp;
  RelevantKnowledge rel;
  rel.entries["java"]["prog"] = {{"compiler", 3}, {"variable", 1}};
  rel.entries["java"]["island"] = {{"sea", 2}};
  rel.entries["bean"]["coffee"] = {{"roast", 7}};
  const auto path = tmp.path() / "rel.tsv";
  save_relevant(rel, path);
  CHECK(load_relevant(path) == rel);
  CHECK(load_relevant(path).total_pairs() == 13);
}

TEST_CASE("retrieve_relevant end-to-end on toy corpora") {
  // Three past domains built through the real pipeline, then a new domain.
  Rng rng(33);
  auto make_corpus = [&](const std::string& id,
                         const std::vector<std::string>& theme) {
    std::vector<TokenList> docs;
    for (int d = 0; d < 60; ++d) {
      TokenList doc;
      for (int t = 0; t < 12; ++t) doc.push_back(theme[rng.below(theme.size())]);
      docs.push_back(doc);
    }
    return corpus_from_tokens(id, docs);
  };
  const std::vector<std::string> kitchen{"pan", "knife", "stove", "recipe",
                                         "shared", "common"};
  const std::vector<std::string> garden{"soil", "seed", "water", "shared",
                                        "common", "plant"};
  const std::vector<std::string> coding{"code", "compiler", "bug", "shared",
                                        "common", "java"};
  const auto c1 = make_corpus("kitchen", kitchen);
  const auto c2 = make_corpus("garden", garden);
  const auto c3 = make_corpus("coding", coding);

  const Vocabulary feat = build_feature_vocab({&c1, &c2, &c3}, 50);
  KbManifest m;
  m.subcorpus_bytes = 1200;
  m.min_count = 1;
  m.context_window = 3;
  m.feature_window = 3;
  MetaTrainConfig tc;
  tc.hidden = 8;
  tc.epochs = 0;
  KnowledgeBase kb = kb_init(
      feat, init_meta_params(static_cast<std::uint32_t>(feat.size()), 8, 4), m);

  RetrievalConfig rc;
  rc.delta = 0.0;
  rc.seed = 5;
  rc.adapt.train.epochs = 1;
  rc.adapt.train.hidden = 8;
  rc.adapt.words = 6;
  rc.adapt.min_examples = 1;
  for (const auto* c : {&c1, &c2, &c3}) {
    DomainKnowledge k = build_domain_knowledge(kb, *c, rc);
    kb_add_domain(kb, c->domain_id, std::move(k));
  }
  CHECK(kb.domains.size() == 3);

  const auto fresh = make_corpus("newdom", coding);
  const RetrievalResult res = retrieve_relevant(kb, fresh, rc);
  // delta=0 keeps every scoreable shared word from every past domain.
  CHECK(!res.relevant.empty());
  CHECK(res.relevant.entries.count("shared"));
  CHECK(res.kept_pairs <= res.scored_pairs);
  CHECK(res.corpus_mass > 0);

  // After the pipeline the caller stores the new domain: n-m+1 domains.
  kb_add_domain(kb, fresh.domain_id, res.new_knowledge);
  CHECK(kb.domains.size() == 4);

  CHECK_THROWS(retrieve_relevant(kb, fresh, [] {
    RetrievalConfig bad;
    bad.delta = 1.1;
    return bad;
  }()));
}

TEST_CASE("tfidf_retrieve basic semantics") {
  const auto past = corpus_from_tokens(
      "past", {{"apple", "banana", "apple"},
               {"totally", "different", "things"},
               {"apple", "banana", "apple", "banana"}});
  const auto fresh =
      corpus_from_tokens("fresh", {{"apple", "banana"}, {"banana", "apple"}});

  // A sentence with no new-domain word is never borrowed.
  const auto strict = tfidf_retrieve({&past}, fresh, 0.99);
  for (const auto& doc : strict) {
    CHECK(doc != TokenList{"totally", "different", "things"});
  }

  // An identical term distribution reaches cosine ~1 (up to rounding).
  const auto self = corpus_from_tokens("p", {{"apple", "banana"}});
  const auto hits = tfidf_retrieve({&self}, fresh, 0.999999);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0] == TokenList{"apple", "banana"});

  // Vocabulary-disjoint domains borrow nothing at any positive threshold.
  const auto alien = corpus_from_tokens("alien", {{"zz", "qq"}, {"qq", "rr"}});
  CHECK(tfidf_retrieve({&alien}, fresh, 0.18).empty());
}

TEST_CASE("tfidf_retrieve is invariant to past sentence order") {
  Rng rng(44);
  std::vector<TokenList> docs;
  const std::vector<std::string> pool{"a", "b", "c", "d", "e", "f"};
  for (int i = 0; i < 30; ++i) {
    TokenList doc;
    for (int t = 0; t < 5; ++t) doc.push_back(pool[rng.below(pool.size())]);
    docs.push_back(doc);
  }
  const auto fresh = corpus_from_tokens("fresh", {{"a", "b", "c"}});
  const auto p1 = corpus_from_tokens("p", docs);
  std::reverse(docs.begin(), docs.end());
  const auto p2 = corpus_from_tokens("p", docs);

  auto r1 = tfidf_retrieve({&p1}, fresh, 0.3);
  auto r2 = tfidf_retrieve({&p2}, fresh, 0.3);
  std::sort(r1.begin(), r1.end());
  std::sort(r2.begin(), r2.end());
  CHECK(r1 == r2);
}
