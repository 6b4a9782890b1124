// ldem: lifelong domain-embedding pipeline driver.
//
// Subcommands cover the whole flow: build-kb -> train-meta -> retrieve ->
// train-embed -> eval, plus the tfidf baseline and embedding concatenation.
// Every run writes a JSON manifest recording the resolved configuration and
// input checksums; with --workers 1 a rerun reproduces outputs exactly.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>
#include <zlib.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ldem/corpus.hpp"
#include "ldem/embedding.hpp"
#include "ldem/eval.hpp"
#include "ldem/knowledge_base.hpp"
#include "ldem/metalearner.hpp"
#include "ldem/retrieval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ldem;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string crc_hex(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  uLong crc = crc32(0L, Z_NULL, 0);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buf), uInt(in.gcount()));
  }
  char out[16];
  std::snprintf(out, sizeof out, "%08lx", crc);
  return out;
}

// CRC of every regular file under each input, keyed by path, files in
// sorted order for directories.
json input_checksums(const std::vector<fs::path>& inputs) {
  json out = json::object();
  for (const auto& p : inputs) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) out[f.string()] = crc_hex(f);
    } else {
      out[p.string()] = crc_hex(p);
    }
  }
  return out;
}

void write_run_manifest(const fs::path& path, const std::string& command,
                        const json& config, const json& checksums,
                        std::uint64_t seed, const std::string& started) {
  json m = {
      {"command", command},
      {"config", config},
      {"input_checksums", checksums},
      {"seed", seed},
      {"toolkit_version", kVersion},
      {"started", started},
      {"finished", iso_timestamp()},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << m.dump(2) << "\n";
}

// Outputs registered before being written; removed if the command throws.
struct OutputGuard {
  std::vector<fs::path> paths;
  bool committed = false;

  void track(const fs::path& p) { paths.push_back(p); }
  ~OutputGuard() {
    if (committed) return;
    for (const auto& p : paths) {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  }
};

// Exclusive advisory lock on <kb>/.lock for mutating commands.
class KbLock {
 public:
  explicit KbLock(const fs::path& kb_dir) {
    fs::create_directories(kb_dir);
    path_ = kb_dir / ".lock";
    fd_ = ::open(path_.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw std::runtime_error("cannot open lock " + path_.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw std::runtime_error("knowledge base is locked: " + path_.string());
    }
  }
  ~KbLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  KbLock(const KbLock&) = delete;
  KbLock& operator=(const KbLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

// LDEM_<OPTION> environment overrides for every long option.
void add_env_overrides(CLI::App* app) {
  for (CLI::Option* opt : app->get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names[0] == "help" || names[0] == "config" ||
        names[0] == "version") {
      continue;
    }
    std::string env = "LDEM_";
    for (char c : names[0]) env += c == '-' ? '_' : char(std::toupper(c));
    opt->envname(env);
  }
  for (CLI::App* sub : app->get_subcommands({})) add_env_overrides(sub);
}

std::string domain_id_from_dir(const fs::path& dir) {
  fs::path p = dir;
  if (!p.has_filename()) p = p.parent_path();  // trailing slash
  return p.filename().string();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  return x;
}

// ---------------------------------------------------------------------------

struct BuildKbArgs {
  std::vector<std::string> domain_dirs;
  std::string out;
  std::size_t feature_vocab_size = 5000;
  int window = 5;
  std::uint64_t subcorpus_bytes = 10'000'000;
  std::uint64_t min_count = 5;
  std::uint32_t hidden = 200;
  std::uint64_t seed = 1;
};

int run_build_kb(const BuildKbArgs& a) {
  const std::string started = iso_timestamp();
  if (fs::exists(a.out) && !fs::is_empty(a.out)) {
    throw std::runtime_error("output " + a.out + " exists and is not empty");
  }
  std::vector<DomainCorpus> corpora;
  std::vector<const DomainCorpus*> ptrs;
  std::set<std::string> seen;
  for (const auto& dir : a.domain_dirs) {
    const std::string id = domain_id_from_dir(dir);
    if (!seen.insert(id).second) {
      throw std::runtime_error("duplicate domain id " + id);
    }
    corpora.push_back(load_corpus_dir(dir, id));
  }
  for (const auto& c : corpora) ptrs.push_back(&c);

  const Vocabulary feature_vocab =
      build_feature_vocab(ptrs, a.feature_vocab_size);
  if (feature_vocab.size() == 0) {
    throw std::runtime_error("empty feature vocabulary");
  }
  KbManifest manifest;
  manifest.f = std::uint32_t(feature_vocab.size());
  manifest.context_window = a.window;
  manifest.feature_window = a.window;
  manifest.subcorpus_bytes = a.subcorpus_bytes;
  manifest.min_count = a.min_count;

  KnowledgeBase kb = kb_init(
      feature_vocab,
      init_meta_params(manifest.f, a.hidden, a.seed), manifest);

  for (std::size_t i = 0; i < corpora.size(); ++i) {
    const DomainCorpus& corpus = corpora[i];
    DomainKnowledge k;
    k.vocab = build_vocab(corpus, a.min_count);
    k.contexts = scan_context_words(corpus, k.vocab, a.window);
    const auto [s1, s2] =
        subsample_corpus(corpus, a.subcorpus_bytes, mix_seed(a.seed, i));
    k.vectors_k1 =
        build_feature_vectors(s1, kb.feature_index, a.window, &k.vocab);
    k.vectors_k2 =
        build_feature_vectors(s2, kb.feature_index, a.window, &k.vocab);
    kb_add_domain(kb, corpus.domain_id, std::move(k));
    std::cout << corpus.domain_id << ": " << corpus.token_count << " tokens, "
              << kb.domains.at(corpus.domain_id).vocab.size() << " vocab\n";
  }

  OutputGuard guard;
  guard.track(a.out);
  KbLock lock(a.out);
  kb_save(kb, a.out);
  json cfg = {{"domains", a.domain_dirs},
              {"out", a.out},
              {"feature_vocab_size", a.feature_vocab_size},
              {"window", a.window},
              {"subcorpus_bytes", a.subcorpus_bytes},
              {"min_count", a.min_count},
              {"hidden", a.hidden},
              {"seed", a.seed}};
  std::vector<fs::path> inputs(a.domain_dirs.begin(), a.domain_dirs.end());
  write_run_manifest(fs::path(a.out) / "run_manifest.json", "build-kb", cfg,
                     input_checksums(inputs), a.seed, started);
  guard.committed = true;
  std::cout << "knowledge base written to " << a.out << " ("
            << kb.domains.size() << " domains, f=" << kb.manifest.f << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainMetaArgs {
  std::string kb;
  std::vector<std::string> train_domains, valid_domains, test_domains;
  std::size_t words_per_domain = 3000;
  double neg_ratio = 1.0;
  std::size_t epochs = 20;
  std::size_t patience = 5;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
};

std::vector<DomainVectors> domain_vectors(
    const KnowledgeBase& kb, const std::vector<std::string>& ids) {
  std::vector<DomainVectors> out;
  for (const auto& id : ids) {
    auto it = kb.domains.find(id);
    if (it == kb.domains.end()) {
      throw std::runtime_error("domain " + id + " not in knowledge base");
    }
    out.push_back({id, &it->second.vectors_k1, &it->second.vectors_k2});
  }
  return out;
}

int run_train_meta(const TrainMetaArgs& a) {
  const std::string started = iso_timestamp();
  std::set<std::string> all;
  for (const auto* list : {&a.train_domains, &a.valid_domains, &a.test_domains}) {
    for (const auto& id : *list) {
      if (!all.insert(id).second) {
        throw std::runtime_error("domain " + id +
                                 " appears in more than one split");
      }
    }
  }
  if (a.train_domains.empty() || a.valid_domains.empty()) {
    throw std::runtime_error("train and valid splits must be non-empty");
  }

  KbLock lock(a.kb);
  KnowledgeBase kb = kb_load(a.kb);
  MetaTrainConfig cfg;
  cfg.learning_rate = a.learning_rate;
  cfg.batch_size = a.batch_size;
  cfg.epochs = a.epochs;
  cfg.patience = a.patience;
  cfg.seed = a.seed;
  cfg.hidden = kb.base_model.h;

  const auto train_ex =
      make_pair_examples(domain_vectors(kb, a.train_domains),
                         a.words_per_domain, a.neg_ratio, mix_seed(a.seed, 1));
  const auto valid_ex =
      make_pair_examples(domain_vectors(kb, a.valid_domains),
                         a.words_per_domain, a.neg_ratio, mix_seed(a.seed, 2));

  std::vector<EpochMetrics> log;
  MetaLearnerParams model =
      train_base(train_ex, valid_ex, kb.manifest.f, cfg, &log);
  for (const auto& m : log) {
    std::printf("epoch %zu loss %.4f valid F1 %.3f\n", m.epoch, m.train_loss,
                m.f1);
  }
  if (!a.test_domains.empty()) {
    const auto test_ex =
        make_pair_examples(domain_vectors(kb, a.test_domains),
                           a.words_per_domain, a.neg_ratio, mix_seed(a.seed, 3));
    const EpochMetrics t = evaluate_pairs(model, test_ex);
    std::printf("test F1 %.3f (precision %.3f recall %.3f, %zu pairs)\n", t.f1,
                t.precision, t.recall, test_ex.size());
  }

  kb_replace_model(kb, std::move(model));
  kb.manifest.trained = true;
  kb_save(kb, a.kb);
  json cfg_json = {{"kb", a.kb},
                   {"train_domains", a.train_domains},
                   {"valid_domains", a.valid_domains},
                   {"test_domains", a.test_domains},
                   {"words_per_domain", a.words_per_domain},
                   {"neg_ratio", a.neg_ratio},
                   {"epochs", a.epochs},
                   {"patience", a.patience},
                   {"learning_rate", a.learning_rate},
                   {"batch_size", a.batch_size},
                   {"seed", a.seed}};
  write_run_manifest(fs::path(a.kb) / "run_manifest.json", "train-meta",
                     cfg_json, json::object(), a.seed, started);
  return 0;
}

// ---------------------------------------------------------------------------

struct RetrieveArgs {
  std::string kb;
  std::string new_domain;
  std::string domain_id;
  std::string out;
  std::string model_out;
  double delta = 0.7;
  std::size_t adapt_epochs = 5;
  std::size_t adapt_words = 3000;
  unsigned threads = 0;
  std::uint64_t seed = 1;
  bool no_kb_update = false;
};

int run_retrieve(const RetrieveArgs& a) {
  const std::string started = iso_timestamp();
  if (a.delta < 0.0 || a.delta > 1.0) {
    throw std::runtime_error("delta must be in [0, 1]");
  }
  KbLock lock(a.kb);
  KnowledgeBase kb = kb_load(a.kb);
  if (!kb.manifest.trained) {
    throw std::runtime_error("knowledge base has no trained meta-learner; "
                             "run train-meta first");
  }
  const std::string id =
      a.domain_id.empty() ? domain_id_from_dir(a.new_domain) : a.domain_id;
  if (kb.domains.count(id)) {
    throw std::runtime_error("domain " + id + " already in knowledge base");
  }
  const DomainCorpus corpus = load_corpus_dir(a.new_domain, id);

  RetrievalConfig cfg;
  cfg.delta = a.delta;
  cfg.adapt.words = a.adapt_words;
  cfg.adapt.train.epochs = a.adapt_epochs;
  cfg.adapt.train.seed = a.seed;
  cfg.seed = a.seed;
  cfg.threads = a.threads;
  RetrievalResult res = retrieve_relevant(kb, corpus, cfg);

  OutputGuard guard;
  guard.track(a.out);
  save_relevant(res.relevant, a.out);
  const std::string model_out =
      a.model_out.empty() ? a.out + ".meta.bin" : a.model_out;
  guard.track(model_out);
  save_meta(res.adapted_model, model_out);

  if (!a.no_kb_update) {
    kb_add_domain(kb, id, std::move(res.new_knowledge));
    kb_save(kb, a.kb);
  }

  const double ratio =
      res.corpus_mass == 0
          ? 0.0
          : double(res.corpus_mass + res.borrowed_mass) / double(res.corpus_mass);
  std::cout << "scored " << res.scored_pairs << " word-domain pairs, kept "
            << res.kept_pairs << " at delta " << a.delta << "\n";
  std::cout << "borrowed " << res.borrowed_mass << " context pairs over "
            << res.corpus_mass << " corpus pairs (expansion ratio "
            << ratio << ")\n";

  json cfg_json = {{"kb", a.kb},          {"new_domain", a.new_domain},
                   {"domain_id", id},     {"out", a.out},
                   {"model_out", model_out}, {"delta", a.delta},
                   {"adapt_epochs", a.adapt_epochs},
                   {"adapt_words", a.adapt_words},
                   {"threads", a.threads}, {"seed", a.seed},
                   {"kb_updated", !a.no_kb_update}};
  write_run_manifest(a.out + ".run.json", "retrieve", cfg_json,
                     input_checksums({a.new_domain}), a.seed, started);
  guard.committed = true;
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainEmbedArgs {
  std::string corpus_dir;
  std::string relevant;
  std::string out;
  std::string mode = "plain";
  int dim = 300;
  int window = 5;
  int negatives = 5;
  double subsample = 1e-3;
  double learning_rate = 0.025;
  int epochs = 5;
  std::uint64_t min_count = 5;
  double mix_weight = 1.0;
  unsigned workers = 1;
  std::uint64_t seed = 1;
};

int run_train_embed(const TrainEmbedArgs& a) {
  const std::string started = iso_timestamp();
  if (a.mode != "plain" && a.mode != "augmented") {
    throw std::runtime_error("mode must be plain or augmented");
  }
  if (a.mode == "augmented" && a.relevant.empty()) {
    throw std::runtime_error("augmented mode requires --relevant");
  }
  if (a.mode == "plain" && !a.relevant.empty()) {
    throw std::runtime_error("--relevant is only valid in augmented mode");
  }
  const DomainCorpus corpus =
      load_corpus_dir(a.corpus_dir, domain_id_from_dir(a.corpus_dir));

  SgConfig cfg;
  cfg.dim = a.dim;
  cfg.window = a.window;
  cfg.negatives = a.negatives;
  cfg.subsample = a.subsample;
  cfg.learning_rate = a.learning_rate;
  cfg.epochs = a.epochs;
  cfg.min_count = a.min_count;
  cfg.mix_weight = a.mix_weight;
  cfg.workers = a.workers;
  cfg.seed = a.seed;

  TrainLog log;
  EmbeddingModel model;
  if (a.mode == "augmented") {
    const RelevantKnowledge rel = load_relevant(a.relevant);
    model = train_augmented(corpus, rel, cfg, &log);
  } else {
    model = train_skipgram(corpus, cfg, &log);
  }

  OutputGuard guard;
  guard.track(a.out);
  save_embeddings(model, a.out);

  std::cout << "vocab " << model.words.size() << ", dim " << a.dim << ", "
            << log.corpus_pairs << " corpus pairs";
  if (a.mode == "augmented") {
    std::cout << " + " << log.relevant_pairs << " borrowed pairs ("
              << log.dropped_relevant << " dropped)";
  }
  std::cout << "\n";
  for (std::size_t e = 0; e < log.objective.size(); ++e) {
    std::printf("objective[%zu] %.5f\n", e, log.objective[e]);
  }

  json cfg_json = {{"corpus", a.corpus_dir}, {"relevant", a.relevant},
                   {"out", a.out},           {"mode", a.mode},
                   {"dim", a.dim},           {"window", a.window},
                   {"negatives", a.negatives}, {"subsample", a.subsample},
                   {"learning_rate", a.learning_rate}, {"epochs", a.epochs},
                   {"min_count", a.min_count}, {"mix_weight", a.mix_weight},
                   {"workers", a.workers},   {"seed", a.seed}};
  std::vector<fs::path> inputs{a.corpus_dir};
  if (!a.relevant.empty()) inputs.push_back(a.relevant);
  write_run_manifest(a.out + ".run.json", "train-embed", cfg_json,
                     input_checksums(inputs), a.seed, started);
  guard.committed = true;
  return 0;
}

// ---------------------------------------------------------------------------

struct TfidfArgs {
  std::vector<std::string> past_dirs;
  std::string new_domain;
  std::string out;
  double threshold = 0.18;
};

int run_baseline_tfidf(const TfidfArgs& a) {
  const std::string started = iso_timestamp();
  std::vector<DomainCorpus> past;
  for (const auto& dir : a.past_dirs) {
    past.push_back(load_corpus_dir(dir, domain_id_from_dir(dir)));
  }
  std::vector<const DomainCorpus*> ptrs;
  for (const auto& c : past) ptrs.push_back(&c);
  const DomainCorpus fresh =
      load_corpus_dir(a.new_domain, domain_id_from_dir(a.new_domain));

  const auto borrowed = tfidf_retrieve(ptrs, fresh, a.threshold);

  OutputGuard guard;
  guard.track(a.out);
  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + a.out);
  std::size_t tokens = 0;
  for (const auto& doc : borrowed) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      if (i) out << ' ';
      out << doc[i];
    }
    out << '\n';
    tokens += doc.size();
  }
  out.close();
  std::cout << "borrowed " << borrowed.size() << " sentences, " << tokens
            << " tokens at threshold " << a.threshold << "\n";

  json cfg = {{"past_domains", a.past_dirs},
              {"new_domain", a.new_domain},
              {"out", a.out},
              {"threshold", a.threshold}};
  std::vector<fs::path> inputs(a.past_dirs.begin(), a.past_dirs.end());
  inputs.push_back(a.new_domain);
  write_run_manifest(a.out + ".run.json", "baseline-tfidf", cfg,
                     input_checksums(inputs), 0, started);
  guard.committed = true;
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> embeddings;
  std::string dataset;
  std::string out;
  std::size_t seeds = 10;
};

int run_eval(const EvalArgs& a) {
  const std::string started = iso_timestamp();
  const LabeledDataset ds = load_labeled_dataset(a.dataset);
  std::vector<std::uint64_t> seeds(a.seeds);
  for (std::size_t i = 0; i < a.seeds; ++i) seeds[i] = i + 1;

  std::vector<std::string> labels;
  for (const auto& [toks, label] : ds.examples) labels.push_back(label);

  json rows = json::array();
  std::printf("%-40s %8s %8s\n", "embedding", "mean", "stdev");
  for (const auto& path : a.embeddings) {
    const EmbeddingModel model = load_embeddings(path);
    FeaturizeStats stats;
    const auto feats = featurize_documents(ds, model, &stats);
    EvalReport rep = train_eval_classifier(feats, labels, seeds);
    rep.name = path;
    std::printf("%-40s %8.4f %8.4f\n", path.c_str(), rep.mean_accuracy,
                rep.stdev_accuracy);
    json row = {{"embedding", path},
                {"mean_accuracy", rep.mean_accuracy},
                {"stdev_accuracy", rep.stdev_accuracy},
                {"accuracies", rep.accuracies},
                {"class_f1", rep.class_f1},
                {"all_oov_documents", stats.all_oov_documents}};
    rows.push_back(row);
  }

  if (!a.out.empty()) {
    OutputGuard guard;
    guard.track(a.out);
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + a.out);
    out << rows.dump(2) << "\n";
    out.close();
    json cfg = {{"embeddings", a.embeddings},
                {"dataset", a.dataset},
                {"out", a.out},
                {"seeds", a.seeds}};
    std::vector<fs::path> inputs(a.embeddings.begin(), a.embeddings.end());
    inputs.push_back(a.dataset);
    write_run_manifest(a.out + ".run.json", "eval", cfg,
                       input_checksums(inputs), 0, started);
    guard.committed = true;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct ConcatArgs {
  std::string a, b, out;
  std::string policy = "zero";
};

int run_concat(const ConcatArgs& args) {
  const std::string started = iso_timestamp();
  if (args.policy != "zero" && args.policy != "strict") {
    throw std::runtime_error("policy must be zero or strict");
  }
  const EmbeddingModel ma = load_embeddings(args.a);
  const EmbeddingModel mb = load_embeddings(args.b);
  const EmbeddingModel mc = concat_embeddings(
      ma, mb,
      args.policy == "strict" ? MissingPolicy::kStrict
                              : MissingPolicy::kZeroFill);
  OutputGuard guard;
  guard.track(args.out);
  save_embeddings(mc, args.out);
  std::cout << "wrote " << mc.words.size() << " x " << mc.dim << " to "
            << args.out << "\n";
  json cfg = {{"a", args.a}, {"b", args.b}, {"out", args.out},
              {"policy", args.policy}};
  write_run_manifest(args.out + ".run.json", "concat", cfg,
                     input_checksums({args.a, args.b}), 0, started);
  guard.committed = true;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lifelong domain word embeddings"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a TOML/INI file");
  app.set_version_flag("--version", kVersion);

  BuildKbArgs bk;
  auto* build_kb = app.add_subcommand("build-kb", "build a knowledge base");
  build_kb->add_option("--domains", bk.domain_dirs, "past-domain corpus dirs")
      ->required()
      ->delimiter(',');
  build_kb->add_option("--out", bk.out, "output KB directory")->required();
  build_kb->add_option("--feature-vocab-size", bk.feature_vocab_size,
                       "top-f feature vocabulary size");
  build_kb->add_option("--window", bk.window, "context/feature window");
  build_kb->add_option("--subcorpus-bytes", bk.subcorpus_bytes,
                       "per-sub-corpus byte budget");
  build_kb->add_option("--min-count", bk.min_count, "vocabulary min count");
  build_kb->add_option("--hidden", bk.hidden, "meta-learner hidden size");
  build_kb->add_option("--seed", bk.seed, "random seed");

  TrainMetaArgs tm;
  auto* train_meta =
      app.add_subcommand("train-meta", "train the base meta-learner");
  train_meta->add_option("--kb", tm.kb, "knowledge base directory")->required();
  train_meta->add_option("--train-domains", tm.train_domains, "training split")
      ->required()
      ->delimiter(',');
  train_meta->add_option("--valid-domains", tm.valid_domains, "validation split")
      ->required()
      ->delimiter(',');
  train_meta->add_option("--test-domains", tm.test_domains, "test split")
      ->delimiter(',');
  train_meta->add_option("--words-per-domain", tm.words_per_domain,
                         "sampled words per domain");
  train_meta->add_option("--neg-ratio", tm.neg_ratio,
                         "negatives per positive");
  train_meta->add_option("--epochs", tm.epochs, "training epochs");
  train_meta->add_option("--patience", tm.patience, "early-stop patience");
  train_meta->add_option("--learning-rate", tm.learning_rate, "Adam step size");
  train_meta->add_option("--batch-size", tm.batch_size, "mini-batch size");
  train_meta->add_option("--seed", tm.seed, "random seed");

  RetrieveArgs rv;
  auto* retrieve =
      app.add_subcommand("retrieve", "retrieve relevant past knowledge");
  retrieve->add_option("--kb", rv.kb, "knowledge base directory")->required();
  retrieve->add_option("--new-domain", rv.new_domain, "new-domain corpus dir")
      ->required();
  retrieve->add_option("--domain-id", rv.domain_id,
                       "id for the new domain (default: dir name)");
  retrieve->add_option("--out", rv.out, "relevant-knowledge output file")
      ->required();
  retrieve->add_option("--model-out", rv.model_out,
                       "adapted meta-model output (default: OUT.meta.bin)");
  retrieve->add_option("--delta", rv.delta, "similarity threshold in [0,1]");
  retrieve->add_option("--adapt-epochs", rv.adapt_epochs,
                       "meta-adaptation epochs");
  retrieve->add_option("--adapt-words", rv.adapt_words,
                       "words sampled for adaptation");
  retrieve->add_option("--threads", rv.threads,
                       "scoring threads (0 = hardware)");
  retrieve->add_option("--seed", rv.seed, "random seed");
  retrieve->add_flag("--no-kb-update", rv.no_kb_update,
                     "do not store the new domain in the KB");

  TrainEmbedArgs te;
  auto* train_embed =
      app.add_subcommand("train-embed", "train skip-gram embeddings");
  train_embed->add_option("--corpus", te.corpus_dir, "corpus directory")
      ->required();
  train_embed->add_option("--relevant", te.relevant,
                          "relevant-knowledge file (augmented mode)");
  train_embed->add_option("--out", te.out, "embedding output file")->required();
  train_embed->add_option("--mode", te.mode, "plain or augmented");
  train_embed->add_option("--dim", te.dim, "embedding dimension");
  train_embed->add_option("--window", te.window, "context window");
  train_embed->add_option("--negatives", te.negatives, "negative samples");
  train_embed->add_option("--subsample", te.subsample,
                          "frequent-word subsampling threshold");
  train_embed->add_option("--learning-rate", te.learning_rate,
                          "initial learning rate");
  train_embed->add_option("--epochs", te.epochs, "training epochs");
  train_embed->add_option("--min-count", te.min_count, "vocabulary min count");
  train_embed->add_option("--mix-weight", te.mix_weight,
                          "borrowed-pair multiplicity scale");
  train_embed->add_option("--workers", te.workers,
                          "worker threads (1 = deterministic)");
  train_embed->add_option("--seed", te.seed, "random seed");

  TfidfArgs tf;
  auto* tfidf = app.add_subcommand("baseline-tfidf",
                                   "TFIDF sentence-borrowing baseline");
  tfidf->add_option("--past-domains", tf.past_dirs, "past-domain corpus dirs")
      ->required()
      ->delimiter(',');
  tfidf->add_option("--new-domain", tf.new_domain, "new-domain corpus dir")
      ->required();
  tfidf->add_option("--out", tf.out, "borrowed-sentence output file")
      ->required();
  tfidf->add_option("--threshold", tf.threshold, "cosine threshold");

  EvalArgs ev;
  auto* eval_cmd =
      app.add_subcommand("eval", "evaluate embeddings on a labeled dataset");
  eval_cmd->add_option("--embeddings", ev.embeddings, "embedding files")
      ->required()
      ->delimiter(',');
  eval_cmd->add_option("--dataset", ev.dataset, "label TAB text file")
      ->required();
  eval_cmd->add_option("--out", ev.out, "JSON report output");
  eval_cmd->add_option("--seeds", ev.seeds, "number of classifier seeds");

  ConcatArgs cc;
  auto* concat = app.add_subcommand("concat", "concatenate two embeddings");
  concat->add_option("--a", cc.a, "first embedding file")->required();
  concat->add_option("--b", cc.b, "second embedding file")->required();
  concat->add_option("--out", cc.out, "combined output file")->required();
  concat->add_option("--policy", cc.policy, "zero (fill) or strict");

  add_env_overrides(&app);
  CLI11_PARSE(app, argc, argv);

  try {
    if (*build_kb) return run_build_kb(bk);
    if (*train_meta) return run_train_meta(tm);
    if (*retrieve) return run_retrieve(rv);
    if (*train_embed) return run_train_embed(te);
    if (*tfidf) return run_baseline_tfidf(tf);
    if (*eval_cmd) return run_eval(ev);
    if (*concat) return run_concat(cc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
