#include "ldem/knowledge_base.hpp"

#include <zlib.h>

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ldem {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint32_t kSupportedVersion = 1;

bool safe_domain_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  for (char c : id) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
          c == '-' || c == '.')) {
      return false;
    }
  }
  return true;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

std::string crc_hex(const std::string& data) {
  const auto crc =
      ::crc32(0L, reinterpret_cast<const Bytef*>(data.data()),
              static_cast<uInt>(data.size()));
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

std::string vocab_tsv(const Vocabulary& v) {
  std::string out;
  for (const auto& [w, c] : v.entries) {
    out += w;
    out += '\t';
    out += std::to_string(c);
    out += '\n';
  }
  return out;
}

Vocabulary parse_vocab_tsv(const std::string& data, const fs::path& where) {
  Vocabulary v;
  std::istringstream in(data);
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("malformed vocab line in " + where.string());
    }
    v.entries.emplace_back(line.substr(0, tab),
                           std::stoull(line.substr(tab + 1)));
  }
  for (std::uint32_t r = 0; r < v.entries.size(); ++r) {
    if (!v.index.emplace(v.entries[r].first, r).second) {
      throw std::runtime_error("duplicate vocab word in " + where.string());
    }
  }
  return v;
}

std::string contexts_tsv(const ContextBag& bag) {
  std::string out;
  for (const auto& [w, ctx] : bag) {
    for (const auto& [cw, n] : ctx) {
      out += w;
      out += '\t';
      out += cw;
      out += '\t';
      out += std::to_string(n);
      out += '\n';
    }
  }
  return out;
}

ContextBag parse_contexts_tsv(const std::string& data, const fs::path& where) {
  ContextBag bag;
  std::istringstream in(data);
  std::string line;
  while (std::getline(in, line)) {
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      throw std::runtime_error("malformed context line in " + where.string());
    }
    bag[line.substr(0, t1)][line.substr(t1 + 1, t2 - t1 - 1)] =
        std::stoull(line.substr(t2 + 1));
  }
  return bag;
}

std::string vectors_tsv(const std::map<std::string, FeatureVector>& vecs) {
  std::string out;
  for (const auto& [w, fv] : vecs) {
    out += w;
    for (const auto& [rank, count] : fv.counts) {
      out += '\t';
      out += std::to_string(rank);
      out += ':';
      out += std::to_string(count);
    }
    out += '\n';
  }
  return out;
}

std::map<std::string, FeatureVector> parse_vectors_tsv(const std::string& data,
                                                       const fs::path& where) {
  std::map<std::string, FeatureVector> out;
  std::istringstream in(data);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string field;
    if (!std::getline(ls, field, '\t')) continue;
    FeatureVector fv;
    fv.word = field;
    while (std::getline(ls, field, '\t')) {
      const auto colon = field.find(':');
      if (colon == std::string::npos) {
        throw std::runtime_error("malformed vector entry in " + where.string());
      }
      fv.counts.emplace_back(
          static_cast<std::uint32_t>(std::stoul(field.substr(0, colon))),
          static_cast<std::uint32_t>(std::stoul(field.substr(colon + 1))));
    }
    if (fv.counts.empty()) {
      throw std::runtime_error("all-zero vector for '" + fv.word + "' in " +
                               where.string());
    }
    out.emplace(fv.word, std::move(fv));
  }
  return out;
}

void check_domain(const KnowledgeBase& kb, const std::string& id,
                  const DomainKnowledge& k) {
  const std::uint32_t f = static_cast<std::uint32_t>(kb.feature_words.size());
  auto check_vecs = [&](const std::map<std::string, FeatureVector>& vecs) {
    for (const auto& [w, fv] : vecs) {
      for (const auto& [rank, count] : fv.counts) {
        if (rank >= f) {
          throw std::runtime_error("domain '" + id + "': feature rank " +
                                   std::to_string(rank) + " out of range");
        }
        if (count == 0) {
          throw std::runtime_error("domain '" + id + "': zero count stored");
        }
      }
    }
  };
  check_vecs(k.vectors_k1);
  check_vecs(k.vectors_k2);
}

}  // namespace

KnowledgeBase kb_init(const Vocabulary& feature_vocab,
                      MetaLearnerParams base_model, KbManifest manifest) {
  if (base_model.f != feature_vocab.size()) {
    throw std::invalid_argument(
        "kb_init: model f=" + std::to_string(base_model.f) +
        " does not match feature vocabulary size " +
        std::to_string(feature_vocab.size()));
  }
  KnowledgeBase kb;
  for (const auto& [w, c] : feature_vocab.entries) kb.feature_words.push_back(w);
  kb.feature_index = feature_vocab.index;
  kb.base_model = quantize_meta(std::move(base_model));
  kb.manifest = manifest;
  kb.manifest.f = static_cast<std::uint32_t>(kb.feature_words.size());
  return kb;
}

void kb_add_domain(KnowledgeBase& kb, const std::string& domain_id,
                   DomainKnowledge knowledge) {
  if (!safe_domain_id(domain_id)) {
    throw std::invalid_argument("invalid domain id: '" + domain_id + "'");
  }
  if (kb.domains.count(domain_id)) {
    throw std::invalid_argument("duplicate domain id: '" + domain_id + "'");
  }
  check_domain(kb, domain_id, knowledge);
  kb.domains.emplace(domain_id, std::move(knowledge));
}

void kb_replace_model(KnowledgeBase& kb, MetaLearnerParams model) {
  if (model.f != kb.feature_words.size()) {
    throw std::invalid_argument("model f does not match feature vocabulary");
  }
  kb.base_model = quantize_meta(std::move(model));
}

void kb_validate(const KnowledgeBase& kb) {
  if (kb.base_model.f != kb.feature_words.size()) {
    throw std::runtime_error("kb_validate: model/vocabulary f mismatch");
  }
  for (const auto& [id, k] : kb.domains) check_domain(kb, id, k);
}

void kb_save(const KnowledgeBase& kb, const fs::path& dir) {
  fs::create_directories(dir / "domains");
  // path (relative, '/'-separated) -> serialized contents
  std::map<std::string, std::string> files;

  std::string vocab_txt;
  for (const auto& w : kb.feature_words) {
    vocab_txt += w;
    vocab_txt += '\n';
  }
  files["feature_vocab.txt"] = std::move(vocab_txt);

  {
    const fs::path tmp = dir / "meta_model.bin";
    save_meta(kb.base_model, tmp);
    files["meta_model.bin"] = read_file(tmp);
  }

  for (const auto& [id, k] : kb.domains) {
    fs::create_directories(dir / "domains" / id);
    files["domains/" + id + "/vocab.tsv"] = vocab_tsv(k.vocab);
    files["domains/" + id + "/contexts.tsv"] = contexts_tsv(k.contexts);
    files["domains/" + id + "/vectors_k1.tsv"] = vectors_tsv(k.vectors_k1);
    files["domains/" + id + "/vectors_k2.tsv"] = vectors_tsv(k.vectors_k2);
  }

  json checksums = json::object();
  for (const auto& [rel, data] : files) {
    if (rel != "meta_model.bin") write_file(dir / rel, data);
    checksums[rel] = crc_hex(data);
  }

  json manifest = {
      {"format_version", kb.manifest.format_version},
      {"f", kb.manifest.f},
      {"context_window", kb.manifest.context_window},
      {"feature_window", kb.manifest.feature_window},
      {"subcorpus_bytes", kb.manifest.subcorpus_bytes},
      {"min_count", kb.manifest.min_count},
      {"trained", kb.manifest.trained},
      {"domains", json::array()},
      {"checksums", checksums},
  };
  for (const auto& [id, k] : kb.domains) manifest["domains"].push_back(id);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");

  // Drop stale domain directories from a previous save over the same path.
  for (const auto& e : fs::directory_iterator(dir / "domains")) {
    if (e.is_directory() && !kb.domains.count(e.path().filename().string())) {
      fs::remove_all(e.path());
    }
  }
}

KnowledgeBase kb_load(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt manifest in " + dir.string() + ": " +
                             e.what());
  }
  KnowledgeBase kb;
  kb.manifest.format_version = manifest.at("format_version").get<std::uint32_t>();
  if (kb.manifest.format_version > kSupportedVersion) {
    throw std::runtime_error(
        "knowledge base format version " +
        std::to_string(kb.manifest.format_version) +
        " is newer than supported version " + std::to_string(kSupportedVersion));
  }
  kb.manifest.f = manifest.at("f").get<std::uint32_t>();
  kb.manifest.context_window = manifest.at("context_window").get<int>();
  kb.manifest.feature_window = manifest.at("feature_window").get<int>();
  kb.manifest.subcorpus_bytes = manifest.at("subcorpus_bytes").get<std::uint64_t>();
  kb.manifest.min_count = manifest.at("min_count").get<std::uint64_t>();
  kb.manifest.trained = manifest.value("trained", false);

  std::map<std::string, std::string> contents;
  for (const auto& [rel, crc] : manifest.at("checksums").items()) {
    std::string data = read_file(dir / rel);
    if (crc_hex(data) != crc.get<std::string>()) {
      throw std::runtime_error("checksum mismatch for " + rel + " in " +
                               dir.string());
    }
    contents.emplace(rel, std::move(data));
  }

  {
    std::istringstream in(contents.at("feature_vocab.txt"));
    std::string word;
    while (std::getline(in, word)) {
      kb.feature_index.emplace(word, static_cast<std::uint32_t>(kb.feature_words.size()));
      kb.feature_words.push_back(word);
    }
  }
  if (kb.feature_words.size() != kb.manifest.f) {
    throw std::runtime_error("feature vocabulary size does not match manifest");
  }
  kb.base_model = load_meta(dir / "meta_model.bin");

  for (const auto& id : manifest.at("domains")) {
    const std::string did = id.get<std::string>();
    const fs::path base = dir / "domains" / did;
    DomainKnowledge k;
    k.vocab = parse_vocab_tsv(contents.at("domains/" + did + "/vocab.tsv"),
                              base / "vocab.tsv");
    k.contexts = parse_contexts_tsv(
        contents.at("domains/" + did + "/contexts.tsv"), base / "contexts.tsv");
    k.vectors_k1 = parse_vectors_tsv(
        contents.at("domains/" + did + "/vectors_k1.tsv"), base / "vectors_k1.tsv");
    k.vectors_k2 = parse_vectors_tsv(
        contents.at("domains/" + did + "/vectors_k2.tsv"), base / "vectors_k2.tsv");
    kb.domains.emplace(did, std::move(k));
  }
  kb_validate(kb);
  return kb;
}

bool kb_equal(const KnowledgeBase& a, const KnowledgeBase& b) {
  auto dom_eq = [](const DomainKnowledge& x, const DomainKnowledge& y) {
    return x.vocab.entries == y.vocab.entries && x.contexts == y.contexts &&
           x.vectors_k1 == y.vectors_k1 && x.vectors_k2 == y.vectors_k2;
  };
  if (a.feature_words != b.feature_words) return false;
  if (!(a.base_model == b.base_model)) return false;
  if (a.manifest.format_version != b.manifest.format_version ||
      a.manifest.f != b.manifest.f ||
      a.manifest.context_window != b.manifest.context_window ||
      a.manifest.feature_window != b.manifest.feature_window ||
      a.manifest.subcorpus_bytes != b.manifest.subcorpus_bytes ||
      a.manifest.min_count != b.manifest.min_count ||
      a.manifest.trained != b.manifest.trained) {
    return false;
  }
  if (a.domains.size() != b.domains.size()) return false;
  for (auto ia = a.domains.begin(), ib = b.domains.begin();
       ia != a.domains.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !dom_eq(ia->second, ib->second)) return false;
  }
  return true;
}

}  // namespace ldem
