#pragma once

// Codec profile: everything sender and receiver must agree on, in one JSON
// file. Relative paths inside a profile resolve against its directory.

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "rstego/channel.hpp"
#include "rstego/ecc.hpp"
#include "rstego/embed_scheme.hpp"
#include "rstego/embedding.hpp"
#include "rstego/langmodel.hpp"
#include "rstego/lsh.hpp"
#include "rstego/remote.hpp"
#include "rstego/watermark.hpp"

namespace rstego {

enum class ModelKind { synthetic, ngram, remote };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::synthetic: return "synthetic";
    case ModelKind::ngram: return "ngram";
    case ModelKind::remote: return "remote";
  }
  return "synthetic";
}

inline ModelKind model_kind_from_string(std::string_view s) {
  if (s == "synthetic") return ModelKind::synthetic;
  if (s == "ngram") return ModelKind::ngram;
  if (s == "remote") return ModelKind::remote;
  throw std::invalid_argument("unknown model kind '" + std::string(s) + "'");
}

struct ModelSpec {
  ModelKind kind = ModelKind::synthetic;
  std::size_t vocab_size = 64;                // synthetic, when no vocabulary file is given
  std::optional<double> entropy_target;       // synthetic, bits
  std::uint64_t seed = 0;                     // synthetic
  std::string corpus_path;                    // ngram
  std::size_t order = 3;                      // ngram
  double smoothing = 0.1;                     // ngram
  std::string vocabulary_path;                // optional for synthetic/remote
  std::optional<std::size_t> ter_index;       // with vocabulary_path; default last line
  std::optional<std::size_t> unk_index;
  std::optional<RemoteConfig> remote;

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", to_string(kind)}, {"vocab_size", vocab_size}, {"seed", seed},
                     {"order", order},          {"smoothing", smoothing}};
    if (entropy_target) j["entropy_target"] = *entropy_target;
    if (!corpus_path.empty()) j["corpus_path"] = corpus_path;
    if (!vocabulary_path.empty()) j["vocabulary_path"] = vocabulary_path;
    if (ter_index) j["ter_index"] = *ter_index;
    if (unk_index) j["unk_index"] = *unk_index;
    if (remote) j["remote"] = remote->to_json();
    return j;
  }

  static ModelSpec from_json(const nlohmann::json& j) {
    ModelSpec m;
    m.kind = model_kind_from_string(j.value("kind", std::string("synthetic")));
    m.vocab_size = j.value("vocab_size", m.vocab_size);
    if (j.contains("entropy_target")) m.entropy_target = j.at("entropy_target").get<double>();
    m.seed = j.value("seed", m.seed);
    m.corpus_path = j.value("corpus_path", std::string{});
    m.order = j.value("order", m.order);
    m.smoothing = j.value("smoothing", m.smoothing);
    m.vocabulary_path = j.value("vocabulary_path", std::string{});
    if (j.contains("ter_index")) m.ter_index = j.at("ter_index").get<std::size_t>();
    if (j.contains("unk_index")) m.unk_index = j.at("unk_index").get<std::size_t>();
    if (j.contains("remote")) m.remote = RemoteConfig::from_json(j.at("remote"));
    return m;
  }
};

struct EmbedderSpec {
  std::string kind = "toy";  // toy | remote
  std::size_t dimension = 256;
  std::optional<RemoteConfig> remote;

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", kind}, {"dimension", dimension}};
    if (remote) j["remote"] = remote->to_json();
    return j;
  }
  static EmbedderSpec from_json(const nlohmann::json& j) {
    EmbedderSpec e;
    e.kind = j.value("kind", e.kind);
    e.dimension = j.value("dimension", e.dimension);
    if (j.contains("remote")) e.remote = RemoteConfig::from_json(j.at("remote"));
    if (e.kind != "toy" && e.kind != "remote") throw std::invalid_argument("unknown embedder kind '" + e.kind + "'");
    return e;
  }
};

struct Profile {
  Scheme scheme = Scheme::watermark;
  WatermarkParams watermark;
  EmbedParams embedding;
  EccSpec ecc;
  ModelSpec model;
  EmbedderSpec embedder;
  std::string lsh_path;
  std::optional<nlohmann::json> lsh_inline;
  std::optional<std::size_t> message_bits;  // payload length before ECC
  std::optional<RemoteConfig> paraphraser;  // endpoint for the remote paraphrase attack
  ChannelHistory history;
  std::filesystem::path base_dir;           // not serialized

  nlohmann::json to_json() const {
    nlohmann::json j{{"scheme", to_string(scheme)},   {"watermark", watermark.to_json()},
                     {"embedding", embedding.to_json()}, {"ecc", ecc.to_json()},
                     {"model", model.to_json()},      {"embedder", embedder.to_json()},
                     {"history", history.to_json()}};
    if (!lsh_path.empty()) j["lsh_path"] = lsh_path;
    if (lsh_inline) j["lsh"] = *lsh_inline;
    if (message_bits) j["message_bits"] = *message_bits;
    if (paraphraser) j["paraphraser"] = paraphraser->to_json();
    return j;
  }

  static Profile from_json(const nlohmann::json& j, std::filesystem::path base_dir = {}) {
    Profile p;
    p.scheme = scheme_from_string(j.value("scheme", std::string("watermark")));
    if (j.contains("watermark")) p.watermark = WatermarkParams::from_json(j.at("watermark"));
    if (j.contains("embedding")) p.embedding = EmbedParams::from_json(j.at("embedding"));
    if (j.contains("ecc")) p.ecc = EccSpec::from_json(j.at("ecc"));
    if (j.contains("model")) p.model = ModelSpec::from_json(j.at("model"));
    if (j.contains("embedder")) p.embedder = EmbedderSpec::from_json(j.at("embedder"));
    p.lsh_path = j.value("lsh_path", std::string{});
    if (j.contains("lsh")) p.lsh_inline = j.at("lsh");
    if (j.contains("message_bits")) p.message_bits = j.at("message_bits").get<std::size_t>();
    if (j.contains("paraphraser")) p.paraphraser = RemoteConfig::from_json(j.at("paraphraser"));
    if (j.contains("history")) p.history = ChannelHistory::from_json(j.at("history"));
    p.base_dir = std::move(base_dir);
    return p;
  }

  static Profile load(const std::string& path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument("profile " + path + ": " + e.what());
    }
    return from_json(j, std::filesystem::path(path).parent_path());
  }

  std::string resolve(const std::string& rel) const {
    if (rel.empty()) return rel;
    std::filesystem::path p(rel);
    if (p.is_absolute() || base_dir.empty()) return rel;
    return (base_dir / p).string();
  }
};

inline Vocabulary load_vocabulary(const Profile& profile) {
  const auto& m = profile.model;
  if (m.kind == ModelKind::ngram) {
    if (m.corpus_path.empty()) throw std::invalid_argument("ngram model needs corpus_path");
    if (m.vocabulary_path.empty()) return Vocabulary::from_corpus(read_file(profile.resolve(m.corpus_path)));
  }
  if (!m.vocabulary_path.empty()) {
    auto content = read_file(profile.resolve(m.vocabulary_path));
    auto vocab = Vocabulary::parse(content, 0);  // provisional, to learn the size
    std::size_t ter = m.ter_index.value_or(vocab.size() - 1);
    return Vocabulary::parse(content, ter, m.unk_index);
  }
  return Vocabulary::synthetic(m.vocab_size);
}

inline std::unique_ptr<LanguageModel> make_model(const Profile& profile) {
  const auto& m = profile.model;
  auto vocab = load_vocabulary(profile);
  switch (m.kind) {
    case ModelKind::synthetic:
      return std::make_unique<SyntheticModel>(std::move(vocab), m.seed, m.entropy_target);
    case ModelKind::ngram:
      return std::make_unique<NgramModel>(
          NgramModel::train(std::move(vocab), read_file(profile.resolve(m.corpus_path)), m.order, m.smoothing));
    case ModelKind::remote:
      if (!m.remote) throw std::invalid_argument("remote model needs a 'remote' block");
      return std::make_unique<RemoteLanguageModel>(std::move(vocab), *m.remote);
  }
  throw std::invalid_argument("unknown model kind");
}

inline std::unique_ptr<Embedder> make_embedder(const Profile& profile) {
  if (profile.embedder.kind == "remote") {
    if (!profile.embedder.remote) throw std::invalid_argument("remote embedder needs a 'remote' block");
    auto cfg = *profile.embedder.remote;
    if (cfg.dimension == 0) cfg.dimension = profile.embedder.dimension;
    return std::make_unique<RemoteEmbedder>(cfg);
  }
  return std::make_unique<ToyEmbedder>(profile.embedder.dimension);
}

inline LshModel load_lsh(const Profile& profile) {
  if (profile.lsh_inline) return LshModel::from_json(*profile.lsh_inline);
  if (profile.lsh_path.empty()) throw std::invalid_argument("profile has no LSH model (lsh or lsh_path)");
  return LshModel::from_json(nlohmann::json::parse(read_file(profile.resolve(profile.lsh_path))));
}

}  // namespace rstego
