// rstego: command-line front end for the watermark and embedding codecs,
// the attack simulator and the experiment harness.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 decode failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "rstego/rstego.hpp"

using namespace rstego;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string profile_path;
  std::optional<std::uint64_t> seed;
  bool json_out = false;

  Profile profile() const {
    if (profile_path.empty()) throw UsageError("--profile: required for this command");
    return Profile::load(profile_path);
  }
  std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
};

void emit(const Globals& g, const json& j, const std::string& plain) {
  if (g.json_out)
    std::cout << j.dump() << "\n";
  else
    std::cout << plain << "\n";
}

void write_or_print(const std::string& path, const std::string& content) {
  if (path.empty())
    std::cout << content;
  else
    write_file(path, content);
}

Bits parse_bits_flag(const std::string& s) {
  try {
    return HiddenMessage::from_string(s).bits;
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--bits: ") + e.what());
  }
}

std::string bits_string(const Bits& b) {
  std::string s;
  for (auto x : b) s.push_back(static_cast<char>('0' + x));
  return s;
}

Bits payload_from_flags(const std::string& bits, const std::string& text, const Profile& profile) {
  if (bits.empty() == text.empty()) throw UsageError("--bits/--text: give exactly one");
  Bits payload = bits.empty() ? encode_text_message(text) : parse_bits_flag(bits);
  if (profile.message_bits && *profile.message_bits != payload.size())
    throw UsageError("--bits: profile fixes message_bits = " + std::to_string(*profile.message_bits) + ", got " +
                     std::to_string(payload.size()));
  return payload;
}

std::size_t payload_length(std::size_t flag, const Profile& profile, const StegoDocument* doc) {
  if (flag) return flag;
  if (profile.message_bits) return *profile.message_bits;
  if (doc && doc->params.contains("message_bits")) return doc->params.at("message_bits").get<std::size_t>();
  throw UsageError("--message-bits: payload length unknown (not in profile or document)");
}

/// A stego document file, or plain stegotext when the file is not a document.
std::pair<StegoDocument, bool> read_document(const std::string& path) {
  auto content = read_file(path);
  try {
    return {StegoDocument::parse(content), true};
  } catch (const std::exception&) {
    StegoDocument d;
    d.text = content;
    return {d, false};
  }
}

Bytes read_key(const std::string& path) {
  if (path.empty()) throw UsageError("--key: required");
  return WatermarkKeySet::parse_key_file(read_file(path));
}

void print_payload(const Globals& g, const Bits& payload, bool as_text, json extra) {
  extra["bits"] = bits_string(payload);
  std::string plain = bits_string(payload);
  if (as_text) {
    plain = decode_text_message(payload);
    extra["text"] = plain;
  }
  emit(g, extra, plain);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rstego: hide bits in language-model text"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed for every randomized step");
  app.add_option("--profile", g.profile_path, "Codec profile (JSON)");
  app.add_flag("--json", g.json_out, "Machine-readable output");

  std::function<int()> run;

  // keygen
  auto* keygen = app.add_subcommand("keygen", "Generate a master key (lowercase hex)");
  std::string key_out;
  std::size_t security_bits = 256;
  keygen->add_option("--out", key_out, "Key file to write (default: stdout)");
  keygen->add_option("--security-bits", security_bits, "Key length in bits")->check(CLI::Range(128, 4096));
  keygen->callback([&] {
    run = [&] {
      if (security_bits % 8) throw UsageError("--security-bits: must be a multiple of 8");
      Bytes key;
      if (g.seed) {
        // Deterministic keys for reproducible runs: SHA-256 in counter mode.
        for (std::uint32_t block = 0; key.size() < security_bits / 8; ++block) {
          Bytes in;
          append_be64(in, *g.seed);
          append_be32(in, block);
          auto d = sha256(in);
          key.insert(key.end(), d.begin(), d.end());
        }
        key.resize(security_bits / 8);
      } else {
        key = random_bytes(security_bits / 8);
      }
      write_or_print(key_out, to_hex(key) + "\n");
      if (!key_out.empty()) emit(g, {{"out", key_out}, {"bits", security_bits}}, "wrote " + key_out);
      return 0;
    };
  });

  // encode-wm / encode-embed
  std::string key_path, bits_flag, text_flag, out_path, in_path;
  std::size_t message_bits_flag = 0;
  bool as_text = false;

  auto* enc_wm = app.add_subcommand("encode-wm", "Hide bits with the watermark codec");
  enc_wm->add_option("--key", key_path, "Master key file")->required();
  enc_wm->add_option("--bits", bits_flag, "Payload as a 0/1 string");
  enc_wm->add_option("--text", text_flag, "Payload as text (length-framed)");
  enc_wm->add_option("--out", out_path, "Stego document to write (default: stdout)");
  enc_wm->callback([&] {
    run = [&] {
      auto profile = g.profile();
      auto key = read_key(key_path);
      auto payload = payload_from_flags(bits_flag, text_flag, profile);
      auto model = make_model(profile);
      auto doc = watermark_encode_payload(key, payload, profile.ecc, profile.history, *model, profile.watermark,
                                          g.seed_or(0));
      write_or_print(out_path, doc.serialize() + "\n");
      if (!out_path.empty())
        emit(g, {{"out", out_path}, {"T", doc.token_indices.size()}, {"message_bits", payload.size()}},
             "wrote " + out_path + " (" + std::to_string(doc.token_indices.size()) + " tokens)");
      return 0;
    };
  });

  auto* enc_emb = app.add_subcommand("encode-embed", "Hide bits with the embedding codec");
  enc_emb->add_option("--bits", bits_flag, "Payload as a 0/1 string");
  enc_emb->add_option("--text", text_flag, "Payload as text (length-framed)");
  enc_emb->add_option("--out", out_path, "Stego document to write (default: stdout)");
  enc_emb->callback([&] {
    run = [&] {
      auto profile = g.profile();
      auto payload = payload_from_flags(bits_flag, text_flag, profile);
      auto model = make_model(profile);
      auto embedder = make_embedder(profile);
      auto lsh = load_lsh(profile);
      auto res = embedding_encode_payload(payload, profile.ecc, *model, *embedder, lsh, profile.history,
                                          profile.embedding, g.seed_or(0));
      write_or_print(out_path, res.document.serialize() + "\n");
      if (!out_path.empty())
        emit(g,
             {{"out", out_path}, {"attempts", res.attempts}, {"misses", res.misses()},
              {"message_bits", payload.size()}},
             "wrote " + out_path + " (" + std::to_string(res.attempts.size()) + " chunks, " +
                 std::to_string(res.misses()) + " misses)");
      return 0;
    };
  });

  // decode-wm / decode-embed
  auto* dec_wm = app.add_subcommand("decode-wm", "Recover bits from a watermarked document or text");
  dec_wm->add_option("--key", key_path, "Master key file")->required();
  dec_wm->add_option("--in", in_path, "Stego document or plain stegotext")->required();
  dec_wm->add_option("--message-bits", message_bits_flag, "Payload length in bits");
  dec_wm->add_flag("--text", as_text, "Payload is length-framed text");
  dec_wm->callback([&] {
    run = [&] {
      auto profile = g.profile();
      auto key = read_key(key_path);
      auto [doc, is_doc] = read_document(in_path);
      auto vocab = load_vocabulary(profile);
      if (!is_doc) doc.token_indices = tokenize_lenient(vocab, doc.text);
      if (doc.token_indices.empty() && doc.text.empty()) throw DecodeError("empty stegotext");
      std::size_t n = payload_length(message_bits_flag, profile, is_doc ? &doc : nullptr);
      auto res = watermark_decode_payload(key, n, profile.ecc, profile.history, doc, vocab, profile.watermark);
      print_payload(g, res.payload, as_text, {{"report", res.report.to_json()}});
      return 0;
    };
  });

  auto* dec_emb = app.add_subcommand("decode-embed", "Recover bits from an embedding-codec document or text");
  dec_emb->add_option("--in", in_path, "Stego document or plain stegotext")->required();
  dec_emb->add_option("--message-bits", message_bits_flag, "Payload length in bits");
  dec_emb->add_flag("--text", as_text, "Payload is length-framed text");
  dec_emb->callback([&] {
    run = [&] {
      auto profile = g.profile();
      auto [doc, is_doc] = read_document(in_path);
      auto embedder = make_embedder(profile);
      auto lsh = load_lsh(profile);
      std::size_t n = payload_length(message_bits_flag, profile, is_doc ? &doc : nullptr);
      auto payload = embedding_decode_payload(doc.text, n, profile.ecc, *embedder, lsh);
      print_payload(g, payload, as_text, json::object());
      return 0;
    };
  });

  // train-pca-lsh
  auto* pca = app.add_subcommand("train-pca-lsh", "Fit a PCA hash on a text corpus");
  std::string corpus_path, threshold = "zero";
  std::size_t hash_bits = 1;
  pca->add_option("--corpus", corpus_path, "Text file or directory (paragraphs are samples)")->required();
  pca->add_option("--hash-bits", hash_bits, "Output bits")->check(CLI::PositiveNumber);
  pca->add_option("--threshold", threshold, "zero or median")->check(CLI::IsMember({"zero", "median"}));
  pca->add_option("--out", out_path, "LSH model file (default: stdout)");
  pca->callback([&] {
    run = [&] {
      std::unique_ptr<Embedder> embedder;
      if (g.profile_path.empty())
        embedder = std::make_unique<ToyEmbedder>();
      else
        embedder = make_embedder(g.profile());
      std::vector<EmbeddingVector> vecs;
      for (auto& p : load_paragraphs(corpus_path)) vecs.push_back(embed_text(*embedder, p));
      LshModel model = train_pca_lsh(vecs, hash_bits, threshold == "median" ? ThresholdRule::median : ThresholdRule::zero);
      write_or_print(out_path, model.to_json().dump(2) + "\n");
      if (!out_path.empty())
        emit(g, {{"out", out_path}, {"samples", vecs.size()}},
             "wrote " + out_path + " (" + std::to_string(vecs.size()) + " samples)");
      return 0;
    };
  });

  // attack
  auto* attack = app.add_subcommand("attack", "Tamper with a text");
  AttackConfig acfg;
  std::string kind = "ngram_shuffle", mode = "local", paraphraser = "deterministic_rules";
  bool per_chunk = false;
  attack->add_option("--kind", kind, "ngram_shuffle, synonym or paraphrase")
      ->check(CLI::IsMember({"ngram_shuffle", "synonym", "paraphrase"}));
  attack->add_option("--mode", mode, "local or global")->check(CLI::IsMember({"local", "global"}));
  attack->add_option("--fraction", acfg.fraction, "Fraction of units touched")->check(CLI::Range(0.0, 1.0));
  attack->add_option("--n", acfg.n, "n-gram size for shuffling")->check(CLI::PositiveNumber);
  attack->add_option("--lexicon", acfg.lexicon_path, "Synonym lexicon file");
  attack->add_option("--rules", acfg.rules_path, "Paraphrase rule file");
  attack->add_option("--paraphraser", paraphraser, "deterministic_rules or remote")
      ->check(CLI::IsMember({"deterministic_rules", "remote"}));
  attack->add_flag("--per-chunk", per_chunk, "Attack each blank-line chunk separately");
  attack->add_option("--in", in_path, "Input text")->required();
  attack->add_option("--out", out_path, "Output text (default: stdout)");
  attack->callback([&] {
    run = [&] {
      acfg.kind = attack_kind_from_string(kind);
      acfg.mode = attack_mode_from_string(mode);
      acfg.paraphraser = paraphraser_from_string(paraphraser);
      acfg.seed = g.seed_or(0);
      if (acfg.kind == AttackKind::synonym && acfg.lexicon_path.empty())
        throw UsageError("--lexicon: required for synonym attacks");
      ParaphraseFn remote;
      if (acfg.paraphraser == Paraphraser::remote) {
        auto profile = g.profile();
        if (!profile.paraphraser) throw UsageError("--paraphraser: profile has no 'paraphraser' endpoint");
        remote = remote_paraphraser(*profile.paraphraser);
      }
      Attacker attacker(acfg, remote);
      auto text = read_file(in_path);
      std::string out;
      if (acfg.fraction == 0.0) {
        out = text;
      } else if (per_chunk) {
        auto chunks = split_chunks(text);
        for (std::size_t i = 0; i < chunks.size(); ++i) chunks[i] = attacker.apply(chunks[i], derive_seed(acfg.seed, i));
        out = join_chunks(chunks) + "\n";
      } else {
        out = attacker.apply(text);
        if (!out.empty() && out.back() != '\n') out.push_back('\n');
      }
      write_or_print(out_path, out);
      return 0;
    };
  });

  // consistency / drift
  std::string x_path, fx_path;
  std::size_t k = 3;
  auto* cons = app.add_subcommand("consistency", "Fraction of k-word windows of x found in f(x)");
  cons->add_option("--x", x_path, "Original text")->required();
  cons->add_option("--fx", fx_path, "Tampered text")->required();
  cons->add_option("--k", k, "Window length in words")->check(CLI::PositiveNumber);
  cons->callback([&] {
    run = [&] {
      double e = local_consistency(read_file(x_path), read_file(fx_path), k);
      emit(g, {{"k", k}, {"consistency", e}}, fmt_num(e));
      return 0;
    };
  });

  auto* drift = app.add_subcommand("drift", "Embedding distance between two texts");
  drift->add_option("--a", x_path, "First text")->required();
  drift->add_option("--b", fx_path, "Second text")->required();
  drift->callback([&] {
    run = [&] {
      std::unique_ptr<Embedder> embedder;
      if (g.profile_path.empty())
        embedder = std::make_unique<ToyEmbedder>();
      else
        embedder = make_embedder(g.profile());
      auto d = embedding_drift(read_file(x_path), read_file(fx_path), *embedder);
      emit(g, {{"euclidean", d.euclidean}, {"cosine", d.cosine}},
           "euclidean " + fmt_num(d.euclidean) + " cosine " + fmt_num(d.cosine));
      return 0;
    };
  });

  // estimate-length
  auto* est = app.add_subcommand("estimate-length", "Covertext tokens needed by the watermark codec");
  std::size_t n_bits = 1;
  double delta = 0.2, epsilon = 0.05, safety = 1.0;
  est->add_option("--bits", n_bits, "Message bits n")->required()->check(CLI::PositiveNumber);
  est->add_option("--delta", delta, "Perturbation strength")->check(CLI::Range(0.0, 1.0));
  est->add_option("--epsilon", epsilon, "Overall error budget")->check(CLI::Range(0.0, 1.0));
  est->add_option("--safety", safety, "Multiplier >= 1");
  est->callback([&] {
    run = [&] {
      auto T = required_length(n_bits, delta, epsilon, safety);
      emit(g, {{"T", T}, {"p_w", p_w(delta)}, {"z_threshold", detection_threshold(n_bits, epsilon)}},
           std::to_string(T));
      return 0;
    };
  });

  // cost
  auto* cost = app.add_subcommand("cost", "Query cost of the embedding codec");
  cost->set_help_flag("--help", "Print this help message and exit");  // -h is taken by --h
  CostModel cm;
  double c_flag = -1.0;
  cost->add_option("--n", cm.n, "Bits to hide")->required();
  cost->add_option("--h", cm.h, "Bits per chunk")->required();
  cost->add_option("--c", c_flag, "Queries per chunk (default 2^h)");
  cost->add_option("--W", cm.W, "Input tokens per query");
  cost->add_option("--T", cm.T_out, "Output tokens per query");
  cost->add_option("--p-in", cm.p_in, "Price per input token");
  cost->add_option("--p-out", cm.p_out, "Price per output token");
  cost->callback([&] {
    run = [&] {
      if (c_flag >= 0.0) cm.c = c_flag;
      if (cm.h < 1) throw UsageError("--h: must be >= 1");
      double total = total_cost(cm);
      emit(g, {{"total_queries", cm.total_queries()}, {"total_cost", total}}, fmt_num(total));
      return 0;
    };
  });

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run an experiment spec and write CSV");
  std::string config_path;
  exp->add_option("--config", config_path, "Experiment spec (JSON)")->required();
  exp->add_option("--out", out_path, "CSV output (default: spec 'output' or stdout)");
  exp->callback([&] {
    run = [&] {
      auto spec = json::parse(read_file(config_path));
      auto base = std::filesystem::path(config_path).parent_path();
      auto table = run_experiment(spec, base, g.seed);
      std::string dest = out_path;
      if (dest.empty() && spec.contains("output")) {
        std::filesystem::path p(spec.at("output").get<std::string>());
        dest = p.is_absolute() || base.empty() ? p.string() : (base / p).string();
      }
      write_or_print(dest, table.str());
      if (!dest.empty()) emit(g, {{"out", dest}, {"rows", table.rows.size()}}, "wrote " + dest);
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    return run ? run() : 1;
  } catch (const DecodeError& e) {
    std::cerr << "decode failed: " << e.what() << "\n";
    return 2;
  } catch (const FramingError& e) {
    std::cerr << "decode failed: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
