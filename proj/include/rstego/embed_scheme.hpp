#pragma once

// Embedding codec: the message is cut into hash_bits-wide chunks and each
// chunk becomes one message of covertext, rejection-sampled until the LSH of
// its embedding equals the chunk. Chunks are separated by a blank line.

#include <algorithm>
#include <cstdint>
#include <regex>
#include <stdexcept>
#include <string>
#include <vector>

#include "rstego/channel.hpp"
#include "rstego/ecc.hpp"
#include "rstego/embedding.hpp"
#include "rstego/langmodel.hpp"
#include "rstego/lsh.hpp"

namespace rstego {

inline constexpr std::string_view kChunkDelimiter = "\n\n";

struct EmbedParams {
  std::size_t hash_bits = 1;
  std::size_t max_attempts = 64;
  std::size_t chunk_tokens = 40;  // cap on tokens per candidate
  std::size_t n_bits = 0;         // message length; filled in by encode
  unsigned workers = 1;           // concurrent attempts; needs a stateless hash and thread-safe model

  void validate() const {
    if (hash_bits < 1) throw std::invalid_argument("hash_bits must be >= 1");
    if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
    if (chunk_tokens < 1) throw std::invalid_argument("chunk_tokens must be >= 1");
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"hash_bits", hash_bits}, {"max_attempts", max_attempts},
            {"chunk_tokens", chunk_tokens}, {"n_bits", n_bits}};
  }

  static EmbedParams from_json(const nlohmann::json& j) {
    EmbedParams p;
    p.hash_bits = j.value("hash_bits", p.hash_bits);
    p.max_attempts = j.value("max_attempts", p.max_attempts);
    p.chunk_tokens = j.value("chunk_tokens", p.chunk_tokens);
    p.n_bits = j.value("n_bits", p.n_bits);
    return p;
  }
};

struct ChunkPlan {
  std::vector<Bits> chunks;
  std::size_t n_bits = 0;
  std::size_t hash_bits = 0;
};

/// ceil(n / hash_bits) chunks; the last one is zero-padded.
inline ChunkPlan make_chunk_plan(const Bits& message, std::size_t hash_bits) {
  if (hash_bits == 0) throw std::invalid_argument("hash_bits must be >= 1");
  if (message.empty()) throw std::invalid_argument("message must not be empty");
  ChunkPlan plan;
  plan.n_bits = message.size();
  plan.hash_bits = hash_bits;
  for (std::size_t i = 0; i < message.size(); i += hash_bits) {
    Bits chunk(hash_bits, 0);
    for (std::size_t j = 0; j < hash_bits && i + j < message.size(); ++j) chunk[j] = message[i + j];
    plan.chunks.push_back(std::move(chunk));
  }
  return plan;
}

/// Splits on blank lines; surrounding whitespace is trimmed and empty
/// pieces dropped.
inline std::vector<std::string> split_chunks(const std::string& text) {
  static const std::regex kBlankLine(R"(\n[ \t\r]*\n)");
  std::vector<std::string> out;
  std::sregex_token_iterator it(text.begin(), text.end(), kBlankLine, -1), end;
  for (; it != end; ++it) {
    auto piece = trim(it->str());
    if (!piece.empty()) out.push_back(std::move(piece));
  }
  return out;
}

inline std::string join_chunks(const std::vector<std::string>& chunks) {
  return join(chunks, kChunkDelimiter);
}

struct EmbedEncodeResult {
  StegoDocument document;
  std::vector<std::size_t> attempts;  // per chunk
  std::vector<std::uint8_t> matched;  // per chunk; 0 = emitted after exhausting max_attempts

  std::size_t misses() const {
    std::size_t m = 0;
    for (auto x : matched) m += x == 0;
    return m;
  }
  double mean_attempts() const {
    if (attempts.empty()) return 0.0;
    double s = 0.0;
    for (auto a : attempts) s += static_cast<double>(a);
    return s / static_cast<double>(attempts.size());
  }
};

/// Rejection-samples one accepted candidate per chunk. A chunk that never
/// matches within max_attempts keeps its last candidate and is recorded as
/// a miss, leaving the error to the ECC layer. Each accepted chunk is
/// appended to the history before the next one is generated.
inline EmbedEncodeResult encode_embedded(const Bits& message, const LanguageModel& model,
                                         const Embedder& embedder, const LshModel& lsh,
                                         const ChannelHistory& history, EmbedParams params,
                                         std::uint64_t seed) {
  params.validate();
  if (lsh.bits() != params.hash_bits)
    throw std::invalid_argument("LSH output width differs from hash_bits");
  auto plan = make_chunk_plan(message, params.hash_bits);
  params.n_bits = message.size();

  EmbedEncodeResult res;
  ChannelHistory h = history;
  std::vector<std::string> texts;
  const auto& vocab = model.vocabulary();
  for (std::size_t ci = 0; ci < plan.chunks.size(); ++ci) {
    const std::uint64_t chunk_seed = derive_seed(seed, ci);
    const std::string prompt = h.context_text();
    std::string accepted;
    std::size_t attempt = 0;
    bool ok = false;
    // Attempts run in batches of `workers`; the lowest matching index wins, so
    // the outcome equals the sequential loop.
    while (attempt < params.max_attempts && !ok) {
      const std::size_t batch = std::min<std::size_t>(params.workers, params.max_attempts - attempt);
      struct Candidate {
        std::string text;
        bool match = false;
      };
      auto cands = parallel_map<Candidate>(
          batch,
          [&](std::size_t i) {
            auto tokens = sample_response(model, prompt, params.chunk_tokens,
                                          derive_seed(chunk_seed, attempt + i), 1);
            Candidate c{strip_ter_and_render(vocab, std::move(tokens))};
            c.match = lsh.hash(embed_text(embedder, c.text)) == plan.chunks[ci];
            return c;
          },
          params.workers);
      for (std::size_t i = 0; i < batch; ++i) {
        ++attempt;
        accepted = std::move(cands[i].text);
        if (cands[i].match) {
          ok = true;
          break;
        }
      }
    }
    res.attempts.push_back(attempt);
    res.matched.push_back(ok ? 1 : 0);
    texts.push_back(accepted);
    h = h.extended(accepted);
  }

  res.document.scheme = Scheme::embedding;
  res.document.text = join_chunks(texts);
  res.document.params = params.to_json();
  res.document.history_digest = history.digest();
  return res;
}

/// Hashes of the first ceil(n/hash_bits) chunks, concatenated and truncated
/// to n bits.
inline Bits decode_embedded(const std::string& text, const Embedder& embedder, const LshModel& lsh,
                            std::size_t n_bits) {
  if (n_bits == 0) throw std::invalid_argument("n_bits must be >= 1");
  const std::size_t h = lsh.bits();
  const std::size_t needed = (n_bits + h - 1) / h;
  auto chunks = split_chunks(text);
  if (chunks.size() < needed)
    throw DecodeError("expected " + std::to_string(needed) + " chunks, found " + std::to_string(chunks.size()));
  Bits out;
  for (std::size_t i = 0; i < needed; ++i) {
    auto bits = lsh.hash(embed_text(embedder, chunks[i]));
    out.insert(out.end(), bits.begin(), bits.end());
  }
  out.resize(n_bits);
  return out;
}

inline Bits decode_embedded(const StegoDocument& doc, const Embedder& embedder, const LshModel& lsh) {
  auto params = EmbedParams::from_json(doc.params);
  return decode_embedded(doc.text, embedder, lsh, params.n_bits);
}

}  // namespace rstego
