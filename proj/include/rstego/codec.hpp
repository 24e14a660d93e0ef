#pragma once

// End-to-end pipelines: payload bits -> ECC -> codec -> stego document, and
// back.

#include <cstdint>
#include <stdexcept>

#include "rstego/channel.hpp"
#include "rstego/ecc.hpp"
#include "rstego/embed_scheme.hpp"
#include "rstego/watermark.hpp"

namespace rstego {

inline StegoDocument watermark_encode_payload(const Bytes& master_key, const Bits& payload, const EccSpec& ecc,
                                              const ChannelHistory& history, const LanguageModel& model,
                                              WatermarkParams params, std::uint64_t seed) {
  Bits coded = ecc_encode(ecc, payload);
  params.n_bits = coded.size();
  auto keys = WatermarkKeySet::derive(master_key, coded.size());
  auto doc = encode(keys, HiddenMessage(coded), history, model, params, seed);
  doc.params["message_bits"] = payload.size();
  doc.params["ecc"] = ecc.to_json();
  return doc;
}

struct PayloadDecode {
  Bits payload;
  Bits coded;
  DetectionReport report;
};

inline PayloadDecode watermark_decode_payload(const Bytes& master_key, std::size_t payload_bits,
                                              const EccSpec& ecc, const ChannelHistory& history,
                                              const StegoDocument& doc, const Vocabulary& vocab,
                                              WatermarkParams params) {
  if (payload_bits == 0) throw std::invalid_argument("payload length must be >= 1");
  params.n_bits = ecc_encoded_length(ecc, payload_bits);
  auto keys = WatermarkKeySet::derive(master_key, params.n_bits);
  auto res = decode(keys, history, doc, vocab, params);
  return {ecc_decode(ecc, res.message.bits), res.message.bits, std::move(res.report)};
}

inline EmbedEncodeResult embedding_encode_payload(const Bits& payload, const EccSpec& ecc, const LanguageModel& model,
                                                  const Embedder& embedder, const LshModel& lsh,
                                                  const ChannelHistory& history, const EmbedParams& params,
                                                  std::uint64_t seed) {
  auto res = encode_embedded(ecc_encode(ecc, payload), model, embedder, lsh, history, params, seed);
  res.document.params["message_bits"] = payload.size();
  res.document.params["ecc"] = ecc.to_json();
  return res;
}

inline Bits embedding_decode_payload(const std::string& text, std::size_t payload_bits, const EccSpec& ecc,
                                     const Embedder& embedder, const LshModel& lsh) {
  if (payload_bits == 0) throw std::invalid_argument("payload length must be >= 1");
  return ecc_decode(ecc, decode_embedded(text, embedder, lsh, ecc_encoded_length(ecc, payload_bits)));
}

}  // namespace rstego
