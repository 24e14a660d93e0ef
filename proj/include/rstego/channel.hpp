#pragma once

// Domain types shared by both codecs: vocabulary, conversation history,
// hidden messages, key material and the serialized stego document.

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rstego/crypto.hpp"
#include "rstego/util.hpp"

namespace rstego {

using TokenId = std::uint32_t;
using Salt = std::array<std::uint8_t, 8>;

// One-byte prefixes separating the three uses of the keyed MAC. These values
// are part of the interoperable encoding and must never change.
namespace domain_tag {
inline constexpr std::uint8_t kSubkey = 0x01;
inline constexpr std::uint8_t kLabelVector = 0x02;
inline constexpr std::uint8_t kKeySelect = 0x03;
}  // namespace domain_tag

class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> tokens, std::size_t ter_index,
             std::optional<std::size_t> unk_index = std::nullopt)
      : tokens_(std::move(tokens)), ter_(ter_index), unk_(unk_index) {
    if (tokens_.empty()) throw std::invalid_argument("vocabulary must not be empty");
    if (ter_ >= tokens_.size()) throw std::invalid_argument("ter_index out of range");
    if (unk_ && (*unk_ >= tokens_.size() || *unk_ == ter_))
      throw std::invalid_argument("unk_index out of range or equal to ter_index");
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      const auto& t = tokens_[i];
      if (t.empty()) throw std::invalid_argument("empty token at line " + std::to_string(i));
      for (char c : t)
        if (std::isspace(static_cast<unsigned char>(c)))
          throw std::invalid_argument("token contains whitespace at line " + std::to_string(i));
      if (!index_.emplace(t, static_cast<TokenId>(i)).second)
        throw std::invalid_argument("duplicate token '" + t + "'");
    }
  }

  /// One token per line; the line number is the token index.
  static Vocabulary load(const std::string& path, std::size_t ter_index,
                         std::optional<std::size_t> unk_index = std::nullopt) {
    return parse(read_file(path), ter_index, unk_index);
  }

  static Vocabulary parse(std::string_view content, std::size_t ter_index,
                          std::optional<std::size_t> unk_index = std::nullopt) {
    std::vector<std::string> tokens;
    std::size_t start = 0;
    while (start < content.size()) {
      std::size_t end = content.find('\n', start);
      if (end == std::string_view::npos) end = content.size();
      std::string_view line = content.substr(start, end - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      tokens.emplace_back(line);
      start = end + 1;
    }
    return Vocabulary(std::move(tokens), ter_index, unk_index);
  }

  /// Synthetic vocabulary "t000".."t{N-2}" with the termination symbol last.
  static Vocabulary synthetic(std::size_t n) {
    if (n < 2) throw std::invalid_argument("synthetic vocabulary needs at least 2 tokens");
    std::vector<std::string> tokens;
    tokens.reserve(n);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      std::string s = std::to_string(i);
      tokens.push_back("t" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s);
    }
    tokens.emplace_back("<ter>");
    return Vocabulary(std::move(tokens), n - 1);
  }

  /// Whitespace tokens in order of first appearance, followed by "<unk>" and
  /// "<ter>".
  static Vocabulary from_corpus(std::string_view corpus) {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, bool> seen;
    for (auto& w : split_whitespace(corpus))
      if (w != "<unk>" && w != "<ter>" && seen.emplace(w, true).second) tokens.push_back(w);
    tokens.emplace_back("<unk>");
    tokens.emplace_back("<ter>");
    std::size_t n = tokens.size();
    return Vocabulary(std::move(tokens), n - 1, n - 2);
  }

  std::size_t size() const { return tokens_.size(); }
  std::size_t ter_index() const { return ter_; }
  std::optional<std::size_t> unk_index() const { return unk_; }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<TokenId> index_of(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Whitespace tokenization; out-of-vocabulary words map to the unknown
  /// token, or throw when the vocabulary has none.
  std::vector<TokenId> tokenize(std::string_view text) const {
    std::vector<TokenId> out;
    for (auto& w : split_whitespace(text)) {
      if (auto id = index_of(w)) {
        out.push_back(*id);
      } else if (unk_) {
        out.push_back(static_cast<TokenId>(*unk_));
      } else {
        throw std::invalid_argument("out-of-vocabulary token '" + w + "'");
      }
    }
    return out;
  }

  std::string render(std::span<const TokenId> ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out.push_back(' ');
      out += token(ids[i]);
    }
    return out;
  }

  std::string serialize() const {
    std::string out;
    for (auto& t : tokens_) {
      out += t;
      out.push_back('\n');
    }
    return out;
  }

  bool operator==(const Vocabulary& o) const {
    return tokens_ == o.tokens_ && ter_ == o.ter_ && unk_ == o.unk_;
  }

 private:
  std::vector<std::string> tokens_;
  std::size_t ter_;
  std::optional<std::size_t> unk_;
  std::unordered_map<std::string, TokenId> index_;
};

struct ChannelHistory {
  std::vector<std::string> prior_messages;
  std::string prompt;

  /// Text a language model is conditioned on: the prompt followed by every
  /// prior message, blank-line separated.
  std::string context_text() const {
    std::string out = prompt;
    for (auto& m : prior_messages) {
      if (!out.empty()) out += "\n\n";
      out += m;
    }
    return out;
  }

  ChannelHistory extended(std::string message) const {
    ChannelHistory h = *this;
    h.prior_messages.push_back(std::move(message));
    return h;
  }

  nlohmann::json to_json() const {
    return {{"prompt", prompt}, {"prior_messages", prior_messages}};
  }

  static ChannelHistory from_json(const nlohmann::json& j) {
    ChannelHistory h;
    h.prompt = j.value("prompt", std::string{});
    if (j.contains("prior_messages"))
      h.prior_messages = j.at("prior_messages").get<std::vector<std::string>>();
    return h;
  }

  std::string digest() const { return to_hex(sha256(to_json().dump())); }

  bool operator==(const ChannelHistory&) const = default;
};

/// Salt = number of prior messages as an 8-byte big-endian integer.
inline Salt derive_salt(const ChannelHistory& history) {
  Salt s{};
  std::uint64_t count = history.prior_messages.size();
  for (int i = 7; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(count & 0xFF);
    count >>= 8;
  }
  return s;
}

struct HiddenMessage {
  std::vector<std::uint8_t> bits;

  HiddenMessage() = default;
  explicit HiddenMessage(std::vector<std::uint8_t> b) : bits(std::move(b)) { validate(); }

  static HiddenMessage from_string(std::string_view s) {
    std::vector<std::uint8_t> b;
    for (char c : s) {
      if (c != '0' && c != '1') throw std::invalid_argument("message bits must be '0' or '1'");
      b.push_back(static_cast<std::uint8_t>(c - '0'));
    }
    return HiddenMessage(std::move(b));
  }

  void validate() const {
    if (bits.empty()) throw std::invalid_argument("message must have at least one bit");
    for (auto b : bits)
      if (b > 1) throw std::invalid_argument("message bits must be 0 or 1");
  }

  std::size_t size() const { return bits.size(); }
  std::string to_string() const {
    std::string s;
    for (auto b : bits) s.push_back(static_cast<char>('0' + b));
    return s;
  }
  bool operator==(const HiddenMessage&) const = default;
};

/// subkey_i = HMAC(master, 0x01 || be32(i)) for i = 1..count.
inline std::vector<Bytes> derive_subkeys(std::span<const std::uint8_t> master_key, std::size_t count) {
  if (count == 0) throw std::invalid_argument("derive_subkeys: count must be >= 1");
  HmacSha256 mac(master_key);
  std::vector<Bytes> keys;
  keys.reserve(count);
  Bytes input;
  for (std::size_t i = 1; i <= count; ++i) {
    input.clear();
    input.push_back(domain_tag::kSubkey);
    append_be32(input, static_cast<std::uint32_t>(i));
    auto d = mac.mac(input);
    keys.emplace_back(d.begin(), d.end());
  }
  return keys;
}

struct WatermarkKeySet {
  Bytes master_key;
  std::vector<Bytes> subkeys;

  static WatermarkKeySet derive(Bytes master, std::size_t message_bits) {
    WatermarkKeySet ks;
    ks.subkeys = derive_subkeys(master, message_bits);
    ks.master_key = std::move(master);
    return ks;
  }

  /// Parses a key file: lowercase hex of exactly security_bits/8 bytes.
  static Bytes parse_key_file(std::string_view content, std::size_t security_bits = 256) {
    std::string hex = trim(content);
    for (char c : hex)
      if (c >= 'A' && c <= 'F') throw std::invalid_argument("key file must be lowercase hex");
    Bytes key = from_hex(hex);
    if (key.size() != security_bits / 8)
      throw std::invalid_argument("key must be " + std::to_string(security_bits / 8) +
                                  " bytes, got " + std::to_string(key.size()));
    return key;
  }

  nlohmann::json to_json() const {
    nlohmann::json subs = nlohmann::json::array();
    for (auto& k : subkeys) subs.push_back(to_hex(k));
    return {{"master_key", to_hex(master_key)}, {"subkeys", subs}};
  }

  static WatermarkKeySet from_json(const nlohmann::json& j) {
    WatermarkKeySet ks;
    ks.master_key = from_hex(j.at("master_key").get<std::string>());
    for (auto& s : j.at("subkeys")) ks.subkeys.push_back(from_hex(s.get<std::string>()));
    return ks;
  }

  bool operator==(const WatermarkKeySet&) const = default;
};

/// Raised when a stegotext cannot be decoded (as opposed to bad arguments).
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scheme { watermark, embedding };

inline std::string to_string(Scheme s) { return s == Scheme::watermark ? "watermark" : "embedding"; }

inline Scheme scheme_from_string(std::string_view s) {
  if (s == "watermark") return Scheme::watermark;
  if (s == "embedding") return Scheme::embedding;
  throw std::invalid_argument("unknown scheme '" + std::string(s) + "'");
}

struct StegoDocument {
  Scheme scheme = Scheme::watermark;
  std::vector<TokenId> token_indices;
  std::string text;
  nlohmann::json params = nlohmann::json::object();
  std::string history_digest;

  nlohmann::json to_json() const {
    return {{"scheme", to_string(scheme)},
            {"token_indices", token_indices},
            {"text", text},
            {"params", params},
            {"history_digest", history_digest}};
  }

  static StegoDocument from_json(const nlohmann::json& j) {
    StegoDocument d;
    d.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    d.token_indices = j.value("token_indices", std::vector<TokenId>{});
    d.text = j.value("text", std::string{});
    d.params = j.value("params", nlohmann::json::object());
    d.history_digest = j.value("history_digest", std::string{});
    return d;
  }

  std::string serialize() const { return to_json().dump(2); }
  static StegoDocument parse(std::string_view s) { return from_json(nlohmann::json::parse(s)); }

  bool operator==(const StegoDocument&) const = default;
};

}  // namespace rstego
