#pragma once

// Thin RAII wrappers over OpenSSL's HMAC-SHA256 and SHA-256, plus hex and
// big-endian helpers shared by the key, salt and PRF code.

#include <openssl/core_names.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rstego {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

inline void append_be32(Bytes& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

inline void append_be64(Bytes& out, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

inline std::uint64_t read_be64(std::span<const std::uint8_t> in) {
  if (in.size() < 8) throw std::invalid_argument("read_be64: need 8 bytes");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v = (v << 8) | in[i];
  return v;
}

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

inline Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw std::invalid_argument("hex string has odd length");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

inline Digest sha256(std::span<const std::uint8_t> data) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("EVP_Digest failed");
  return out;
}

inline Digest sha256(std::string_view text) {
  return sha256(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline Bytes random_bytes(std::size_t n) {
  Bytes out(n);
  if (n > 0 && RAND_bytes(out.data(), static_cast<int>(n)) != 1)
    throw std::runtime_error("RAND_bytes failed");
  return out;
}

/// HMAC-SHA256 with the key schedule computed once; mac() is const and
/// safe to call concurrently.
class HmacSha256 {
 public:
  explicit HmacSha256(std::span<const std::uint8_t> key) : ctx_(make_ctx(key)) {}

  HmacSha256(const HmacSha256& other) : ctx_(EVP_MAC_CTX_dup(other.ctx_.get())) {
    if (!ctx_) throw std::runtime_error("EVP_MAC_CTX_dup failed");
  }
  HmacSha256& operator=(const HmacSha256& other) {
    if (this != &other) *this = HmacSha256(other);
    return *this;
  }
  HmacSha256(HmacSha256&&) noexcept = default;
  HmacSha256& operator=(HmacSha256&&) noexcept = default;

  Digest mac(std::span<const std::uint8_t> data) const {
    // Work on a copy of the pristine keyed context; re-initializing a used
    // context with a null key is unreliable on OpenSSL 3.0.x.
    CtxPtr work(EVP_MAC_CTX_dup(ctx_.get()));
    Digest out{};
    std::size_t len = 0;
    if (!work || EVP_MAC_update(work.get(), data.data(), data.size()) != 1 ||
        EVP_MAC_final(work.get(), out.data(), &len, out.size()) != 1)
      throw std::runtime_error("HMAC computation failed");
    return out;
  }

 private:
  struct CtxDeleter {
    void operator()(EVP_MAC_CTX* c) const { EVP_MAC_CTX_free(c); }
  };
  using CtxPtr = std::unique_ptr<EVP_MAC_CTX, CtxDeleter>;

  static CtxPtr make_ctx(std::span<const std::uint8_t> key) {
    std::unique_ptr<EVP_MAC, decltype(&EVP_MAC_free)> mac(
        EVP_MAC_fetch(nullptr, "HMAC", nullptr), &EVP_MAC_free);
    if (!mac) throw std::runtime_error("EVP_MAC_fetch(HMAC) failed");
    CtxPtr ctx(EVP_MAC_CTX_new(mac.get()));
    if (!ctx) throw std::runtime_error("EVP_MAC_CTX_new failed");
    char digest[] = "SHA256";
    OSSL_PARAM params[] = {
        OSSL_PARAM_construct_utf8_string(OSSL_MAC_PARAM_DIGEST, digest, 0),
        OSSL_PARAM_construct_end()};
    // A zero-length key is legal for HMAC but OpenSSL needs a non-null pointer.
    static const std::uint8_t kEmpty = 0;
    const std::uint8_t* k = key.empty() ? &kEmpty : key.data();
    if (EVP_MAC_init(ctx.get(), k, key.size(), params) != 1)
      throw std::runtime_error("EVP_MAC_init failed");
    return ctx;
  }

  CtxPtr ctx_;
};

inline Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data) {
  return HmacSha256(key).mac(data);
}

}  // namespace rstego
