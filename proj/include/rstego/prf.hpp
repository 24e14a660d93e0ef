#pragma once

// Keyed PRF built from HMAC-SHA256 in counter mode.
//
// Bit-exact layout (all integers big-endian):
//   label block b : HMAC(k, 0x02 || salt[8] || u32(c) || u32(t_1) .. u32(t_c) || u32(b))
//                   label bit q = bit (7 - q%8) of byte (q%256)/8 of block q/256
//   key selector  : u64 prefix of HMAC(k, 0x03 || u64(j)) mod L
//   subkey i      : HMAC(master, 0x01 || u32(i))          (see channel.hpp)

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "rstego/channel.hpp"
#include "rstego/crypto.hpp"

namespace rstego {

using LabelVector = std::vector<std::uint8_t>;

struct PrfContext {
  Salt salt{};
  std::vector<TokenId> cgram;  // oldest first; size is the window c
};

/// The c tokens preceding a position: the tail of prompt ++ generated,
/// left-padded with `pad` when fewer than c exist.
inline std::vector<TokenId> make_cgram(std::span<const TokenId> prompt_tokens,
                                       std::span<const TokenId> generated, std::size_t c,
                                       TokenId pad) {
  std::vector<TokenId> out(c, pad);
  std::size_t from_gen = std::min(c, generated.size());
  std::size_t from_prompt = std::min(c - from_gen, prompt_tokens.size());
  std::size_t pos = c - from_gen - from_prompt;
  for (std::size_t i = prompt_tokens.size() - from_prompt; i < prompt_tokens.size(); ++i)
    out[pos++] = prompt_tokens[i];
  for (std::size_t i = generated.size() - from_gen; i < generated.size(); ++i) out[pos++] = generated[i];
  return out;
}

namespace detail {

inline Bytes label_block_input(const PrfContext& ctx, std::uint32_t block) {
  Bytes in;
  in.reserve(1 + 8 + 4 * (ctx.cgram.size() + 2));
  in.push_back(domain_tag::kLabelVector);
  in.insert(in.end(), ctx.salt.begin(), ctx.salt.end());
  append_be32(in, static_cast<std::uint32_t>(ctx.cgram.size()));
  for (auto t : ctx.cgram) append_be32(in, t);
  append_be32(in, block);
  return in;
}

inline constexpr std::size_t kBitsPerBlock = 256;

}  // namespace detail

inline LabelVector prf_label_vector(const HmacSha256& key, const PrfContext& ctx, std::size_t n) {
  if (n == 0) throw std::invalid_argument("prf_label_vector: N must be >= 1");
  LabelVector out(n);
  std::size_t blocks = (n + detail::kBitsPerBlock - 1) / detail::kBitsPerBlock;
  for (std::size_t b = 0; b < blocks; ++b) {
    auto d = key.mac(detail::label_block_input(ctx, static_cast<std::uint32_t>(b)));
    std::size_t base = b * detail::kBitsPerBlock;
    for (std::size_t q = 0; q < detail::kBitsPerBlock && base + q < n; ++q)
      out[base + q] = (d[q / 8] >> (7 - q % 8)) & 1u;
  }
  return out;
}

inline LabelVector prf_label_vector(std::span<const std::uint8_t> key, const PrfContext& ctx,
                                    std::size_t n) {
  return prf_label_vector(HmacSha256(key), ctx, n);
}

/// Single position of the label vector; evaluates only the block holding q.
inline std::uint8_t prf_label_bit(const HmacSha256& key, const PrfContext& ctx, std::size_t q) {
  auto d = key.mac(
      detail::label_block_input(ctx, static_cast<std::uint32_t>(q / detail::kBitsPerBlock)));
  std::size_t r = q % detail::kBitsPerBlock;
  return (d[r / 8] >> (7 - r % 8)) & 1u;
}

/// Index in [0, list_size) for token position j. Plain 64-bit modulo
/// reduction; the bias is below 2^-44 for list sizes up to 2^20.
inline std::size_t prf_select_index(const HmacSha256& key, std::uint64_t position,
                                    std::size_t list_size) {
  if (list_size == 0) throw std::invalid_argument("prf_select_index: list size must be >= 1");
  Bytes in;
  in.push_back(domain_tag::kKeySelect);
  append_be64(in, position);
  auto d = key.mac(in);
  return static_cast<std::size_t>(read_be64(d) % list_size);
}

inline std::size_t prf_select_index(std::span<const std::uint8_t> key, std::uint64_t position,
                                    std::size_t list_size) {
  return prf_select_index(HmacSha256(key), position, list_size);
}

}  // namespace rstego
