#pragma once

// Error-correcting codes for the embedding codec (repetition and
// feed-forward convolutional with hard-decision Viterbi) and the byte/bit
// data encoders used to turn text messages into framed bit strings.

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rstego {

using Bits = std::vector<std::uint8_t>;

class FramingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EccKind { none, repetition, convolutional };

inline std::string to_string(EccKind k) {
  switch (k) {
    case EccKind::none: return "none";
    case EccKind::repetition: return "repetition";
    case EccKind::convolutional: return "convolutional";
  }
  return "none";
}

inline EccKind ecc_kind_from_string(std::string_view s) {
  if (s == "none") return EccKind::none;
  if (s == "repetition") return EccKind::repetition;
  if (s == "convolutional") return EccKind::convolutional;
  throw std::invalid_argument("unknown ECC kind '" + std::string(s) + "'");
}

struct EccSpec {
  EccKind kind = EccKind::none;
  unsigned repeat_factor = 3;
  unsigned constraint_length = 3;
  // Generator taps; bit K-1 taps the current input, bit 0 the oldest.
  std::vector<unsigned> generators{07, 05};
  bool tail_termination = true;

  static EccSpec none() { return {}; }
  static EccSpec repetition(unsigned factor) {
    EccSpec s;
    s.kind = EccKind::repetition;
    s.repeat_factor = factor;
    return s;
  }
  static EccSpec convolutional(unsigned k = 3, std::vector<unsigned> gens = {07, 05}, bool tail = true) {
    EccSpec s;
    s.kind = EccKind::convolutional;
    s.constraint_length = k;
    s.generators = std::move(gens);
    s.tail_termination = tail;
    return s;
  }

  void validate() const {
    if (kind == EccKind::repetition) {
      if (repeat_factor < 3 || repeat_factor % 2 == 0)
        throw std::invalid_argument("repeat_factor must be odd and >= 3");
    } else if (kind == EccKind::convolutional) {
      if (constraint_length < 2 || constraint_length > 16)
        throw std::invalid_argument("constraint_length must be in [2, 16]");
      if (generators.empty()) throw std::invalid_argument("at least one generator required");
      for (auto g : generators)
        if (g == 0 || g >= (1u << constraint_length))
          throw std::invalid_argument("generator must be nonzero with degree < constraint_length");
    }
  }

  nlohmann::json to_json() const {
    return {{"kind", to_string(kind)},
            {"repeat_factor", repeat_factor},
            {"constraint_length", constraint_length},
            {"generators", generators},
            {"tail_termination", tail_termination}};
  }

  static EccSpec from_json(const nlohmann::json& j) {
    EccSpec s;
    s.kind = ecc_kind_from_string(j.value("kind", std::string("none")));
    s.repeat_factor = j.value("repeat_factor", s.repeat_factor);
    s.constraint_length = j.value("constraint_length", s.constraint_length);
    if (j.contains("generators")) s.generators = j.at("generators").get<std::vector<unsigned>>();
    s.tail_termination = j.value("tail_termination", s.tail_termination);
    s.validate();
    return s;
  }

  bool operator==(const EccSpec&) const = default;
};

namespace detail {

inline void conv_outputs(const EccSpec& spec, unsigned reg, Bits& out) {
  for (auto g : spec.generators) out.push_back(static_cast<std::uint8_t>(std::popcount(reg & g) & 1));
}

inline Bits conv_encode(const EccSpec& spec, const Bits& bits) {
  const unsigned K = spec.constraint_length;
  Bits out;
  out.reserve((bits.size() + K - 1) * spec.generators.size());
  unsigned state = 0;
  auto step = [&](unsigned u) {
    unsigned reg = (u << (K - 1)) | state;
    conv_outputs(spec, reg, out);
    state = reg >> 1;
  };
  for (auto b : bits) step(b);
  if (spec.tail_termination)
    for (unsigned i = 0; i + 1 < K; ++i) step(0);
  return out;
}

// Hard-decision Viterbi. On equal path metrics the survivor with the
// lexicographically smaller input sequence wins, so the result is the
// lexicographically first nearest codeword.
inline Bits viterbi_decode(const EccSpec& spec, const Bits& coded) {
  const unsigned K = spec.constraint_length;
  const std::size_t ng = spec.generators.size();
  if (coded.size() % ng != 0)
    throw FramingError("convolutional: coded length " + std::to_string(coded.size()) +
                       " is not a multiple of " + std::to_string(ng));
  const std::size_t steps = coded.size() / ng;
  const std::size_t tail = spec.tail_termination ? K - 1 : 0;
  if (steps <= tail) throw FramingError("convolutional: coded length too short for the tail");
  const std::size_t msg_len = steps - tail;
  const std::size_t S = std::size_t{1} << (K - 1);
  constexpr auto kInf = std::numeric_limits<std::size_t>::max();

  std::vector<std::size_t> metric(S, kInf), next_metric(S);
  std::vector<Bits> path(S), next_path(S);
  metric[0] = 0;

  // Precomputed outputs per (state, input).
  std::vector<Bits> expected(2 * S);
  for (unsigned s = 0; s < S; ++s)
    for (unsigned u = 0; u < 2; ++u) conv_outputs(spec, (u << (K - 1)) | s, expected[2 * s + u]);

  auto path_less = [](const Bits& a, std::uint8_t a_last, const Bits& b) {
    // Compare a ++ [a_last] with b (same length).
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] != b[i]) return a[i] < b[i];
    return a_last < b.back();
  };

  for (std::size_t t = 0; t < steps; ++t) {
    std::fill(next_metric.begin(), next_metric.end(), kInf);
    const unsigned max_u = t < msg_len ? 1 : 0;
    for (unsigned s = 0; s < S; ++s) {
      if (metric[s] == kInf) continue;
      for (unsigned u = 0; u <= max_u; ++u) {
        unsigned ns = ((u << (K - 1)) | s) >> 1;
        const Bits& exp = expected[2 * s + u];
        std::size_t bm = 0;
        for (std::size_t g = 0; g < ng; ++g) bm += exp[g] != coded[t * ng + g];
        std::size_t m = metric[s] + bm;
        if (m < next_metric[ns] || (m == next_metric[ns] && path_less(path[s], static_cast<std::uint8_t>(u), next_path[ns]))) {
          next_metric[ns] = m;
          next_path[ns] = path[s];
          next_path[ns].push_back(static_cast<std::uint8_t>(u));
        }
      }
    }
    metric.swap(next_metric);
    path.swap(next_path);
  }

  std::size_t best = 0;
  if (!spec.tail_termination) {
    for (std::size_t s = 1; s < S; ++s) {
      if (metric[s] == kInf) continue;
      if (metric[s] < metric[best] ||
          (metric[s] == metric[best] && path[s] < path[best]))
        best = s;
    }
  }
  Bits out = path[best];
  out.resize(msg_len);
  return out;
}

}  // namespace detail

inline Bits ecc_encode(const EccSpec& spec, const Bits& bits) {
  spec.validate();
  if (bits.empty()) throw std::invalid_argument("ecc_encode: empty input");
  switch (spec.kind) {
    case EccKind::none: return bits;
    case EccKind::repetition: {
      Bits out;
      out.reserve(bits.size() * spec.repeat_factor);
      for (auto b : bits) out.insert(out.end(), spec.repeat_factor, b);
      return out;
    }
    case EccKind::convolutional: return detail::conv_encode(spec, bits);
  }
  return bits;
}

inline Bits ecc_decode(const EccSpec& spec, const Bits& coded) {
  spec.validate();
  if (coded.empty()) throw FramingError("ecc_decode: empty input");
  switch (spec.kind) {
    case EccKind::none: return coded;
    case EccKind::repetition: {
      const std::size_t f = spec.repeat_factor;
      if (coded.size() % f != 0)
        throw FramingError("repetition: coded length " + std::to_string(coded.size()) +
                           " is not a multiple of " + std::to_string(f));
      Bits out;
      for (std::size_t i = 0; i < coded.size(); i += f) {
        std::size_t ones = 0;
        for (std::size_t j = 0; j < f; ++j) ones += coded[i + j];
        out.push_back(ones * 2 > f ? 1 : 0);
      }
      return out;
    }
    case EccKind::convolutional: return detail::viterbi_decode(spec, coded);
  }
  return coded;
}

/// Coded length for a message of `n` bits.
inline std::size_t ecc_encoded_length(const EccSpec& spec, std::size_t n) {
  switch (spec.kind) {
    case EccKind::none: return n;
    case EccKind::repetition: return n * spec.repeat_factor;
    case EccKind::convolutional:
      return (n + (spec.tail_termination ? spec.constraint_length - 1 : 0)) * spec.generators.size();
  }
  return n;
}

// ---- data encoders -------------------------------------------------------

inline Bits bytes_to_bits(std::string_view bytes) {
  Bits out;
  out.reserve(bytes.size() * 8);
  for (unsigned char c : bytes)
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((c >> i) & 1));
  return out;
}

inline std::string bits_to_bytes(const Bits& bits) {
  if (bits.size() % 8 != 0) throw FramingError("bit length is not a multiple of 8");
  std::string out;
  for (std::size_t i = 0; i < bits.size(); i += 8) {
    unsigned v = 0;
    for (std::size_t j = 0; j < 8; ++j) v = (v << 1) | (bits[i + j] & 1);
    out.push_back(static_cast<char>(v));
  }
  return out;
}

inline constexpr std::size_t kLengthHeaderBits = 16;

/// Prepends the payload bit count as a 16-bit MSB-first header.
inline Bits frame_payload(const Bits& payload) {
  if (payload.size() > 0xFFFF) throw std::invalid_argument("payload longer than 65535 bits");
  Bits out;
  for (int i = 15; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((payload.size() >> i) & 1));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline Bits unframe_payload(const Bits& framed) {
  if (framed.size() < kLengthHeaderBits) throw FramingError("missing length header");
  std::size_t n = 0;
  for (std::size_t i = 0; i < kLengthHeaderBits; ++i) n = (n << 1) | (framed[i] & 1);
  if (framed.size() < kLengthHeaderBits + n)
    throw FramingError("header announces " + std::to_string(n) + " bits, only " +
                       std::to_string(framed.size() - kLengthHeaderBits) + " present");
  return Bits(framed.begin() + kLengthHeaderBits, framed.begin() + kLengthHeaderBits + static_cast<std::ptrdiff_t>(n));
}

inline Bits encode_text_message(std::string_view utf8) { return frame_payload(bytes_to_bits(utf8)); }

inline std::string decode_text_message(const Bits& framed) { return bits_to_bytes(unframe_payload(framed)); }

}  // namespace rstego
