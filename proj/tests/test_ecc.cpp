#include <gtest/gtest.h>

#include <random>

#include "rstego/ecc.hpp"

using namespace rstego;

namespace {

Bits random_bits(std::mt19937_64& rng, std::size_t n) {
  Bits b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng() & 1);
  return b;
}

std::size_t hamming(const Bits& a, const Bits& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

// Exhaustive minimum-distance decoder; ties go to the lexicographically
// first message.
Bits brute_force_nearest(const EccSpec& spec, const Bits& received, std::size_t n) {
  Bits best;
  std::size_t best_d = SIZE_MAX;
  for (std::uint64_t v = 0; v < (1ull << n); ++v) {
    Bits m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = static_cast<std::uint8_t>((v >> (n - 1 - i)) & 1);
    auto d = hamming(ecc_encode(spec, m), received);
    if (d < best_d) {
      best_d = d;
      best = m;
    }
  }
  return best;
}

std::vector<EccSpec> all_specs() {
  return {EccSpec::none(), EccSpec::repetition(3), EccSpec::repetition(5), EccSpec::convolutional(),
          EccSpec::convolutional(3, {07, 05}, false), EccSpec::convolutional(4, {017, 013})};
}

}  // namespace

TEST(Ecc, DefinitionExamples) {
  EXPECT_EQ(ecc_encode(EccSpec::repetition(3), {1, 0}), (Bits{1, 1, 1, 0, 0, 0}));
  EXPECT_EQ(ecc_encode(EccSpec::convolutional(), {1}), (Bits{1, 1, 1, 0, 1, 1}));
  EXPECT_EQ(ecc_encode(EccSpec::none(), {1, 0, 1}), (Bits{1, 0, 1}));
  EXPECT_EQ(ecc_decode(EccSpec::repetition(3), {1, 1, 0, 0, 0, 0}), (Bits{1, 0}));
}

TEST(Ecc, RepetitionBeyondRadiusFlipsOnlyThatBit) {
  auto spec = EccSpec::repetition(3);
  auto coded = ecc_encode(spec, {1, 0, 1});
  coded[3] ^= 1;
  coded[4] ^= 1;
  EXPECT_EQ(ecc_decode(spec, coded), (Bits{1, 1, 1}));
}

TEST(Ecc, RepetitionRadiusExhaustive) {
  auto spec = EccSpec::repetition(3);
  std::mt19937_64 rng(1);
  for (std::size_t blocks = 1; blocks <= 8; ++blocks) {
    auto msg = random_bits(rng, blocks);
    auto coded = ecc_encode(spec, msg);
    // One flip per block at any position, or none: 4^blocks patterns.
    std::size_t patterns = std::size_t{1} << (2 * blocks);
    for (std::size_t p = 0; p < patterns; ++p) {
      auto noisy = coded;
      for (std::size_t b = 0; b < blocks; ++b) {
        auto pos = (p >> (2 * b)) & 3;
        if (pos < 3) noisy[3 * b + pos] ^= 1;
      }
      ASSERT_EQ(ecc_decode(spec, noisy), msg);
    }
  }
}

TEST(Ecc, RoundTripAllSpecs) {
  std::mt19937_64 rng(2);
  for (auto& spec : all_specs())
    for (int t = 0; t < 10000; ++t) {
      auto b = random_bits(rng, 1 + rng() % 40);
      auto coded = ecc_encode(spec, b);
      ASSERT_EQ(coded.size(), ecc_encoded_length(spec, b.size()));
      ASSERT_EQ(ecc_decode(spec, coded), b) << spec.to_json().dump();
    }
}

TEST(Ecc, ConvolutionalSingleFlipSweep) {
  auto spec = EccSpec::convolutional();
  std::mt19937_64 rng(3);
  for (int t = 0; t < 5; ++t) {
    auto msg = random_bits(rng, 16);
    auto coded = ecc_encode(spec, msg);
    for (std::size_t i = 0; i < coded.size(); ++i) {
      auto noisy = coded;
      noisy[i] ^= 1;
      ASSERT_EQ(ecc_decode(spec, noisy), msg) << "flip " << i;
    }
  }
}

TEST(Ecc, ViterbiMatchesBruteForceNearestCodeword) {
  std::mt19937_64 rng(4);
  for (auto spec : {EccSpec::convolutional(), EccSpec::convolutional(3, {07, 05}, false),
                    EccSpec::convolutional(4, {017, 013})}) {
    for (std::size_t n = 1; n <= 12; ++n) {
      int trials = n <= 8 ? 40 : 8;
      for (int t = 0; t < trials; ++t) {
        // Arbitrary received words, not just lightly corrupted codewords.
        Bits received = (t % 2) ? random_bits(rng, ecc_encoded_length(spec, n))
                                : ecc_encode(spec, random_bits(rng, n));
        if (t % 2 == 0)
          for (int f = 0; f < 3; ++f) received[rng() % received.size()] ^= 1;
        auto v = ecc_decode(spec, received);
        auto bf = brute_force_nearest(spec, received, n);
        ASSERT_EQ(hamming(ecc_encode(spec, v), received), hamming(ecc_encode(spec, bf), received));
        ASSERT_EQ(v, bf) << "n=" << n;
      }
    }
  }
}

TEST(Ecc, LengthMismatchAndInvalidSpecs) {
  EXPECT_THROW(ecc_decode(EccSpec::repetition(3), {1, 1}), FramingError);
  EXPECT_THROW(ecc_decode(EccSpec::convolutional(), {1, 1, 1}), FramingError);
  EXPECT_THROW(ecc_decode(EccSpec::convolutional(), {1, 1, 1, 1}), FramingError);
  EXPECT_THROW(ecc_decode(EccSpec::none(), {}), FramingError);
  EXPECT_THROW(ecc_encode(EccSpec::repetition(4), {1}), std::invalid_argument);
  EXPECT_THROW(ecc_encode(EccSpec::convolutional(3, {0}), {1}), std::invalid_argument);
  EXPECT_THROW(ecc_encode(EccSpec::convolutional(3, {010}), {1}), std::invalid_argument);
  EXPECT_THROW(ecc_encode(EccSpec::none(), {}), std::invalid_argument);
}

TEST(Ecc, SpecJsonRoundTrip) {
  for (auto& spec : all_specs()) EXPECT_EQ(EccSpec::from_json(spec.to_json()), spec);
  EXPECT_THROW(EccSpec::from_json({{"kind", "turbo"}}), std::invalid_argument);
}

TEST(Framing, BitsBytesAndHeader) {
  EXPECT_EQ(bytes_to_bits("A"), (Bits{0, 1, 0, 0, 0, 0, 0, 1}));
  auto framed = encode_text_message("hi");
  ASSERT_EQ(framed.size(), 16u + 16u);
  EXPECT_EQ(Bits(framed.begin(), framed.begin() + 16), (Bits{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0}));
  EXPECT_EQ(decode_text_message(framed), "hi");
  // Trailing padding after the announced length is ignored.
  framed.insert(framed.end(), 5, 1);
  EXPECT_EQ(decode_text_message(framed), "hi");
  EXPECT_EQ(decode_text_message(encode_text_message("héllo ✓")), "héllo ✓");
  EXPECT_THROW(unframe_payload(Bits(10, 0)), FramingError);
  auto truncated = encode_text_message("hello");
  truncated.resize(30);
  EXPECT_THROW(unframe_payload(truncated), FramingError);
  EXPECT_THROW(bits_to_bytes(Bits(7, 0)), FramingError);
}

TEST(Framing, ThroughConvolutionalCode) {
  auto spec = EccSpec::convolutional();
  auto coded = ecc_encode(spec, encode_text_message("covert"));
  coded[5] ^= 1;
  coded[40] ^= 1;
  EXPECT_EQ(decode_text_message(ecc_decode(spec, coded)), "covert");
}
