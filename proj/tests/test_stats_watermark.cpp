#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rstego/watermark.hpp"

using namespace rstego;

namespace {

// Independent Φ: Maclaurin series of erf in long double, enough terms for
// |x| <= 6.
long double series_erf(long double x) {
  long double sum = 0, term = x;
  for (int n = 0; n < 400; ++n) {
    sum += term / (2 * n + 1);
    term *= -x * x / (n + 1);
  }
  return 2 / std::sqrt(3.14159265358979323846264338327950288L) * sum;
}

double oracle_quantile(double p) {
  long double lo = -6, hi = 6;
  for (int i = 0; i < 200; ++i) {
    long double mid = (lo + hi) / 2;
    if (0.5L * (1 + series_erf(mid / std::sqrt(2.0L))) < p)
      lo = mid;
    else
      hi = mid;
  }
  return static_cast<double>((lo + hi) / 2);
}

SyntheticModel flat_channel(std::uint64_t seed = 11) {
  return SyntheticModel(Vocabulary::synthetic(64), seed, std::log2(64.0));
}

TokenDistribution random_dist(std::mt19937_64& rng, std::size_t n, double spike) {
  TokenDistribution d;
  std::exponential_distribution<double> e(1.0);
  d.probs.resize(n);
  double s = 0;
  for (auto& p : d.probs) s += (p = e(rng));
  for (auto& p : d.probs) p /= s;
  if (spike > 0) {
    // Make a few entries large enough to fall into the eligible band.
    for (std::size_t i = 0; i < std::min<std::size_t>(3, n); ++i) d.probs[i] += spike;
    s = 0;
    for (auto p : d.probs) s += p;
    for (auto& p : d.probs) p /= s;
  }
  return d;
}

}  // namespace

TEST(Stats, InverseNormalAgainstBisectionOracle) {
  EXPECT_NEAR(inverse_normal_cdf(0.5), 0.0, 1e-12);
  EXPECT_NEAR(inverse_normal_cdf(0.975), 1.959964, 1e-6);
  EXPECT_NEAR(inverse_normal_cdf(0.95), 1.644854, 1e-6);
  for (double p : {1e-6, 0.001, 0.02, 0.024, 0.03, 0.2, 0.5, 0.7, 0.95, 0.976, 0.9833333, 0.999, 1 - 1e-6}) {
    EXPECT_NEAR(inverse_normal_cdf(p), oracle_quantile(p), 1e-8) << p;
    EXPECT_LT(std::abs(normal_cdf(inverse_normal_cdf(p)) - p), 1e-9) << p;
  }
  EXPECT_THROW(inverse_normal_cdf(0.0), std::invalid_argument);
  EXPECT_THROW(inverse_normal_cdf(1.0), std::invalid_argument);
}

TEST(Stats, PwFormula) {
  EXPECT_NEAR(p_w(0.1), 2.2 / 4.1, 1e-12);
  EXPECT_NEAR(p_w(0.1), 0.536585, 1e-6);
  EXPECT_DOUBLE_EQ(p_w(0.0), 0.5);
  EXPECT_NEAR(p_w(0.5), 3.0 / 4.5, 1e-12);
  EXPECT_GT(p_w(1e-6), 0.5);
  EXPECT_THROW(p_w(1.0), std::invalid_argument);
  EXPECT_THROW(p_w(-0.1), std::invalid_argument);
}

TEST(Stats, RequiredLength) {
  auto t = required_length(3, 0.1, 0.05);
  EXPECT_GE(t, 7000u);
  EXPECT_LE(t, 8500u);
  EXPECT_EQ(required_length(1, 0.5, 0.05), 25u);
  EXPECT_EQ(required_length(1, 0.5, 0.05, 2.0), 50u);
  EXPECT_GT(required_length(3, 0.1, 0.01), required_length(3, 0.1, 0.05));
  EXPECT_THROW(required_length(0, 0.1, 0.05), std::invalid_argument);
  EXPECT_THROW(required_length(3, 0.0, 0.05), std::invalid_argument);
  EXPECT_THROW(required_length(3, 0.1, 1.0), std::invalid_argument);
}

TEST(Perturb, HandEvaluatedExample) {
  TokenDistribution d{{0.25, 0.25, 0.25, 0.25}};
  auto out = perturb(d, {1, 0, 1, 0}, 0.1);
  std::vector<double> want{0.35, 0.15, 0.35, 0.15};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.probs[i], want[i], 1e-12);
}

TEST(Perturb, EmptyEligibleSetIsIdentity) {
  TokenDistribution d{{0.9, 0.05, 0.03, 0.02}};
  for (LabelVector r : {LabelVector{1, 0, 1, 0}, LabelVector{0, 1, 1, 1}, LabelVector{1, 1, 1, 1}})
    EXPECT_EQ(perturb(d, r, 0.2).probs, d.probs);
}

TEST(Perturb, AllOnesIsIdentity) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    auto d = random_dist(rng, 8, 0.3);
    auto out = perturb(d, LabelVector(8, 1), 0.1);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(out.probs[i], d.probs[i], 1e-15);
  }
}

TEST(Perturb, BoostedGainAndSuppressedLose) {
  TokenDistribution d{{0.4, 0.3, 0.2, 0.1}};
  LabelVector r{0, 1, 0, 0};
  auto out = perturb(d, r, 0.05);
  EXPECT_GT(out.probs[1], d.probs[1]);
  EXPECT_LT(out.probs[0], d.probs[0]);
  EXPECT_LT(out.probs[2], d.probs[2]);
  EXPECT_LT(out.probs[3], d.probs[3]);  // 0.1 sits on the band edge 2δ
}

TEST(Perturb, NormalizationProperty) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ud(0.01, 0.45);
  for (int t = 0; t < 10000; ++t) {
    std::size_t n = 2 + rng() % 30;
    auto d = random_dist(rng, n, (t % 3) ? 0.4 : 0.0);
    LabelVector r(n);
    int shape = t % 4;
    for (auto& b : r) b = shape == 0 ? 0 : shape == 1 ? 1 : static_cast<std::uint8_t>(rng() & 1);
    double delta = ud(rng);
    for (auto mode : {PerturbMode::token, PerturbMode::label_mass}) {
      auto out = apply_perturbation(mode, d, r, delta);
      double s = 0;
      for (double p : out.probs) {
        ASSERT_GE(p, 0.0);
        s += p;
      }
      ASSERT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Perturb, LabelMassShiftsClassByDelta) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 200; ++t) {
    auto d = random_dist(rng, 64, 0.0);
    LabelVector r(64);
    for (auto& b : r) b = static_cast<std::uint8_t>(rng() & 1);
    double w1 = 0;
    for (std::size_t i = 0; i < 64; ++i) w1 += r[i] ? d.probs[i] : 0.0;
    auto out = perturb_label_mass(d, r, 0.2);
    double w1_after = 0;
    for (std::size_t i = 0; i < 64; ++i) w1_after += r[i] ? out.probs[i] : 0.0;
    if (w1 >= 0.4 && w1 <= 0.6) {
      EXPECT_NEAR(w1_after, w1 + 0.2, 1e-12);
    } else {
      EXPECT_NEAR(w1_after, w1, 1e-12);
    }
  }
  EXPECT_THROW(perturb_label_mass(TokenDistribution{{0.5, 0.5}}, {1}, 0.1), std::invalid_argument);
}

TEST(Watermark, AllZeroMessageEqualsPlainSampling) {
  auto model = flat_channel();
  WatermarkParams p;
  p.n_bits = 2;
  p.T = 300;
  auto keys = WatermarkKeySet::derive(Bytes(32, 1), 2);
  ChannelHistory h{{}, "hello"};
  auto doc = encode(keys, HiddenMessage::from_string("00"), h, model, p, 77);
  EXPECT_EQ(doc.token_indices, sample_response(model, h.context_text(), 300, 77, 300));
  EXPECT_EQ(decode(keys, h, doc, model.vocabulary(), p).message.to_string().size(), 2u);
}

TEST(Watermark, DeterministicAndExactLength) {
  auto model = flat_channel();
  WatermarkParams p;
  p.n_bits = 3;
  p.T = 250;
  auto keys = WatermarkKeySet::derive(Bytes(32, 2), 3);
  ChannelHistory h{{"earlier"}, "prompt"};
  auto a = encode(keys, HiddenMessage::from_string("101"), h, model, p, 5);
  auto b = encode(keys, HiddenMessage::from_string("101"), h, model, p, 5);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.token_indices.size(), 250u);
  for (auto t : a.token_indices) EXPECT_NE(t, model.vocabulary().ter_index());
  EXPECT_EQ(a.params.at("T").get<std::size_t>(), 250u);
}

TEST(Watermark, SingleBitRecoveryRate) {
  auto model = flat_channel();
  WatermarkParams p;
  p.n_bits = 1;
  p.T = required_length(1, 0.2, 0.05);
  int ok = 0;
  for (int t = 0; t < 100; ++t) {
    Bytes master(32);
    std::mt19937_64 rng(1000 + t);
    for (auto& b : master) b = static_cast<std::uint8_t>(rng());
    auto keys = WatermarkKeySet::derive(master, 1);
    ChannelHistory h{{}, "trial " + std::to_string(t)};
    auto doc = encode(keys, HiddenMessage::from_string("1"), h, model, p, static_cast<std::uint64_t>(t));
    ok += decode(keys, h, doc, model.vocabulary(), p).message.bits[0] == 1;
  }
  EXPECT_GE(ok, 95);
}

TEST(Watermark, EncoderDecoderContextsAgree) {
  auto model = flat_channel();
  WatermarkParams p;
  p.n_bits = 2;
  p.T = 120;
  auto keys = WatermarkKeySet::derive(Bytes(32, 3), 2);
  ChannelHistory h{{"m1", "m2"}, "prompt words here"};
  std::map<std::size_t, std::pair<PrfContext, LabelVector>> enc;
  auto doc = encode(keys, HiddenMessage::from_string("11"), h, model, p, 9, [&](const EncodeStep& s) {
    if (s.key_index) enc[s.position] = {s.context, s.labels};
  });
  std::size_t checked = 0;
  decode(keys, h, doc, model.vocabulary(), p, [&](std::size_t pos, const PrfContext& ctx) {
    auto it = enc.find(pos);
    ASSERT_NE(it, enc.end());
    EXPECT_EQ(ctx.salt, it->second.first.salt);
    EXPECT_EQ(ctx.cgram, it->second.first.cgram);
    ++checked;
  });
  EXPECT_EQ(checked, 120u - p.c);
  // The selected key's labels recomputed from the decoder context match.
  for (auto& [pos, v] : enc) {
    if (pos <= p.c) continue;
    bool match = prf_label_vector(keys.subkeys[0], v.first, 64) == v.second ||
                 prf_label_vector(keys.subkeys[1], v.first, 64) == v.second;
    EXPECT_TRUE(match) << pos;
  }
}

TEST(Watermark, ShortAndEmptyStegotext) {
  auto model = flat_channel();
  WatermarkParams p;
  p.n_bits = 2;
  auto keys = WatermarkKeySet::derive(Bytes(32, 4), 2);
  StegoDocument doc;
  doc.token_indices = {1, 2, 3};  // c = 3: nothing scoreable
  auto res = decode(keys, {}, doc, model.vocabulary(), p);
  EXPECT_EQ(res.report.t_counted, 0u);
  EXPECT_EQ(res.message.to_string(), "00");

  StegoDocument empty;
  EXPECT_THROW(decode(keys, {}, empty, model.vocabulary(), p), DecodeError);

  StegoDocument wrong;
  wrong.token_indices = {1, 2, 3, 4, 5};
  wrong.params = {{"vocab_size", 32}};
  EXPECT_THROW(decode(keys, {}, wrong, model.vocabulary(), p), std::invalid_argument);
}

TEST(Watermark, ReportInvariants) {
  auto model = flat_channel();
  WatermarkParams p;
  p.n_bits = 3;
  p.T = 400;
  auto keys = WatermarkKeySet::derive(Bytes(32, 5), 3);
  auto doc = encode(keys, HiddenMessage::from_string("110"), {}, model, p, 1);
  auto rep = decode(keys, {}, doc, model.vocabulary(), p).report;
  double t = static_cast<double>(rep.t_counted);
  EXPECT_EQ(rep.t_counted, 400u - 3);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(rep.fractions[i], rep.counters[i] / t, 1e-12);
    EXPECT_NEAR(rep.z_scores[i], 2 * std::sqrt(t) * (rep.fractions[i] - 0.5), 1e-9);
    EXPECT_EQ(rep.decisions[i], rep.z_scores[i] > rep.threshold ? 1 : 0);
  }
  EXPECT_NEAR(rep.count_threshold, t / 2 + rep.threshold * std::sqrt(t) / 2, 1e-9);
}

TEST(Watermark, MeanShiftLawAndKeyScaling) {
  auto model = flat_channel();
  const double delta = 0.2;
  for (std::size_t k : {1u, 3u}) {
    WatermarkParams p;
    p.delta = delta;
    p.n_bits = k;
    p.T = 600;
    double x_sum = 0, mass_sum = 0;
    std::size_t mass_n = 0;
    std::vector<double> xs;
    const int trials = 40;
    for (int t = 0; t < trials; ++t) {
      auto keys = WatermarkKeySet::derive(Bytes(32, static_cast<std::uint8_t>(t + 10)), k);
      auto doc = encode(keys, HiddenMessage(std::vector<std::uint8_t>(k, 1)), {}, model, p,
                        static_cast<std::uint64_t>(t), [&](const EncodeStep& s) {
                          if (s.position <= p.c) return;
                          double m = 0;
                          for (std::size_t i = 0; i < s.labels.size(); ++i) m += s.labels[i] ? s.perturbed.probs[i] : 0;
                          mass_sum += m;
                          ++mass_n;
                        });
      auto rep = decode(keys, {}, doc, model.vocabulary(), p).report;
      for (double x : rep.fractions) {
        x_sum += x;
        xs.push_back(x);
      }
    }
    double mean_x = x_sum / static_cast<double>(xs.size());
    double q = mass_sum / static_cast<double>(mass_n);
    double predicted = 0.5 + (q - 0.5) / static_cast<double>(k);
    double var = 0;
    for (double x : xs) var += (x - mean_x) * (x - mean_x);
    double se = std::sqrt(var / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
    EXPECT_NEAR(mean_x, predicted, 3 * se + 1e-3) << "k=" << k;
    if (k == 1) {
      EXPECT_GE(mean_x, p_w(delta));
    }
  }
}

TEST(Watermark, NullVarianceMatchesBinomial) {
  auto model = flat_channel(23);
  WatermarkParams p;
  p.n_bits = 1;
  p.T = 500;
  std::vector<double> xs;
  for (int t = 0; t < 400; ++t) {
    auto keys = WatermarkKeySet::derive(Bytes(32, static_cast<std::uint8_t>(t)), 1);
    ChannelHistory h{{}, "null " + std::to_string(t)};
    auto plain = encode(keys, HiddenMessage::from_string("0"), h, model, p, static_cast<std::uint64_t>(t));
    xs.push_back(decode(keys, h, plain, model.vocabulary(), p).report.fractions[0]);
  }
  double m = 0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= static_cast<double>(xs.size() - 1);
  double expected = 0.25 / (500.0 - 3);
  EXPECT_NEAR(v / expected, 1.0, 0.2);
  EXPECT_NEAR(m, 0.5, 4 * std::sqrt(expected / xs.size()));
}

TEST(Watermark, ParamsValidationAndJson) {
  WatermarkParams p;
  p.delta = 0.3;
  p.perturbation = PerturbMode::token;
  EXPECT_EQ(WatermarkParams::from_json(p.to_json()), p);
  p.delta = 1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  WatermarkParams q;
  q.c = 0;
  EXPECT_THROW(q.validate(), std::invalid_argument);
  auto model = flat_channel();
  WatermarkParams r;
  r.n_bits = 2;
  auto keys = WatermarkKeySet::derive(Bytes(32, 1), 2);
  EXPECT_THROW(encode(keys, HiddenMessage::from_string("1"), {}, model, r, 0), std::invalid_argument);
}
