// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rstego/rstego.hpp"

using namespace rstego;

namespace {

const std::string kAssets = RSTEGO_ASSETS;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(double x, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, x);
  return buf;
}

Bits random_bits(std::mt19937_64& rng, std::size_t n) {
  Bits b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng() & 1);
  return b;
}

Bytes trial_key(std::uint64_t seed) {
  Bytes in;
  append_be64(in, seed);
  auto d = sha256(in);
  return {d.begin(), d.end()};
}

SyntheticModel synthetic_channel(std::uint64_t seed) {
  return SyntheticModel(Vocabulary::synthetic(64), seed, std::log2(64.0));
}

WatermarkParams watermark_params() {
  WatermarkParams p;
  p.delta = 0.2;
  p.c = 3;
  p.epsilon = 0.05;
  p.n_bits = 3;
  p.T = required_length(3, 0.2, 0.05, 1.0);
  return p;
}

// 1. Length estimator
Outcome length_estimator() {
  auto t0 = std::chrono::steady_clock::now();
  auto T = required_length(3, 0.1, 0.05);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {T >= 7000 && T <= 8500 && secs < 1.0, "T = " + std::to_string(T) + " (band [7000, 8500])"};
}

// 2. p_w formula
Outcome pw_formula() {
  double v = p_w(0.1);
  double diff = std::abs(v - 2.2 / 4.1);
  return {diff <= 1e-6, "p_w(0.1) = " + fmt(v, 10) + ", |diff| = " + fmt(diff)};
}

// 3. Watermark round trip
Outcome watermark_round_trip() {
  auto model = synthetic_channel(11);
  auto params = watermark_params();
  const int trials = 100;
  std::mt19937_64 rng(3);
  int ok = 0;
  for (int t = 0; t < trials; ++t) {
    auto msg = random_bits(rng, 3);
    auto keys = WatermarkKeySet::derive(trial_key(1000 + t), 3);
    ChannelHistory h{{}, "trial " + std::to_string(t)};
    auto doc = encode(keys, HiddenMessage(msg), h, model, params, static_cast<std::uint64_t>(t));
    ok += decode(keys, h, doc, model.vocabulary(), params).message.bits == msg;
  }
  double rate = ok / static_cast<double>(trials);
  return {rate >= 0.95, "T = " + std::to_string(params.T) + ", full recovery " + std::to_string(ok) + "/" +
                            std::to_string(trials)};
}

// 4. Null calibration
Outcome null_calibration() {
  auto model = synthetic_channel(12);
  auto params = watermark_params();
  const int trials = 1000;
  auto counts = parallel_map<int>(trials, [&](std::size_t t) {
    ChannelHistory h{{}, "null " + std::to_string(t)};
    StegoDocument doc;
    doc.token_indices = sample_response(model, h.context_text(), params.T, derive_seed(77, t), params.T);
    auto keys = WatermarkKeySet::derive(trial_key(5000 + t), 3);
    auto rep = decode(keys, h, doc, model.vocabulary(), params).report;
    int c = 0;
    for (auto d : rep.decisions) c += d;
    return c;
  });
  double positives = 0;
  for (int c : counts) positives += c;
  double rate = positives / (3.0 * trials);
  double analytic = 1.0 - normal_cdf(detection_threshold(3, 0.05));
  bool pass = rate >= 0.2 * analytic && rate <= 3.0 * analytic;
  return {pass, "per-bit FPR " + fmt(rate) + " vs analytic " + fmt(analytic) + " (band [" + fmt(0.2 * analytic) +
                    ", " + fmt(3.0 * analytic) + "])"};
}

// 5. Perturb normalization
Outcome perturb_normalization() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int calls = 10000;
  int bad = 0, edge_zero = 0, edge_all = 0;
  double worst = 0.0;
  for (int i = 0; i < calls; ++i) {
    const std::size_t N = 2 + rng() % 63;
    TokenDistribution d;
    d.probs.resize(N);
    const int shape = i % 4;
    double sum = 0.0;
    for (auto& p : d.probs) {
      p = shape == 0 ? u(rng) : shape == 1 ? std::pow(u(rng), 8.0) : shape == 2 ? 1.0 : (u(rng) < 0.3 ? 0.0 : u(rng));
      sum += p;
    }
    if (sum == 0.0) d.probs[0] = sum = 1.0;
    for (auto& p : d.probs) p /= sum;
    LabelVector r(N);
    const int labels = i % 5;
    for (auto& x : r) x = labels == 0 ? 0 : labels == 1 ? 1 : static_cast<std::uint8_t>(rng() & 1);
    edge_zero += labels == 0;
    edge_all += labels == 1;
    const double delta = 0.01 + 0.48 * u(rng);
    for (auto mode : {PerturbMode::token, PerturbMode::label_mass}) {
      auto out = apply_perturbation(mode, d, r, delta);
      double s = 0.0;
      bool neg = false;
      for (double p : out.probs) {
        s += p;
        neg |= p < 0.0;
      }
      worst = std::max(worst, std::abs(s - 1.0));
      bad += neg || std::abs(s - 1.0) > 1e-9;
    }
  }
  return {bad == 0, std::to_string(2 * calls) + " calls (" + std::to_string(edge_zero) + " w=0, " +
                        std::to_string(edge_all) + " w=|I| label vectors), max |sum-1| = " + fmt(worst) +
                        ", violations " + std::to_string(bad)};
}

// 6. Weak-robustness trend
Outcome weak_robustness() {
  auto profile = Profile::load(kAssets + "/profiles/watermark_synthetic.json");
  profile.model.entropy_target = 6.0;
  profile.watermark = watermark_params();
  profile.ecc = EccSpec::none();
  SweepConfig cfg;
  cfg.trials = 100;
  cfg.message_bits = 3;
  cfg.seed = 6;
  cfg.fractions = {0.0, 0.05, 0.1, 0.2};
  for (auto mode : {AttackMode::local, AttackMode::global}) {
    AttackConfig a;
    a.kind = AttackKind::ngram_shuffle;
    a.mode = mode;
    a.n = 3;
    cfg.attacks.push_back(a);
  }
  auto rows = experiment_attack_sweep(profile, cfg);
  auto stderr_of = [&](const SweepRow& r) {
    double m = r.bitwise_recovery, v = 0.0;
    for (double x : r.trial_bitwise) v += (x - m) * (x - m);
    return std::sqrt(v / (r.trial_bitwise.size() - 1) / r.trial_bitwise.size());
  };
  bool pass = true;
  std::string detail;
  for (std::size_t a = 0; a < cfg.attacks.size(); ++a) {
    detail += (a ? "; " : "") + to_string(cfg.attacks[a].mode) + ":";
    for (std::size_t f = 0; f < cfg.fractions.size(); ++f) {
      const auto& row = rows[a * cfg.fractions.size() + f];
      detail += " " + fmt(row.bitwise_recovery, 3);
      if (f > 0) {
        const auto& prev = rows[a * cfg.fractions.size() + f - 1];
        double tol = 3.0 * std::hypot(stderr_of(prev), stderr_of(row));
        pass &= row.bitwise_recovery <= prev.bitwise_recovery + tol + 1e-12;
      }
    }
    pass &= rows[a * cfg.fractions.size() + 3].bitwise_recovery >= 0.85;
  }
  return {pass, "per-bit recovery at fractions {0, .05, .1, .2}, " + detail};
}

// 7. Embedding round trip
Outcome embedding_round_trip() {
  auto profile = Profile::load(kAssets + "/profiles/embedding_ngram.json");
  profile.ecc = EccSpec::repetition(3);
  profile.message_bits = 8;
  profile.embedding.hash_bits = 1;
  SweepConfig cfg;
  cfg.trials = 50;
  cfg.message_bits = 8;
  cfg.seed = 7;
  cfg.fractions = {0.0, 0.5};
  AttackConfig a;
  a.kind = AttackKind::paraphrase;
  a.rules_path = kAssets + "/paraphrase_rules.txt";
  cfg.attacks = {a};
  auto rows = experiment_attack_sweep(profile, cfg);
  bool pass = rows[0].perfect_recovery == 1.0 && rows[1].perfect_recovery >= 0.95;
  return {pass, "full-message recovery " + fmt(rows[0].perfect_recovery) + " clean, " +
                    fmt(rows[1].perfect_recovery) + " under paraphrase 0.5 (mean cosine " +
                    fmt(rows[1].mean_cosine) + ", consistency " + fmt(rows[1].mean_consistency) + ")"};
}

// 8. Rejection-sampling attempt counts
Outcome rejection_counts() {
  auto model = synthetic_channel(8);
  ToyEmbedder emb;
  LshFactory make = [](std::size_t h) -> LshModel {
    OracleConfig c;
    c.bits = h;
    c.key = {'a', 'c', 'c', '8'};
    return OracleLsh(c);
  };
  auto rows = experiment_rejection_sampling(model, emb, make, {1, 2, 4}, 200, 8, 10);
  bool pass = true;
  std::string detail;
  for (auto& r : rows) {
    double expected = std::ldexp(1.0, static_cast<int>(r.hash_bits));
    pass &= std::abs(r.mean_attempts - expected) <= 0.25 * expected && r.chunks == 200;
    detail += (detail.empty() ? "" : ", ") + std::string("h=") + std::to_string(r.hash_bits) + ": " +
              fmt(r.mean_attempts) + " vs " + fmt(expected);
  }
  return {pass, detail};
}

// 9. ECC oracle equivalence
Outcome ecc_oracle() {
  const auto spec = EccSpec::convolutional();
  const std::size_t n = 12;
  auto pack = [](const Bits& b) {
    std::uint64_t v = 0;
    for (auto x : b) v = (v << 1) | x;
    return v;
  };
  std::vector<std::uint64_t> codewords(1u << n);
  for (std::uint32_t m = 0; m < codewords.size(); ++m) {
    Bits b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = (m >> (n - 1 - i)) & 1;
    codewords[m] = pack(ecc_encode(spec, b));
  }
  const std::size_t len = ecc_encoded_length(spec, n);
  // Nearest codeword; ties go to the lexicographically smallest message.
  auto brute = [&](std::uint64_t word) {
    std::uint32_t best = 0;
    int best_d = 1 << 30;
    for (std::uint32_t m = 0; m < codewords.size(); ++m) {
      int d = std::popcount(codewords[m] ^ word);
      if (d < best_d) best_d = d, best = m;
    }
    return best;
  };
  std::mt19937_64 rng(9);
  std::size_t checked = 0, mismatches = 0;
  auto check = [&](std::uint32_t msg, const std::vector<std::size_t>& flips) {
    Bits cw(len);
    for (std::size_t i = 0; i < len; ++i) cw[i] = (codewords[msg] >> (len - 1 - i)) & 1;
    for (auto f : flips) cw[f] ^= 1;
    auto got = pack(ecc_decode(spec, cw));  // Viterbi for convolutional specs
    ++checked;
    mismatches += got != brute(pack(cw));
  };
  for (int s = 0; s < 64; ++s) {
    auto msg = static_cast<std::uint32_t>(rng() & ((1u << n) - 1));
    for (std::size_t i = 0; i < len; ++i) check(msg, {i});
    for (int d = 0; d < 40; ++d) {
      std::size_t a = rng() % len, b = rng() % (len - 1);
      if (b >= a) ++b;
      check(msg, {a, b});
    }
  }
  return {mismatches == 0, std::to_string(checked) + " corrupted words (all single flips and sampled double flips of 64 "
                               "messages), mismatches " + std::to_string(mismatches)};
}

// 10. Local-consistency checker
Outcome consistency_checker() {
  std::mt19937_64 rng(10);
  auto brute = [](const std::vector<std::string>& x, const std::vector<std::string>& fx, std::size_t k) {
    std::size_t windows = x.size() - k + 1, hits = 0;
    for (std::size_t i = 0; i < windows; ++i) {
      bool found = false;
      for (std::size_t j = 0; !found && j + k <= fx.size(); ++j) {
        bool eq = true;
        for (std::size_t t = 0; eq && t < k; ++t) eq = x[i + t] == fx[j + t];
        found = eq;
      }
      hits += found;
    }
    return static_cast<double>(hits) / static_cast<double>(windows);
  };
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t vocab = 2 + rng() % 6;
    const std::size_t k = 1 + rng() % 4;
    std::vector<std::string> x(k + rng() % 20), fx(rng() % 25);
    for (auto& w : x) w = "w" + std::to_string(rng() % vocab);
    for (auto& w : fx) w = "w" + std::to_string(rng() % vocab);
    if (t % 3 == 0) fx = x, std::shuffle(fx.begin(), fx.end(), rng);
    auto got = local_consistency<std::string>(std::span<const std::string>(x), std::span<const std::string>(fx), k);
    mismatches += got != brute(x, fx, k);
  }
  return {mismatches == 0, "1000 triples, mismatches " + std::to_string(mismatches)};
}

// 11. Strong-robustness union bound
Outcome union_bound() {
  auto model = synthetic_channel(21);
  ToyEmbedder emb;
  const std::size_t r = 8;
  const int trials = 1000;
  OracleConfig base;
  base.bits = 1;
  base.key = {'u', 'n', 'i', 'o', 'n'};
  LshModel enc_lsh{OracleLsh(base)};
  EmbedParams p;
  p.hash_bits = 1;
  p.chunk_tokens = 10;
  p.max_attempts = 200;
  struct Doc {
    Bits msg;
    std::string text;
    std::size_t misses;
  };
  auto docs = parallel_map<Doc>(trials, [&](std::size_t t) {
    std::mt19937_64 rng(derive_seed(11, t));
    Doc d{random_bits(rng, r), {}, 0};
    auto res = encode_embedded(d.msg, model, emb, enc_lsh, {{}, "ub " + std::to_string(t)}, p, derive_seed(12, t));
    d.text = res.document.text;
    d.misses = res.misses();
    return d;
  });
  bool pass = true;
  std::string detail;
  for (double pf : {0.01, 0.05}) {
    OracleConfig c = base;
    c.flip_probability = pf;
    c.flip_seed = static_cast<std::uint64_t>(pf * 1000);
    LshModel dec_lsh{OracleLsh(c)};
    int failures = 0;
    for (auto& d : docs) {
      if (d.misses) pass = false;
      failures += decode_embedded(d.text, emb, dec_lsh, r) != d.msg;
    }
    double rate = failures / static_cast<double>(trials);
    double bound = r * pf;
    double sigma = std::sqrt(bound * (1 - bound) / trials);
    pass &= rate <= bound + 3 * sigma;
    detail += (detail.empty() ? "" : ", ") + std::string("p_f=") + fmt(pf) + ": failure " + fmt(rate) + " <= " +
              fmt(bound + 3 * sigma);
  }
  return {pass, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"length estimator", length_estimator},
      {"p_w formula", pw_formula},
      {"watermark round trip", watermark_round_trip},
      {"null calibration", null_calibration},
      {"perturb normalization", perturb_normalization},
      {"weak-robustness trend", weak_robustness},
      {"embedding round trip", embedding_round_trip},
      {"rejection-sampling attempts", rejection_counts},
      {"ECC oracle equivalence", ecc_oracle},
      {"local-consistency checker", consistency_checker},
      {"strong-robustness union bound", union_bound},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s %2zu %s: %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed ? 1 : 0;
}
