#pragma once

// Multi-key watermarking codec: every 1-bit of the message owns a subkey;
// at each token step one of those subkeys is chosen by PRF and its label
// vector biases the next-token distribution. The receiver counts, per
// subkey, how often the sampled token carries label 1 and applies a
// one-sided Z-test.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rstego/channel.hpp"
#include "rstego/langmodel.hpp"
#include "rstego/prf.hpp"
#include "rstego/stats.hpp"

namespace rstego {

/// How a label vector is applied to a distribution.
///  token      : the per-token boost/suppress step, restricted to tokens with
///               probability in [2δ, 1-2δ].
///  label_mass : the same step applied to the two label classes as a whole
///               (class mass in [2δ, 1-2δ] gains or loses δ), spread over
///               each class proportionally. Works on flat, high-entropy
///               distributions where no single token is eligible.
enum class PerturbMode { token, label_mass };

inline std::string to_string(PerturbMode m) { return m == PerturbMode::token ? "token" : "label_mass"; }

inline PerturbMode perturb_mode_from_string(std::string_view s) {
  if (s == "token") return PerturbMode::token;
  if (s == "label_mass") return PerturbMode::label_mass;
  throw std::invalid_argument("unknown perturbation mode '" + std::string(s) + "'");
}

struct WatermarkParams {
  double delta = 0.2;
  std::size_t c = 3;
  std::size_t T = 0;  // 0: use the length estimator
  double epsilon = 0.05;
  std::size_t n_bits = 1;
  double safety_factor = 1.0;
  PerturbMode perturbation = PerturbMode::label_mass;

  void validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0, 1)");
    if (c < 1) throw std::invalid_argument("c must be >= 1");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in (0, 1)");
    if (n_bits < 1) throw std::invalid_argument("n_bits must be >= 1");
    if (!(safety_factor >= 1.0)) throw std::invalid_argument("safety_factor must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"delta", delta},   {"c", c},
            {"T", T},           {"epsilon", epsilon},
            {"n_bits", n_bits}, {"safety_factor", safety_factor},
            {"perturbation", to_string(perturbation)}};
  }

  static WatermarkParams from_json(const nlohmann::json& j) {
    WatermarkParams p;
    p.delta = j.value("delta", p.delta);
    p.c = j.value("c", p.c);
    p.T = j.value("T", p.T);
    p.epsilon = j.value("epsilon", p.epsilon);
    p.n_bits = j.value("n_bits", p.n_bits);
    p.safety_factor = j.value("safety_factor", p.safety_factor);
    if (j.contains("perturbation"))
      p.perturbation = perturb_mode_from_string(j.at("perturbation").get<std::string>());
    return p;
  }

  bool operator==(const WatermarkParams&) const = default;
};

/// Label-1 rate of a sampled token under an active key: 2(1+δ)/(4+δ).
inline double p_w(double delta) {
  if (!(delta >= 0.0 && delta < 1.0)) throw std::invalid_argument("p_w: delta must be in [0, 1)");
  return 2.0 * (1.0 + delta) / (4.0 + delta);
}

/// z_th = Φ⁻¹(1 − ε/n): per-bit false-positive budget ε/n.
inline double detection_threshold(std::size_t n, double epsilon) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in (0, 1)");
  return inverse_normal_cdf(1.0 - epsilon / static_cast<double>(n));
}

/// Minimum covertext length ceil(z_th² n² / (4 (p_w − 0.5)²)), scaled by the
/// safety factor.
inline std::size_t required_length(std::size_t n, double delta, double epsilon,
                                   double safety_factor = 1.0) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0, 1)");
  if (!(safety_factor >= 1.0)) throw std::invalid_argument("safety_factor must be >= 1");
  double z = detection_threshold(n, epsilon);
  double shift = p_w(delta) - 0.5;
  double nn = static_cast<double>(n);
  double base = std::ceil(z * z * nn * nn / (4.0 * shift * shift));
  return static_cast<std::size_t>(std::ceil(base * safety_factor));
}

inline std::size_t covertext_length(const WatermarkParams& p) {
  return p.T > 0 ? p.T : required_length(p.n_bits, p.delta, p.epsilon, p.safety_factor);
}

namespace detail {
inline void check_perturb_args(const TokenDistribution& dist, const LabelVector& r, double delta) {
  if (r.size() != dist.size()) throw std::invalid_argument("label vector length differs from N");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0, 1)");
}

inline void renormalize(std::vector<double>& p) {
  double sum = 0.0;
  for (auto& x : p) {
    if (x < 0.0) x = 0.0;
    sum += x;
  }
  for (auto& x : p) x /= sum;
}
}  // namespace detail

/// Per-token perturbation. Eligible tokens I have p_i in [2δ, 1−2δ]; those
/// with r_i = 1 gain δ, the others lose δ' = min(δw/(|I|−w), 2δ) where w
/// counts boosted eligible tokens. Steps with w = 0 or w = |I| are left
/// untouched. The result is renormalized.
inline TokenDistribution perturb(const TokenDistribution& dist, const LabelVector& r, double delta) {
  detail::check_perturb_args(dist, r, delta);
  const double lo = 2.0 * delta, hi = 1.0 - 2.0 * delta;
  std::size_t eligible = 0, boosted = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist.probs[i] >= lo && dist.probs[i] <= hi) {
      ++eligible;
      boosted += r[i];
    }
  }
  if (boosted == 0 || boosted == eligible) return dist;
  double suppress = std::min(delta * static_cast<double>(boosted) /
                                 static_cast<double>(eligible - boosted),
                             2.0 * delta);
  TokenDistribution out = dist;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    double p = dist.probs[i];
    if (p >= lo && p <= hi) out.probs[i] = r[i] ? p + delta : p - suppress;
  }
  detail::renormalize(out.probs);
  return out;
}

/// Class-level perturbation: with W1 the mass of label-1 tokens, if
/// W1 ∈ [2δ, 1−2δ] the label-1 class is scaled to W1 + δ and the label-0
/// class to (1 − W1) − δ. Otherwise the distribution is returned unchanged.
inline TokenDistribution perturb_label_mass(const TokenDistribution& dist, const LabelVector& r,
                                            double delta) {
  detail::check_perturb_args(dist, r, delta);
  double w1 = 0.0, w0 = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) (r[i] ? w1 : w0) += dist.probs[i];
  double total = w1 + w0;
  if (!(total > 0.0)) return dist;
  w1 /= total;
  w0 /= total;
  if (w1 < 2.0 * delta || w1 > 1.0 - 2.0 * delta) return dist;
  double scale1 = (w1 + delta) / w1 / total;
  double scale0 = (w0 - delta) / w0 / total;
  TokenDistribution out = dist;
  for (std::size_t i = 0; i < dist.size(); ++i) out.probs[i] *= r[i] ? scale1 : scale0;
  detail::renormalize(out.probs);
  return out;
}

inline TokenDistribution apply_perturbation(PerturbMode mode, const TokenDistribution& dist,
                                            const LabelVector& r, double delta) {
  return mode == PerturbMode::token ? perturb(dist, r, delta) : perturb_label_mass(dist, r, delta);
}

/// Tokenizes conditioning text for c-gram padding. Out-of-vocabulary words
/// map to the unknown token, or are dropped when the vocabulary has none.
inline std::vector<TokenId> tokenize_lenient(const Vocabulary& vocab, std::string_view text) {
  std::vector<TokenId> out;
  for (auto& w : split_whitespace(text)) {
    if (auto id = vocab.index_of(w))
      out.push_back(*id);
    else if (vocab.unk_index())
      out.push_back(static_cast<TokenId>(*vocab.unk_index()));
  }
  return out;
}

struct EncodeStep {
  std::size_t position = 0;              // 1-based
  std::optional<std::size_t> key_index;  // 0-based message bit, empty if no key active
  PrfContext context;
  LabelVector labels;
  TokenDistribution original;
  TokenDistribution perturbed;
  TokenId token = 0;
};

using EncodeObserver = std::function<void(const EncodeStep&)>;

/// Emits exactly covertext_length(params) tokens. ter is never emitted.
/// An all-zero message selects no key, so the output equals plain sampling
/// with the same seed.
inline StegoDocument encode(const WatermarkKeySet& keys, const HiddenMessage& message,
                            const ChannelHistory& history, const LanguageModel& model,
                            const WatermarkParams& params, std::uint64_t rng_seed,
                            const EncodeObserver& observer = {}) {
  params.validate();
  message.validate();
  if (message.size() != params.n_bits)
    throw std::invalid_argument("message length differs from n_bits");
  if (keys.subkeys.size() < message.size())
    throw std::invalid_argument("key set has fewer subkeys than message bits");
  const std::size_t T = covertext_length(params);
  if (T == 0) throw std::invalid_argument("covertext length T must be >= 1");

  const Vocabulary& vocab = model.vocabulary();
  const std::size_t N = vocab.size();
  const TokenId ter = static_cast<TokenId>(vocab.ter_index());
  const std::string prompt = history.context_text();
  const auto prompt_tokens = tokenize_lenient(vocab, prompt);

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < message.size(); ++i)
    if (message.bits[i]) active.push_back(i);

  const HmacSha256 selector(keys.master_key);
  std::vector<HmacSha256> active_keys;
  for (auto i : active) active_keys.emplace_back(keys.subkeys[i]);

  PrfContext ctx;
  ctx.salt = derive_salt(history);
  std::mt19937_64 rng(rng_seed);
  std::vector<TokenId> out;
  out.reserve(T);

  for (std::size_t j = 1; j <= T; ++j) {
    EncodeStep step;
    step.position = j;
    step.original = model.next_distribution(prompt, out);
    if (step.original.size() != N) throw std::runtime_error("model returned wrong distribution size");
    step.perturbed = step.original;
    if (!active.empty()) {
      std::size_t pick = prf_select_index(selector, j, active.size());
      step.key_index = active[pick];
      ctx.cgram = make_cgram(prompt_tokens, out, params.c, ter);
      step.labels = prf_label_vector(active_keys[pick], ctx, N);
      step.perturbed = apply_perturbation(params.perturbation, step.original, step.labels, params.delta);
      step.context = ctx;
    }
    step.token = sample_index(step.perturbed, rng, vocab.ter_index());
    out.push_back(step.token);
    if (observer) observer(step);
  }

  StegoDocument doc;
  doc.scheme = Scheme::watermark;
  doc.text = vocab.render(out);
  doc.token_indices = std::move(out);
  doc.params = params.to_json();
  doc.params["T"] = T;
  doc.params["vocab_size"] = N;
  doc.history_digest = history.digest();
  return doc;
}

struct DetectionReport {
  std::vector<std::uint64_t> counters;
  std::vector<double> fractions;
  std::vector<double> z_scores;
  double threshold = 0.0;
  std::vector<std::uint8_t> decisions;
  std::size_t t_counted = 0;
  /// Equivalent raw-count threshold T/2 + z_th·sqrt(T)/2.
  double count_threshold = 0.0;

  nlohmann::json to_json() const {
    return {{"counters", counters},   {"fractions", fractions},
            {"z_scores", z_scores},   {"threshold", threshold},
            {"decisions", decisions}, {"T_counted", t_counted},
            {"count_threshold", count_threshold}};
  }
};

struct WatermarkDecodeResult {
  HiddenMessage message;
  DetectionReport report;
};

using DecodeObserver = std::function<void(std::size_t position, const PrfContext&)>;

/// Token indices of a document: the stored indices, or the tokenized text
/// when none are stored (e.g. after a text-level attack).
inline std::vector<TokenId> document_tokens(const StegoDocument& doc, const Vocabulary& vocab) {
  std::vector<TokenId> tokens = doc.token_indices.empty() ? vocab.tokenize(doc.text) : doc.token_indices;
  for (auto t : tokens)
    if (t >= vocab.size()) throw std::invalid_argument("token index outside the vocabulary");
  return tokens;
}

/// Scores positions j > c (those with a full c-gram of covertext tokens).
inline WatermarkDecodeResult decode(const WatermarkKeySet& keys, const ChannelHistory& history,
                                    const StegoDocument& doc, const Vocabulary& vocab,
                                    const WatermarkParams& params,
                                    const DecodeObserver& observer = {}) {
  params.validate();
  if (doc.params.contains("vocab_size") &&
      doc.params.at("vocab_size").get<std::size_t>() != vocab.size())
    throw std::invalid_argument("document vocabulary size differs from the decoding vocabulary");
  auto tokens = document_tokens(doc, vocab);
  if (tokens.empty()) throw DecodeError("empty stegotext");
  const std::size_t n = params.n_bits;
  if (keys.subkeys.size() < n) throw std::invalid_argument("key set has fewer subkeys than message bits");

  std::vector<HmacSha256> subkeys;
  for (std::size_t i = 0; i < n; ++i) subkeys.emplace_back(keys.subkeys[i]);

  DetectionReport rep;
  rep.counters.assign(n, 0);
  rep.threshold = detection_threshold(n, params.epsilon);
  PrfContext ctx;
  ctx.salt = derive_salt(history);
  const TokenId ter = static_cast<TokenId>(vocab.ter_index());

  for (std::size_t idx = params.c; idx < tokens.size(); ++idx) {
    ctx.cgram = make_cgram({}, std::span(tokens).first(idx), params.c, ter);
    if (observer) observer(idx + 1, ctx);
    for (std::size_t i = 0; i < n; ++i) rep.counters[i] += prf_label_bit(subkeys[i], ctx, tokens[idx]);
    ++rep.t_counted;
  }

  const double t = static_cast<double>(rep.t_counted);
  rep.count_threshold = t / 2.0 + rep.threshold * std::sqrt(t) / 2.0;
  std::vector<std::uint8_t> bits(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double x = rep.t_counted ? static_cast<double>(rep.counters[i]) / t : 0.0;
    double z = rep.t_counted ? 2.0 * std::sqrt(t) * (x - 0.5) : 0.0;
    rep.fractions.push_back(x);
    rep.z_scores.push_back(z);
    bits[i] = z > rep.threshold ? 1 : 0;
  }
  rep.decisions = bits;
  return {HiddenMessage(std::move(bits)), std::move(rep)};
}

}  // namespace rstego
