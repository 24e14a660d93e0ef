#pragma once

// Next-token distribution providers. The synthetic and n-gram models are
// deterministic and offline; the remote adapter lives in remote.hpp.

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rstego/channel.hpp"
#include "rstego/util.hpp"

namespace rstego {

struct TokenDistribution {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }

  void validate(double tol = 1e-9) const {
    if (probs.empty()) throw std::invalid_argument("empty distribution");
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("distribution entry not a finite non-negative value");
      sum += p;
    }
    if (std::abs(sum - 1.0) > tol) throw std::invalid_argument("distribution does not sum to 1");
  }
};

inline double entropy_bits(const TokenDistribution& d) {
  double h = 0.0;
  for (double p : d.probs)
    if (p > 0.0) h -= p * std::log2(p);
  return h;
}

/// Draws an index by inverse-CDF. When `exclude` is set that index is
/// skipped and the rest renormalized, which is equivalent to resampling
/// until something else comes up.
inline TokenId sample_index(const TokenDistribution& d, std::mt19937_64& rng,
                            std::optional<std::size_t> exclude = std::nullopt) {
  double total = 0.0;
  for (std::size_t i = 0; i < d.probs.size(); ++i)
    if (!exclude || i != *exclude) total += d.probs[i];
  if (!(total > 0.0)) throw std::runtime_error("distribution has no mass outside the excluded token");
  double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last = d.probs.size();
  for (std::size_t i = 0; i < d.probs.size(); ++i) {
    if (exclude && i == *exclude) continue;
    if (d.probs[i] <= 0.0) continue;
    acc += d.probs[i];
    last = i;
    if (u < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last);
}

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual const Vocabulary& vocabulary() const = 0;
  /// Distribution over the next token given the prompt text and the token
  /// indices emitted so far in the response.
  virtual TokenDistribution next_distribution(std::string_view prompt,
                                              std::span<const TokenId> prior) const = 0;
};

/// Samples a response: stops after emitting ter or at max_tokens. The first
/// `min_tokens` positions never emit ter.
inline std::vector<TokenId> sample_response(const LanguageModel& model, std::string_view prompt,
                                            std::size_t max_tokens, std::uint64_t rng_seed,
                                            std::size_t min_tokens = 0) {
  if (max_tokens == 0) throw std::invalid_argument("sample_response: max_tokens must be >= 1");
  const std::size_t ter = model.vocabulary().ter_index();
  std::mt19937_64 rng(rng_seed);
  std::vector<TokenId> out;
  while (out.size() < max_tokens) {
    auto dist = model.next_distribution(prompt, out);
    std::optional<std::size_t> exclude;
    if (out.size() < min_tokens) exclude = ter;
    TokenId t = sample_index(dist, rng, exclude);
    out.push_back(t);
    if (t == ter) break;
  }
  return out;
}

inline std::string strip_ter_and_render(const Vocabulary& vocab, std::vector<TokenId> tokens) {
  std::erase(tokens, static_cast<TokenId>(vocab.ter_index()));
  return vocab.render(tokens);
}

/// Expected Shannon entropy (bits) of a draw from a symmetric Dirichlet
/// with concentration alpha over n outcomes.
inline double dirichlet_expected_entropy_bits(double alpha, std::size_t n) {
  using boost::math::digamma;
  double nats = digamma(static_cast<double>(n) * alpha + 1.0) - digamma(alpha + 1.0);
  return nats / std::log(2.0);
}

/// Reproducible synthetic channel. Each step seeds a generator from a hash of
/// (seed, prompt, response length, last few response tokens) and draws a
/// symmetric Dirichlet whose concentration matches the entropy target.
class SyntheticModel final : public LanguageModel {
 public:
  static constexpr double kMinConcentration = 1e-3;
  static constexpr double kMaxConcentration = 1e3;

  SyntheticModel(Vocabulary vocab, std::uint64_t seed,
                 std::optional<double> entropy_target = std::nullopt,
                 std::size_t context_window = 4)
      : vocab_(std::move(vocab)), seed_(seed), window_(context_window) {
    alpha_ = entropy_target ? concentration_for(*entropy_target, vocab_.size()) : 1.0;
  }

  /// Concentration whose expected entropy equals the target, clamped to
  /// [kMinConcentration, kMaxConcentration].
  static double concentration_for(double target_bits, std::size_t n) {
    double lo = std::log(kMinConcentration), hi = std::log(kMaxConcentration);
    if (target_bits >= dirichlet_expected_entropy_bits(kMaxConcentration, n)) return kMaxConcentration;
    if (target_bits <= dirichlet_expected_entropy_bits(kMinConcentration, n)) return kMinConcentration;
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      if (dirichlet_expected_entropy_bits(std::exp(mid), n) < target_bits)
        lo = mid;
      else
        hi = mid;
    }
    return std::exp(0.5 * (lo + hi));
  }

  const Vocabulary& vocabulary() const override { return vocab_; }
  double concentration() const { return alpha_; }
  std::uint64_t seed() const { return seed_; }

  TokenDistribution next_distribution(std::string_view prompt,
                                      std::span<const TokenId> prior) const override {
    std::uint64_t h = mix64(seed_ ^ fnv1a64(prompt));
    h = mix64(h ^ prior.size());
    std::size_t from = prior.size() > window_ ? prior.size() - window_ : 0;
    for (std::size_t i = from; i < prior.size(); ++i) {
      if (prior[i] >= vocab_.size()) throw std::invalid_argument("prior token out of range");
      h = mix64(h ^ (static_cast<std::uint64_t>(prior[i]) + 1));
    }
    std::mt19937_64 rng(h);
    std::gamma_distribution<double> gamma(alpha_, 1.0);
    TokenDistribution d;
    d.probs.resize(vocab_.size());
    double sum = 0.0;
    for (auto& p : d.probs) {
      p = gamma(rng);
      sum += p;
    }
    if (!(sum > 0.0)) {
      // Every gamma draw underflowed (tiny alpha); fall back to a point mass.
      d.probs.assign(vocab_.size(), 0.0);
      d.probs[static_cast<std::size_t>(h % vocab_.size())] = 1.0;
      return d;
    }
    for (auto& p : d.probs) p /= sum;
    return d;
  }

 private:
  Vocabulary vocab_;
  std::uint64_t seed_;
  std::size_t window_;
  double alpha_ = 1.0;
};

/// Word n-gram model with additive smoothing. `order` is the number of
/// context tokens. Queries back off to the longest context seen in training;
/// every line of the corpus ends with an implicit ter.
class NgramModel final : public LanguageModel {
 public:
  static NgramModel train(Vocabulary vocab, std::string_view corpus, std::size_t order = 3,
                          double smoothing = 0.1) {
    if (smoothing < 0.0) throw std::invalid_argument("smoothing must be non-negative");
    NgramModel m(std::move(vocab), order, smoothing);
    std::size_t start = 0;
    while (start <= corpus.size()) {
      std::size_t end = corpus.find('\n', start);
      if (end == std::string_view::npos) end = corpus.size();
      auto line = corpus.substr(start, end - start);
      auto ids = m.map_words(line);
      if (!ids.empty()) {
        ids.push_back(static_cast<TokenId>(m.vocab_.ter_index()));
        m.count_line(ids);
      }
      start = end + 1;
    }
    return m;
  }

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::size_t order() const { return order_; }
  double smoothing() const { return smoothing_; }

  TokenDistribution next_distribution(std::string_view prompt,
                                      std::span<const TokenId> prior) const override {
    std::vector<TokenId> ctx;
    if (prior.size() < order_) {
      auto words = tail_words(prompt, order_ - prior.size());
      ctx = map_words_list(words);
    }
    std::size_t from = prior.size() > order_ ? prior.size() - order_ : 0;
    for (std::size_t i = from; i < prior.size(); ++i) {
      if (prior[i] >= vocab_.size()) throw std::invalid_argument("prior token out of range");
      ctx.push_back(prior[i]);
    }

    const Entry* entry = nullptr;
    for (std::size_t len = std::min(order_, ctx.size());; --len) {
      auto it = table_.find(key(std::span(ctx).last(len)));
      if (it != table_.end() && it->second.total > 0) {
        entry = &it->second;
        break;
      }
      if (len == 0) break;
    }

    const double n = static_cast<double>(vocab_.size());
    TokenDistribution d;
    double total = entry ? static_cast<double>(entry->total) : 0.0;
    double denom = total + smoothing_ * n;
    if (!(denom > 0.0)) {
      d.probs.assign(vocab_.size(), 1.0 / n);
      return d;
    }
    d.probs.assign(vocab_.size(), smoothing_ / denom);
    if (entry)
      for (auto& [tok, cnt] : entry->counts) d.probs[tok] = (cnt + smoothing_) / denom;
    return d;
  }

 private:
  struct Entry {
    std::uint64_t total = 0;
    std::unordered_map<TokenId, std::uint64_t> counts;
  };

  NgramModel(Vocabulary vocab, std::size_t order, double smoothing)
      : vocab_(std::move(vocab)), order_(order), smoothing_(smoothing) {}

  static std::string key(std::span<const TokenId> ctx) {
    std::string k;
    k.reserve(ctx.size() * 4);
    for (auto t : ctx)
      for (int s = 24; s >= 0; s -= 8) k.push_back(static_cast<char>((t >> s) & 0xFF));
    return k;
  }

  static std::vector<std::string> tail_words(std::string_view text, std::size_t n) {
    std::vector<std::string> rev;
    std::size_t i = text.size();
    while (i > 0 && rev.size() < n) {
      while (i > 0 && std::isspace(static_cast<unsigned char>(text[i - 1]))) --i;
      std::size_t end = i;
      while (i > 0 && !std::isspace(static_cast<unsigned char>(text[i - 1]))) --i;
      if (end > i) rev.emplace_back(text.substr(i, end - i));
    }
    return {rev.rbegin(), rev.rend()};
  }

  std::vector<TokenId> map_words_list(const std::vector<std::string>& words) const {
    std::vector<TokenId> ids;
    for (auto& w : words) {
      if (auto id = vocab_.index_of(w))
        ids.push_back(*id);
      else if (vocab_.unk_index())
        ids.push_back(static_cast<TokenId>(*vocab_.unk_index()));
    }
    return ids;
  }

  std::vector<TokenId> map_words(std::string_view line) const {
    return map_words_list(split_whitespace(line));
  }

  void count_line(const std::vector<TokenId>& ids) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::size_t max_len = std::min(order_, i);
      for (std::size_t len = 0; len <= max_len; ++len) {
        auto& e = table_[key(std::span(ids).subspan(i - len, len))];
        ++e.total;
        ++e.counts[ids[i]];
      }
    }
  }

  Vocabulary vocab_;
  std::size_t order_;
  double smoothing_;
  std::unordered_map<std::string, Entry> table_;
};

}  // namespace rstego
