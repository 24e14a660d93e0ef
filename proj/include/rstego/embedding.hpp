#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rstego/util.hpp"

namespace rstego {

using EmbeddingVector = std::vector<double>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
};

inline double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(const EmbeddingVector& a) { return std::sqrt(dot(a, a)); }

inline double euclidean_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// Cosine similarity; 0 when either vector is zero.
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

/// Lowercased alphanumeric core of a word ("Don't," -> "dont").
inline std::string normalize_word(std::string_view w) {
  std::string out;
  for (unsigned char c : w)
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
  return out;
}

inline const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> kWords = {
      "a",      "an",     "the",    "and",    "or",     "but",     "so",     "if",     "then",
      "of",     "to",     "in",     "on",     "at",     "by",      "for",    "with",   "from",
      "as",     "into",   "about",  "than",   "that",   "this",    "these",  "those",  "it",
      "its",    "is",     "are",    "was",    "were",   "be",      "been",   "being",  "am",
      "do",     "does",   "did",    "done",   "have",   "has",     "had",    "having", "not",
      "no",     "can",    "cannot", "could",  "will",   "would",   "shall",  "should", "may",
      "might",  "must",   "i",      "me",     "my",     "we",      "us",     "our",    "you",
      "your",   "he",     "him",    "his",    "she",    "her",     "they",   "them",   "their",
      "there",  "here",   "what",   "which",  "who",    "whom",    "when",   "where",  "why",
      "how",    "all",    "any",    "each",   "some",   "such",    "very",   "just",   "also",
      "too",    "up",     "out",    "over",   "again",  "further", "once",   "let",    "lets",
      "dont",   "doesnt", "didnt",  "cant",   "wont",   "isnt",    "arent",  "wasnt",  "werent",
      "im",     "ive",    "youre",  "theyre", "were",   "weve",    "thats",  "its",    "ill",
      "well",   "hasnt",  "havent", "hadnt",  "shouldnt", "couldnt", "wouldnt", "whats", "theres"};
  return kWords;
}

/// Hashed bag-of-words embedder. Content words (stopwords dropped unless a
/// text has nothing else) are feature-hashed into d signed buckets with
/// weight 1 + ln(tf), then L2-normalized.
class ToyEmbedder final : public Embedder {
 public:
  explicit ToyEmbedder(std::size_t dimension = 256) : dim_(dimension) {
    if (dim_ == 0) throw std::invalid_argument("embedding dimension must be positive");
  }

  std::size_t dimension() const override { return dim_; }

  EmbeddingVector embed(std::string_view text) const override {
    std::unordered_map<std::string, std::size_t> tf_all, tf_content;
    for (auto& w : split_whitespace(text)) {
      auto n = normalize_word(w);
      if (n.empty()) continue;
      ++tf_all[n];
      if (!stopwords().count(n)) ++tf_content[n];
    }
    if (tf_all.empty()) throw std::invalid_argument("cannot embed empty text");
    const auto& tf = tf_content.empty() ? tf_all : tf_content;
    EmbeddingVector v(dim_, 0.0);
    for (auto& [word, count] : tf) {
      std::uint64_t h = fnv1a64(word);
      double sign = (mix64(h) >> 63) ? -1.0 : 1.0;
      v[h % dim_] += sign * (1.0 + std::log(static_cast<double>(count)));
    }
    double norm = l2_norm(v);
    if (norm > 0.0)
      for (auto& x : v) x /= norm;
    return v;
  }

 private:
  std::size_t dim_;
};

inline EmbeddingVector embed_text(const Embedder& embedder, std::string_view text) {
  if (trim(text).empty()) throw std::invalid_argument("embed_text: empty text");
  return embedder.embed(text);
}

}  // namespace rstego
