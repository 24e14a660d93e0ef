#pragma once

// Tampering simulators (n-gram shuffle, synonym substitution, rule-based or
// remote paraphrase) and the two robustness measures: k-local consistency
// and embedding drift.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "rstego/embedding.hpp"
#include "rstego/util.hpp"

namespace rstego {

enum class AttackKind { ngram_shuffle, synonym, paraphrase };
enum class AttackMode { local, global };
enum class Paraphraser { deterministic_rules, remote };

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::ngram_shuffle: return "ngram_shuffle";
    case AttackKind::synonym: return "synonym";
    case AttackKind::paraphrase: return "paraphrase";
  }
  return "ngram_shuffle";
}
inline std::string to_string(AttackMode m) { return m == AttackMode::local ? "local" : "global"; }
inline std::string to_string(Paraphraser p) {
  return p == Paraphraser::remote ? "remote" : "deterministic_rules";
}

inline AttackKind attack_kind_from_string(std::string_view s) {
  if (s == "ngram_shuffle") return AttackKind::ngram_shuffle;
  if (s == "synonym") return AttackKind::synonym;
  if (s == "paraphrase") return AttackKind::paraphrase;
  throw std::invalid_argument("unknown attack kind '" + std::string(s) + "'");
}
inline AttackMode attack_mode_from_string(std::string_view s) {
  if (s == "local") return AttackMode::local;
  if (s == "global") return AttackMode::global;
  throw std::invalid_argument("unknown attack mode '" + std::string(s) + "'");
}
inline Paraphraser paraphraser_from_string(std::string_view s) {
  if (s == "deterministic_rules") return Paraphraser::deterministic_rules;
  if (s == "remote") return Paraphraser::remote;
  throw std::invalid_argument("unknown paraphraser '" + std::string(s) + "'");
}

struct AttackConfig {
  AttackKind kind = AttackKind::ngram_shuffle;
  AttackMode mode = AttackMode::local;
  double fraction = 0.0;
  std::size_t n = 3;
  std::string lexicon_path;
  std::string rules_path;  // paraphrase rule table; empty = built-in
  Paraphraser paraphraser = Paraphraser::deterministic_rules;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must be in [0, 1]");
    if (n < 1) throw std::invalid_argument("n must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"kind", to_string(kind)},          {"mode", to_string(mode)},
            {"fraction", fraction},             {"n", n},
            {"lexicon_path", lexicon_path},     {"rules_path", rules_path},
            {"paraphraser", to_string(paraphraser)}, {"seed", seed}};
  }

  static AttackConfig from_json(const nlohmann::json& j) {
    AttackConfig c;
    c.kind = attack_kind_from_string(j.value("kind", std::string("ngram_shuffle")));
    c.mode = attack_mode_from_string(j.value("mode", std::string("local")));
    c.fraction = j.value("fraction", 0.0);
    c.n = j.value("n", std::size_t{3});
    c.lexicon_path = j.value("lexicon_path", std::string{});
    c.rules_path = j.value("rules_path", std::string{});
    c.paraphraser = paraphraser_from_string(j.value("paraphraser", std::string("deterministic_rules")));
    c.seed = j.value("seed", std::uint64_t{0});
    c.validate();
    return c;
  }
};

namespace detail {

inline bool ends_sentence(std::string_view word) {
  std::size_t e = word.size();
  while (e > 0 && (word[e - 1] == '"' || word[e - 1] == '\'' || word[e - 1] == ')')) --e;
  if (e == 0) return false;
  char c = word[e - 1];
  return c == '.' || c == '!' || c == '?';
}

/// Number of items to touch out of `total`.
inline std::size_t attack_count(double fraction, std::size_t total) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
}

/// `k` distinct indices from [0, total), sorted.
inline std::vector<std::size_t> choose_subset(std::size_t total, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  k = std::min(k, total);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_below(rng, total - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Sattolo's algorithm: a uniformly random cyclic permutation, so every
/// element moves when there are at least two.
template <typename T>
void sattolo(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_below(rng, i - 1)]);
}

}  // namespace detail

/// Word-index ranges [begin, end) of sentences; a word ending in . ! or ?
/// closes a sentence.
inline std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(const std::vector<std::string>& words) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t start = 0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (detail::ends_sentence(words[i])) {
      spans.emplace_back(start, i + 1);
      start = i + 1;
    }
  }
  if (start < words.size()) spans.emplace_back(start, words.size());
  return spans;
}

inline std::vector<std::string> split_sentences(std::string_view text) {
  auto words = split_whitespace(text);
  std::vector<std::string> out;
  for (auto [b, e] : sentence_spans(words))
    out.push_back(join(std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(b),
                                                words.begin() + static_cast<std::ptrdiff_t>(e)),
                       " "));
  return out;
}

/// Cuts the words into consecutive n-word blocks (shorter at a segment end),
/// picks round(fraction * blocks) of them and cyclically permutes the picked
/// blocks. Local mode builds blocks and permutes per sentence; global mode
/// treats the whole text as one segment. Output words are space-joined.
inline std::string ngram_shuffle(std::string_view text, const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.fraction == 0.0) return std::string(text);
  auto words = split_whitespace(text);
  if (words.empty()) return std::string(text);

  std::vector<std::pair<std::size_t, std::size_t>> segments;
  if (cfg.mode == AttackMode::local)
    segments = sentence_spans(words);
  else
    segments.emplace_back(0, words.size());

  struct Block {
    std::size_t segment, begin, end;
  };
  std::vector<Block> blocks;
  for (std::size_t s = 0; s < segments.size(); ++s)
    for (std::size_t b = segments[s].first; b < segments[s].second; b += cfg.n)
      blocks.push_back({s, b, std::min(b + cfg.n, segments[s].second)});

  std::mt19937_64 rng(cfg.seed);
  auto picked = detail::choose_subset(blocks.size(), detail::attack_count(cfg.fraction, blocks.size()), rng);

  // order[i] = block whose words land in slot i.
  std::vector<std::size_t> order(blocks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t p = 0;
  while (p < picked.size()) {
    std::size_t q = p;
    while (q < picked.size() && blocks[picked[q]].segment == blocks[picked[p]].segment) ++q;
    std::vector<std::size_t> slots(picked.begin() + static_cast<std::ptrdiff_t>(p),
                                   picked.begin() + static_cast<std::ptrdiff_t>(q));
    std::vector<std::size_t> contents = slots;
    detail::sattolo(contents, rng);
    for (std::size_t i = 0; i < slots.size(); ++i) order[slots[i]] = contents[i];
    p = q;
  }

  std::vector<std::string> out;
  out.reserve(words.size());
  for (std::size_t slot : order)
    for (std::size_t w = blocks[slot].begin; w < blocks[slot].end; ++w) out.push_back(words[w]);
  return join(out, " ");
}

// ---------------------------------------------------------------------------
// Synonyms

/// word -> synonyms; keys are lowercase.
using Lexicon = std::map<std::string, std::vector<std::string>>;

/// Lines "word: syn1, syn2"; blank lines and '#' comments are skipped.
inline Lexicon parse_lexicon(std::string_view content) {
  Lexicon lex;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    ++line_no;
    std::string line = trim(content.substr(start, end - start));
    start = end + 1;
    if (line.empty() || line[0] == '#') continue;
    auto colon = line.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("lexicon line " + std::to_string(line_no) + ": expected 'word: syn, ...'");
    std::string head = to_lower(trim(line.substr(0, colon)));
    std::vector<std::string> syns;
    std::string rest = line.substr(colon + 1);
    std::size_t s = 0;
    while (s <= rest.size()) {
      std::size_t c = rest.find(',', s);
      if (c == std::string::npos) c = rest.size();
      auto syn = trim(rest.substr(s, c - s));
      if (!syn.empty()) syns.push_back(syn);
      s = c + 1;
    }
    if (head.empty() || syns.empty())
      throw std::invalid_argument("lexicon line " + std::to_string(line_no) + ": empty entry");
    auto& slot = lex[head];
    slot.insert(slot.end(), syns.begin(), syns.end());
    if (end == content.size()) break;
  }
  return lex;
}

inline Lexicon load_lexicon(const std::string& path) {
  if (path.empty()) throw std::invalid_argument("synonym attack needs a lexicon file");
  return parse_lexicon(read_file(path));
}

namespace detail {

struct WordSlot {
  std::size_t begin, end;  // byte range of the non-space run
};

inline std::vector<WordSlot> word_slots(std::string_view text) {
  std::vector<WordSlot> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t b = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > b) out.push_back({b, i});
  }
  return out;
}

struct Affixed {
  std::string prefix, core, suffix;
};

inline Affixed split_affixes(std::string_view w) {
  std::size_t b = 0, e = w.size();
  while (b < e && !std::isalnum(static_cast<unsigned char>(w[b]))) ++b;
  while (e > b && !std::isalnum(static_cast<unsigned char>(w[e - 1]))) --e;
  return {std::string(w.substr(0, b)), std::string(w.substr(b, e - b)), std::string(w.substr(e))};
}

/// Copies the capitalization pattern of `like` onto `word`.
inline std::string match_case(std::string word, std::string_view like) {
  if (like.empty() || word.empty()) return word;
  bool all_upper = like.size() > 1;
  for (unsigned char c : like)
    if (std::isalpha(c) && !std::isupper(c)) all_upper = false;
  if (all_upper) {
    for (auto& c : word) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  } else if (std::isupper(static_cast<unsigned char>(like[0]))) {
    word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
  }
  return word;
}

}  // namespace detail

/// Replaces round(fraction * covered) lexicon-covered words with a seeded
/// choice among their synonyms. Punctuation around a word and its
/// capitalization are kept; whitespace is untouched.
inline std::string synonym_substitute(std::string_view text, const AttackConfig& cfg, const Lexicon& lexicon) {
  cfg.validate();
  if (cfg.fraction == 0.0) return std::string(text);
  auto slots = detail::word_slots(text);
  std::vector<std::size_t> covered;
  std::vector<detail::Affixed> parts(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    parts[i] = detail::split_affixes(text.substr(slots[i].begin, slots[i].end - slots[i].begin));
    if (!parts[i].core.empty() && lexicon.count(to_lower(parts[i].core))) covered.push_back(i);
  }
  std::mt19937_64 rng(cfg.seed);
  auto picked = detail::choose_subset(covered.size(), detail::attack_count(cfg.fraction, covered.size()), rng);

  std::string out;
  std::size_t cursor = 0;
  for (std::size_t pi : picked) {
    std::size_t i = covered[pi];
    const auto& syns = lexicon.at(to_lower(parts[i].core));
    const auto& syn = syns[uniform_below(rng, syns.size())];
    out.append(text.substr(cursor, slots[i].begin - cursor));
    out += parts[i].prefix + detail::match_case(syn, parts[i].core) + parts[i].suffix;
    cursor = slots[i].end;
  }
  out.append(text.substr(cursor));
  return out;
}

inline std::string synonym_substitute(std::string_view text, const AttackConfig& cfg) {
  return synonym_substitute(text, cfg, load_lexicon(cfg.lexicon_path));
}

// ---------------------------------------------------------------------------
// Paraphrase

struct RewriteRule {
  std::string pattern;
  std::string replacement;
  std::regex re;
};

using RuleTable = std::vector<RewriteRule>;

inline RewriteRule make_rule(std::string pattern, std::string replacement) {
  std::regex re(pattern, std::regex::ECMAScript);
  return {std::move(pattern), std::move(replacement), std::move(re)};
}

/// Lines "pattern => replacement" (ECMAScript regex, $1-style groups);
/// blank lines and '#' comments are skipped.
inline RuleTable parse_rule_table(std::string_view content) {
  RuleTable rules;
  std::size_t line_no = 0;
  for (std::size_t start = 0; start < content.size();) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    ++line_no;
    std::string line = trim(content.substr(start, end - start));
    start = end + 1;
    if (line.empty() || line[0] == '#') continue;
    auto arrow = line.find("=>");
    if (arrow == std::string::npos)
      throw std::invalid_argument("rule line " + std::to_string(line_no) + ": expected 'pattern => replacement'");
    try {
      rules.push_back(make_rule(trim(line.substr(0, arrow)), trim(line.substr(arrow + 2))));
    } catch (const std::regex_error& e) {
      throw std::invalid_argument("rule line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rules;
}

inline const RuleTable& default_rule_table() {
  static const RuleTable kRules = [] {
    RuleTable t;
    const std::pair<const char*, const char*> table[] = {
        {R"(\bcan not\b)", "cannot"},
        {R"(\bcan't\b)", "cannot"},
        {R"(\bCan't\b)", "Cannot"},
        {R"(\bwon't\b)", "will not"},
        {R"(\bWon't\b)", "Will not"},
        {R"(\bshan't\b)", "shall not"},
        {R"(\b(\w+)n't\b)", "$1 not"},
        {R"(\bI'm\b)", "I am"},
        {R"(\b([Ii]t|[Tt]hat|[Tt]here|[Hh]e|[Ss]he|[Ww]hat)'s\b)", "$1 is"},
        {R"(\b(\w+)'re\b)", "$1 are"},
        {R"(\b(\w+)'ve\b)", "$1 have"},
        {R"(\b(\w+)'ll\b)", "$1 will"},
        {R"(\b(I|you|we|they|he|she)'d\b)", "$1 would"},
        {R"(\bin order to\b)", "to"},
        {R"(\ba lot of\b)", "many"},
        {R"(\bbecause of\b)", "due to"},
        {R"(\bhowever\b)", "but"},
    };
    for (auto& [p, r] : table) t.push_back(make_rule(p, r));
    return t;
  }();
  return kRules;
}

namespace detail {

inline std::string capitalize_first(std::string s) {
  for (auto& c : s)
    if (std::isalpha(static_cast<unsigned char>(c))) {
      c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      break;
    }
  return s;
}

inline std::string lower_first(std::string s) {
  // Leave "I" and words that look like acronyms or names alone.
  if (s.size() > 1 && std::isupper(static_cast<unsigned char>(s[0])) &&
      std::islower(static_cast<unsigned char>(s[1]))) {
    auto first_word = s.substr(0, s.find(' '));
    static const std::unordered_set<std::string> kDeterminers = {
        "The", "A", "An", "This", "That", "These", "Those", "It", "We", "They", "He", "She",
        "You", "There", "Our", "My", "Your", "Their", "His", "Her", "Its", "Some", "Many"};
    if (kDeterminers.count(first_word)) s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
  }
  return s;
}

/// Splits trailing sentence punctuation off.
inline std::pair<std::string, std::string> strip_terminal(const std::string& s) {
  std::size_t e = s.size();
  while (e > 0 && (s[e - 1] == '.' || s[e - 1] == '!' || s[e - 1] == '?')) --e;
  return {s.substr(0, e), s.substr(e)};
}

/// "The X was Ved by the Y" -> "The Y Ved the X" and the reverse.
inline std::string voice_swap(const std::string& sentence) {
  static const std::regex kPassive(
      R"(^(The|A|An|the|a|an) (\w+) (?:was|were) (\w+ed) by (the|a|an) (\w+)(.*)$)");
  static const std::regex kActive(R"(^(The|A|An) (\w+) (\w+ed) (the|a|an) (\w+)(.*)$)");
  std::smatch m;
  if (std::regex_match(sentence, m, kPassive)) {
    return capitalize_first(m[4].str()) + " " + m[5].str() + " " + m[3].str() + " " +
           to_lower(m[1].str()) + " " + m[2].str() + m[6].str();
  }
  if (std::regex_match(sentence, m, kActive)) {
    return capitalize_first(m[4].str()) + " " + m[5].str() + " was " + m[3].str() + " by " +
           to_lower(m[1].str()) + " " + m[2].str() + m[6].str();
  }
  return sentence;
}

/// "A, and B." -> "B, and A." for and/but/so.
inline std::string clause_swap(const std::string& sentence) {
  static const std::regex kClauses(R"(^(.+?), (and|but|so) (.+)$)");
  auto [body, term] = strip_terminal(sentence);
  std::smatch m;
  if (!std::regex_match(body, m, kClauses)) return sentence;
  return capitalize_first(m[3].str()) + ", " + m[2].str() + " " + lower_first(m[1].str()) + term;
}

}  // namespace detail

/// Rewrites one sentence: rule table first, then voice swap, then clause swap.
inline std::string paraphrase_sentence(const std::string& sentence, const RuleTable& rules) {
  std::string s = sentence;
  for (auto& r : rules) s = std::regex_replace(s, r.re, r.replacement);
  s = detail::voice_swap(s);
  s = detail::clause_swap(s);
  return s;
}

using ParaphraseFn = std::function<std::string(const std::string&)>;

/// Rewrites round(fraction * sentences) seeded-chosen sentences. Global mode
/// additionally permutes the rewritten sentences among their slots. With
/// `remote` set the selected sentences are sent there instead of the rules.
inline std::string paraphrase(std::string_view text, const AttackConfig& cfg, const RuleTable& rules,
                              const ParaphraseFn& remote = {}) {
  cfg.validate();
  if (cfg.fraction == 0.0) return std::string(text);
  if (cfg.paraphraser == Paraphraser::remote && !remote)
    throw std::invalid_argument("remote paraphraser selected but no endpoint configured");
  auto sentences = split_sentences(text);
  std::mt19937_64 rng(cfg.seed);
  auto picked = detail::choose_subset(sentences.size(), detail::attack_count(cfg.fraction, sentences.size()), rng);
  for (std::size_t i : picked)
    sentences[i] = cfg.paraphraser == Paraphraser::remote ? trim(remote(sentences[i]))
                                                           : paraphrase_sentence(sentences[i], rules);
  if (cfg.mode == AttackMode::global && picked.size() > 1) {
    std::vector<std::string> moved;
    for (std::size_t i : picked) moved.push_back(sentences[i]);
    detail::sattolo(moved, rng);
    for (std::size_t k = 0; k < picked.size(); ++k) sentences[picked[k]] = moved[k];
  }
  return join(sentences, " ");
}

inline std::string paraphrase(std::string_view text, const AttackConfig& cfg) {
  if (cfg.rules_path.empty()) return paraphrase(text, cfg, default_rule_table());
  return paraphrase(text, cfg, parse_rule_table(read_file(cfg.rules_path)));
}

/// Loads lexicon and rule files once; apply() is then pure in (text, seed).
class Attacker {
 public:
  explicit Attacker(AttackConfig cfg, ParaphraseFn remote = {}) : cfg_(std::move(cfg)), remote_(std::move(remote)) {
    cfg_.validate();
    if (cfg_.kind == AttackKind::synonym) lexicon_ = load_lexicon(cfg_.lexicon_path);
    if (cfg_.kind == AttackKind::paraphrase)
      rules_ = cfg_.rules_path.empty() ? default_rule_table() : parse_rule_table(read_file(cfg_.rules_path));
  }

  const AttackConfig& config() const { return cfg_; }

  /// Same lexicon, rules and endpoint with a different fraction.
  Attacker with_fraction(double fraction) const {
    Attacker a = *this;
    a.cfg_.fraction = fraction;
    a.cfg_.validate();
    return a;
  }

  std::string apply(std::string_view text) const { return apply(text, cfg_.seed); }

  std::string apply(std::string_view text, std::uint64_t seed) const {
    AttackConfig c = cfg_;
    c.seed = seed;
    switch (c.kind) {
      case AttackKind::ngram_shuffle: return ngram_shuffle(text, c);
      case AttackKind::synonym: return synonym_substitute(text, c, lexicon_);
      case AttackKind::paraphrase: return paraphrase(text, c, rules_, remote_);
    }
    return std::string(text);
  }

 private:
  AttackConfig cfg_;
  ParaphraseFn remote_;
  Lexicon lexicon_;
  RuleTable rules_;
};

// ---------------------------------------------------------------------------
// Robustness measures

/// Fraction of the |x|-k+1 length-k windows of x that occur contiguously
/// somewhere in fx (multiplicity ignored).
template <typename T>
double local_consistency(std::span<const T> x, std::span<const T> fx, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  if (x.size() < k) throw std::invalid_argument("|x| must be >= k");
  const std::size_t windows = x.size() - k + 1;
  std::vector<std::span<const T>> present;
  if (fx.size() >= k)
    for (std::size_t i = 0; i + k <= fx.size(); ++i) present.push_back(fx.subspan(i, k));
  auto less = [](std::span<const T> a, std::span<const T> b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  };
  std::sort(present.begin(), present.end(), less);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < windows; ++i)
    hits += std::binary_search(present.begin(), present.end(), x.subspan(i, k), less);
  return static_cast<double>(hits) / static_cast<double>(windows);
}

/// Word-level consistency; k counts words.
inline double local_consistency(std::string_view x, std::string_view fx, std::size_t k) {
  auto xw = split_whitespace(x), fw = split_whitespace(fx);
  return local_consistency<std::string>(std::span<const std::string>(xw), std::span<const std::string>(fw), k);
}

struct Drift {
  double euclidean = 0.0;
  double cosine = 1.0;
};

inline Drift embedding_drift(std::string_view x, std::string_view x2, const Embedder& embedder) {
  auto a = embed_text(embedder, x);
  auto b = embed_text(embedder, x2);
  return {euclidean_distance(a, b), cosine_similarity(a, b)};
}

}  // namespace rstego
