#pragma once

// Desk-scale experiment harness. Every experiment returns a CSV table whose
// rows depend only on the inputs and the master seed; trial i is seeded with
// derive_seed(seed, i) and results are ordered by trial index.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "rstego/attacks.hpp"
#include "rstego/codec.hpp"
#include "rstego/cost.hpp"
#include "rstego/profile.hpp"

namespace rstego {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const {
    std::string out = join(header, ",") + "\n";
    for (auto& r : rows) out += join(r, ",") + "\n";
    return out;
  }
};

inline std::string fmt_num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}
inline std::string fmt_num(std::size_t x) { return std::to_string(x); }

// ---------------------------------------------------------------------------

/// Occurrences of a c-gram that repeat an earlier one: positions - distinct.
inline std::size_t recurring_cgram_count(std::span<const TokenId> tokens, std::size_t c) {
  if (c == 0) throw std::invalid_argument("c must be >= 1");
  if (tokens.size() < c) return 0;
  std::set<std::vector<TokenId>> seen;
  const std::size_t positions = tokens.size() - c + 1;
  for (std::size_t i = 0; i < positions; ++i) seen.emplace(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                                           tokens.begin() + static_cast<std::ptrdiff_t>(i + c));
  return positions - seen.size();
}

struct RecurringCgrams {
  std::vector<std::size_t> c_values;
  std::vector<std::vector<std::size_t>> counts;  // [c index][sample]

  double mean(std::size_t ci) const {
    double s = 0.0;
    for (auto x : counts[ci]) s += static_cast<double>(x);
    return counts[ci].empty() ? 0.0 : s / static_cast<double>(counts[ci].size());
  }

  CsvTable table() const {
    CsvTable t{{"c", "mean_recurring", "min_recurring", "max_recurring"}, {}};
    for (std::size_t i = 0; i < c_values.size(); ++i) {
      auto [lo, hi] = std::minmax_element(counts[i].begin(), counts[i].end());
      t.rows.push_back({fmt_num(c_values[i]), fmt_num(mean(i)), fmt_num(*lo), fmt_num(*hi)});
    }
    return t;
  }
};

inline RecurringCgrams experiment_recurring_cgrams(const LanguageModel& model, std::size_t samples,
                                                   std::size_t tokens_per_sample,
                                                   std::vector<std::size_t> c_values, std::uint64_t seed,
                                                   const std::string& prompt = {}, unsigned workers = 0) {
  if (samples == 0 || tokens_per_sample == 0 || c_values.empty())
    throw std::invalid_argument("recurring_cgrams: empty grid");
  auto texts = parallel_map<std::vector<TokenId>>(
      samples,
      [&](std::size_t s) {
        return sample_response(model, prompt, tokens_per_sample, derive_seed(seed, s), tokens_per_sample);
      },
      workers);
  RecurringCgrams r{std::move(c_values), {}};
  for (auto c : r.c_values) {
    std::vector<std::size_t> row;
    for (auto& t : texts) row.push_back(recurring_cgram_count(t, c));
    r.counts.push_back(std::move(row));
  }
  return r;
}

// ---------------------------------------------------------------------------

inline CsvTable experiment_delta_vs_length(std::size_t n, double epsilon, const std::vector<double>& deltas,
                                           double safety_factor = 1.0) {
  if (deltas.empty()) throw std::invalid_argument("delta grid must not be empty");
  CsvTable t{{"delta", "p_w", "z_threshold", "required_length"}, {}};
  const double z = detection_threshold(n, epsilon);
  for (double d : deltas)
    t.rows.push_back({fmt_num(d), fmt_num(p_w(d)), fmt_num(z), fmt_num(required_length(n, d, epsilon, safety_factor))});
  return t;
}

// ---------------------------------------------------------------------------

struct RejectionRow {
  std::size_t hash_bits = 0;
  std::size_t chunks = 0;
  double mean_attempts = 0.0;
  std::size_t misses = 0;
};

using LshFactory = std::function<LshModel(std::size_t hash_bits)>;

/// Rejection-sampling cost per chunk. Chunks are split into messages of
/// `chunks_per_message` so the conditioning history stays short.
inline std::vector<RejectionRow> experiment_rejection_sampling(
    const LanguageModel& model, const Embedder& embedder, const LshFactory& make_lsh,
    const std::vector<std::size_t>& hash_bits_grid, std::size_t chunks, std::uint64_t seed,
    std::size_t chunk_tokens = 20, std::size_t chunks_per_message = 10, std::size_t max_attempts = 0) {
  if (hash_bits_grid.empty() || chunks == 0) throw std::invalid_argument("rejection_sampling: empty grid");
  std::vector<RejectionRow> rows;
  for (std::size_t gi = 0; gi < hash_bits_grid.size(); ++gi) {
    const std::size_t h = hash_bits_grid[gi];
    auto lsh = make_lsh(h);
    EmbedParams params;
    params.hash_bits = h;
    params.chunk_tokens = chunk_tokens;
    params.max_attempts = max_attempts ? max_attempts : (std::size_t{16} << h);
    RejectionRow row{h, 0, 0.0, 0};
    double total = 0.0;
    std::mt19937_64 rng(derive_seed(seed, 1000 + gi));
    for (std::size_t m = 0; row.chunks < chunks; ++m) {
      const std::size_t r = std::min(chunks_per_message, chunks - row.chunks);
      Bits msg(r * h);
      for (auto& b : msg) b = static_cast<std::uint8_t>(rng() & 1);
      auto res = encode_embedded(msg, model, embedder, lsh, ChannelHistory{}, params, derive_seed(derive_seed(seed, gi), m));
      for (auto a : res.attempts) total += static_cast<double>(a);
      row.misses += res.misses();
      row.chunks += r;
    }
    row.mean_attempts = total / static_cast<double>(row.chunks);
    rows.push_back(row);
  }
  return rows;
}

inline CsvTable rejection_table(const std::vector<RejectionRow>& rows) {
  CsvTable t{{"hash_bits", "chunks", "mean_attempts", "expected_attempts", "misses"}, {}};
  for (auto& r : rows)
    t.rows.push_back({fmt_num(r.hash_bits), fmt_num(r.chunks), fmt_num(r.mean_attempts),
                      fmt_num(std::pow(2.0, static_cast<double>(r.hash_bits))), fmt_num(r.misses)});
  return t;
}

// ---------------------------------------------------------------------------

struct DriftRow {
  std::string attack, mode;
  double fraction = 0.0;
  double mean_euclid = 0.0, mean_cosine = 0.0, mean_consistency = 0.0;
};

/// Mean embedding drift and k-consistency of each attack over `texts`.
/// Texts shorter than k words are skipped for consistency.
inline std::vector<DriftRow> experiment_drift(const std::vector<std::string>& texts,
                                              const std::vector<AttackConfig>& attacks,
                                              const std::vector<double>& fractions, const Embedder& embedder,
                                              std::size_t k, std::uint64_t seed, unsigned workers = 0) {
  if (texts.empty() || attacks.empty() || fractions.empty()) throw std::invalid_argument("drift: empty grid");
  std::vector<DriftRow> rows;
  for (std::size_t ai = 0; ai < attacks.size(); ++ai) {
    for (double f : fractions) {
      AttackConfig cfg = attacks[ai];
      cfg.fraction = f;
      const Attacker attacker(cfg);
      struct Sample {
        double e = 0, c = 0, k = 0;
        bool has_k = false;
      };
      auto samples = parallel_map<Sample>(
          texts.size(),
          [&](std::size_t i) {
            auto attacked = attacker.apply(texts[i], derive_seed(derive_seed(seed, ai), i));
            Sample s;
            auto d = embedding_drift(texts[i], attacked, embedder);
            s.e = d.euclidean;
            s.c = d.cosine;
            if (split_whitespace(texts[i]).size() >= k) {
              s.k = local_consistency(texts[i], attacked, k);
              s.has_k = true;
            }
            return s;
          },
          workers);
      DriftRow row;
      row.attack = to_string(cfg.kind);
      row.mode = to_string(cfg.mode);
      row.fraction = f;
      std::size_t nk = 0;
      for (auto& s : samples) {
        row.mean_euclid += s.e;
        row.mean_cosine += s.c;
        if (s.has_k) {
          row.mean_consistency += s.k;
          ++nk;
        }
      }
      row.mean_euclid /= static_cast<double>(samples.size());
      row.mean_cosine /= static_cast<double>(samples.size());
      row.mean_consistency = nk ? row.mean_consistency / static_cast<double>(nk) : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

inline CsvTable drift_table(const std::vector<DriftRow>& rows) {
  CsvTable t{{"attack", "mode", "fraction", "mean_drift_euclid", "mean_drift_cosine", "mean_consistency"}, {}};
  for (auto& r : rows)
    t.rows.push_back({r.attack, r.mode, fmt_num(r.fraction), fmt_num(r.mean_euclid), fmt_num(r.mean_cosine),
                      fmt_num(r.mean_consistency)});
  return t;
}

// ---------------------------------------------------------------------------

struct SweepConfig {
  std::size_t trials = 20;
  std::size_t message_bits = 3;
  std::uint64_t seed = 0;
  std::vector<double> fractions{0.0, 0.05, 0.1, 0.2};
  std::vector<AttackConfig> attacks;
  std::size_t consistency_k = 3;
  unsigned workers = 0;

  static SweepConfig from_json(const nlohmann::json& j) {
    SweepConfig c;
    c.trials = j.value("trials", c.trials);
    c.message_bits = j.value("message_bits", c.message_bits);
    c.seed = j.value("seed", c.seed);
    if (j.contains("fractions")) c.fractions = j.at("fractions").get<std::vector<double>>();
    if (j.contains("attacks"))
      for (auto& a : j.at("attacks")) c.attacks.push_back(AttackConfig::from_json(a));
    c.consistency_k = j.value("consistency_k", c.consistency_k);
    c.workers = j.value("workers", c.workers);
    if (c.trials == 0 || c.fractions.empty() || c.attacks.empty())
      throw std::invalid_argument("attack sweep needs trials, fractions and attacks");
    return c;
  }
};

struct SweepRow {
  std::string attack, mode;
  double fraction = 0.0;
  double bitwise_recovery = 0.0, perfect_recovery = 0.0;
  double mean_euclid = 0.0, mean_cosine = 0.0, mean_consistency = 0.0;
  std::vector<double> trial_bitwise;  // per-trial fraction of payload bits recovered
};

/// Encodes one random payload per trial under the profile, then decodes it
/// after every (attack, fraction) pair. Embedding-scheme documents are
/// attacked chunk by chunk so the delimiter survives.
inline std::vector<SweepRow> experiment_attack_sweep(const Profile& profile, const SweepConfig& cfg,
                                                     const std::vector<Attacker>& attackers) {
  if (attackers.size() != cfg.attacks.size()) throw std::invalid_argument("one attacker per attack entry");
  auto model = make_model(profile);
  auto embedder = make_embedder(profile);
  std::optional<LshModel> lsh;
  if (profile.scheme == Scheme::embedding) lsh = load_lsh(profile);
  const auto& vocab = model->vocabulary();

  struct Trial {
    Bits payload;
    Bytes key;
    std::string text;
  };
  auto trials = parallel_map<Trial>(
      cfg.trials,
      [&](std::size_t t) {
        const std::uint64_t ts = derive_seed(cfg.seed, t);
        std::mt19937_64 rng(ts);
        Trial tr;
        tr.payload.resize(cfg.message_bits);
        for (auto& b : tr.payload) b = static_cast<std::uint8_t>(rng() & 1);
        Bytes seed_bytes;
        append_be64(seed_bytes, ts);
        auto d = sha256(seed_bytes);
        tr.key.assign(d.begin(), d.end());
        if (profile.scheme == Scheme::watermark) {
          tr.text = watermark_encode_payload(tr.key, tr.payload, profile.ecc, profile.history, *model,
                                             profile.watermark, mix64(ts))
                        .text;
        } else {
          tr.text = embedding_encode_payload(tr.payload, profile.ecc, *model, *embedder, *lsh, profile.history,
                                             profile.embedding, mix64(ts))
                        .document.text;
        }
        return tr;
      },
      cfg.workers);

  std::vector<SweepRow> rows;
  for (std::size_t ai = 0; ai < attackers.size(); ++ai) {
    for (std::size_t fi = 0; fi < cfg.fractions.size(); ++fi) {
      const Attacker attacker = attackers[ai].with_fraction(cfg.fractions[fi]);
      const AttackConfig& ac = attacker.config();
      struct Outcome {
        double bits = 0, e = 0, c = 0, k = 0;
        bool perfect = false;
      };
      auto outcomes = parallel_map<Outcome>(
          cfg.trials,
          [&](std::size_t t) {
            const auto& tr = trials[t];
            const std::uint64_t as = derive_seed(derive_seed(derive_seed(cfg.seed, 7 + ai), fi), t);
            std::string attacked;
            if (profile.scheme == Scheme::embedding) {
              auto chunks = split_chunks(tr.text);
              for (std::size_t c = 0; c < chunks.size(); ++c) chunks[c] = attacker.apply(chunks[c], derive_seed(as, c));
              attacked = join_chunks(chunks);
            } else {
              attacked = attacker.apply(tr.text, as);
            }
            Bits got;
            try {
              if (profile.scheme == Scheme::watermark) {
                StegoDocument doc;
                doc.text = attacked;
                doc.token_indices = tokenize_lenient(vocab, attacked);
                if (doc.token_indices.empty()) throw DecodeError("empty stegotext");
                got = watermark_decode_payload(tr.key, tr.payload.size(), profile.ecc, profile.history, doc, vocab,
                                               profile.watermark)
                          .payload;
              } else {
                got = embedding_decode_payload(attacked, tr.payload.size(), profile.ecc, *embedder, *lsh);
              }
            } catch (const DecodeError&) {
              got.clear();
            } catch (const FramingError&) {
              got.clear();
            }
            Outcome o;
            std::size_t ok = 0;
            for (std::size_t i = 0; i < tr.payload.size(); ++i) ok += i < got.size() && got[i] == tr.payload[i];
            o.bits = static_cast<double>(ok) / static_cast<double>(tr.payload.size());
            o.perfect = ok == tr.payload.size();
            auto d = embedding_drift(tr.text, attacked, *embedder);
            o.e = d.euclidean;
            o.c = d.cosine;
            o.k = split_whitespace(tr.text).size() >= cfg.consistency_k
                      ? local_consistency(tr.text, attacked, cfg.consistency_k)
                      : 0.0;
            return o;
          },
          cfg.workers);

      SweepRow row;
      row.attack = to_string(ac.kind);
      row.mode = to_string(ac.mode);
      row.fraction = ac.fraction;
      for (auto& o : outcomes) {
        row.bitwise_recovery += o.bits;
        row.perfect_recovery += o.perfect ? 1.0 : 0.0;
        row.mean_euclid += o.e;
        row.mean_cosine += o.c;
        row.mean_consistency += o.k;
        row.trial_bitwise.push_back(o.bits);
      }
      const double n = static_cast<double>(outcomes.size());
      row.bitwise_recovery /= n;
      row.perfect_recovery /= n;
      row.mean_euclid /= n;
      row.mean_cosine /= n;
      row.mean_consistency /= n;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::vector<SweepRow> experiment_attack_sweep(const Profile& profile, const SweepConfig& cfg) {
  std::vector<Attacker> attackers;
  for (auto a : cfg.attacks) {
    if (a.kind == AttackKind::synonym) a.lexicon_path = profile.resolve(a.lexicon_path);
    if (!a.rules_path.empty()) a.rules_path = profile.resolve(a.rules_path);
    attackers.emplace_back(a);
  }
  return experiment_attack_sweep(profile, cfg, attackers);
}

inline const std::vector<std::string>& attack_sweep_columns() {
  static const std::vector<std::string> kColumns = {
      "attack", "mode", "fraction", "bitwise_recovery", "perfect_recovery",
      "mean_drift_euclid", "mean_drift_cosine", "mean_consistency"};
  return kColumns;
}

inline CsvTable sweep_table(const std::vector<SweepRow>& rows) {
  CsvTable t{attack_sweep_columns(), {}};
  for (auto& r : rows)
    t.rows.push_back({r.attack, r.mode, fmt_num(r.fraction), fmt_num(r.bitwise_recovery),
                      fmt_num(r.perfect_recovery), fmt_num(r.mean_euclid), fmt_num(r.mean_cosine),
                      fmt_num(r.mean_consistency)});
  return t;
}

// ---------------------------------------------------------------------------

inline CsvTable cost_table(const std::vector<CostModel>& models) {
  CsvTable t{{"n", "h", "c", "W", "T_out", "p_in", "p_out", "total_queries", "total_cost"}, {}};
  for (auto& m : models)
    t.rows.push_back({fmt_num(m.n), fmt_num(m.h), fmt_num(m.queries_per_chunk()), fmt_num(m.W), fmt_num(m.T_out),
                      fmt_num(m.p_in), fmt_num(m.p_out), fmt_num(m.total_queries()), fmt_num(total_cost(m))});
  return t;
}

// ---------------------------------------------------------------------------

inline CostModel cost_model_from_json(const nlohmann::json& j) {
  CostModel m;
  m.n = j.value("n", m.n);
  m.h = j.value("h", m.h);
  if (j.contains("c") && !j.at("c").is_null()) m.c = j.at("c").get<double>();
  m.W = j.value("W", m.W);
  m.T_out = j.value("T_out", m.T_out);
  m.p_in = j.value("p_in", m.p_in);
  m.p_out = j.value("p_out", m.p_out);
  m.validate();
  return m;
}

/// Paragraphs (blank-line separated) of every regular file under `path`, or
/// of `path` itself when it is a file. Files are visited in sorted order.
inline std::vector<std::string> load_paragraphs(const std::string& path) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  if (fs::is_directory(path)) {
    for (auto& e : fs::recursive_directory_iterator(path))
      if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  std::vector<std::string> out;
  for (auto& f : files)
    for (auto& p : split_chunks(read_file(f))) out.push_back(p);
  if (out.empty()) throw std::invalid_argument("no text found under " + path);
  return out;
}

/// Runs an experiment described by JSON:
///   {"which": recurring_cgrams | delta_vs_length | rejection_sampling |
///             drift | attack_sweep | cost, "seed": s, ...grid fields}
/// Paths in the spec resolve against `base_dir`.
inline CsvTable run_experiment(const nlohmann::json& spec, const std::filesystem::path& base_dir = {},
                               std::optional<std::uint64_t> seed_override = std::nullopt) {
  auto resolve = [&](const std::string& rel) {
    std::filesystem::path p(rel);
    return p.is_absolute() || base_dir.empty() ? rel : (base_dir / p).string();
  };
  auto load_profile = [&]() {
    if (!spec.contains("profile")) {
      Profile p;
      p.base_dir = base_dir;
      return p;
    }
    const auto& pj = spec.at("profile");
    if (pj.is_string()) return Profile::load(resolve(pj.get<std::string>()));
    return Profile::from_json(pj, base_dir);
  };
  const std::string which = spec.at("which").get<std::string>();
  const std::uint64_t seed = seed_override.value_or(spec.value("seed", std::uint64_t{0}));
  const unsigned workers = spec.value("workers", 0u);

  if (which == "recurring_cgrams") {
    auto profile = load_profile();
    auto model = make_model(profile);
    return experiment_recurring_cgrams(*model, spec.value("samples", std::size_t{100}),
                                       spec.value("tokens_per_sample", std::size_t{100}),
                                       spec.value("c_values", std::vector<std::size_t>{1, 2, 3, 4, 5}), seed,
                                       profile.history.context_text(), workers)
        .table();
  }
  if (which == "delta_vs_length") {
    return experiment_delta_vs_length(spec.value("n", std::size_t{3}), spec.value("epsilon", 0.05),
                                      spec.value("deltas", std::vector<double>{0.05, 0.1, 0.2, 0.3, 0.5}),
                                      spec.value("safety_factor", 1.0));
  }
  if (which == "rejection_sampling") {
    auto profile = load_profile();
    auto model = make_model(profile);
    auto embedder = make_embedder(profile);
    const std::string lsh_kind = spec.value("lsh", std::string("oracle_uniform"));
    const std::size_t dim = embedder->dimension();
    LshFactory factory = [&](std::size_t h) -> LshModel {
      Bytes key;
      append_be64(key, seed);
      if (lsh_kind == "random_projection") return RandomProjectionLsh::from_seed(key, h, dim);
      if (lsh_kind == "oracle_uniform") {
        OracleConfig c;
        c.bits = h;
        c.key = key;
        return OracleLsh(c);
      }
      throw std::invalid_argument("rejection_sampling: lsh must be oracle_uniform or random_projection");
    };
    return rejection_table(experiment_rejection_sampling(
        *model, *embedder, factory, spec.value("hash_bits", std::vector<std::size_t>{1, 2, 4}),
        spec.value("chunks", std::size_t{200}), seed, spec.value("chunk_tokens", std::size_t{20}),
        spec.value("chunks_per_message", std::size_t{10}), spec.value("max_attempts", std::size_t{0})));
  }
  if (which == "drift") {
    auto profile = load_profile();
    auto embedder = make_embedder(profile);
    auto texts = load_paragraphs(resolve(spec.at("texts_path").get<std::string>()));
    std::vector<AttackConfig> attacks;
    for (auto& a : spec.at("attacks")) {
      auto c = AttackConfig::from_json(a);
      if (!c.lexicon_path.empty()) c.lexicon_path = resolve(c.lexicon_path);
      if (!c.rules_path.empty()) c.rules_path = resolve(c.rules_path);
      attacks.push_back(c);
    }
    return drift_table(experiment_drift(texts, attacks,
                                        spec.value("fractions", std::vector<double>{0.05, 0.1, 0.2, 0.5}),
                                        *embedder, spec.value("k", std::size_t{3}), seed, workers));
  }
  if (which == "attack_sweep") {
    auto profile = load_profile();
    auto cfg = SweepConfig::from_json(spec);
    cfg.seed = seed;
    for (auto& a : cfg.attacks) {
      if (!a.lexicon_path.empty()) a.lexicon_path = resolve(a.lexicon_path);
      if (!a.rules_path.empty()) a.rules_path = resolve(a.rules_path);
    }
    std::vector<Attacker> attackers;
    for (auto& a : cfg.attacks) attackers.emplace_back(a);
    return sweep_table(experiment_attack_sweep(profile, cfg, attackers));
  }
  if (which == "cost") {
    std::vector<CostModel> models;
    for (auto& m : spec.at("models")) models.push_back(cost_model_from_json(m));
    if (models.empty()) throw std::invalid_argument("cost: empty grid");
    return cost_table(models);
  }
  throw std::invalid_argument("unknown experiment '" + which + "'");
}

}  // namespace rstego
