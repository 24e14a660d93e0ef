#pragma once

// Locality-sensitive hashes from embedding vectors to short bit strings:
// keyed random hyperplanes, PCA-trained projections, and an oracle test
// double with scripted, uniform and proximity-ball behaviour.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "rstego/crypto.hpp"
#include "rstego/embedding.hpp"
#include "rstego/util.hpp"

namespace rstego {

using HashBits = std::vector<std::uint8_t>;

namespace detail {
inline void check_dim(std::size_t expected, const EmbeddingVector& v) {
  if (v.size() != expected)
    throw std::invalid_argument("embedding dimension " + std::to_string(v.size()) +
                                " does not match LSH dimension " + std::to_string(expected));
}
}  // namespace detail

/// Bit b = 1 iff <hyperplane_b, v> >= 0.
class RandomProjectionLsh {
 public:
  RandomProjectionLsh(std::size_t bits, std::size_t dim, std::vector<double> hyperplanes, Bytes key_seed = {})
      : bits_(bits), dim_(dim), planes_(std::move(hyperplanes)), key_seed_(std::move(key_seed)) {
    if (bits_ == 0 || dim_ == 0) throw std::invalid_argument("hash bits and dimension must be positive");
    if (planes_.size() != bits_ * dim_) throw std::invalid_argument("hyperplane matrix has wrong size");
  }

  /// Gaussian hyperplanes from mt19937_64 seeded with SHA-256(key_seed), via
  /// Box-Muller; reconstructible by anyone holding the seed.
  static RandomProjectionLsh from_seed(const Bytes& key_seed, std::size_t bits, std::size_t dim) {
    auto d = sha256(key_seed);
    std::mt19937_64 rng(read_be64(d));
    std::vector<double> planes(bits * dim);
    for (std::size_t i = 0; i < planes.size(); i += 2) {
      double u1 = 1.0 - uniform01(rng);  // (0, 1]
      double u2 = uniform01(rng);
      double r = std::sqrt(-2.0 * std::log(u1));
      planes[i] = r * std::cos(2.0 * std::numbers::pi * u2);
      if (i + 1 < planes.size()) planes[i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
    }
    return RandomProjectionLsh(bits, dim, std::move(planes), key_seed);
  }

  std::size_t bits() const { return bits_; }
  std::size_t dimension() const { return dim_; }
  const std::vector<double>& hyperplanes() const { return planes_; }
  const Bytes& key_seed() const { return key_seed_; }

  HashBits hash(const EmbeddingVector& v) const {
    detail::check_dim(dim_, v);
    HashBits out(bits_);
    for (std::size_t b = 0; b < bits_; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) s += planes_[b * dim_ + i] * v[i];
      out[b] = s >= 0.0 ? 1 : 0;
    }
    return out;
  }

 private:
  std::size_t bits_, dim_;
  std::vector<double> planes_;
  Bytes key_seed_;
};

enum class ThresholdRule { zero, median };

/// Bit b = 1 iff <component_b, v - mean> >= threshold_b.
class PcaLsh {
 public:
  PcaLsh(std::size_t bits, std::size_t dim, std::vector<double> mean, std::vector<double> components,
         std::vector<double> thresholds, std::vector<double> eigenvalues = {})
      : bits_(bits), dim_(dim), mean_(std::move(mean)), components_(std::move(components)),
        thresholds_(std::move(thresholds)), eigenvalues_(std::move(eigenvalues)) {
    if (bits_ == 0 || dim_ == 0) throw std::invalid_argument("hash bits and dimension must be positive");
    if (mean_.size() != dim_ || components_.size() != bits_ * dim_ || thresholds_.size() != bits_)
      throw std::invalid_argument("PCA model has inconsistent shapes");
  }

  std::size_t bits() const { return bits_; }
  std::size_t dimension() const { return dim_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& components() const { return components_; }
  const std::vector<double>& thresholds() const { return thresholds_; }
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }

  double project(std::size_t b, const EmbeddingVector& v) const {
    double s = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) s += components_[b * dim_ + i] * (v[i] - mean_[i]);
    return s;
  }

  HashBits hash(const EmbeddingVector& v) const {
    detail::check_dim(dim_, v);
    HashBits out(bits_);
    for (std::size_t b = 0; b < bits_; ++b) out[b] = project(b, v) >= thresholds_[b] ? 1 : 0;
    return out;
  }

 private:
  std::size_t bits_, dim_;
  std::vector<double> mean_, components_, thresholds_, eigenvalues_;
};

/// Top-`bits` principal directions of the corpus (descending eigenvalue),
/// each sign-normalized so its largest-magnitude entry is positive.
inline PcaLsh train_pca_lsh(const std::vector<EmbeddingVector>& corpus, std::size_t bits,
                            ThresholdRule rule = ThresholdRule::zero) {
  if (bits == 0) throw std::invalid_argument("hash bits must be positive");
  if (corpus.size() < bits + 1)
    throw std::invalid_argument("PCA training needs at least hash_bits + 1 vectors");
  const std::size_t d = corpus.front().size();
  if (d < bits) throw std::invalid_argument("embedding dimension smaller than hash bits");
  Eigen::MatrixXd X(static_cast<Eigen::Index>(corpus.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    if (corpus[r].size() != d) throw std::invalid_argument("corpus vectors differ in dimension");
    for (std::size_t c = 0; c < d; ++c) X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = corpus[r][c];
  }
  Eigen::VectorXd mean = X.colwise().mean();
  Eigen::MatrixXd centered = X.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(corpus.size() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  const auto& evals = solver.eigenvalues();
  const auto& evecs = solver.eigenvectors();
  if (!(evals(evals.size() - 1) > 1e-14)) throw std::invalid_argument("corpus has zero variance");

  std::vector<double> components(bits * d), eigenvalues(bits), means(d);
  for (std::size_t c = 0; c < d; ++c) means[c] = mean(static_cast<Eigen::Index>(c));
  for (std::size_t b = 0; b < bits; ++b) {
    Eigen::Index col = evals.size() - 1 - static_cast<Eigen::Index>(b);
    Eigen::VectorXd u = evecs.col(col);
    Eigen::Index arg = 0;
    u.cwiseAbs().maxCoeff(&arg);
    if (u(arg) < 0) u = -u;
    eigenvalues[b] = evals(col);
    for (std::size_t c = 0; c < d; ++c) components[b * d + c] = u(static_cast<Eigen::Index>(c));
  }

  std::vector<double> thresholds(bits, 0.0);
  PcaLsh model(bits, d, means, components, thresholds, eigenvalues);
  if (rule == ThresholdRule::median) {
    for (std::size_t b = 0; b < bits; ++b) {
      std::vector<double> proj;
      for (auto& v : corpus) proj.push_back(model.project(b, v));
      std::sort(proj.begin(), proj.end());
      std::size_t m = proj.size() / 2;
      thresholds[b] = proj.size() % 2 ? proj[m] : 0.5 * (proj[m - 1] + proj[m]);
    }
    model = PcaLsh(bits, d, means, components, thresholds, eigenvalues);
  }
  return model;
}

enum class OracleMode { scripted, uniform, ball };

inline std::string to_string(OracleMode m) {
  switch (m) {
    case OracleMode::scripted: return "scripted";
    case OracleMode::uniform: return "uniform";
    case OracleMode::ball: return "ball";
  }
  return "uniform";
}

inline OracleMode oracle_mode_from_string(std::string_view s) {
  if (s == "scripted") return OracleMode::scripted;
  if (s == "uniform") return OracleMode::uniform;
  if (s == "ball") return OracleMode::ball;
  throw std::invalid_argument("unknown oracle mode '" + std::string(s) + "'");
}

struct OracleConfig {
  OracleMode mode = OracleMode::uniform;
  std::size_t bits = 1;
  std::size_t dimension = 0;       // 0: accept any dimension
  Bytes key{'o', 'r', 'a', 'c', 'l', 'e'};
  std::vector<HashBits> script;    // scripted: outputs returned in order, cycling
  double radius = 0.0;             // ball: queries within this distance of a seen vector reuse its hash
  double flip_probability = 0.0;   // chance that one random output bit is flipped per query
  std::uint64_t flip_seed = 0;
};

/// Test double standing in for an ideal LSH.
///  scripted : returns the configured outputs in order.
///  uniform  : keyed digest of the (quantized) vector, i.e. a random function.
///  ball     : like uniform, but any query within `radius` of a previously
///             hashed vector returns that vector's hash, so "nearby implies
///             equal hash" holds by construction.
/// Optional flip injection perturbs one bit with probability p_f per query.
/// Copies share state.
class OracleLsh {
 public:
  explicit OracleLsh(OracleConfig cfg) : state_(std::make_shared<State>(std::move(cfg))) {
    const auto& c = state_->cfg;
    if (c.bits == 0) throw std::invalid_argument("oracle hash bits must be positive");
    if (c.mode == OracleMode::scripted && c.script.empty())
      throw std::invalid_argument("scripted oracle needs at least one output");
    for (auto& s : c.script)
      if (s.size() != c.bits) throw std::invalid_argument("scripted output has wrong length");
    if (c.flip_probability < 0.0 || c.flip_probability > 1.0)
      throw std::invalid_argument("flip probability must be in [0, 1]");
  }

  const OracleConfig& config() const { return state_->cfg; }
  std::size_t bits() const { return state_->cfg.bits; }
  std::size_t dimension() const { return state_->cfg.dimension; }
  std::size_t queries() const {
    std::lock_guard lock(state_->mu);
    return state_->queries;
  }

  HashBits hash(const EmbeddingVector& v) const {
    auto& st = *state_;
    if (st.cfg.dimension) detail::check_dim(st.cfg.dimension, v);
    std::lock_guard lock(st.mu);
    ++st.queries;
    HashBits out;
    switch (st.cfg.mode) {
      case OracleMode::scripted:
        out = st.cfg.script[st.script_pos++ % st.cfg.script.size()];
        break;
      case OracleMode::uniform:
        out = digest_bits(v);
        break;
      case OracleMode::ball: {
        bool found = false;
        for (auto& [center, bits] : st.anchors) {
          if (center.size() == v.size() && euclidean_distance(center, v) <= st.cfg.radius) {
            out = bits;
            found = true;
            break;
          }
        }
        if (!found) {
          out = digest_bits(v);
          st.anchors.emplace_back(v, out);
        }
        break;
      }
    }
    if (st.cfg.flip_probability > 0.0 && uniform01(st.flip_rng) < st.cfg.flip_probability)
      out[uniform_below(st.flip_rng, out.size())] ^= 1;
    return out;
  }

 private:
  struct State {
    explicit State(OracleConfig c) : cfg(std::move(c)), flip_rng(cfg.flip_seed), mac(cfg.key) {}
    OracleConfig cfg;
    mutable std::mutex mu;
    std::size_t script_pos = 0;
    std::size_t queries = 0;
    std::vector<std::pair<EmbeddingVector, HashBits>> anchors;
    std::mt19937_64 flip_rng;
    HmacSha256 mac;
  };

  HashBits digest_bits(const EmbeddingVector& v) const {
    Bytes in;
    for (double x : v) append_be64(in, static_cast<std::uint64_t>(std::llround(x * 1e9)));
    auto d = state_->mac.mac(in);
    HashBits out(state_->cfg.bits);
    for (std::size_t b = 0; b < out.size(); ++b) {
      if (b % 256 == 0 && b > 0) {
        Bytes again(d.begin(), d.end());
        d = state_->mac.mac(again);
      }
      std::size_t r = b % 256;
      out[b] = (d[r / 8] >> (7 - r % 8)) & 1u;
    }
    return out;
  }

  std::shared_ptr<State> state_;
};

enum class LshKind { random_projection, pca, oracle };

inline std::string to_string(LshKind k) {
  switch (k) {
    case LshKind::random_projection: return "random_projection";
    case LshKind::pca: return "pca";
    case LshKind::oracle: return "oracle";
  }
  return "random_projection";
}

class LshModel {
 public:
  LshModel(RandomProjectionLsh m) : impl_(std::move(m)) {}
  LshModel(PcaLsh m) : impl_(std::move(m)) {}
  LshModel(OracleLsh m) : impl_(std::move(m)) {}

  LshKind kind() const { return static_cast<LshKind>(impl_.index()); }
  std::size_t bits() const {
    return std::visit([](const auto& m) { return m.bits(); }, impl_);
  }
  std::size_t dimension() const {
    return std::visit([](const auto& m) { return m.dimension(); }, impl_);
  }
  HashBits hash(const EmbeddingVector& v) const {
    return std::visit([&](const auto& m) { return m.hash(v); }, impl_);
  }

  template <typename T>
  const T& as() const {
    return std::get<T>(impl_);
  }

  /// {kind, hash_bits, dimension, seed or matrices (row-major), thresholds}.
  /// Doubles are written with round-trip precision.
  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", to_string(kind())}, {"hash_bits", bits()}, {"dimension", dimension()}};
    if (auto* rp = std::get_if<RandomProjectionLsh>(&impl_)) {
      j["seed"] = to_hex(rp->key_seed());
      j["hyperplanes"] = rp->hyperplanes();
    } else if (auto* pca = std::get_if<PcaLsh>(&impl_)) {
      j["mean"] = pca->mean();
      j["components"] = pca->components();
      j["thresholds"] = pca->thresholds();
      j["eigenvalues"] = pca->eigenvalues();
    } else {
      const auto& c = std::get<OracleLsh>(impl_).config();
      j["mode"] = to_string(c.mode);
      j["key"] = to_hex(c.key);
      j["radius"] = c.radius;
      j["flip_probability"] = c.flip_probability;
      j["flip_seed"] = c.flip_seed;
      nlohmann::json script = nlohmann::json::array();
      for (auto& s : c.script) script.push_back(s);
      j["script"] = script;
    }
    return j;
  }

  static LshModel from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    const auto bits = j.at("hash_bits").get<std::size_t>();
    const auto dim = j.value("dimension", std::size_t{0});
    if (kind == "random_projection") {
      Bytes seed = from_hex(j.value("seed", std::string{}));
      if (j.contains("hyperplanes"))
        return RandomProjectionLsh(bits, dim, j.at("hyperplanes").get<std::vector<double>>(), seed);
      if (seed.empty()) throw std::invalid_argument("random_projection LSH needs a seed or hyperplanes");
      return RandomProjectionLsh::from_seed(seed, bits, dim);
    }
    if (kind == "pca") {
      return PcaLsh(bits, dim, j.at("mean").get<std::vector<double>>(),
                    j.at("components").get<std::vector<double>>(),
                    j.at("thresholds").get<std::vector<double>>(),
                    j.value("eigenvalues", std::vector<double>{}));
    }
    if (kind == "oracle") {
      OracleConfig c;
      c.bits = bits;
      c.dimension = dim;
      c.mode = oracle_mode_from_string(j.value("mode", std::string("uniform")));
      if (j.contains("key")) c.key = from_hex(j.at("key").get<std::string>());
      c.radius = j.value("radius", 0.0);
      c.flip_probability = j.value("flip_probability", 0.0);
      c.flip_seed = j.value("flip_seed", std::uint64_t{0});
      if (j.contains("script"))
        for (auto& s : j.at("script")) c.script.push_back(s.get<HashBits>());
      return OracleLsh(std::move(c));
    }
    throw std::invalid_argument("unknown LSH kind '" + kind + "'");
  }

 private:
  std::variant<RandomProjectionLsh, PcaLsh, OracleLsh> impl_;
};

inline HashBits lsh_hash(const LshModel& model, const EmbeddingVector& v) { return model.hash(v); }

}  // namespace rstego
