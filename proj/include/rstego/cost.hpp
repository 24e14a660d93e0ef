#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include <json.hpp>

namespace rstego {

/// Query cost of the embedding codec: n/h chunks, c queries per chunk, each
/// with W input and T_out output tokens.
struct CostModel {
  double n = 0;                  // bits to hide
  double h = 1;                  // bits per chunk
  std::optional<double> c;       // queries per chunk; 2^h when unset
  double W = 0;                  // input tokens per query
  double T_out = 0;              // output tokens per query
  double p_in = 0;               // price per input token
  double p_out = 0;              // price per output token

  void validate() const {
    if (h < 1) throw std::invalid_argument("h must be >= 1");
    if (n < 0 || W < 0 || T_out < 0 || p_in < 0 || p_out < 0 || (c && *c < 0))
      throw std::invalid_argument("cost model fields must be non-negative");
  }

  double queries_per_chunk() const { return c ? *c : std::pow(2.0, h); }
  double total_queries() const {
    validate();
    return n / h * queries_per_chunk();
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"n", n}, {"h", h}, {"W", W}, {"T_out", T_out}, {"p_in", p_in}, {"p_out", p_out}};
    if (c) j["c"] = *c;
    return j;
  }
};

/// (n/h) · c · (W·p_in + T_out·p_out).
inline double total_cost(const CostModel& cm) {
  return cm.total_queries() * (cm.W * cm.p_in + cm.T_out * cm.p_out);
}

}  // namespace rstego
