#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace overopt {

enum class Method { bon, rl };

std::string_view to_string(Method method);

/// One (optimization amount, scores) sample. For BoN `step_or_n` is n; for
/// RL it is the step count.
struct TracePoint {
  std::int64_t step_or_n = 0;
  double kl_nats = 0.0;
  double d = 0.0;
  double proxy_score = 0.0;
  double gold_score = 0.0;
  /// Standard errors across contexts (BoN only; zero for exact RL traces).
  double proxy_se = 0.0;
  double gold_se = 0.0;
};

struct OptimizationTrace {
  Method method = Method::bon;
  std::vector<TracePoint> points;
  /// Configuration that produced the trace.
  nlohmann::json config = nlohmann::json::object();
};

}  // namespace overopt

namespace overopt {

/// Method label written to trace files: "bon" or "rl(mirror-ascent)".
std::string method_label(Method method);
/// Accepts "bon", "rl" and "rl(mirror-ascent)".
Method method_from_label(std::string_view label);

/// Columns: experiment_id, method, n (BoN) or step (RL), kl_nats, d,
/// proxy_score, gold_score, proxy_se, gold_se, seed, config_hash.
std::string trace_to_csv(const OptimizationTrace& trace, const std::string& experiment_id,
                         std::uint64_t seed, const std::string& config_hash);

/// Parses a trace file. Throws ConfigError listing every missing column.
OptimizationTrace trace_from_csv(std::string_view text);

}  // namespace overopt
