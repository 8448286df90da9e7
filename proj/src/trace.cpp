#include <string>

#include "overopt/error.hpp"
#include "overopt/io.hpp"
#include "overopt/trace.hpp"

namespace overopt {

std::string_view to_string(Method method) { return method == Method::bon ? "bon" : "rl"; }

std::string method_label(Method method) {
  return method == Method::bon ? "bon" : "rl(mirror-ascent)";
}

Method method_from_label(std::string_view label) {
  if (label == "bon") return Method::bon;
  if (label == "rl" || label == "rl(mirror-ascent)") return Method::rl;
  throw ConfigError("method", "unknown method '" + std::string(label) + "'");
}

std::string trace_to_csv(const OptimizationTrace& trace, const std::string& experiment_id,
                         std::uint64_t seed, const std::string& config_hash) {
  std::string out = "experiment_id,method,";
  out += trace.method == Method::bon ? "n" : "step";
  out += ",kl_nats,d,proxy_score,gold_score,proxy_se,gold_se,seed,config_hash\n";
  const std::string label = method_label(trace.method);
  for (const auto& p : trace.points) {
    out += experiment_id;
    out += ',' + label;
    out += ',' + std::to_string(p.step_or_n);
    out += ',' + io::format_double(p.kl_nats);
    out += ',' + io::format_double(p.d);
    out += ',' + io::format_double(p.proxy_score);
    out += ',' + io::format_double(p.gold_score);
    out += ',' + io::format_double(p.proxy_se);
    out += ',' + io::format_double(p.gold_se);
    out += ',' + std::to_string(seed);
    out += ',' + config_hash;
    out += '\n';
  }
  return out;
}

OptimizationTrace trace_from_csv(std::string_view text) {
  const io::Table table = io::parse_table(text, ',');
  const int step_col = table.column("n") >= 0 ? table.column("n") : table.column("step");
  std::string missing;
  auto need = [&](const char* name) {
    const int c = table.column(name);
    if (c < 0) missing += missing.empty() ? name : std::string(", ") + name;
    return c;
  };
  const int method_col = need("method");
  const int kl_col = need("kl_nats");
  const int d_col = need("d");
  const int proxy_col = need("proxy_score");
  const int gold_col = need("gold_score");
  if (step_col < 0) missing += missing.empty() ? "n|step" : ", n|step";
  if (!missing.empty()) throw ConfigError("columns", "missing " + missing);
  const int proxy_se_col = table.column("proxy_se");
  const int gold_se_col = table.column("gold_se");

  OptimizationTrace trace;
  bool first = true;
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size())
      throw ConfigError("row", "expected " + std::to_string(table.header.size()) + " fields");
    auto at = [&](int c) -> const std::string& { return row[static_cast<std::size_t>(c)]; };
    const Method m = method_from_label(at(method_col));
    if (first) trace.method = m;
    first = false;
    TracePoint p;
    p.step_or_n = io::parse_int(at(step_col), "n");
    p.kl_nats = io::parse_double(at(kl_col), "kl_nats");
    p.d = io::parse_double(at(d_col), "d");
    p.proxy_score = io::parse_double(at(proxy_col), "proxy_score");
    p.gold_score = io::parse_double(at(gold_col), "gold_score");
    if (proxy_se_col >= 0) p.proxy_se = io::parse_double(at(proxy_se_col), "proxy_se");
    if (gold_se_col >= 0) p.gold_se = io::parse_double(at(gold_se_col), "gold_se");
    trace.points.push_back(p);
  }
  return trace;
}

}  // namespace overopt
