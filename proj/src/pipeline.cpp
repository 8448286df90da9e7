#include "overopt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "overopt/bon.hpp"
#include "overopt/error.hpp"
#include "overopt/io.hpp"
#include "overopt/parallel.hpp"
#include "overopt/scaling_fit.hpp"

namespace overopt::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
T read_field(const json& doc, const std::string& key, const std::string& path) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + key, "wrong type or missing");
  }
}

void reject_unknown(const json& doc, const std::set<std::string>& known, const std::string& path) {
  if (!doc.is_object()) throw ConfigError(path.empty() ? "config" : path, "must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw ConfigError(path + key, "unknown field");
  }
}

std::string format_lambda(double lambda) { return io::format_double(lambda); }

json read_json(const fs::path& path) {
  const std::string text = io::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

fs::path trace_path(const fs::path& dir, const std::string& id) {
  return dir / "traces" / (id + ".csv");
}
fs::path fit_path(const fs::path& dir, const std::string& id) {
  return dir / "fits" / (id + ".json");
}

std::string axis_key(Method method, int capacity, std::size_t data_size, double lambda) {
  return std::string(to_string(method)) + "|" + std::to_string(capacity) + "|" +
         std::to_string(data_size) + "|" + format_lambda(lambda);
}

}  // namespace

std::vector<std::int64_t> default_n_grid() {
  std::vector<std::int64_t> grid;
  const double top = std::log(60000.0);
  for (int i = 0; i < 30; ++i) {
    const auto n = static_cast<std::int64_t>(std::llround(std::exp(top * i / 29.0)));
    if (grid.empty() || grid.back() != n) grid.push_back(n);
  }
  grid.back() = 60000;
  return grid;
}

json SweepConfig::to_json() const {
  json doc = {{"capacities", capacities},
              {"data_sizes", data_sizes},
              {"seeds", seeds},
              {"method", run_bon && run_rl ? "both" : run_bon ? "bon" : "rl"},
              {"lambdas", lambdas},
              {"holdout_fraction", holdout_fraction},
              {"label_mode", label_mode == labeling::LabelMode::hard ? "hard" : "sampled"},
              {"policy_temperature", policy_temperature},
              {"train",
               {{"l2", train.l2},
                {"grad_tolerance", train.grad_tolerance},
                {"epochs", train.epochs},
                {"steps_per_epoch", train.steps_per_epoch}}},
              {"bon", {{"n_grid", n_grid}, {"pool_size", pool_size}}},
              {"rl", {{"eta", rl.eta}, {"steps", rl.steps}, {"record_every", rl.record_every}}}};
  if (mask_seed) doc["mask_seed"] = *mask_seed;
  return doc;
}

SweepConfig SweepConfig::from_json(const json& doc) {
  reject_unknown(doc,
                 {"capacities", "data_sizes", "seeds", "method", "lambdas", "holdout_fraction",
                  "label_mode", "policy_temperature", "train", "mask_seed", "bon", "rl"},
                 "");
  SweepConfig c;
  c.capacities = read_field<std::vector<int>>(doc, "capacities", "");
  c.data_sizes = read_field<std::vector<std::size_t>>(doc, "data_sizes", "");
  c.seeds = read_field<std::vector<std::uint64_t>>(doc, "seeds", "");
  if (c.capacities.empty()) throw ConfigError("capacities", "axis is empty");
  if (c.data_sizes.empty()) throw ConfigError("data_sizes", "axis is empty");
  if (c.seeds.empty()) throw ConfigError("seeds", "axis is empty");
  for (int k : c.capacities)
    if (k < 0) throw ConfigError("capacities", "must be >= 0");
  for (std::size_t n : c.data_sizes)
    if (n < 2) throw ConfigError("data_sizes", "must be >= 2");

  const std::string method = doc.contains("method") ? read_field<std::string>(doc, "method", "") : "bon";
  if (method == "bon") {
    c.run_bon = true, c.run_rl = false;
  } else if (method == "rl") {
    c.run_bon = false, c.run_rl = true;
  } else if (method == "both") {
    c.run_bon = true, c.run_rl = true;
  } else {
    throw ConfigError("method", "must be bon, rl or both");
  }
  if (doc.contains("lambdas")) c.lambdas = read_field<std::vector<double>>(doc, "lambdas", "");
  if (c.lambdas.empty()) throw ConfigError("lambdas", "axis is empty");
  for (double l : c.lambdas)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambdas", "must be finite and >= 0");
  if (doc.contains("holdout_fraction"))
    c.holdout_fraction = read_field<double>(doc, "holdout_fraction", "");
  if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0))
    throw ConfigError("holdout_fraction", "must be in (0, 1)");
  if (doc.contains("label_mode")) {
    const auto mode = read_field<std::string>(doc, "label_mode", "");
    if (mode == "hard")
      c.label_mode = labeling::LabelMode::hard;
    else if (mode == "sampled")
      c.label_mode = labeling::LabelMode::sampled;
    else
      throw ConfigError("label_mode", "must be hard or sampled");
  }
  if (doc.contains("policy_temperature"))
    c.policy_temperature = read_field<double>(doc, "policy_temperature", "");
  if (!(c.policy_temperature > 0.0)) throw ConfigError("policy_temperature", "must be > 0");
  if (doc.contains("mask_seed")) c.mask_seed = read_field<std::uint64_t>(doc, "mask_seed", "");

  if (doc.contains("train")) {
    const json& t = doc.at("train");
    reject_unknown(t, {"l2", "grad_tolerance", "epochs", "steps_per_epoch"}, "train.");
    if (t.contains("l2")) c.train.l2 = read_field<double>(t, "l2", "train.");
    if (t.contains("grad_tolerance"))
      c.train.grad_tolerance = read_field<double>(t, "grad_tolerance", "train.");
    if (t.contains("epochs")) c.train.epochs = read_field<int>(t, "epochs", "train.");
    if (t.contains("steps_per_epoch"))
      c.train.steps_per_epoch = read_field<int>(t, "steps_per_epoch", "train.");
    if (!(c.train.l2 >= 0.0)) throw ConfigError("train.l2", "must be >= 0");
    if (!(c.train.grad_tolerance > 0.0)) throw ConfigError("train.grad_tolerance", "must be > 0");
    if (c.train.epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
    if (c.train.steps_per_epoch < 1) throw ConfigError("train.steps_per_epoch", "must be >= 1");
  }
  if (doc.contains("bon")) {
    const json& b = doc.at("bon");
    reject_unknown(b, {"n_grid", "pool_size"}, "bon.");
    if (b.contains("n_grid")) c.n_grid = read_field<std::vector<std::int64_t>>(b, "n_grid", "bon.");
    if (b.contains("pool_size")) c.pool_size = read_field<std::int64_t>(b, "pool_size", "bon.");
    if (c.n_grid.empty()) throw ConfigError("bon.n_grid", "axis is empty");
    if (!std::is_sorted(c.n_grid.begin(), c.n_grid.end()) || c.n_grid.front() < 1)
      throw ConfigError("bon.n_grid", "must be ascending and >= 1");
    if (c.pool_size < 0) throw ConfigError("bon.pool_size", "must be >= 0");
  }
  if (doc.contains("rl")) {
    const json& r = doc.at("rl");
    reject_unknown(r, {"eta", "steps", "record_every"}, "rl.");
    if (r.contains("eta")) c.rl.eta = read_field<double>(r, "eta", "rl.");
    if (r.contains("steps")) c.rl.steps = read_field<int>(r, "steps", "rl.");
    if (r.contains("record_every")) c.rl.record_every = read_field<int>(r, "record_every", "rl.");
    if (!(c.rl.eta > 0.0)) throw ConfigError("rl.eta", "must be > 0");
    if (c.rl.steps < 1) throw ConfigError("rl.steps", "must be >= 1");
    if (c.rl.record_every < 1) throw ConfigError("rl.record_every", "must be >= 1");
  }
  return c;
}

std::string RmKey::id() const {
  return "cap" + std::to_string(capacity) + "_data" + std::to_string(data_size) + "_seed" +
         std::to_string(seed);
}

std::string Cell::id() const {
  std::string out = rm.id() + "_" + std::string(to_string(method));
  if (method == Method::rl) out += "_lambda" + format_lambda(lambda);
  return out;
}

std::vector<RmKey> rm_keys(const SweepConfig& config) {
  std::vector<RmKey> keys;
  for (int k : config.capacities)
    for (std::size_t n : config.data_sizes)
      for (std::uint64_t s : config.seeds) keys.push_back({k, n, s});
  return keys;
}

std::vector<Cell> cells(const SweepConfig& config) {
  std::vector<Cell> out;
  for (const RmKey& key : rm_keys(config)) {
    if (config.run_bon) out.push_back({key, Method::bon, 0.0});
    if (config.run_rl)
      for (double l : config.lambdas) out.push_back({key, Method::rl, l});
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  return io::fnv1a(std::to_string(seed) + ":" + std::string(purpose));
}

std::string config_hash(const WorldConfig& world, const SweepConfig& sweep) {
  return io::hex64(io::fnv1a(world.to_json().dump() + "\n" + sweep.to_json().dump()));
}

TrainedProxy train_for_sweep(const World& world, const RewardModel& gold_rm, const Policy& initial,
                             const SweepConfig& config, const RmKey& key) {
  const auto dataset =
      labeling::generate_comparisons(world, gold_rm, initial, key.data_size, config.holdout_fraction,
                                     derive_seed(key.seed, "comparisons"), config.label_mode);
  proxy::TrainConfig train = config.train;
  train.mask_seed = config.mask_seed.value_or(world.seed());
  TrainedProxy out;
  out.rm = proxy::train_proxy(dataset, world, key.capacity, train);
  out.validation_loss = proxy::validation_loss(out.rm, world, dataset);
  out.accuracy = proxy::accuracy(out.rm, world, dataset);
  out.soft_label_loss_before = proxy::soft_label_loss(out.rm, world, dataset);
  if (key.capacity > 0) out.rm = proxy::recalibrate(out.rm, world, dataset);
  out.soft_label_loss_after = proxy::soft_label_loss(out.rm, world, dataset);
  out.rm = proxy::normalize(out.rm, world, initial, false);
  out.rm.training["label_mode"] =
      config.label_mode == labeling::LabelMode::hard ? "hard" : "sampled";
  out.rm.training["holdout_fraction"] = config.holdout_fraction;
  out.rm.training["validation_loss"] = out.validation_loss;
  out.rm.training["accuracy"] = out.accuracy;
  out.rm.training["soft_label_loss_before"] = out.soft_label_loss_before;
  out.rm.training["soft_label_loss_after"] = out.soft_label_loss_after;
  return out;
}

std::optional<double> gold_at_n(const OptimizationTrace& trace, std::int64_t n) {
  const auto& pts = trace.points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].step_or_n == n) return pts[i].gold_score;
    if (i > 0 && pts[i - 1].step_or_n < n && pts[i].step_or_n > n) {
      const double d = std::sqrt(bon::kl_bon(n));
      const double t = (d - pts[i - 1].d) / (pts[i].d - pts[i - 1].d);
      return pts[i - 1].gold_score + t * (pts[i].gold_score - pts[i - 1].gold_score);
    }
  }
  return std::nullopt;
}

json fit_summary(const OptimizationTrace& trace) {
  std::vector<fit::Point> points;
  int dropped = 0;
  for (const auto& p : trace.points) {
    if (trace.method == Method::rl && p.d <= fit::kDefaultDFloor) {
      ++dropped;
      continue;
    }
    points.push_back({p.d, p.gold_score, 1.0});
  }
  json out;
  const fit::Form form = trace.method == Method::bon ? fit::Form::bon : fit::Form::rl;
  out["form"] = fit::to_string(form);
  out["dropped_points"] = dropped;
  try {
    const auto f = fit::fit_form(points, form);
    out["alpha"] = f.alpha;
    out["beta"] = f.beta;
    out["rmse"] = f.rmse;
    out["point_count"] = f.point_count;
    try {
      const auto peak = fit::predict_peak(f);
      out["peak"] = {{"d_star", peak.d_star}, {"r_star", peak.r_star}};
    } catch (const DomainError&) {
      out["peak"] = nullptr;
    }
  } catch (const Error& e) {
    out["fit_error"] = e.what();
  }
  double peak = -INFINITY;
  for (const auto& p : trace.points) peak = std::max(peak, p.gold_score);
  if (!trace.points.empty()) {
    out["gold_peak_observed"] = peak;
    out["gold_final"] = trace.points.back().gold_score;
    out["proxy_final"] = trace.points.back().proxy_score;
    out["kl_final"] = trace.points.back().kl_nats;
  }
  if (trace.method == Method::bon) {
    if (auto g = gold_at_n(trace, 1000)) out["gold_at_n1000"] = *g;
  }
  return out;
}

OptimizationTrace average_traces(const std::vector<OptimizationTrace>& traces) {
  if (traces.empty()) throw UsageError("average_traces: no traces");
  OptimizationTrace out = traces.front();
  const auto k = static_cast<double>(traces.size());
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    double proxy = 0.0, gold = 0.0, kl = 0.0, pv = 0.0, gv = 0.0;
    for (const auto& t : traces) {
      if (t.points.size() != out.points.size() ||
          t.points[i].step_or_n != out.points[i].step_or_n)
        throw UsageError("average_traces: traces do not share a grid");
      proxy += t.points[i].proxy_score;
      gold += t.points[i].gold_score;
      kl += t.points[i].kl_nats;
    }
    proxy /= k, gold /= k, kl /= k;
    for (const auto& t : traces) {
      pv += (t.points[i].proxy_score - proxy) * (t.points[i].proxy_score - proxy);
      gv += (t.points[i].gold_score - gold) * (t.points[i].gold_score - gold);
    }
    auto& p = out.points[i];
    p.proxy_score = proxy;
    p.gold_score = gold;
    if (out.method == Method::rl) {
      p.kl_nats = kl;
      p.d = std::sqrt(kl);
    }
    p.proxy_se = traces.size() > 1 ? std::sqrt(pv / (k - 1) / k) : 0.0;
    p.gold_se = traces.size() > 1 ? std::sqrt(gv / (k - 1) / k) : 0.0;
  }
  return out;
}

namespace {

struct KeyResult {
  int completed = 0;
  int skipped = 0;
  std::vector<std::pair<std::string, std::string>> failures;
  int exit_code = 0;
};

json manifest(const World& world, const SweepConfig& config) {
  json cell_ids = json::array();
  for (const auto& c : cells(config)) cell_ids.push_back(c.id());
  return {{"format", "overopt-sweep"},
          {"version", 1},
          {"world", world.config().to_json()},
          {"sweep", config.to_json()},
          {"config_hash", config_hash(world.config(), config)},
          {"cells", cell_ids}};
}

struct CellRecord {
  Cell cell;
  OptimizationTrace trace;
  json fit;
};

std::vector<CellRecord> load_cells(const fs::path& dir, const SweepConfig& config) {
  std::vector<CellRecord> out;
  std::vector<std::string> missing;
  for (const auto& c : cells(config)) {
    const fs::path tp = trace_path(dir, c.id());
    const fs::path fp = fit_path(dir, c.id());
    if (!fs::exists(tp) || !fs::exists(fp)) {
      missing.push_back(c.id());
      continue;
    }
    out.push_back({c, trace_from_csv(io::read_file(tp)), read_json(fp)});
  }
  if (!missing.empty()) {
    std::string msg = "incomplete sweep; missing cells:";
    for (const auto& m : missing) msg += " " + m;
    throw IncompleteInputError(msg);
  }
  return out;
}

std::string num(const json& doc, const char* key) {
  if (!doc.contains(key) || doc.at(key).is_null()) return "";
  return io::format_double(doc.at(key).get<double>());
}

std::string peak_field(const json& fit, const char* key) {
  if (!fit.contains("peak") || fit.at("peak").is_null()) return "";
  return io::format_double(fit.at("peak").at(key).get<double>());
}

void write_summaries(const fs::path& dir, const SweepConfig& config, const std::string& hash) {
  const auto records = load_cells(dir, config);
  std::string per_cell =
      "cell_id,method,capacity,data_size,seed,lambda,alpha,beta,d_star,r_star,rmse,"
      "validation_loss,accuracy,calibration_temperature,gold_at_n1000,gold_peak,gold_final,"
      "config_hash\n";
  std::map<std::string, std::vector<const CellRecord*>> groups;
  std::vector<std::string> order;
  for (const auto& r : records) {
    const auto& f = r.fit;
    per_cell += r.cell.id() + "," + method_label(r.cell.method) + "," +
                std::to_string(r.cell.rm.capacity) + "," + std::to_string(r.cell.rm.data_size) +
                "," + std::to_string(r.cell.rm.seed) + "," + format_lambda(r.cell.lambda) + "," +
                num(f, "alpha") + "," + num(f, "beta") + "," + peak_field(f, "d_star") + "," +
                peak_field(f, "r_star") + "," + num(f, "rmse") + "," + num(f, "validation_loss") +
                "," + num(f, "accuracy") + "," + num(f, "calibration_temperature") + "," +
                num(f, "gold_at_n1000") + "," + num(f, "gold_peak_observed") + "," +
                num(f, "gold_final") + "," + hash + "\n";
    const std::string key =
        axis_key(r.cell.method, r.cell.rm.capacity, r.cell.rm.data_size, r.cell.lambda);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  io::write_file(dir / "summary.csv", per_cell);

  std::string mean =
      "method,capacity,data_size,lambda,seeds,alpha,beta,d_star,r_star,rmse,validation_loss,"
      "gold_at_n1000,gold_peak,gold_final,config_hash\n";
  for (const auto& key : order) {
    const auto& members = groups[key];
    std::vector<OptimizationTrace> traces;
    double loss = 0.0;
    for (const auto* m : members) {
      traces.push_back(m->trace);
      loss += m->fit.value("validation_loss", 0.0);
    }
    const auto avg = average_traces(traces);
    const json f = fit_summary(avg);
    const Cell& c = members.front()->cell;
    mean += method_label(c.method) + "," + std::to_string(c.rm.capacity) + "," +
            std::to_string(c.rm.data_size) + "," + format_lambda(c.lambda) + "," +
            std::to_string(members.size()) + "," + num(f, "alpha") + "," + num(f, "beta") + "," +
            peak_field(f, "d_star") + "," + peak_field(f, "r_star") + "," + num(f, "rmse") + "," +
            io::format_double(loss / static_cast<double>(members.size())) + "," +
            num(f, "gold_at_n1000") + "," + num(f, "gold_peak_observed") + "," +
            num(f, "gold_final") + "," + hash + "\n";
  }
  io::write_file(dir / "summary_mean.csv", mean);
}

}  // namespace

SweepOutcome run_sweep(const World& world, const SweepConfig& config, const SweepOptions& options) {
  const fs::path& dir = options.out_dir;
  const json man = manifest(world, config);
  const std::string hash = man.at("config_hash").get<std::string>();
  const fs::path manifest_path = dir / "sweep.json";
  if (fs::exists(manifest_path) && !options.force) {
    const json old = read_json(manifest_path);
    if (old.value("config_hash", "") != hash)
      throw UsageError("output directory holds a different sweep (config hash " +
                       old.value("config_hash", std::string("?")) + "); use --force");
  }
  io::write_file(manifest_path, dump(man));

  const RewardModel gold_rm = [&] {
    const Policy init = initial_policy(world, config.policy_temperature);
    return proxy::normalized_gold(world, init);
  }();
  const Policy initial = initial_policy(world, config.policy_temperature);
  const auto keys = rm_keys(config);
  const auto all_cells = cells(config);
  std::vector<KeyResult> results(keys.size());

  parallel_for(static_cast<int>(keys.size()), options.threads, [&](int ki) {
    const RmKey& key = keys[static_cast<std::size_t>(ki)];
    KeyResult& res = results[static_cast<std::size_t>(ki)];
    std::vector<Cell> todo;
    for (const auto& c : all_cells) {
      if (c.rm.id() != key.id()) continue;
      if (!options.force && fs::exists(trace_path(dir, c.id())) && fs::exists(fit_path(dir, c.id()))) {
        ++res.skipped;
        continue;
      }
      todo.push_back(c);
    }
    if (todo.empty()) return;
    TrainedProxy trained;
    try {
      trained = train_for_sweep(world, gold_rm, initial, config, key);
      io::write_file(dir / "rms" / (key.id() + ".json"), dump(reward_model_to_json(trained.rm)));
    } catch (const Error& e) {
      for (const auto& c : todo) res.failures.emplace_back(c.id(), e.what());
      res.exit_code = e.exit_code();
      return;
    }
    for (const auto& c : todo) {
      try {
        OptimizationTrace trace;
        if (c.method == Method::bon) {
          bon::CurveConfig bc;
          bc.pool_size = config.pool_size;
          bc.n_grid = config.n_grid;
          bc.seed = derive_seed(key.seed, "bon-pool");
          trace = bon::bon_curve(world, initial, trained.rm, gold_rm, bc);
        } else {
          rl::RlConfig rc = config.rl;
          rc.lambda = c.lambda;
          trace = rl::run_rl(world, trained.rm, gold_rm, initial, rc).trace;
        }
        json f = fit_summary(trace);
        f["cell_id"] = c.id();
        f["method"] = method_label(c.method);
        f["capacity"] = key.capacity;
        f["data_size"] = key.data_size;
        f["seed"] = key.seed;
        f["lambda"] = c.lambda;
        f["validation_loss"] = trained.validation_loss;
        f["accuracy"] = trained.accuracy;
        f["calibration_temperature"] = trained.rm.calibration_temperature;
        f["config_hash"] = hash;
        io::write_file(trace_path(dir, c.id()), trace_to_csv(trace, c.id(), key.seed, hash));
        io::write_file(fit_path(dir, c.id()), dump(f));
        ++res.completed;
      } catch (const Error& e) {
        res.failures.emplace_back(c.id(), e.what());
        res.exit_code = std::max(res.exit_code, e.exit_code());
      }
    }
  });

  SweepOutcome outcome;
  for (const auto& r : results) {
    outcome.completed += r.completed;
    outcome.skipped += r.skipped;
    outcome.failures.insert(outcome.failures.end(), r.failures.begin(), r.failures.end());
    outcome.failure_exit_code = std::max(outcome.failure_exit_code, r.exit_code);
  }
  if (outcome.failures.empty()) write_summaries(dir, config, hash);
  return outcome;
}

namespace {

std::string tsv_row(std::initializer_list<std::string> fields) {
  std::string out;
  bool first = true;
  for (const auto& f : fields) {
    if (!first) out += '\t';
    out += f;
    first = false;
  }
  return out + "\n";
}

}  // namespace

void write_report(const fs::path& out_dir) {
  const fs::path manifest_path = out_dir / "sweep.json";
  if (!fs::exists(manifest_path))
    throw IncompleteInputError("no sweep manifest in " + out_dir.string());
  const json man = read_json(manifest_path);
  const SweepConfig config = SweepConfig::from_json(man.at("sweep"));
  const auto records = load_cells(out_dir, config);

  // Seed-averaged trace per axis point.
  std::map<std::string, std::vector<OptimizationTrace>> grouped;
  std::map<std::string, double> losses;
  for (const auto& r : records) {
    const auto key = axis_key(r.cell.method, r.cell.rm.capacity, r.cell.rm.data_size, r.cell.lambda);
    grouped[key].push_back(r.trace);
    losses[key] += r.fit.value("validation_loss", 0.0) / static_cast<double>(config.seeds.size());
  }
  auto avg = [&](Method m, int cap, std::size_t data, double lambda) {
    return average_traces(grouped.at(axis_key(m, cap, data, lambda)));
  };
  const std::size_t data = config.data_sizes.back();
  const double lambda0 = config.lambdas.front();
  const Method primary = config.run_bon ? Method::bon : Method::rl;
  const double primary_lambda = primary == Method::bon ? 0.0 : lambda0;

  auto gold_vs_d = [&](Method m, double lambda) {
    std::string out = tsv_row({"series", "capacity", "d", "gold_score", "gold_se", "proxy_score"});
    for (int cap : config.capacities) {
      const auto t = avg(m, cap, data, lambda);
      for (const auto& p : t.points) {
        out += tsv_row({"cap=" + std::to_string(cap), std::to_string(cap), io::format_double(p.d),
                        io::format_double(p.gold_score), io::format_double(p.gold_se),
                        io::format_double(p.proxy_score)});
      }
    }
    return out;
  };
  io::write_file(out_dir / "fig_gold_vs_d.tsv", gold_vs_d(primary, primary_lambda));
  if (config.run_bon && config.run_rl)
    io::write_file(out_dir / "fig_gold_vs_d_rl.tsv", gold_vs_d(Method::rl, lambda0));

  {
    std::string out = tsv_row({"series", "method", "capacity", "proxy_score", "gold_score", "d"});
    for (int cap : config.capacities) {
      for (Method m : {Method::bon, Method::rl}) {
        if ((m == Method::bon && !config.run_bon) || (m == Method::rl && !config.run_rl)) continue;
        const auto t = avg(m, cap, data, m == Method::bon ? 0.0 : lambda0);
        const std::string series = std::string(to_string(m)) + " cap=" + std::to_string(cap);
        for (const auto& p : t.points) {
          out += tsv_row({series, method_label(m), std::to_string(cap),
                          io::format_double(p.proxy_score), io::format_double(p.gold_score),
                          io::format_double(p.d)});
        }
      }
    }
    io::write_file(out_dir / "fig_proxy_vs_gold.tsv", out);
  }

  {
    std::string out = tsv_row({"series", "capacity", "log_capacity", "alpha", "beta", "d_star", "r_star"});
    std::string trend = tsv_row({"series", "coefficient", "slope", "intercept", "r_squared"});
    for (Method m : {Method::bon, Method::rl}) {
      if ((m == Method::bon && !config.run_bon) || (m == Method::rl && !config.run_rl)) continue;
      std::vector<double> caps, alphas, betas;
      for (int cap : config.capacities) {
        const json f = fit_summary(avg(m, cap, data, m == Method::bon ? 0.0 : lambda0));
        out += tsv_row({std::string(to_string(m)), std::to_string(cap),
                        cap > 0 ? io::format_double(std::log(static_cast<double>(cap))) : "",
                        num(f, "alpha"), num(f, "beta"), peak_field(f, "d_star"),
                        peak_field(f, "r_star")});
        if (cap > 0 && f.contains("alpha")) {
          caps.push_back(cap);
          alphas.push_back(f.at("alpha").get<double>());
          betas.push_back(f.at("beta").get<double>());
        }
      }
      if (caps.size() >= 2) {
        for (auto [name, values] : {std::pair{"alpha", &alphas}, std::pair{"beta", &betas}}) {
          const auto tf = fit::coefficient_trend_fit(caps, *values);
          trend += tsv_row({std::string(to_string(m)), name, io::format_double(tf.slope),
                            io::format_double(tf.intercept), io::format_double(tf.r_squared)});
        }
      }
    }
    io::write_file(out_dir / "fig_coeff_vs_capacity.tsv", out);
    io::write_file(out_dir / "fig_coeff_trend.tsv", trend);
  }

  if (config.data_sizes.size() > 1) {
    std::string out = tsv_row({"series", "capacity", "data_size", "gold_at_n1000", "validation_loss"});
    for (int cap : config.capacities) {
      for (std::size_t n : config.data_sizes) {
        std::string gold;
        if (config.run_bon) {
          if (auto g = gold_at_n(avg(Method::bon, cap, n, 0.0), 1000)) gold = io::format_double(*g);
        }
        const double loss = losses.at(axis_key(primary, cap, n, primary_lambda));
        out += tsv_row({"cap=" + std::to_string(cap), std::to_string(cap), std::to_string(n), gold,
                        io::format_double(loss)});
      }
    }
    io::write_file(out_dir / "fig_gold_vs_data.tsv", out);
  }

  if (config.run_rl && config.lambdas.size() > 1) {
    std::string out = tsv_row({"series", "capacity", "lambda", "kl_nats", "d", "gold_score", "proxy_score"});
    for (int cap : config.capacities) {
      for (double l : config.lambdas) {
        const auto t = avg(Method::rl, cap, data, l);
        for (const auto& p : t.points) {
          out += tsv_row({"cap=" + std::to_string(cap) + " lambda=" + format_lambda(l),
                          std::to_string(cap), format_lambda(l), io::format_double(p.kl_nats),
                          io::format_double(p.d), io::format_double(p.gold_score),
                          io::format_double(p.proxy_score)});
        }
      }
    }
    io::write_file(out_dir / "fig_kl_penalty.tsv", out);
  }
}

}  // namespace overopt::pipeline
