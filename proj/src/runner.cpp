#include "tta/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "tta/errors.hpp"
#include "tta/plot.hpp"

namespace tta {

namespace fs = std::filesystem;

namespace {

ModelShape shape_for(const SourceTask& task) {
  ModelShape shape;
  shape.input_dim = task.input_dim;
  shape.n_classes = task.n_classes;
  return shape;
}

std::mutex& cache_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, AdaptiveModel>& cache() {
  static std::map<std::string, AdaptiveModel> c;
  return c;
}

bool simple_shift(const ShiftKind& shift) {
  return !std::holds_alternative<Mixture>(shift) &&
         !std::holds_alternative<PureNoise>(shift);
}

// Shifts a held-out probe like the stream. Mixture components are assigned per
// sample by a seeded draw so the probe stays class-balanced.
LabeledSet shift_probe(const LabeledSet& probe, const ShiftKind& shift,
                       std::uint64_t seed) {
  if (std::holds_alternative<PureNoise>(shift)) return probe;
  if (simple_shift(shift)) return apply_shift(probe, shift, seed);
  const auto& mix = std::get<Mixture>(shift);
  std::vector<double> weights;
  for (const auto& c : mix.components) weights.push_back(c.proportion);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  Rng rng(derive_seed(seed, "probe_mixture"));
  std::vector<std::vector<std::size_t>> members(mix.components.size());
  for (std::size_t i = 0; i < probe.size(); ++i) members[pick(rng)].push_back(i);
  LabeledSet out;
  out.dim = probe.dim;
  out.n_classes = probe.n_classes;
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (members[k].empty()) continue;
    const LabeledSet part =
        shift_probe(probe.subset(members[k]), mix.components[k].shift,
                    derive_seed(seed, "component." + std::to_string(k)));
    for (std::size_t i = 0; i < part.size(); ++i) {
      out.push_back(part.row(i), part.labels[i]);
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

AdaptiveModel source_model(const ExperimentConfig& config) {
  Json key = {{"task", config_to_json(config)["task"]},
              {"train", config_to_json(config)["train"]},
              {"seed", config.seed}};
  const std::string k = key.dump();
  std::lock_guard<std::mutex> lock(cache_mutex());
  auto it = cache().find(k);
  if (it != cache().end()) return it->second;

  AdaptiveModel model =
      AdaptiveModel::create(shape_for(config.task), derive_seed(config.seed, "model"));
  TrainOptions options;
  options.epochs = config.train.epochs;
  options.lr = config.train.lr;
  options.seed = derive_seed(config.seed, "train");
  source_train(model, generate_source(config.task), options);
  cache().emplace(k, model);
  return model;
}

void clear_source_cache() {
  std::lock_guard<std::mutex> lock(cache_mutex());
  cache().clear();
}

Prepared prepare(const ExperimentConfig& config) {
  validate(config);
  Prepared p;
  p.source = source_model(config);
  p.pool = generate_pool(config.task, config.stream.pool_size,
                         derive_seed(config.seed, "pool"));
  p.stream = make_stream(config.stream.spec, p.pool, &p.source);
  if (config.stream.noise_prefix.n_batches > 0) {
    p.prefix_batches = config.stream.noise_prefix.n_batches;
    p.stream = pure_noise_prefix(p.stream, p.prefix_batches,
                                 config.stream.noise_prefix.sigma,
                                 derive_seed(config.seed, "noise_prefix"));
  }
  if (config.diagnostics.probe_size > 0) {
    const LabeledSet raw = generate_pool(config.task, config.diagnostics.probe_size,
                                         derive_seed(config.seed, "probe"));
    p.probe = shift_probe(raw, config.stream.spec.shift,
                          derive_seed(config.seed, "probe_shift"));
  }
  return p;
}

RunOutcome execute(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  if (config.diagnostics.eval_on_pool && !simple_shift(config.stream.spec.shift)) {
    throw ConfigError("diagnostics.eval_on_pool",
                      "requires a single shift that is not pure noise");
  }
  Prepared prep = prepare(config);

  RunOutcome out;
  out.config = config;
  out.run_id = run_id(config);

  AdaptOptions options;
  options.lr_divisor = config.method.lr_divisor;
  options.require_predictor_lr_ratio = config.method.require_predictor_lr_ratio;
  options.probe_entropy_delta = config.diagnostics.probe_entropy_delta;
  options.logit_branch = config.diagnostics.logit_branch;
  AdaptState state(prep.source, config.method.spec,
                   derive_seed(config.seed, "adapt"), options);
  if (prep.probe) state.set_probe(*prep.probe);

  RunResult result = run_stream(state, prep.stream, config.steps_limit);
  out.online_accuracy = result.online_accuracy;
  out.failed_step = result.failed_step;
  out.failure = result.failure;
  out.encoder_passes = state.model().encoder_passes() - prep.source.encoder_passes();

  out.trajectory.records = std::move(result.records);
  out.trajectory.config_hash = out.run_id;
  out.trajectory.seed = config.seed;
  out.trajectory.method = method_name(config.method.spec);
  out.trajectory.n_classes = config.task.n_classes;

  if (!out.trajectory.records.empty()) {
    std::size_t window = config.diagnostics.verdict_window;
    if (window == 0) window = std::max<std::size_t>(1, out.trajectory.size() / 4);
    window = std::min(window, out.trajectory.size());
    out.verdict = collapse_verdict(out.trajectory, window);
  }

  if (config.diagnostics.eval_on_pool) {
    const LabeledSet shifted =
        apply_shift(prep.pool, config.stream.spec.shift, config.stream.spec.seed);
    AdaptiveModel frozen = prep.source;
    out.source_pool_accuracy = accuracy(frozen, shifted);
    if (!out.poisoned()) out.pool_accuracy = accuracy(state.model(), shifted);
  }
  out.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

RunOutcome run(const ExperimentConfig& config) {
  RunOutcome out = execute(config);
  write_artifacts(out, config.output_dir, config.emit_plots);
  return out;
}

void write_artifacts(const RunOutcome& o, const std::string& dir, bool plots) {
  fs::create_directories(dir);
  const fs::path root(dir);

  Json cfg = {{"run_id", o.run_id}, {"config", config_to_json(o.config)}};
  write_file(root / "config.json", cfg.dump(2) + "\n");

  std::ostringstream csv;
  write_csv(csv, o.trajectory);
  write_file(root / "metrics.csv", csv.str());

  Json summary = {{"run_id", o.run_id},
                  {"method", o.trajectory.method},
                  {"steps", o.trajectory.size()},
                  {"online_accuracy", o.online_accuracy},
                  {"verdict", o.verdict ? std::string(to_string(*o.verdict)) : "none"},
                  {"encoder_passes", o.encoder_passes},
                  {"runtime_seconds", o.runtime_seconds}};
  summary["pool_accuracy"] = o.pool_accuracy ? Json(*o.pool_accuracy) : Json();
  summary["source_pool_accuracy"] =
      o.source_pool_accuracy ? Json(*o.source_pool_accuracy) : Json();
  summary["failed_step"] = o.failed_step ? Json(*o.failed_step) : Json();
  summary["failure"] = o.failure;
  write_file(root / "summary.json", summary.dump(2) + "\n");

  if (o.poisoned()) {
    write_file(root / "FAILED", "# run_id: " + o.run_id + "\nstep: " +
                                    std::to_string(*o.failed_step) +
                                    "\nreason: " + o.failure + "\n");
  } else {
    fs::remove(root / "FAILED");
  }

  if (!plots) return;
  const auto& recs = o.trajectory.records;
  auto col = [&](auto getter) {
    std::vector<double> v;
    v.reserve(recs.size());
    for (const auto& r : recs) v.push_back(getter(r));
    return v;
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<std::string, LinePlot>> panels;
  panels.push_back(
      {"drift", {"Predictor drift ||P - I||_F", "step", "drift",
                 {{"drift", col([&](const StepRecord& r) {
                     return r.pred_frob_drift.value_or(nan);
                   })}},
                 o.run_id}});
  panels.push_back(
      {"entropy", {"Prediction entropy", "step", "entropy",
                   {{"online", col([](const StepRecord& r) { return r.entropy_online; })},
                    {"target", col([](const StepRecord& r) { return r.entropy_target; })}},
                   o.run_id}});
  panels.push_back(
      {"logit_norm", {"Logit L2 norm", "step", "mean ||u||",
                      {{"logit_l2", col([](const StepRecord& r) { return r.logit_l2; })}},
                      o.run_id}});
  panels.push_back(
      {"center_dominance",
       {"Center dominance", "step", "||mean u|| / mean ||u||",
        {{"center_dominance",
          col([](const StepRecord& r) { return r.center_dominance; })}},
        o.run_id}});
  for (const auto& [name, plot] : panels) {
    write_file(root / (name + ".svg"), render_svg(plot));
  }
}

void verify_artifacts(const std::string& dir, const std::string& expected) {
  const fs::path root(dir);
  for (const char* required : {"metrics.csv", "summary.json", "config.json"}) {
    if (!fs::exists(root / required)) {
      throw DataError(std::string("artifact missing: ") + (root / required).string());
    }
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    const std::string name = path.filename().string();
    std::string found;
    bool known = true;
    if (name == "summary.json" || name == "config.json") {
      try {
        const Json j = Json::parse(read_file(path));
        found = j.value("run_id", "");
      } catch (const Json::exception&) {
        throw DataError("artifact is not valid JSON: " + path.string());
      }
    } else if (name == "metrics.csv" || name == "FAILED" || name == "source.txt" ||
               name == "stream.txt") {
      const std::string text = read_file(path);
      const std::string tag = "# run_id: ";
      if (text.rfind(tag, 0) == 0) {
        found = text.substr(tag.size(), text.find('\n') - tag.size());
      }
    } else if (path.extension() == ".svg") {
      const std::string text = read_file(path);
      const std::string tag = "<!-- run_id: ";
      const auto at = text.find(tag);
      if (at != std::string::npos) {
        const auto start = at + tag.size();
        found = text.substr(start, text.find(" -->", start) - start);
      }
    } else {
      known = false;
    }
    if (known && found != expected) {
      throw DataError("artifact " + path.string() + " has run id '" + found +
                      "', expected '" + expected + "'");
    }
  }
}

void export_data(const ExperimentConfig& config, const std::string& dir) {
  validate(config);
  fs::create_directories(dir);
  const std::string id = run_id(config);
  Prepared prep = prepare(config);
  std::ostringstream src, stream;
  write_dataset(src, generate_source(config.task), id);
  write_dataset(stream, prep.stream.flatten(), id);
  write_file(fs::path(dir) / "source.txt", src.str());
  write_file(fs::path(dir) / "stream.txt", stream.str());
}

// ---- sweeps -----------------------------------------------------------------

const std::vector<std::string>& sweep_axis_names() {
  static const std::vector<std::string> names = {
      "alpha",     "divergence", "lr_f",  "lr_h",          "method",
      "objective", "predictor_init", "rho", "seed"};
  return names;
}

ExperimentConfig apply_axis(const ExperimentConfig& config, const std::string& axis,
                            const Json& value) {
  Json j = config_to_json(config);
  Json& m = j["method"];
  if (axis == "method") {
    if (value.is_object()) {
      m = value;
    } else if (value.is_string()) {
      // Fresh defaults for the new method, keeping any shared fields.
      Json fresh = method_to_json(method_from_json({{"name", value}}, "method"));
      for (auto& item : fresh.items()) {
        if (item.key() != "name" && m.contains(item.key())) {
          item.value() = m[item.key()];
        }
      }
      m = fresh;
    } else {
      throw ConfigError("axes.method", "expected a method name or object");
    }
  } else if (axis == "lr_f" || axis == "lr_h" || axis == "alpha" ||
             axis == "objective" || axis == "divergence") {
    m[axis] = value;
  } else if (axis == "predictor_init") {
    m["predictor"] = value;
  } else if (axis == "rho") {
    j["stream"]["ordering"] = {{"kind", "imbalanced"}, {"rho", value}};
  } else if (axis == "seed") {
    j["seed"] = value;
  } else {
    throw ConfigError("axes." + axis, "unknown sweep axis");
  }
  return config_from_json(j);
}

SweepSpec sweep_from_json(const ExperimentConfig& base, const Json& axes) {
  if (!axes.is_object()) throw ConfigError("axes", "expected an object");
  SweepSpec spec;
  spec.base = base;
  const auto& names = sweep_axis_names();
  for (const auto& item : axes.items()) {  // nlohmann objects iterate sorted
    if (std::find(names.begin(), names.end(), item.key()) == names.end()) {
      throw ConfigError("axes." + item.key(), "unknown sweep axis");
    }
    if (!item.value().is_array() || item.value().empty()) {
      throw ConfigError("axes." + item.key(), "expected a non-empty array");
    }
    SweepAxis axis{item.key(), {}};
    for (const auto& v : item.value()) axis.values.push_back(v);
    spec.axes.push_back(std::move(axis));
  }
  return spec;
}

SweepSpec load_sweep(const std::string& config_path, const std::string& axes_path) {
  const ExperimentConfig base = load_config(config_path);
  std::ifstream in(axes_path);
  if (!in) throw ConfigError("axes", "cannot open axes file '" + axes_path + "'");
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw ConfigError("axes", std::string("not valid JSON: ") + e.what());
  }
  return sweep_from_json(base, j);
}

std::vector<SweepPoint> expand(const SweepSpec& spec) {
  std::vector<SweepPoint> points;
  std::vector<std::size_t> idx(spec.axes.size(), 0);
  while (true) {
    SweepPoint p;
    try {
      ExperimentConfig c = spec.base;
      for (std::size_t a = 0; a < spec.axes.size(); ++a) {
        p.values.push_back(spec.axes[a].values[idx[a]]);
        c = apply_axis(c, spec.axes[a].name, spec.axes[a].values[idx[a]]);
      }
      p.config = c;
    } catch (const ConfigError& e) {
      for (std::size_t a = p.values.size(); a < spec.axes.size(); ++a) {
        p.values.push_back(spec.axes[a].values[idx[a]]);
      }
      p.error = e.what();
    }
    points.push_back(std::move(p));
    // Odometer with the last axis varying fastest.
    std::size_t a = spec.axes.size();
    while (a > 0) {
      --a;
      if (++idx[a] < spec.axes[a].values.size()) break;
      idx[a] = 0;
      if (a == 0) return points;
    }
    if (spec.axes.empty()) return points;
  }
}

SweepReport sweep(const SweepSpec& spec, std::size_t jobs, bool write_files) {
  if (jobs < 1) throw ConfigError("jobs", "must be >= 1");
  const std::vector<SweepPoint> points = expand(spec);
  SweepReport report;
  for (const auto& a : spec.axes) report.axes.push_back(a.name);
  report.rows.resize(points.size());
  report.outcomes.resize(points.size());

  const fs::path root(spec.base.output_dir);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      const SweepPoint& p = points[i];
      SweepRow& row = report.rows[i];
      for (const auto& v : p.values) {
        row.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      }
      if (!p.config) {
        row.error = p.error;
        continue;
      }
      row.run_id = run_id(*p.config);
      try {
        RunOutcome o = execute(*p.config);
        row.online_accuracy = o.online_accuracy;
        row.pool_accuracy = o.pool_accuracy;
        row.verdict = o.verdict ? std::string(to_string(*o.verdict)) : "none";
        if (o.poisoned()) row.error = "poisoned at step " + std::to_string(*o.failed_step);
        if (write_files) {
          write_artifacts(o, (root / "runs" / row.run_id).string(),
                          p.config->emit_plots);
        }
        report.outcomes[i] = std::move(o);
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
  };
  const std::size_t n_threads = std::min(jobs, std::max<std::size_t>(points.size(), 1));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  if (write_files) {
    fs::create_directories(root);
    std::ostringstream table;
    write_sweep_table(table, report);
    write_file(root / "sweep.csv", table.str());
  }
  return report;
}

void write_sweep_table(std::ostream& os, const SweepReport& report) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  };
  os << "index";
  for (const auto& a : report.axes) os << ',' << a;
  os << ",run_id,online_accuracy,pool_accuracy,verdict,error\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const SweepRow& r = report.rows[i];
    os << i;
    for (const auto& v : r.values) os << ',' << quote(v);
    os << ',' << r.run_id << ','
       << (r.online_accuracy ? format_double(*r.online_accuracy) : "") << ','
       << (r.pool_accuracy ? format_double(*r.pool_accuracy) : "") << ',' << r.verdict
       << ',' << quote(r.error) << '\n';
  }
}

}  // namespace tta
