#include "tta/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "tta/errors.hpp"

namespace tta {

static_assert(std::is_same_v<std::size_t, std::uint64_t>);

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Reads the keys of one JSON object and rejects any key nobody asked for.
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string path(const std::string& key) const { return join(path_, key); }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void read(const std::string& key, double& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(path(key), "expected a number");
      out = v->get<double>();
    }
  }

  void read(const std::string& key, std::uint64_t& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_unsigned()) {
        throw ConfigError(path(key), "expected a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }

  void read(const std::string& key, bool& out) {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(path(key), "expected a boolean");
      out = v->get<bool>();
    }
  }

  void read(const std::string& key, std::string& out) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(path(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  std::string required_string(const std::string& key) {
    const Json* v = find(key);
    if (!v) throw ConfigError(path(key), "missing required key");
    if (!v->is_string()) throw ConfigError(path(key), "expected a string");
    return v->get<std::string>();
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError(path(item.key()), "unknown key");
      }
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Json ordering_to_json(const Ordering& ordering) {
  if (std::holds_alternative<Shuffled>(ordering)) return {{"kind", "shuffled"}};
  if (std::holds_alternative<ClassOrdered>(ordering)) {
    return {{"kind", "class_ordered"}};
  }
  const double rho = std::get<Imbalanced>(ordering).rho;
  Json j = {{"kind", "imbalanced"}};
  if (std::isinf(rho)) {
    j["rho"] = "inf";
  } else {
    j["rho"] = rho;
  }
  return j;
}

Ordering ordering_from_json(const Json& j, const std::string& path) {
  Fields f(j, path);
  const std::string kind = f.required_string("kind");
  Ordering out;
  if (kind == "shuffled") {
    out = Shuffled{};
  } else if (kind == "class_ordered") {
    out = ClassOrdered{};
  } else if (kind == "imbalanced") {
    Imbalanced im;
    if (const Json* v = f.find("rho")) {
      if (v->is_string() && v->get<std::string>() == "inf") {
        im.rho = kInfiniteRatio;
      } else if (v->is_number()) {
        im.rho = v->get<double>();
      } else {
        throw ConfigError(f.path("rho"), "expected a number or \"inf\"");
      }
    }
    out = im;
  } else {
    throw ConfigError(f.path("kind"), "unknown ordering '" + kind + "'");
  }
  f.finish();
  return out;
}

std::string_view variant_name(PredictorVariant v) {
  switch (v) {
    case PredictorVariant::Identity: return "identity";
    case PredictorVariant::RandomPerturbedIdentity: return "perturbed_identity";
    case PredictorVariant::TwoLayerMLP: return "mlp";
  }
  return "?";
}

Json predictor_to_json(const PredictorInit& p) {
  return {{"variant", variant_name(p.variant)},
          {"scale", p.scale},
          {"seed", p.seed},
          {"hidden_dim", p.hidden_dim},
          {"learnable", p.learnable}};
}

PredictorInit predictor_from_json(const Json& j, const std::string& path) {
  PredictorInit p;
  if (j.is_string()) {
    // Shorthand used by sweep axes.
    Json obj = {{"variant", j}};
    return predictor_from_json(obj, path);
  }
  Fields f(j, path);
  std::string variant = "identity";
  f.read("variant", variant);
  if (variant == "identity") {
    p.variant = PredictorVariant::Identity;
  } else if (variant == "perturbed_identity") {
    p.variant = PredictorVariant::RandomPerturbedIdentity;
  } else if (variant == "mlp") {
    p.variant = PredictorVariant::TwoLayerMLP;
  } else {
    throw ConfigError(f.path("variant"), "unknown predictor '" + variant + "'");
  }
  f.read("scale", p.scale);
  f.read("seed", p.seed);
  f.read("hidden_dim", p.hidden_dim);
  f.read("learnable", p.learnable);
  f.finish();
  return p;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

Json shift_to_json(const ShiftKind& shift) {
  struct ToJson {
    Json operator()(const NoShift&) const { return {{"kind", "none"}}; }
    Json operator()(const AdditiveGaussian& s) const {
      return {{"kind", "additive_gaussian"}, {"sigma", s.sigma}};
    }
    Json operator()(const MeanShift& s) const {
      return {{"kind", "mean_shift"}, {"delta", s.delta}};
    }
    Json operator()(const FeatureScale& s) const {
      return {{"kind", "feature_scale"}, {"factor", s.factor}};
    }
    Json operator()(const PureNoise& s) const {
      return {{"kind", "pure_noise"}, {"n_batches", s.n_batches}, {"sigma", s.sigma}};
    }
    Json operator()(const Mixture& m) const {
      Json comps = Json::array();
      for (const auto& c : m.components) {
        comps.push_back({{"shift", shift_to_json(c.shift)},
                         {"proportion", c.proportion}});
      }
      return {{"kind", "mixture"}, {"components", comps}};
    }
  };
  return std::visit(ToJson{}, shift);
}

ShiftKind shift_from_json(const Json& j, const std::string& path) {
  Fields f(j, path);
  const std::string kind = f.required_string("kind");
  ShiftKind out;
  if (kind == "none") {
    out = NoShift{};
  } else if (kind == "additive_gaussian") {
    AdditiveGaussian s;
    f.read("sigma", s.sigma);
    out = s;
  } else if (kind == "mean_shift") {
    MeanShift s;
    if (const Json* v = f.find("delta")) {
      if (!v->is_array()) throw ConfigError(f.path("delta"), "expected an array");
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number()) {
          throw ConfigError(f.path("delta") + "[" + std::to_string(i) + "]",
                            "expected a number");
        }
        s.delta.push_back((*v)[i].get<double>());
      }
    }
    out = s;
  } else if (kind == "feature_scale") {
    FeatureScale s;
    f.read("factor", s.factor);
    out = s;
  } else if (kind == "pure_noise") {
    PureNoise s;
    f.read("n_batches", s.n_batches);
    f.read("sigma", s.sigma);
    out = s;
  } else if (kind == "mixture") {
    Mixture m;
    const Json* v = f.find("components");
    if (!v || !v->is_array()) {
      throw ConfigError(f.path("components"), "expected an array");
    }
    for (std::size_t i = 0; i < v->size(); ++i) {
      const std::string cp = f.path("components") + "[" + std::to_string(i) + "]";
      Fields cf((*v)[i], cp);
      MixtureComponent c;
      const Json* sj = cf.find("shift");
      if (!sj) throw ConfigError(cf.path("shift"), "missing required key");
      c.shift = shift_from_json(*sj, cf.path("shift"));
      cf.read("proportion", c.proportion);
      cf.finish();
      m.components.push_back(std::move(c));
    }
    out = m;
  } else {
    throw ConfigError(f.path("kind"), "unknown shift '" + kind + "'");
  }
  f.finish();
  return out;
}

Json method_to_json(const MethodConfig& method) {
  Json j = {{"name", method_name(method.spec)}, {"lr_divisor", method.lr_divisor}};
  if (const auto* t = std::get_if<Tent>(&method.spec)) {
    j["lr_f"] = t->lr_f;
  } else if (const auto* f = std::get_if<FilteredTent>(&method.spec)) {
    j["lr_f"] = f->lr_f;
    j["e0_fraction"] = f->e0_fraction;
  } else if (const auto* z = std::get_if<ZeroSiam>(&method.spec)) {
    j["lr_f"] = z->lr_f;
    j["lr_h"] = z->lr_h;
    j["alpha"] = z->alpha;
    j["objective"] = to_string(z->objective);
    j["divergence"] = to_string(z->divergence);
    j["predictor"] = predictor_to_json(z->predictor);
    j["require_predictor_lr_ratio"] = method.require_predictor_lr_ratio;
  }
  return j;
}

MethodConfig method_from_json(const Json& j, const std::string& path) {
  Fields f(j, path);
  MethodConfig out;
  const std::string name = f.required_string("name");
  f.read("lr_divisor", out.lr_divisor);
  if (name == "noadapt") {
    out.spec = NoAdapt{};
  } else if (name == "tent") {
    Tent t;
    f.read("lr_f", t.lr_f);
    out.spec = t;
  } else if (name == "filtered_tent") {
    FilteredTent t;
    f.read("lr_f", t.lr_f);
    f.read("e0_fraction", t.e0_fraction);
    out.spec = t;
  } else if (name == "zerosiam") {
    ZeroSiam z;
    f.read("lr_f", z.lr_f);
    f.read("lr_h", z.lr_h);
    f.read("alpha", z.alpha);
    std::string obj(to_string(z.objective)), div(to_string(z.divergence));
    f.read("objective", obj);
    f.read("divergence", div);
    const auto o = parse_objective(obj);
    if (!o) throw ConfigError(f.path("objective"), "unknown objective '" + obj + "'");
    const auto d = parse_divergence(div);
    if (!d) throw ConfigError(f.path("divergence"), "unknown divergence '" + div + "'");
    z.objective = *o;
    z.divergence = *d;
    if (const Json* p = f.find("predictor")) {
      z.predictor = predictor_from_json(*p, f.path("predictor"));
    }
    f.read("require_predictor_lr_ratio", out.require_predictor_lr_ratio);
    out.spec = z;
  } else {
    throw ConfigError(f.path("name"), "unknown method '" + name + "'");
  }
  f.finish();
  return out;
}

Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["task"] = {{"n_classes", c.task.n_classes},
               {"input_dim", c.task.input_dim},
               {"separation", c.task.separation},
               {"noise_sigma", c.task.noise_sigma},
               {"n_train", c.task.n_train},
               {"seed", c.task.seed}};
  j["train"] = {{"epochs", c.train.epochs}, {"lr", c.train.lr}};
  const StreamSpec& s = c.stream.spec;
  j["stream"] = {{"shift", shift_to_json(s.shift)},
                 {"ordering", ordering_to_json(s.ordering)},
                 {"batch_size", s.batch_size},
                 {"n_samples", s.n_samples},
                 {"blind_spot", s.blind_spot},
                 {"seed", s.seed},
                 {"pool_size", c.stream.pool_size},
                 {"noise_prefix",
                  {{"n_batches", c.stream.noise_prefix.n_batches},
                   {"sigma", c.stream.noise_prefix.sigma}}}};
  j["method"] = method_to_json(c.method);
  j["steps_limit"] = c.steps_limit;
  j["output_dir"] = c.output_dir;
  j["emit_plots"] = c.emit_plots;
  j["diagnostics"] = {
      {"logit_branch",
       c.diagnostics.logit_branch == LogitBranch::Online ? "online" : "target"},
      {"probe_size", c.diagnostics.probe_size},
      {"probe_entropy_delta", c.diagnostics.probe_entropy_delta},
      {"eval_on_pool", c.diagnostics.eval_on_pool},
      {"verdict_window", c.diagnostics.verdict_window}};
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  Fields root(j, "");
  root.read("seed", c.seed);

  if (const Json* t = root.find("task")) {
    Fields f(*t, "task");
    f.read("n_classes", c.task.n_classes);
    f.read("input_dim", c.task.input_dim);
    f.read("separation", c.task.separation);
    f.read("noise_sigma", c.task.noise_sigma);
    f.read("n_train", c.task.n_train);
    f.read("seed", c.task.seed);
    f.finish();
  }
  if (const Json* t = root.find("train")) {
    Fields f(*t, "train");
    f.read("epochs", c.train.epochs);
    f.read("lr", c.train.lr);
    f.finish();
  }
  if (const Json* s = root.find("stream")) {
    Fields f(*s, "stream");
    StreamSpec& spec = c.stream.spec;
    if (const Json* v = f.find("shift")) spec.shift = shift_from_json(*v, "stream.shift");
    if (const Json* v = f.find("ordering")) {
      spec.ordering = ordering_from_json(*v, "stream.ordering");
    }
    f.read("batch_size", spec.batch_size);
    f.read("n_samples", spec.n_samples);
    f.read("blind_spot", spec.blind_spot);
    f.read("seed", spec.seed);
    f.read("pool_size", c.stream.pool_size);
    if (const Json* v = f.find("noise_prefix")) {
      Fields nf(*v, "stream.noise_prefix");
      nf.read("n_batches", c.stream.noise_prefix.n_batches);
      nf.read("sigma", c.stream.noise_prefix.sigma);
      nf.finish();
    }
    f.finish();
  }
  if (const Json* m = root.find("method")) c.method = method_from_json(*m, "method");
  root.read("steps_limit", c.steps_limit);
  root.read("output_dir", c.output_dir);
  root.read("emit_plots", c.emit_plots);
  if (const Json* d = root.find("diagnostics")) {
    Fields f(*d, "diagnostics");
    std::string branch = "target";
    f.read("logit_branch", branch);
    if (branch == "target") {
      c.diagnostics.logit_branch = LogitBranch::Target;
    } else if (branch == "online") {
      c.diagnostics.logit_branch = LogitBranch::Online;
    } else {
      throw ConfigError("diagnostics.logit_branch",
                        "expected \"target\" or \"online\"");
    }
    f.read("probe_size", c.diagnostics.probe_size);
    f.read("probe_entropy_delta", c.diagnostics.probe_entropy_delta);
    f.read("eval_on_pool", c.diagnostics.eval_on_pool);
    f.read("verdict_window", c.diagnostics.verdict_window);
    f.finish();
  }
  root.finish();
  validate(c);
  return c;
}

namespace {

void validate_shift(const ShiftKind& shift, std::size_t dim, const std::string& path) {
  if (const auto* m = std::get_if<MeanShift>(&shift)) {
    if (m->delta.size() != dim) {
      throw ConfigError(path + ".delta", "length must equal task.input_dim (" +
                                             std::to_string(dim) + ")");
    }
  } else if (const auto* g = std::get_if<AdditiveGaussian>(&shift)) {
    if (!(g->sigma >= 0.0)) throw ConfigError(path + ".sigma", "must be >= 0");
  } else if (const auto* n = std::get_if<PureNoise>(&shift)) {
    if (!(n->sigma > 0.0)) throw ConfigError(path + ".sigma", "must be > 0");
  } else if (const auto* mix = std::get_if<Mixture>(&shift)) {
    if (mix->components.empty()) {
      throw ConfigError(path + ".components", "must not be empty");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < mix->components.size(); ++i) {
      const auto& c = mix->components[i];
      const std::string cp = path + ".components[" + std::to_string(i) + "]";
      if (!(c.proportion > 0.0)) throw ConfigError(cp + ".proportion", "must be > 0");
      if (std::holds_alternative<Mixture>(c.shift)) {
        throw ConfigError(cp + ".shift", "mixtures cannot nest");
      }
      validate_shift(c.shift, dim, cp + ".shift");
      total += c.proportion;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ConfigError(path + ".components", "proportions must sum to 1");
    }
  }
}

}  // namespace

void validate(const ExperimentConfig& c) {
  if (c.task.n_classes < 2) throw ConfigError("task.n_classes", "must be >= 2");
  if (c.task.input_dim < 1) throw ConfigError("task.input_dim", "must be >= 1");
  if (!(c.task.noise_sigma > 0.0)) {
    throw ConfigError("task.noise_sigma", "must be > 0");
  }
  if (c.task.separation < 4.0 * c.task.noise_sigma) {
    throw ConfigError("task.separation", "must be >= 4 * task.noise_sigma");
  }
  if (c.task.n_train < c.task.n_classes) {
    throw ConfigError("task.n_train", "must be >= task.n_classes");
  }
  if (c.train.epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
  if (!(c.train.lr > 0.0)) throw ConfigError("train.lr", "must be > 0");
  if (c.stream.spec.batch_size < 1) {
    throw ConfigError("stream.batch_size", "must be >= 1");
  }
  if (c.stream.pool_size < 1) throw ConfigError("stream.pool_size", "must be >= 1");
  if (const auto* im = std::get_if<Imbalanced>(&c.stream.spec.ordering)) {
    if (!(im->rho >= 1.0)) throw ConfigError("stream.ordering.rho", "must be >= 1");
  }
  validate_shift(c.stream.spec.shift, c.task.input_dim, "stream.shift");
  if (c.stream.noise_prefix.n_batches > 0 && !(c.stream.noise_prefix.sigma > 0.0)) {
    throw ConfigError("stream.noise_prefix.sigma", "must be > 0");
  }
  AdaptOptions method_options;
  method_options.lr_divisor = c.method.lr_divisor;
  method_options.require_predictor_lr_ratio = c.method.require_predictor_lr_ratio;
  validate_method(c.method.spec, method_options);
  if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw ConfigError("", "'" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::string& path, const ExperimentConfig& config) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << config_to_json(config).dump(2) << '\n';
}

std::string run_id(const ExperimentConfig& config) {
  Json j = config_to_json(config);
  j.erase("output_dir");
  j.erase("emit_plots");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace tta
