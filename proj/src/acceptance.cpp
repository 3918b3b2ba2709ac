#include "tta/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "tta/errors.hpp"
#include "tta/gradcheck.hpp"
#include "tta/oracles.hpp"
#include "tta/presets.hpp"
#include "tta/runner.hpp"

namespace tta {

namespace fs = std::filesystem;

namespace {

// ---- thresholds -------------------------------------------------------------

constexpr std::size_t kGradPoints = 100;
constexpr double kFdStep = 1e-6;
constexpr double kFdRelTol = 1e-5;
constexpr double kGradRuntime = 10.0;
constexpr std::size_t kSgGraphs = 50;
constexpr std::size_t kOraclePairs = 1000;
constexpr double kOracleTol = 1e-10;
constexpr std::size_t kEquivalenceSteps = 200;
constexpr double kMinGain = 0.02;  // ZeroSiam over NoAdapt, collapse benchmark
constexpr double kRunRuntime = 60.0;
constexpr double kFloorFrac = 0.01;     // ZeroSiam entropy floor, × ln C
constexpr double kCollapseFrac = 0.001;  // Tent entropy, × ln C
constexpr double kMaxTv = 0.05;
constexpr double kOnlineDominance = 0.5;
constexpr double kPredictorRatio = 10.0;  // k for the dominance check
constexpr double kDriftFactor = 1.5;
constexpr std::size_t kDivSmoothing = 10;
constexpr std::size_t kOnsetWindow = 20;
constexpr std::size_t kNoiseBatches = 50;
constexpr double kNoiseSigma = 3.0;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// summary.json minus the wall-clock field.
std::string stable_summary(const fs::path& p) {
  Json j = Json::parse(read_bytes(p));
  j.erase("runtime_seconds");
  return j.dump();
}

ExperimentConfig with_method(ExperimentConfig c, MethodSpec m) {
  c.method.spec = std::move(m);
  return c;
}

const ZeroSiam& zerosiam_of(const ExperimentConfig& c) {
  const auto* z = std::get_if<ZeroSiam>(&c.method.spec);
  if (!z) throw ContractError("acceptance benchmark must use the zerosiam method");
  return *z;
}

double quartile_min(const std::vector<StepRecord>& r, double StepRecord::*field) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = r.size() - std::max<std::size_t>(1, r.size() / 4); i < r.size(); ++i) {
    m = std::min(m, r[i].*field);
  }
  return m;
}

double quartile_mean(const std::vector<StepRecord>& r, double StepRecord::*field) {
  const std::size_t w = std::max<std::size_t>(1, r.size() / 4);
  double s = 0.0;
  for (std::size_t i = r.size() - w; i < r.size(); ++i) s += r[i].*field;
  return s / static_cast<double>(w);
}

class Suite {
 public:
  explicit Suite(const AcceptanceOptions& o) : options(o) {}

  const RunOutcome& outcome(const ExperimentConfig& c) {
    const std::string id = run_id(c);
    auto it = runs.find(id);
    if (it == runs.end()) it = runs.emplace(id, execute(c)).first;
    return it->second;
  }

  const SweepReport& grid() {
    if (!grid_) grid_ = sweep(grid_spec(1), 1);
    return *grid_;
  }

  SweepSpec grid_spec(std::size_t jobs) const {
    ExperimentConfig base = options.collapse;
    base.output_dir = (fs::path(options.work_dir) / ("grid-j" + std::to_string(jobs))).string();
    return sweep_from_json(
        base, Json{{"alpha", {0.0, 1.0}},
                   {"divergence", {"skl", "kl", "rkl", "js", "mse"}},
                   {"objective", {"entropy", "pseudo_label_ce", "neg_squared_prob"}}});
  }

  AcceptanceOptions options;
  std::map<std::string, RunOutcome> runs;
  std::optional<std::uint64_t> equivalence_digest;

 private:
  std::optional<SweepReport> grid_;
};

// ---- 1: finite differences ---------------------------------------------------

struct OpCase {
  const char* name;
  std::vector<Shape> shapes;
  double lo, hi;  // input range
  std::function<Tensor(const std::vector<Tensor>&)> op;
};

std::vector<OpCase> op_cases() {
  return {
      {"matmul", {{3, 4}, {4, 2}}, -2, 2, [](auto& in) { return matmul(in[0], in[1]); }},
      {"add", {{3, 4}, {3, 4}}, -2, 2, [](auto& in) { return add(in[0], in[1]); }},
      {"sub", {{3, 4}, {3, 4}}, -2, 2, [](auto& in) { return sub(in[0], in[1]); }},
      {"mul", {{3, 4}, {3, 4}}, -2, 2, [](auto& in) { return mul(in[0], in[1]); }},
      {"scale", {{3, 4}}, -2, 2, [](auto& in) { return scale(in[0], -1.7); }},
      {"add_row", {{3, 4}, {4}}, -2, 2, [](auto& in) { return add_row(in[0], in[1]); }},
      {"mul_row", {{3, 4}, {4}}, -2, 2, [](auto& in) { return mul_row(in[0], in[1]); }},
      {"log", {{3, 4}}, 0.2, 3, [](auto& in) { return log(in[0]); }},
      {"exp", {{3, 4}}, -2, 2, [](auto& in) { return exp(in[0]); }},
      {"relu", {{3, 4}}, -2, 2, [](auto& in) { return relu(in[0]); }},
      {"row_sum", {{3, 4}}, -2, 2, [](auto& in) { return row_sum(in[0]); }},
      {"sum", {{3, 4}}, -2, 2, [](auto& in) { return sum(in[0]); }},
      {"mean", {{3, 4}}, -2, 2, [](auto& in) { return mean(in[0]); }},
      {"l2_norm", {{3, 4}}, -2, 2, [](auto& in) { return l2_norm(in[0]); }},
      {"softmax", {{3, 4}}, -3, 3, [](auto& in) { return softmax(in[0]); }},
      {"normalize_rows", {{3, 4}}, -2, 2,
       [](auto& in) { return normalize_rows(in[0], 1e-5); }},
  };
}

Tensor random_tensor(const Shape& shape, double lo, double hi, Rng& rng) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) {
    x = u(rng);
    // Keep relu inputs off the kink by more than the difference step.
    if (std::abs(x) < 1e-3) x = x < 0 ? -1e-3 : 1e-3;
  }
  return Tensor::from(shape, std::move(v));
}

CriterionResult gradient_oracle(Suite&) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(derive_seed(1, "acceptance.gradcheck"));
  double worst = 0.0;
  std::string worst_op;
  std::size_t entries = 0;
  const auto cases = op_cases();
  for (const auto& c : cases) {
    for (std::size_t point = 0; point < kGradPoints; ++point) {
      std::vector<Tensor> inputs;
      for (const auto& s : c.shapes) inputs.push_back(random_tensor(s, c.lo, c.hi, rng));
      // A fixed random weighting exercises the whole Jacobian, not just its sum.
      Tensor probe_out = c.op(inputs);
      const Tensor weights = random_tensor(probe_out.shape(), -1, 1, rng);
      auto loss = [&](const std::vector<Tensor>& in) { return sum(mul(c.op(in), weights)); };
      const auto r = grad_check(loss, inputs, kFdStep);
      entries += r.entries;
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        worst_op = c.name;
      }
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CriterionResult res;
  res.passed = worst < kFdRelTol && secs < kGradRuntime;
  res.detail = fmt("%zu ops x %zu points, %zu entries, max rel err %.2e (%s) < %.0e, %.2fs < %.0fs",
                   cases.size(), kGradPoints, entries, worst, worst_op.c_str(), kFdRelTol,
                   secs, kGradRuntime);
  return res;
}

// ---- 2: stop-gradient soundness ---------------------------------------------

Tensor random_unary(const Tensor& a, const Tensor& w, Rng& rng) {
  switch (std::uniform_int_distribution<int>(0, 6)(rng)) {
    case 0: return softmax(a);
    case 1: return normalize_rows(a, 1e-5);
    case 2: return relu(a);
    case 3: return scale(a, 0.7);
    case 4: return exp(scale(softmax(a), 2.0));
    case 5: return log(softmax(a));
    default: return matmul(a, w);
  }
}

CriterionResult stop_gradient_soundness(Suite&) {
  Rng rng(derive_seed(2, "acceptance.stop_gradient"));
  std::uniform_int_distribution<int> depth(1, 3), combine(0, 2), extra_sg(0, 1);
  std::size_t clean = 0, live = 0, sg_nodes = 0;
  for (std::size_t g = 0; g < kSgGraphs; ++g) {
    Tensor x = random_tensor({3, 4}, -2, 2, rng).set_requires_grad(true);
    Tensor w_before = random_tensor({4, 4}, -1, 1, rng).set_requires_grad(true);
    Tensor y = random_tensor({3, 4}, -2, 2, rng).set_requires_grad(true);
    Tensor w_after = random_tensor({4, 4}, -1, 1, rng).set_requires_grad(true);

    Tensor a = x;
    for (int k = depth(rng); k > 0; --k) a = random_unary(a, w_before, rng);
    Tensor b = stop_gradient(a);
    ++sg_nodes;
    Tensor c;
    switch (combine(rng)) {
      case 0: c = add(b, y); break;
      case 1: c = mul(b, y); break;
      default: c = sub(y, b); break;
    }
    for (int k = depth(rng); k > 0; --k) c = random_unary(c, w_after, rng);
    if (extra_sg(rng)) {
      // A second cut on a fresh path from x.
      c = add(c, stop_gradient(random_unary(x, w_before, rng)));
      ++sg_nodes;
    }
    const Tensor weights = random_tensor({3, 4}, -1, 1, rng);
    // The direct y term guarantees the sweep reaches live leaves.
    backward(add(sum(mul(c, weights)), sum(mul(y, weights))));

    auto zero = [](const Tensor& t) {
      if (!t.has_grad()) return true;
      for (double v : t.grad()) {
        if (v != 0.0) return false;
      }
      return true;
    };
    if (zero(x) && zero(w_before)) ++clean;
    if (!zero(y)) ++live;
  }
  CriterionResult res;
  res.passed = clean == kSgGraphs && live == kSgGraphs;
  res.detail = fmt("%zu/%zu graphs with exactly zero grads behind %zu sg nodes; "
                   "%zu/%zu with live grads elsewhere",
                   clean, kSgGraphs, sg_nodes, live, kSgGraphs);
  return res;
}

// ---- 3: closed-form oracles -------------------------------------------------

CriterionResult closed_form_oracles(Suite&) {
  Rng rng(derive_seed(3, "acceptance.oracles"));
  std::uniform_int_distribution<std::size_t> classes(2, 10);
  std::normal_distribution<double> logit(0.0, 2.0);
  double worst_softmax = 0.0, worst_entropy = 0.0, worst_div = 0.0;
  const DivergenceKind kinds[] = {DivergenceKind::SymKL, DivergenceKind::KL,
                                  DivergenceKind::ReverseKL, DivergenceKind::JS,
                                  DivergenceKind::MSE};
  for (std::size_t t = 0; t < kOraclePairs; ++t) {
    const std::size_t c = classes(rng);
    std::vector<double> u(c), v(c);
    for (auto& x : u) x = logit(rng);
    for (auto& x : v) x = logit(rng);
    const auto p_ref = oracle::softmax(u);
    const auto q_ref = oracle::softmax(v);
    const Tensor p = softmax(Tensor::from({1, c}, u));
    const Tensor q = softmax(Tensor::from({1, c}, v));
    for (std::size_t i = 0; i < c; ++i) {
      worst_softmax = std::max(worst_softmax, std::abs(p.at(i) - p_ref[i]));
    }
    const Tensor pp = Tensor::from({1, c}, p_ref), qq = Tensor::from({1, c}, q_ref);
    worst_entropy =
        std::max(worst_entropy, std::abs(entropy(pp).item() - oracle::entropy(p_ref)));
    for (auto k : kinds) {
      double ref = 0.0;
      switch (k) {
        case DivergenceKind::SymKL: ref = oracle::sym_kl(p_ref, q_ref); break;
        case DivergenceKind::KL: ref = oracle::kl(p_ref, q_ref); break;
        case DivergenceKind::ReverseKL: ref = oracle::reverse_kl(p_ref, q_ref); break;
        case DivergenceKind::JS: ref = oracle::js(p_ref, q_ref); break;
        case DivergenceKind::MSE: ref = oracle::mse(p_ref, q_ref); break;
      }
      worst_div = std::max(worst_div, std::abs(divergence(k, pp, qq).item() - ref));
    }
  }
  CriterionResult res;
  res.passed = worst_softmax < kOracleTol && worst_entropy < kOracleTol &&
               worst_div < kOracleTol;
  res.detail = fmt("%zu pairs; max |err| softmax %.1e, entropy %.1e, divergences %.1e "
                   "(tol %.0e)",
                   kOraclePairs, worst_softmax, worst_entropy, worst_div, kOracleTol);
  return res;
}

// ---- 4: Tent equivalence ----------------------------------------------------

std::uint64_t param_digest(const std::vector<Tensor>& params, std::uint64_t h) {
  for (const auto& p : params) {
    const auto d = p.data();
    h ^= fnv1a64(std::string_view(reinterpret_cast<const char*>(d.data()),
                                  d.size() * sizeof(double)));
    h = mix_seed(h);
  }
  return h;
}

CriterionResult tent_equivalence(Suite& suite) {
  const ExperimentConfig& c = suite.options.stable;
  const double lr = zerosiam_of(c).lr_f;
  Prepared prep = prepare(c);
  ZeroSiam z;
  z.lr_f = lr;
  z.lr_h = 0.0;
  z.alpha = 0.0;
  z.predictor.variant = PredictorVariant::Identity;
  AdaptState tent(prep.source, Tent{lr}, 1);
  AdaptState zs(prep.source, z, 1);
  const std::size_t steps = std::min(kEquivalenceSteps, prep.stream.size());
  std::size_t identical = 0;
  std::uint64_t digest = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    adapt_step(tent, prep.stream.batches[s]);
    adapt_step(zs, prep.stream.batches[s]);
    const auto a = tent.model().norm_params();
    const auto b = zs.model().norm_params();
    bool same = a.size() == b.size();
    for (std::size_t i = 0; same && i < a.size(); ++i) {
      const auto da = a[i].data(), db = b[i].data();
      same = std::equal(da.begin(), da.end(), db.begin(), db.end(),
                        [](double x, double y) {
                          return std::memcmp(&x, &y, sizeof x) == 0;
                        });
    }
    identical += same ? 1 : 0;
    digest = param_digest(b, digest);
  }
  suite.equivalence_digest = digest;
  CriterionResult res;
  res.passed = steps == kEquivalenceSteps && identical == steps;
  res.detail = fmt("%zu/%zu steps with bitwise-identical norm parameters", identical,
                   kEquivalenceSteps);
  return res;
}

// ---- 5: warm start ----------------------------------------------------------

CriterionResult warm_start(Suite& suite) {
  const RunOutcome& o = suite.outcome(suite.options.collapse);
  const StepRecord& r = o.trajectory.records.at(0);
  CriterionResult res;
  res.passed = r.div_loss == 0.0 && r.entropy_online == r.entropy_target;
  res.detail = fmt("step 0: div_loss %.17g, entropy_online - entropy_target %.17g",
                   r.div_loss, r.entropy_online - r.entropy_target);
  return res;
}

// ---- 6, 7: collapse reproduction and entropy floor --------------------------

struct Trio {
  const RunOutcome* noadapt;
  const RunOutcome* tent;
  const RunOutcome* zerosiam;
};

Trio collapse_trio(Suite& suite) {
  const ExperimentConfig& c = suite.options.collapse;
  return {&suite.outcome(with_method(c, NoAdapt{})),
          &suite.outcome(with_method(c, Tent{zerosiam_of(c).lr_f})), &suite.outcome(c)};
}

std::string verdict_str(const RunOutcome& o) {
  return o.verdict ? std::string(to_string(*o.verdict)) : "none";
}

CriterionResult collapse_reproduction(Suite& suite) {
  const Trio t = collapse_trio(suite);
  const double slowest = std::max(
      {t.noadapt->runtime_seconds, t.tent->runtime_seconds, t.zerosiam->runtime_seconds});
  const bool ok_tent = t.tent->verdict == Verdict::Collapsed &&
                       t.tent->online_accuracy < t.noadapt->online_accuracy;
  const bool ok_zs = t.zerosiam->verdict == Verdict::Stable &&
                     t.zerosiam->online_accuracy >= t.noadapt->online_accuracy + kMinGain;
  const bool healthy =
      !t.noadapt->poisoned() && !t.tent->poisoned() && !t.zerosiam->poisoned();
  CriterionResult res;
  res.passed = ok_tent && ok_zs && healthy && slowest < kRunRuntime;
  res.detail = fmt("noadapt %.4f; tent %s %.4f; zerosiam %s %.4f (%+.2f pts, need >= %+.0f); "
                   "slowest run %.2fs",
                   t.noadapt->online_accuracy, verdict_str(*t.tent).c_str(),
                   t.tent->online_accuracy, verdict_str(*t.zerosiam).c_str(),
                   t.zerosiam->online_accuracy,
                   100.0 * (t.zerosiam->online_accuracy - t.noadapt->online_accuracy),
                   100.0 * kMinGain, slowest);
  return res;
}

CriterionResult entropy_floor(Suite& suite) {
  const Trio t = collapse_trio(suite);
  const double ln_c = std::log(static_cast<double>(suite.options.collapse.task.n_classes));
  const double zs = quartile_min(t.zerosiam->trajectory.records, &StepRecord::entropy_online);
  const double tent = quartile_min(t.tent->trajectory.records, &StepRecord::entropy_online);
  CriterionResult res;
  res.passed = zs > kFloorFrac * ln_c && tent < kCollapseFrac * ln_c;
  res.detail = fmt("final-quartile min entropy: zerosiam %.4g > %.4g, tent %.3g < %.4g", zs,
                   kFloorFrac * ln_c, tent, kCollapseFrac * ln_c);
  return res;
}

// ---- 8: branch convergence --------------------------------------------------

CriterionResult branch_convergence(Suite& suite) {
  const RunOutcome& o = suite.outcome(suite.options.stable);
  const double tv = quartile_mean(o.trajectory.records, &StepRecord::tv_online_target);
  CriterionResult res;
  res.passed = !o.poisoned() && tv < kMaxTv;
  res.detail = fmt("final-quartile mean TV(p_o, p_r) %.4f < %.2f on the stable benchmark", tv,
                   kMaxTv);
  return res;
}

// ---- 9: online-branch dominance ---------------------------------------------

ExperimentConfig dominance_config(const ExperimentConfig& collapse) {
  ExperimentConfig c = collapse;
  ZeroSiam z = zerosiam_of(c);
  z.alpha = 0.0;
  z.lr_h = kPredictorRatio * z.lr_f;
  c.method.spec = z;
  c.diagnostics.probe_entropy_delta = true;
  return c;
}

// First step whose trailing window meets the collapse thresholds.
std::size_t collapse_onset(const Trajectory& t) {
  const double ln_c = std::log(static_cast<double>(t.n_classes));
  const VerdictThresholds thr;
  double ent = 0.0, dom = 0.0;
  const auto& r = t.records;
  for (std::size_t i = 0; i < r.size(); ++i) {
    ent += r[i].entropy_target;
    dom += r[i].dominant_class_frac;
    if (i >= kOnsetWindow) {
      ent -= r[i - kOnsetWindow].entropy_target;
      dom -= r[i - kOnsetWindow].dominant_class_frac;
    }
    if (i + 1 >= kOnsetWindow) {
      const double n = static_cast<double>(kOnsetWindow);
      if (ent / n < thr.ent_frac * ln_c && dom / n > thr.dom_frac) {
        return i + 1 - kOnsetWindow;
      }
    }
  }
  return r.size();
}

CriterionResult online_dominance(Suite& suite) {
  const RunOutcome& o = suite.outcome(dominance_config(suite.options.collapse));
  const std::size_t onset = collapse_onset(o.trajectory);
  std::size_t wins = 0, counted = 0;
  for (std::size_t i = 0; i < onset; ++i) {
    const auto& r = o.trajectory.records[i];
    if (!r.delta_entropy_online || !r.delta_entropy_target) continue;
    ++counted;
    wins += std::abs(*r.delta_entropy_online) > std::abs(*r.delta_entropy_target) ? 1 : 0;
  }
  const double frac = counted ? static_cast<double>(wins) / static_cast<double>(counted) : 0.0;
  CriterionResult res;
  res.passed = counted > 0 && frac > kOnlineDominance;
  res.detail = fmt("alpha=0, k=%.0f: |dH(p_o)| > |dH(p_r)| on %zu/%zu pre-collapse steps "
                   "(%.1f%% > %.0f%%; onset step %zu of %zu)",
                   kPredictorRatio, wins, counted, 100.0 * frac, 100.0 * kOnlineDominance,
                   onset, o.trajectory.size());
  return res;
}

// ---- 10: drift vs ratio -----------------------------------------------------

CriterionResult drift_monotonicity(Suite& suite) {
  ExperimentConfig inf = suite.options.collapse;
  inf.stream.spec.ordering = Imbalanced{kInfiniteRatio};
  ExperimentConfig one = suite.options.collapse;
  one.stream.spec.ordering = Imbalanced{1.0};
  const RunOutcome& a = suite.outcome(inf);
  const RunOutcome& b = suite.outcome(one);
  const auto pairs = drift_vs_ratio({{kInfiniteRatio, a.trajectory}, {1.0, b.trajectory}});
  const double d_one = pairs.front().second, d_inf = pairs.back().second;

  const auto sa = trailing_average(column(a.trajectory.records, &StepRecord::div_loss),
                                   kDivSmoothing);
  const auto sb = trailing_average(column(b.trajectory.records, &StepRecord::div_loss),
                                   kDivSmoothing);
  const std::size_t n = std::min(sa.size(), sb.size());
  std::size_t dominated = 0, compared = 0;
  for (std::size_t i = kDivSmoothing - 1; i < n; ++i) {
    ++compared;
    dominated += sa[i] >= sb[i] ? 1 : 0;
  }
  CriterionResult res;
  res.passed = d_inf >= kDriftFactor * d_one && compared > 0 && dominated == compared;
  res.detail = fmt("final drift rho=inf %.4f vs rho=1 %.4f (x%.2f, need >= %.1f); smoothed "
                   "div_loss rho=inf >= rho=1 on %zu/%zu steps",
                   d_inf, d_one, d_one > 0 ? d_inf / d_one : 0.0, kDriftFactor, dominated,
                   compared);
  return res;
}

// ---- 11: blind spot ---------------------------------------------------------

ExperimentConfig blind_spot_config(const ExperimentConfig& stable, MethodSpec m) {
  ExperimentConfig c = with_method(stable, std::move(m));
  c.stream.spec.blind_spot = true;
  c.stream.spec.n_samples = 0;  // one pass over the misclassified subset
  c.diagnostics.eval_on_pool = true;
  return c;
}

CriterionResult blind_spot(Suite& suite) {
  const ExperimentConfig& s = suite.options.stable;
  const RunOutcome& zs = suite.outcome(blind_spot_config(s, s.method.spec));
  const RunOutcome& tent =
      suite.outcome(blind_spot_config(s, Tent{zerosiam_of(s).lr_f}));
  const double base = zs.source_pool_accuracy.value_or(0.0);
  const double a_zs = zs.pool_accuracy.value_or(-1.0);
  const double a_tent = tent.pool_accuracy.value_or(2.0);
  CriterionResult res;
  res.passed = zs.pool_accuracy && tent.pool_accuracy && a_zs >= base && a_tent < base;
  res.detail = fmt("full-pool accuracy after adapting on %zu misclassified batches: "
                   "noadapt %.4f, zerosiam %.4f, tent %.4f",
                   zs.trajectory.size(), base, a_zs, a_tent);
  return res;
}

// ---- 12: pure-noise prefix --------------------------------------------------

ExperimentConfig with_prefix(ExperimentConfig c) {
  c.stream.noise_prefix = {kNoiseBatches, kNoiseSigma};
  return c;
}

CriterionResult noise_resistance(Suite& suite) {
  const ExperimentConfig& s = suite.options.stable;
  const ExperimentConfig tent = with_method(s, Tent{zerosiam_of(s).lr_f});
  const double zs_drop =
      suite.outcome(s).online_accuracy - suite.outcome(with_prefix(s)).online_accuracy;
  const double tent_drop =
      suite.outcome(tent).online_accuracy - suite.outcome(with_prefix(tent)).online_accuracy;
  CriterionResult res;
  res.passed = zs_drop <= 0.5 * tent_drop;
  res.detail = fmt("accuracy drop after %zu noise batches: zerosiam %+.4f <= half of tent "
                   "%+.4f",
                   kNoiseBatches, zs_drop, tent_drop);
  return res;
}

// ---- 13: objective x divergence grid ----------------------------------------

CriterionResult generality_grid(Suite& suite) {
  const SweepReport& g = suite.grid();
  // Axes are alpha, divergence, objective; alpha is the slowest.
  const std::size_t half = g.rows.size() / 2;
  std::size_t wins = 0;
  double worst = std::numeric_limits<double>::infinity();
  std::string worst_cell, errors;
  for (std::size_t i = 0; i < half; ++i) {
    const SweepRow& base = g.rows[i];
    const SweepRow& reg = g.rows[i + half];
    if (!base.error.empty() || !reg.error.empty() || !base.online_accuracy ||
        !reg.online_accuracy) {
      errors += " [" + reg.values[1] + "/" + reg.values[2] + "]";
      continue;
    }
    const double margin = *reg.online_accuracy - *base.online_accuracy;
    wins += margin > 0.0 ? 1 : 0;
    if (margin < worst) {
      worst = margin;
      worst_cell = reg.values[2] + " x " + reg.values[1];
    }
  }
  CriterionResult res;
  res.passed = half == 15 && wins == half;
  res.detail = fmt("%zu/%zu cells with alpha=1 above alpha=0; smallest margin %+.2f pts (%s)%s",
                   wins, half, 100.0 * worst, worst_cell.c_str(),
                   errors.empty() ? "" : (" errors:" + errors).c_str());
  return res;
}

CriterionResult run_one(int id, Suite& suite);

// ---- 14: determinism --------------------------------------------------------

CriterionResult determinism(Suite& suite) {
  const fs::path root(suite.options.work_dir);
  std::size_t compared = 0;
  std::vector<std::string> mismatches;

  // Repeated runs: every memoized outcome against a fresh execution.
  if (suite.runs.empty()) {
    for (int id = 4; id <= 12; ++id) run_one(id, suite);
  }
  for (const auto& [id, first] : suite.runs) {
    const fs::path a = root / "repeat-a" / id, b = root / "repeat-b" / id;
    write_artifacts(first, a.string(), false);
    write_artifacts(execute(first.config), b.string(), false);
    verify_artifacts(a.string(), id);
    verify_artifacts(b.string(), id);
    ++compared;
    if (read_bytes(a / "metrics.csv") != read_bytes(b / "metrics.csv") ||
        read_bytes(a / "config.json") != read_bytes(b / "config.json") ||
        stable_summary(a / "summary.json") != stable_summary(b / "summary.json")) {
      mismatches.push_back(id);
    }
  }

  // Parameter trajectory of the equivalence check.
  if (suite.equivalence_digest) {
    const auto first = *suite.equivalence_digest;
    tent_equivalence(suite);
    ++compared;
    if (first != *suite.equivalence_digest) mismatches.push_back("tent-equivalence");
  }

  // The grid at parallel level 1 and N.
  suite.grid();
  const SweepReport par = sweep(suite.grid_spec(suite.options.jobs), suite.options.jobs);
  const fs::path g1 = root / "grid-j1";
  const fs::path gn = root / ("grid-j" + std::to_string(suite.options.jobs));
  ++compared;
  if (read_bytes(g1 / "sweep.csv") != read_bytes(gn / "sweep.csv")) {
    mismatches.push_back("sweep.csv");
  }
  for (const auto& row : par.rows) {
    if (row.run_id.empty()) continue;
    const fs::path a = g1 / "runs" / row.run_id, b = gn / "runs" / row.run_id;
    verify_artifacts(a.string(), row.run_id);
    verify_artifacts(b.string(), row.run_id);
    ++compared;
    if (read_bytes(a / "metrics.csv") != read_bytes(b / "metrics.csv") ||
        stable_summary(a / "summary.json") != stable_summary(b / "summary.json")) {
      mismatches.push_back("grid/" + row.run_id);
    }
  }

  // The driver must refuse artifacts that belong to another run.
  bool refused = false;
  if (!suite.runs.empty()) {
    const auto& any = *suite.runs.begin();
    try {
      verify_artifacts((root / "repeat-a" / any.first).string(), "0000000000000000");
    } catch (const DataError&) {
      refused = true;
    }
  }

  CriterionResult res;
  res.passed = mismatches.empty() && refused && compared > 0;
  res.detail = fmt("%zu artifact sets byte-identical across repeats and jobs=1 vs jobs=%zu; "
                   "%zu mismatches; foreign run id %s",
                   compared - mismatches.size(), suite.options.jobs, mismatches.size(),
                   refused ? "refused" : "ACCEPTED");
  return res;
}

struct Entry {
  const char* name;
  CriterionResult (*fn)(Suite&);
};

const Entry kEntries[kCriterionCount] = {
    {"gradient oracle", gradient_oracle},
    {"stop-gradient soundness", stop_gradient_soundness},
    {"closed-form oracles", closed_form_oracles},
    {"tent equivalence", tent_equivalence},
    {"warm-start exactness", warm_start},
    {"collapse reproduction", collapse_reproduction},
    {"entropy floor", entropy_floor},
    {"branch convergence", branch_convergence},
    {"online-branch dominance", online_dominance},
    {"drift vs ratio", drift_monotonicity},
    {"blind-spot robustness", blind_spot},
    {"pure-noise resistance", noise_resistance},
    {"generality grid", generality_grid},
    {"determinism", determinism},
};

CriterionResult run_one(int id, Suite& suite) {
  if (id < 1 || id > kCriterionCount) {
    throw ContractError("no acceptance criterion " + std::to_string(id));
  }
  const Entry& e = kEntries[id - 1];
  const auto t0 = std::chrono::steady_clock::now();
  CriterionResult r;
  try {
    r = e.fn(suite);
  } catch (const std::exception& ex) {
    r.passed = false;
    r.detail = std::string("exception: ") + ex.what();
  }
  r.id = id;
  r.name = e.name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace

AcceptanceOptions::AcceptanceOptions()
    : collapse(collapse_bench()), stable(stable_bench()) {}

CriterionResult check_criterion(int id, const AcceptanceOptions& options) {
  Suite suite(options);
  return run_one(id, suite);
}

std::vector<CriterionResult> run_acceptance(
    const AcceptanceOptions& options,
    const std::function<void(const CriterionResult&)>& on_result) {
  Suite suite(options);
  std::vector<CriterionResult> out;
  for (int id = 1; id <= kCriterionCount; ++id) {
    out.push_back(run_one(id, suite));
    if (on_result) on_result(out.back());
  }
  return out;
}

std::string format_result(const CriterionResult& r) {
  return fmt("%s %2d %-24s %s [%.1fs]", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(),
             r.detail.c_str(), r.seconds);
}

}  // namespace tta
