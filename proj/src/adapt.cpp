#include "tta/adapt.hpp"

#include <algorithm>
#include <cmath>

#include "tta/errors.hpp"

namespace tta {

std::string method_name(const MethodSpec& method) {
  struct Namer {
    std::string operator()(const NoAdapt&) const { return "noadapt"; }
    std::string operator()(const Tent&) const { return "tent"; }
    std::string operator()(const FilteredTent&) const { return "filtered_tent"; }
    std::string operator()(const ZeroSiam&) const { return "zerosiam"; }
  };
  return std::visit(Namer{}, method);
}

void validate_method(const MethodSpec& method, const AdaptOptions& options) {
  if (!(options.lr_divisor > 0.0)) {
    throw ConfigError("method.lr_divisor", "must be > 0");
  }
  auto check_lr = [](double lr, const char* path) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
      throw ConfigError(path, "learning rate must be finite and >= 0");
    }
  };
  if (const auto* t = std::get_if<Tent>(&method)) check_lr(t->lr_f, "method.lr_f");
  if (const auto* f = std::get_if<FilteredTent>(&method)) {
    check_lr(f->lr_f, "method.lr_f");
    if (!(f->e0_fraction > 0.0)) {
      throw ConfigError("method.e0_fraction", "must be > 0");
    }
  }
  if (const auto* z = std::get_if<ZeroSiam>(&method)) {
    check_lr(z->lr_f, "method.lr_f");
    check_lr(z->lr_h, "method.lr_h");
    if (!(z->alpha >= 0.0)) throw ConfigError("method.alpha", "must be >= 0");
    if (options.require_predictor_lr_ratio && z->lr_h < z->lr_f) {
      throw ConfigError("method.lr_h", "must be >= lr_f");
    }
  }
}

namespace {

std::vector<int> argmax_rows(const Tensor& p) {
  const std::size_t c = p.cols();
  const auto d = p.data();
  std::vector<int> out(p.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* row = d.data() + i * c;
    out[i] = static_cast<int>(std::max_element(row, row + c) - row);
  }
  return out;
}

double mean_tv(const Tensor& p, const Tensor& q) {
  const auto a = p.data(), b = q.data();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s / static_cast<double>(p.rows());
}

}  // namespace

AdaptState::AdaptState(AdaptiveModel model, MethodSpec method,
                       std::uint64_t seed, AdaptOptions options)
    : model_(std::move(model)),
      method_(std::move(method)),
      options_(options),
      optimizer_(0.9),
      rng_(derive_seed(seed, "adapt_state")) {
  validate_method(method_, options_);
  const double div = options_.lr_divisor;
  if (const auto* z = std::get_if<ZeroSiam>(&method_)) {
    model_.init_predictor(z->predictor);
    model_.enable_adaptation();
    optimizer_.add_group(model_.norm_params(), z->lr_f / div);
    if (z->predictor.learnable) {
      optimizer_.add_group(model_.predictor_params(), z->lr_h / div);
    }
  } else if (std::holds_alternative<NoAdapt>(method_)) {
    model_.freeze_all();
  } else {
    // Single-branch methods never touch the predictor.
    model_.enable_adaptation();
    for (auto& p : model_.predictor_params()) p.set_requires_grad(false);
    const double lr = std::holds_alternative<Tent>(method_)
                          ? std::get<Tent>(method_).lr_f
                          : std::get<FilteredTent>(method_).lr_f;
    optimizer_.add_group(model_.norm_params(), lr / div);
  }
}

struct StepRunner {
  AdaptState& s;
  const LabeledSet& batch;

  [[noreturn]] void poison(const std::string& why) {
    s.failed_step_ = s.step_count_;
    throw PoisonedStateError(s.step_count_, why);
  }

  StepOutput run() {
    try {
      return run_checked();
    } catch (const NumericError& e) {
      poison(e.what());
    }
  }

  StepOutput run_checked() {
    if (s.poisoned()) {
      throw PoisonedStateError(*s.failed_step_,
                               "adaptation state is poisoned since step " +
                                   std::to_string(*s.failed_step_));
    }
    if (batch.empty()) throw ContractError("adapt_step: empty batch");
    AdaptiveModel& model = s.model_;
    const std::size_t n_classes = model.n_classes();
    const Tensor x = batch.as_tensor();

    StepRecord rec;
    rec.step = s.step_count_;
    s.optimizer_.zero_grad();

    Tensor u_online, u_target, p_online, p_target, loss;
    const bool siamese = std::holds_alternative<ZeroSiam>(s.method_);
    if (siamese) {
      BranchOutputs out = model.forward_branches(x);
      u_online = out.online_logits;
      u_target = out.target_logits;
      p_online = softmax(u_online);
      p_target = softmax(u_target);
    } else {
      u_target = model.forward_target(x);
      p_target = softmax(u_target);
      u_online = u_target;
      p_online = p_target;
    }

    rec.entropy_target = entropy(stop_gradient(p_target)).item();
    rec.entropy_online = siamese ? entropy(stop_gradient(p_online)).item()
                                 : rec.entropy_target;
    rec.tv_online_target = mean_tv(p_online, p_target);

    const double ln_c = std::log(static_cast<double>(n_classes));
    bool do_update = true;
    std::visit(
        [&](const auto& m) {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, NoAdapt>) {
            do_update = false;
          } else if constexpr (std::is_same_v<M, Tent>) {
            loss = entropy(p_target);
            rec.effective_batch = batch.size();
          } else if constexpr (std::is_same_v<M, FilteredTent>) {
            const Tensor ent = per_sample_entropy(p_target);
            const double e0 = m.e0_fraction * ln_c;
            std::vector<double> mask(batch.size(), 0.0);
            std::size_t kept = 0;
            for (std::size_t i = 0; i < mask.size(); ++i) {
              if (ent.at(i) <= e0) {
                mask[i] = 1.0;
                ++kept;
              }
            }
            rec.effective_batch = kept;
            if (kept == 0) {
              do_update = false;
            } else {
              const std::size_t n = mask.size();
              loss = scale(sum(mul(Tensor::from({n}, std::move(mask)), ent)),
                           1.0 / static_cast<double>(kept));
            }
          } else {
            rec.div_loss =
                divergence(m.divergence, stop_gradient(p_online),
                           stop_gradient(p_target))
                    .item();
            loss = zerosiam_loss(p_online, p_target, m.alpha, m.objective,
                                 m.divergence);
            rec.effective_batch = batch.size();
          }
        },
        s.method_);

    if (do_update) {
      rec.loss = loss.item();
      if (!std::isfinite(rec.loss)) poison("non-finite adaptation loss");
      const BackwardTrace trace = backward(loss);
      if (siamese) {
        rec.target_branch_isolated = !trace.visited(u_target.op_id()) &&
                                     !trace.visited(p_target.op_id());
      }
      if (!s.optimizer_.grads_finite()) poison("non-finite gradient");
      rec.grad_norm = s.optimizer_.grad_norm();
      s.optimizer_.step();
      rec.updated = true;
    }

    // Diagnostics on the pre-update forward pass.
    const Tensor& u_diag =
        s.options_.logit_branch == LogitBranch::Online ? u_online : u_target;
    rec.logit_l2 = mean_row_norm(u_diag.data(), u_diag.rows(), u_diag.cols());
    rec.center_dominance =
        center_dominance(u_diag.data(), u_diag.rows(), u_diag.cols());

    StepOutput result;
    result.predictions = argmax_rows(p_target);
    if (s.probe_) {
      rec.dominant_class_frac =
          dominant_class_fraction(model.predict(s.probe_->as_tensor()), n_classes);
    } else {
      rec.dominant_class_frac =
          dominant_class_fraction(result.predictions, n_classes);
    }

    std::size_t correct = 0, counted = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch.labels[i] == kNoLabel) continue;
      ++counted;
      correct += result.predictions[i] == batch.labels[i] ? 1 : 0;
    }
    if (counted) {
      rec.batch_acc = static_cast<double>(correct) / static_cast<double>(counted);
    }

    if (model.predictor_is_linear()) {
      rec.pred_frob_drift = predictor_frobenius_drift(model);
    }

    if (s.options_.probe_entropy_delta) {
      BranchOutputs after = model.forward_branches(x, false);
      const double h_target =
          entropy(softmax(stop_gradient(after.target_logits))).item();
      const double h_online =
          siamese ? entropy(softmax(stop_gradient(after.online_logits))).item()
                  : h_target;
      rec.delta_entropy_target = h_target - rec.entropy_target;
      rec.delta_entropy_online = h_online - rec.entropy_online;
    }

    ++s.step_count_;
    result.record = rec;
    return result;
  }
};

StepOutput adapt_step(AdaptState& state, const LabeledSet& batch) {
  return StepRunner{state, batch}.run();
}

RunResult run_stream(AdaptState& state, const Stream& stream,
                     std::size_t max_steps) {
  if (stream.empty()) throw ContractError("run_stream: empty stream");
  RunResult result;
  const std::size_t n =
      max_steps ? std::min(max_steps, stream.size()) : stream.size();
  result.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const LabeledSet& batch = stream.batches[i];
    StepOutput out;
    try {
      out = adapt_step(state, batch);
    } catch (const PoisonedStateError& e) {
      result.failed_step = e.step();
      result.failure = e.what();
      break;
    }
    for (std::size_t j = 0; j < batch.size(); ++j) {
      if (batch.labels[j] == kNoLabel) continue;
      ++result.counted;
      result.correct += out.predictions[j] == batch.labels[j] ? 1 : 0;
    }
    out.record.online_acc =
        result.counted ? static_cast<double>(result.correct) /
                             static_cast<double>(result.counted)
                       : 0.0;
    result.records.push_back(out.record);
  }
  result.online_accuracy =
      result.counted ? static_cast<double>(result.correct) /
                           static_cast<double>(result.counted)
                     : 0.0;
  return result;
}

}  // namespace tta
