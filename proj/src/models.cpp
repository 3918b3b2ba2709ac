#include "tta/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "tta/errors.hpp"
#include "tta/optim.hpp"
#include "tta/rng.hpp"

namespace tta {

namespace {

Tensor random_normal(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> d(shape_numel(shape));
  for (double& v : d) v = stddev * dist(rng);
  return Tensor::from(std::move(shape), std::move(d));
}

Linear clone_linear(const Linear& l) {
  return {l.weight.clone(), l.bias.clone()};
}

}  // namespace

Linear Linear::init(std::size_t in, std::size_t out, double weight_std,
                    std::uint64_t seed) {
  Rng rng(seed);
  return {random_normal({in, out}, weight_std, rng), Tensor::zeros({out})};
}

Tensor Linear::forward(const Tensor& x) const {
  return add_row(matmul(x, weight), bias);
}

NormLayer NormLayer::init(std::size_t dim, double eps) {
  return {dim, Tensor::ones({dim}), Tensor::zeros({dim}), eps};
}

Tensor NormLayer::forward(const Tensor& x) const {
  return add_row(mul_row(normalize_rows(x, eps), gamma), beta);
}

// ---- AdaptiveModel ----------------------------------------------------------

AdaptiveModel::AdaptiveModel(const AdaptiveModel& other)
    : shape_(other.shape_),
      classifier_(clone_linear(other.classifier_)),
      predictor_init_(other.predictor_init_),
      encoder_passes_(other.encoder_passes_) {
  for (const auto& b : other.encoder_) {
    encoder_.push_back({clone_linear(b.linear),
                        {b.norm.feature_dim, b.norm.gamma.clone(),
                         b.norm.beta.clone(), b.norm.eps}});
  }
  for (const auto& l : other.predictor_) predictor_.push_back(clone_linear(l));
}

AdaptiveModel& AdaptiveModel::operator=(const AdaptiveModel& other) {
  if (this != &other) {
    AdaptiveModel tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

AdaptiveModel AdaptiveModel::create(const ModelShape& shape,
                                    std::uint64_t seed) {
  if (shape.input_dim == 0 || shape.hidden.empty() || shape.n_classes < 2) {
    throw ContractError("model shape needs input_dim > 0, at least one hidden "
                        "block and at least 2 classes");
  }
  AdaptiveModel m;
  m.shape_ = shape;
  std::size_t in = shape.input_dim;
  for (std::size_t i = 0; i < shape.hidden.size(); ++i) {
    const std::size_t out = shape.hidden[i];
    m.encoder_.push_back(
        {Linear::init(in, out, std::sqrt(2.0 / static_cast<double>(in)),
                      derive_seed(seed, "encoder." + std::to_string(i))),
         NormLayer::init(out)});
    in = out;
  }
  m.classifier_ = Linear::init(in, shape.n_classes,
                               std::sqrt(1.0 / static_cast<double>(in)),
                               derive_seed(seed, "classifier"));
  m.init_predictor_identity();
  return m;
}

void AdaptiveModel::init_predictor(const PredictorInit& init) {
  const std::size_t d = feature_dim();
  predictor_.clear();
  switch (init.variant) {
    case PredictorVariant::Identity:
      predictor_.push_back({Tensor::eye(d), Tensor::zeros({d})});
      break;
    case PredictorVariant::RandomPerturbedIdentity: {
      Rng rng(init.seed);
      Tensor w = random_normal({d, d}, init.scale, rng);
      auto data = w.mutable_data();
      for (std::size_t i = 0; i < d; ++i) data[i * d + i] += 1.0;
      predictor_.push_back({std::move(w), Tensor::zeros({d})});
      break;
    }
    case PredictorVariant::TwoLayerMLP: {
      if (init.hidden_dim == 0) throw ContractError("MLP predictor hidden_dim 0");
      const double h = static_cast<double>(init.hidden_dim);
      predictor_.push_back(Linear::init(d, init.hidden_dim,
                                        std::sqrt(2.0 / static_cast<double>(d)),
                                        derive_seed(init.seed, "mlp.0")));
      predictor_.push_back(Linear::init(init.hidden_dim, d,
                                        std::sqrt(1.0 / h),
                                        derive_seed(init.seed, "mlp.1")));
      break;
    }
  }
  predictor_init_ = init;
}

Tensor AdaptiveModel::encode(const Tensor& x, bool counted) {
  if (x.dim() != 2 || x.shape()[1] != shape_.input_dim) {
    throw ContractError("model input must be [b×" +
                        std::to_string(shape_.input_dim) + "], got " +
                        shape_str(x.shape()));
  }
  if (counted) ++encoder_passes_;
  Tensor h = x;
  for (const auto& block : encoder_) {
    h = relu(block.norm.forward(block.linear.forward(h)));
  }
  return h;
}

Tensor AdaptiveModel::classify(const Tensor& z) const {
  return classifier_.forward(z);
}

Tensor AdaptiveModel::predict_features(const Tensor& z) const {
  Tensor h = predictor_.front().forward(z);
  for (std::size_t i = 1; i < predictor_.size(); ++i) {
    h = predictor_[i].forward(relu(h));
  }
  return h;
}

BranchOutputs AdaptiveModel::forward_branches(const Tensor& x, bool counted) {
  Tensor z = encode(x, counted);
  Tensor target = classify(z);
  Tensor online = classify(predict_features(z));
  return {std::move(online), std::move(target), std::move(z)};
}

Tensor AdaptiveModel::forward_target(const Tensor& x, bool counted) {
  return classify(encode(x, counted));
}

std::vector<int> AdaptiveModel::predict(const Tensor& x) {
  const Tensor u = forward_target(x, false);
  const std::size_t c = u.cols();
  std::vector<int> out(u.rows());
  const auto d = u.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* row = d.data() + i * c;
    out[i] = static_cast<int>(std::max_element(row, row + c) - row);
  }
  return out;
}

namespace {

void set_grad_flag(std::vector<Tensor> params, bool flag) {
  for (auto& p : params) {
    p.clear_grad();
    p.set_requires_grad(flag);
  }
}

}  // namespace

void AdaptiveModel::enable_source_training() {
  set_grad_flag(frozen_params(), true);
  set_grad_flag(norm_params(), true);
  set_grad_flag(predictor_params(), false);
}

void AdaptiveModel::freeze_all() {
  set_grad_flag(frozen_params(), false);
  set_grad_flag(norm_params(), false);
  set_grad_flag(predictor_params(), false);
}

void AdaptiveModel::enable_adaptation() {
  set_grad_flag(frozen_params(), false);
  set_grad_flag(norm_params(), true);
  set_grad_flag(predictor_params(), predictor_init_.learnable);
}

std::vector<Tensor> AdaptiveModel::norm_params() const {
  std::vector<Tensor> out;
  for (const auto& b : encoder_) {
    out.push_back(b.norm.gamma);
    out.push_back(b.norm.beta);
  }
  return out;
}

std::vector<Tensor> AdaptiveModel::predictor_params() const {
  std::vector<Tensor> out;
  for (const auto& l : predictor_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::vector<Tensor> AdaptiveModel::adaptable_params() const {
  auto out = norm_params();
  if (predictor_init_.learnable) {
    for (auto& p : predictor_params()) out.push_back(std::move(p));
  }
  return out;
}

std::vector<Tensor> AdaptiveModel::frozen_params() const {
  std::vector<Tensor> out;
  for (const auto& b : encoder_) {
    out.push_back(b.linear.weight);
    out.push_back(b.linear.bias);
  }
  out.push_back(classifier_.weight);
  out.push_back(classifier_.bias);
  return out;
}

std::vector<std::pair<std::string, Tensor>> AdaptiveModel::named_params()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    const std::string p = "encoder." + std::to_string(i) + ".";
    out.emplace_back(p + "linear.weight", encoder_[i].linear.weight);
    out.emplace_back(p + "linear.bias", encoder_[i].linear.bias);
    out.emplace_back(p + "norm.gamma", encoder_[i].norm.gamma);
    out.emplace_back(p + "norm.beta", encoder_[i].norm.beta);
  }
  out.emplace_back("classifier.weight", classifier_.weight);
  out.emplace_back("classifier.bias", classifier_.bias);
  for (std::size_t i = 0; i < predictor_.size(); ++i) {
    const std::string p = "predictor." + std::to_string(i) + ".";
    out.emplace_back(p + "weight", predictor_[i].weight);
    out.emplace_back(p + "bias", predictor_[i].bias);
  }
  return out;
}

double predictor_frobenius_drift(const AdaptiveModel& model) {
  if (!model.predictor_is_linear()) {
    throw UnsupportedMetricError(
        "Frobenius drift is only defined for a single linear predictor");
  }
  const Tensor& w = model.predictor().front().weight;
  const std::size_t d = w.shape()[0];
  const auto data = w.data();
  double ss = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = data[i * d + j] - (i == j ? 1.0 : 0.0);
      ss += diff * diff;
    }
  return std::sqrt(ss);
}

// ---- source training --------------------------------------------------------

namespace {

Tensor one_hot(std::span<const int> labels, std::size_t n_classes) {
  std::vector<double> d(labels.size() * n_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    d[i * n_classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Tensor::from({labels.size(), n_classes}, std::move(d));
}

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels,
                          std::size_t n_classes) {
  const Tensor log_p = log(softmax(logits));
  return scale(mean(row_sum(mul(one_hot(labels, n_classes), log_p))), -1.0);
}

void validate_training_set(const AdaptiveModel& model, const LabeledSet& data) {
  if (data.dim != model.shape().input_dim) {
    throw DataError("training data dim " + std::to_string(data.dim) +
                    " does not match model input_dim " +
                    std::to_string(model.shape().input_dim));
  }
  std::vector<std::size_t> counts(model.n_classes(), 0);
  for (int y : data.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= model.n_classes()) {
      throw DataError("training label " + std::to_string(y) +
                      " outside [0, " + std::to_string(model.n_classes()) + ")");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw DataError("class " + std::to_string(c) + " has no training samples");
    }
  }
}

}  // namespace

double accuracy(AdaptiveModel& model, const LabeledSet& data) {
  std::size_t correct = 0, counted = 0;
  constexpr std::size_t kChunk = 512;
  for (std::size_t first = 0; first < data.size(); first += kChunk) {
    const std::size_t n = std::min(kChunk, data.size() - first);
    const auto pred = model.predict(data.rows_tensor(first, n));
    for (std::size_t i = 0; i < n; ++i) {
      const int y = data.labels[first + i];
      if (y == kNoLabel) continue;
      ++counted;
      correct += pred[i] == y ? 1 : 0;
    }
  }
  return counted ? static_cast<double>(correct) / static_cast<double>(counted)
                 : 0.0;
}

TrainReport source_train(AdaptiveModel& model, const LabeledSet& data,
                         const TrainOptions& options) {
  validate_training_set(model, data);
  if (options.batch_size == 0) throw ContractError("batch_size must be > 0");

  TrainReport report;
  report.epochs = options.epochs;
  if (options.epochs > 0) {
    model.enable_source_training();
    std::vector<Tensor> params = model.frozen_params();
    for (auto& p : model.norm_params()) params.push_back(p);
    Sgd opt(options.momentum);
    opt.add_group(params, options.lr);

    Rng rng(derive_seed(options.seed, "source_train"));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t first = 0; first < order.size();
           first += options.batch_size) {
        const std::size_t n = std::min(options.batch_size, order.size() - first);
        const std::span<const std::size_t> idx(order.data() + first, n);
        const LabeledSet batch = data.subset(idx);
        opt.zero_grad();
        const Tensor loss = cross_entropy_loss(model.forward_target(batch.as_tensor()),
                                               batch.labels, model.n_classes());
        if (!std::isfinite(loss.item())) {
          throw NumericError("source training diverged (non-finite loss)");
        }
        backward(loss);
        opt.step();
      }
    }
  }

  // Final report over the full set with gradients disabled.
  model.freeze_all();
  const Tensor logits = model.forward_target(data.as_tensor());
  report.loss = cross_entropy_loss(logits, data.labels, model.n_classes()).item();
  report.accuracy = accuracy(model, data);
  return report;
}

// ---- checkpoints ------------------------------------------------------------

void save_checkpoint(std::ostream& os, const AdaptiveModel& model) {
  const auto& s = model.shape();
  const auto& pi = model.predictor_init();
  os << "tta-checkpoint 1\n";
  os << "input_dim " << s.input_dim << '\n';
  os << "hidden " << s.hidden.size();
  for (std::size_t w : s.hidden) os << ' ' << w;
  os << '\n';
  os << "classes " << s.n_classes << '\n';
  os << "predictor "
     << (pi.variant == PredictorVariant::TwoLayerMLP ? "mlp" : "linear") << ' '
     << pi.hidden_dim << ' ' << (pi.learnable ? 1 : 0) << '\n';
  char buf[64];
  for (const auto& [name, t] : model.named_params()) {
    os << "tensor " << name << ' ' << t.dim();
    for (std::size_t d : t.shape()) os << ' ' << d;
    os << '\n';
    bool first = true;
    for (double v : t.data()) {
      std::snprintf(buf, sizeof buf, "%a", v);
      os << (first ? "" : " ") << buf;
      first = false;
    }
    os << '\n';
  }
  os << "end\n";
}

namespace {

std::string expect_token(std::istream& is, const char* what) {
  std::string tok;
  if (!(is >> tok)) {
    throw DataError(std::string("checkpoint: unexpected end while reading ") +
                    what);
  }
  return tok;
}

std::size_t read_size(std::istream& is, const char* what) {
  const std::string tok = expect_token(is, what);
  char* end = nullptr;
  const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0') {
    throw DataError(std::string("checkpoint: bad integer for ") + what);
  }
  return static_cast<std::size_t>(v);
}

void expect_keyword(std::istream& is, const std::string& kw) {
  const std::string tok = expect_token(is, kw.c_str());
  if (tok != kw) {
    throw DataError("checkpoint: expected '" + kw + "', found '" + tok + "'");
  }
}

}  // namespace

AdaptiveModel load_checkpoint(std::istream& is) {
  expect_keyword(is, "tta-checkpoint");
  if (read_size(is, "version") != 1) {
    throw DataError("checkpoint: unsupported version");
  }
  ModelShape shape;
  expect_keyword(is, "input_dim");
  shape.input_dim = read_size(is, "input_dim");
  expect_keyword(is, "hidden");
  shape.hidden.resize(read_size(is, "hidden count"));
  for (auto& w : shape.hidden) w = read_size(is, "hidden width");
  expect_keyword(is, "classes");
  shape.n_classes = read_size(is, "classes");
  expect_keyword(is, "predictor");
  PredictorInit pi;
  const std::string kind = expect_token(is, "predictor kind");
  pi.hidden_dim = read_size(is, "predictor hidden_dim");
  pi.learnable = read_size(is, "predictor learnable") != 0;
  if (kind == "mlp") {
    pi.variant = PredictorVariant::TwoLayerMLP;
  } else if (kind != "linear") {
    throw DataError("checkpoint: unknown predictor kind '" + kind + "'");
  }

  AdaptiveModel model = AdaptiveModel::create(shape, 0);
  model.init_predictor(pi);

  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : model.named_params()) by_name.emplace(name, t);
  std::size_t loaded = 0;
  for (;;) {
    const std::string tok = expect_token(is, "tensor header");
    if (tok == "end") break;
    if (tok != "tensor") {
      throw DataError("checkpoint: expected 'tensor', found '" + tok + "'");
    }
    const std::string name = expect_token(is, "tensor name");
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw DataError("checkpoint: unknown tensor '" + name + "'");
    }
    Shape s(read_size(is, "rank"));
    for (auto& d : s) d = read_size(is, "dimension");
    if (s != it->second.shape()) {
      throw DataError("checkpoint: tensor '" + name + "' has shape " +
                      shape_str(s) + ", model expects " +
                      shape_str(it->second.shape()));
    }
    auto data = it->second.mutable_data();
    for (double& v : data) {
      const std::string num = expect_token(is, "tensor value");
      char* end = nullptr;
      v = std::strtod(num.c_str(), &end);
      if (end == num.c_str() || *end != '\0') {
        throw DataError("checkpoint: bad value in tensor '" + name + "'");
      }
    }
    ++loaded;
  }
  if (loaded != by_name.size()) {
    throw DataError("checkpoint: expected " + std::to_string(by_name.size()) +
                    " tensors, found " + std::to_string(loaded));
  }
  return model;
}

}  // namespace tta
