#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tta/autodiff.hpp"
#include "tta/dataset.hpp"

namespace tta {

// y = x·W + b with W stored [in×out].
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear init(std::size_t in, std::size_t out, double weight_std,
                     std::uint64_t seed);
  std::size_t in_dim() const { return weight.shape()[0]; }
  std::size_t out_dim() const { return weight.shape()[1]; }
  Tensor forward(const Tensor& x) const;
};

// Per-sample feature normalization followed by a learnable affine map.
struct NormLayer {
  std::size_t feature_dim = 0;
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  static NormLayer init(std::size_t dim, double eps = 1e-5);
  Tensor forward(const Tensor& x) const;
};

struct EncoderBlock {
  Linear linear;
  NormLayer norm;
};

enum class PredictorVariant { Identity, RandomPerturbedIdentity, TwoLayerMLP };

struct PredictorInit {
  PredictorVariant variant = PredictorVariant::Identity;
  double scale = 0.1;              // RandomPerturbedIdentity: P = I + scale·W
  std::uint64_t seed = 0;          // RandomPerturbedIdentity / TwoLayerMLP
  std::size_t hidden_dim = 16;     // TwoLayerMLP
  bool learnable = true;
};

struct ModelShape {
  std::size_t input_dim = 8;
  std::vector<std::size_t> hidden{32, 16};
  std::size_t n_classes = 6;
};

struct BranchOutputs {
  Tensor online_logits;  // u^o = g(h(z))
  Tensor target_logits;  // u^r = g(z)
  Tensor features;       // z
};

struct TrainOptions {
  std::size_t epochs = 60;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct TrainReport {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t epochs = 0;
};

// Encoder f, linear classifier g and predictor h. Copies are deep.
class AdaptiveModel {
 public:
  AdaptiveModel() = default;
  AdaptiveModel(const AdaptiveModel& other);
  AdaptiveModel& operator=(const AdaptiveModel& other);
  AdaptiveModel(AdaptiveModel&&) noexcept = default;
  AdaptiveModel& operator=(AdaptiveModel&&) noexcept = default;

  // Random encoder/classifier weights; identity predictor.
  static AdaptiveModel create(const ModelShape& shape, std::uint64_t seed);

  const ModelShape& shape() const { return shape_; }
  std::size_t feature_dim() const { return shape_.hidden.back(); }
  std::size_t n_classes() const { return shape_.n_classes; }

  void init_predictor(const PredictorInit& init);
  void init_predictor_identity() { init_predictor(PredictorInit{}); }
  const PredictorInit& predictor_init() const { return predictor_init_; }
  bool predictor_is_linear() const { return predictor_.size() == 1; }

  // `counted` passes increment encoder_passes(); diagnostic probes pass false.
  Tensor encode(const Tensor& x, bool counted = true);
  Tensor classify(const Tensor& z) const;
  Tensor predict_features(const Tensor& z) const;

  // One encoder pass; both branches read the same z.
  BranchOutputs forward_branches(const Tensor& x, bool counted = true);
  // u^r only (single-branch methods and source training).
  Tensor forward_target(const Tensor& x, bool counted = true);
  // Argmax of u^r; an uncounted inference pass.
  std::vector<int> predict(const Tensor& x);

  // Number of counted encoder passes since construction.
  std::size_t encoder_passes() const { return encoder_passes_; }

  // Sets requires_grad for source training: everything but the predictor.
  void enable_source_training();
  // Sets requires_grad for adaptation: norm affine params and, when learnable,
  // the predictor. Everything else is frozen.
  void enable_adaptation();
  void freeze_all();

  std::vector<Tensor> norm_params() const;
  std::vector<Tensor> predictor_params() const;
  std::vector<Tensor> adaptable_params() const;
  std::vector<Tensor> frozen_params() const;
  // All parameters with stable names, in checkpoint order.
  std::vector<std::pair<std::string, Tensor>> named_params() const;

  const std::vector<EncoderBlock>& encoder() const { return encoder_; }
  const Linear& classifier() const { return classifier_; }
  const std::vector<Linear>& predictor() const { return predictor_; }
  std::vector<Linear>& mutable_predictor() { return predictor_; }

 private:
  ModelShape shape_;
  std::vector<EncoderBlock> encoder_;
  Linear classifier_;
  std::vector<Linear> predictor_;
  PredictorInit predictor_init_;
  std::size_t encoder_passes_ = 0;
};

// ‖P − I‖_F for a linear predictor; bias excluded.
double predictor_frobenius_drift(const AdaptiveModel& model);

// Mini-batch SGD with momentum on cross-entropy over the target branch.
TrainReport source_train(AdaptiveModel& model, const LabeledSet& data,
                         const TrainOptions& options);

// Fraction of rows whose predicted class equals the label; kNoLabel rows skip.
double accuracy(AdaptiveModel& model, const LabeledSet& data);

// Checkpoint text format (version 1):
//   tta-checkpoint 1
//   input_dim <n>
//   hidden <count> <w_1> ... <w_count>
//   classes <C>
//   predictor <linear|mlp> <hidden_dim> <learnable 0|1>
//   tensor <name> <rank> <d_1> ... <d_rank>
//   <values as C99 hex floats, space separated>
//   ... one tensor block per parameter ...
//   end
// Hex floats make the round trip bit exact.
void save_checkpoint(std::ostream& os, const AdaptiveModel& model);
AdaptiveModel load_checkpoint(std::istream& is);

}  // namespace tta
