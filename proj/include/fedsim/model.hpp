#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/param_vector.hpp"

namespace fedsim {

enum class ModelKind { logreg, mlp };

/// Shape of a differentiable classifier over flat parameter vectors.
/// logreg is softmax regression; mlp adds tanh hidden layers.
struct ModelSpec {
  ModelKind kind = ModelKind::logreg;
  int64_t input_dim = 0;
  int num_classes = 0;
  std::vector<int64_t> hidden_dims;  // mlp only

  void validate() const;
  std::shared_ptr<const Layout> make_layout() const;
  int64_t param_count() const;
  bool operator==(const ModelSpec&) const = default;
};

struct TrainConfig {
  int local_epochs = 1;
  int64_t batch_size = 32;
  double learning_rate = 0.1;
  uint64_t seed = 0;

  void validate() const;
};

/// Deterministic initialization: weights ~ N(0, 0.01^2), biases zero.
ParamVector init_params(const ModelSpec& spec, uint64_t seed);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Mean cross-entropy over the batch plus its exact analytic gradient.
LossGrad forward_loss_grad(const ModelSpec& spec, const ParamVector& params,
                           const Dataset& batch);

/// Single-sample loss/gradient against a soft target distribution. Used by
/// gradient-matching reconstruction, where the dummy label is a distribution.
LossGrad forward_loss_grad_soft(const ModelSpec& spec, const ParamVector& params,
                                std::span<const double> features,
                                std::span<const double> target_probs);

/// Mini-batch SGD for cfg.local_epochs epochs with a seeded shuffle per
/// epoch; the final short batch is used as-is. Returns nullopt on an empty
/// dataset (skip-client signal). The input params are not modified.
std::optional<ParamVector> local_train(const ModelSpec& spec,
                                       const ParamVector& params,
                                       const Dataset& data,
                                       const TrainConfig& cfg);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

/// Accuracy (argmax, ties broken toward the lowest class id) and mean
/// cross-entropy on `data`. Requires a nonempty dataset.
EvalResult evaluate(const ModelSpec& spec, const ParamVector& params,
                    const Dataset& data);

}  // namespace fedsim
