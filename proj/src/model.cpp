#include "fedsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

namespace {

// Layer sizes including input and output: [input_dim, hidden..., num_classes].
std::vector<int64_t> layer_sizes(const ModelSpec& spec) {
  std::vector<int64_t> sizes;
  sizes.push_back(spec.input_dim);
  if (spec.kind == ModelKind::mlp)
    sizes.insert(sizes.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
  sizes.push_back(spec.num_classes);
  return sizes;
}

struct LayerView {
  const double* W;  // in x out, row-major
  const double* b;  // out
  int64_t in, out;
};

std::vector<LayerView> layer_views(const ModelSpec& spec,
                                   const ParamVector& params) {
  const auto sizes = layer_sizes(spec);
  std::vector<LayerView> views;
  const double* p = params.values().data();
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    LayerView v;
    v.in = sizes[l];
    v.out = sizes[l + 1];
    v.W = p;
    p += v.in * v.out;
    v.b = p;
    p += v.out;
    views.push_back(v);
  }
  return views;
}

struct MutableLayerView {
  double* W;
  double* b;
  int64_t in, out;
};

std::vector<MutableLayerView> mutable_layer_views(const ModelSpec& spec,
                                                  ParamVector& params) {
  std::vector<MutableLayerView> out;
  for (const auto& v : layer_views(spec, params)) {
    out.push_back({const_cast<double*>(v.W), const_cast<double*>(v.b), v.in,
                   v.out});
  }
  return out;
}

// Forward pass for one sample. Fills per-layer activations (acts[0] is the
// input) and the raw output logits.
void forward_sample(const std::vector<LayerView>& layers,
                    std::span<const double> x,
                    std::vector<std::vector<double>>& acts,
                    std::vector<double>& logits) {
  acts.assign(layers.size(), {});
  std::vector<double> cur(x.begin(), x.end());
  for (size_t l = 0; l < layers.size(); ++l) {
    acts[l] = cur;
    const auto& L = layers[l];
    std::vector<double> z(static_cast<size_t>(L.out));
    for (int64_t k = 0; k < L.out; ++k) z[static_cast<size_t>(k)] = L.b[k];
    for (int64_t j = 0; j < L.in; ++j) {
      const double xj = cur[static_cast<size_t>(j)];
      const double* wrow = L.W + j * L.out;
      for (int64_t k = 0; k < L.out; ++k)
        z[static_cast<size_t>(k)] += xj * wrow[k];
    }
    if (l + 1 < layers.size()) {
      for (double& v : z) v = std::tanh(v);
      cur = std::move(z);
    } else {
      logits = std::move(z);
    }
  }
}

// Numerically stable log(sum(exp(z))) decomposition; returns (zmax, lse) with
// lse = log(sum(exp(z - zmax))). Loss for hard label y is (lse + zmax) - z_y.
std::pair<double, double> log_sum_exp(const std::vector<double>& z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - zmax);
  return {zmax, std::log(s)};
}

void softmax_from_logits(const std::vector<double>& z, double zmax, double lse,
                         std::vector<double>& p) {
  p.resize(z.size());
  for (size_t k = 0; k < z.size(); ++k) p[k] = std::exp(z[k] - zmax - lse);
}

// Backward pass for one sample given dz = p - target at the output layer.
// Accumulates parameter gradients scaled by `scale` into grad_layers.
void backward_sample(const std::vector<LayerView>& layers,
                     const std::vector<std::vector<double>>& acts,
                     std::vector<double> dz, double scale,
                     const std::vector<MutableLayerView>& grad_layers) {
  for (size_t li = layers.size(); li-- > 0;) {
    const auto& L = layers[li];
    const auto& a = acts[li];
    auto& G = grad_layers[li];
    for (int64_t k = 0; k < L.out; ++k)
      G.b[k] += scale * dz[static_cast<size_t>(k)];
    for (int64_t j = 0; j < L.in; ++j) {
      const double aj = a[static_cast<size_t>(j)];
      double* grow = G.W + j * L.out;
      for (int64_t k = 0; k < L.out; ++k)
        grow[k] += scale * aj * dz[static_cast<size_t>(k)];
    }
    if (li == 0) break;
    // da = W * dz, then through tanh: dz_prev = da * (1 - a^2)
    std::vector<double> dprev(static_cast<size_t>(L.in), 0.0);
    for (int64_t j = 0; j < L.in; ++j) {
      const double* wrow = L.W + j * L.out;
      double s = 0.0;
      for (int64_t k = 0; k < L.out; ++k)
        s += wrow[k] * dz[static_cast<size_t>(k)];
      const double aj = a[static_cast<size_t>(j)];
      dprev[static_cast<size_t>(j)] = s * (1.0 - aj * aj);
    }
    dz = std::move(dprev);
  }
}

void check_compatible(const ModelSpec& spec, const ParamVector& params,
                      const Dataset& data, std::string_view what) {
  if (params.size() != spec.param_count() ||
      !(params.layout() == *spec.make_layout()))
    throw ContractError(std::string(what) +
                        ": parameter layout does not match model spec");
  if (data.dim() != spec.input_dim)
    throw ContractError(std::string(what) + ": dataset dim " +
                        std::to_string(data.dim()) + " != model input_dim " +
                        std::to_string(spec.input_dim));
  if (data.num_classes() > spec.num_classes)
    throw ContractError(std::string(what) +
                        ": dataset has more classes than the model");
}

// Mean loss and gradient over the samples selected by `indices`.
LossGrad batch_loss_grad(const ModelSpec& spec, const ParamVector& params,
                         const Dataset& data,
                         std::span<const int64_t> indices) {
  const auto layers = layer_views(spec, params);
  LossGrad out;
  out.grad = ParamVector::zeros_like(params);
  auto grad_layers = mutable_layer_views(spec, out.grad);

  const double scale = 1.0 / static_cast<double>(indices.size());
  std::vector<std::vector<double>> acts;
  std::vector<double> logits, p;
  double loss = 0.0;
  for (int64_t i : indices) {
    forward_sample(layers, data.row(i), acts, logits);
    const auto [zmax, lse] = log_sum_exp(logits);
    const int y = data.label(i);
    loss += (lse + zmax) - logits[static_cast<size_t>(y)];
    softmax_from_logits(logits, zmax, lse, p);
    std::vector<double> dz = p;
    dz[static_cast<size_t>(y)] -= 1.0;
    backward_sample(layers, acts, std::move(dz), scale, grad_layers);
  }
  out.loss = loss * scale;
  return out;
}

}  // namespace

void ModelSpec::validate() const {
  if (input_dim <= 0)
    throw ConfigError("model: input_dim must be positive");
  if (num_classes < 2)
    throw ConfigError("model: num_classes must be at least 2");
  if (kind == ModelKind::mlp) {
    if (hidden_dims.empty())
      throw ConfigError("model: mlp requires at least one hidden layer");
    for (int64_t h : hidden_dims)
      if (h <= 0) throw ConfigError("model: hidden_dims must be positive");
  } else if (!hidden_dims.empty()) {
    throw ConfigError("model: hidden_dims is only valid for kind=mlp");
  }
}

std::shared_ptr<const Layout> ModelSpec::make_layout() const {
  validate();
  const auto sizes = layer_sizes(*this);
  auto layout = std::make_shared<Layout>();
  const bool single = sizes.size() == 2;
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::string suffix = single ? "" : std::to_string(l);
    layout->push_back({"W" + suffix, {sizes[l], sizes[l + 1]}});
    layout->push_back({"b" + suffix, {sizes[l + 1]}});
  }
  return layout;
}

int64_t ModelSpec::param_count() const { return layout_size(*make_layout()); }

void TrainConfig::validate() const {
  if (local_epochs <= 0)
    throw ConfigError("local: epochs must be positive");
  if (batch_size <= 0)
    throw ConfigError("local: batch_size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("local: learning_rate must be finite and non-negative");
}

ParamVector init_params(const ModelSpec& spec, uint64_t seed) {
  spec.validate();
  auto layout = spec.make_layout();
  std::vector<double> values(static_cast<size_t>(layout_size(*layout)), 0.0);
  RngStream rng(derive_seed(seed, "model-init"));
  size_t offset = 0;
  for (const auto& seg : *layout) {
    const size_t n = static_cast<size_t>(seg.size());
    if (seg.name[0] == 'W') {
      for (size_t i = 0; i < n; ++i) values[offset + i] = rng.normal(0.0, 0.01);
    }
    offset += n;
  }
  return ParamVector(std::move(values), std::move(layout));
}

LossGrad forward_loss_grad(const ModelSpec& spec, const ParamVector& params,
                           const Dataset& batch) {
  check_compatible(spec, params, batch, "forward_loss_grad");
  if (batch.empty())
    throw ContractError("forward_loss_grad: empty batch");
  std::vector<int64_t> indices(static_cast<size_t>(batch.size()));
  std::iota(indices.begin(), indices.end(), 0);
  return batch_loss_grad(spec, params, batch, indices);
}

LossGrad forward_loss_grad_soft(const ModelSpec& spec, const ParamVector& params,
                                std::span<const double> features,
                                std::span<const double> target_probs) {
  if (static_cast<int64_t>(features.size()) != spec.input_dim)
    throw ContractError("forward_loss_grad_soft: feature size mismatch");
  if (static_cast<int>(target_probs.size()) != spec.num_classes)
    throw ContractError("forward_loss_grad_soft: target size mismatch");

  const auto layers = layer_views(spec, params);
  LossGrad out;
  out.grad = ParamVector::zeros_like(params);
  auto grad_layers = mutable_layer_views(spec, out.grad);

  std::vector<std::vector<double>> acts;
  std::vector<double> logits, p;
  forward_sample(layers, features, acts, logits);
  const auto [zmax, lse] = log_sum_exp(logits);
  softmax_from_logits(logits, zmax, lse, p);

  double loss = 0.0;
  std::vector<double> dz = p;
  for (int k = 0; k < spec.num_classes; ++k) {
    const double t = target_probs[static_cast<size_t>(k)];
    loss -= t * (logits[static_cast<size_t>(k)] - zmax - lse);
    dz[static_cast<size_t>(k)] -= t;
  }
  backward_sample(layers, acts, std::move(dz), 1.0, grad_layers);
  out.loss = loss;
  return out;
}

std::optional<ParamVector> local_train(const ModelSpec& spec,
                                       const ParamVector& params,
                                       const Dataset& data,
                                       const TrainConfig& cfg) {
  if (data.empty()) return std::nullopt;  // skip-client signal
  cfg.validate();
  check_compatible(spec, params, data, "local_train");

  ParamVector w = params;
  const int64_t n = data.size();
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    RngStream shuffle_rng(derive_seed(cfg.seed, "epoch-shuffle",
                                      static_cast<uint64_t>(epoch)));
    for (int64_t i = n - 1; i > 0; --i) {
      const int64_t j = shuffle_rng.uniform_int(i + 1);
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    for (int64_t start = 0; start < n; start += cfg.batch_size) {
      const int64_t stop = std::min(n, start + cfg.batch_size);
      std::span<const int64_t> batch(order.data() + start,
                                     static_cast<size_t>(stop - start));
      const LossGrad lg = batch_loss_grad(spec, w, data, batch);
      axpy(-cfg.learning_rate, lg.grad, w);
    }
  }
  w.check_finite("local_train output");
  return w;
}

EvalResult evaluate(const ModelSpec& spec, const ParamVector& params,
                    const Dataset& data) {
  check_compatible(spec, params, data, "evaluate");
  if (data.empty()) throw ContractError("evaluate: empty dataset");

  const auto layers = layer_views(spec, params);
  std::vector<std::vector<double>> acts;
  std::vector<double> logits;
  int64_t correct = 0;
  double loss = 0.0;
  for (int64_t i = 0; i < data.size(); ++i) {
    forward_sample(layers, data.row(i), acts, logits);
    const auto [zmax, lse] = log_sum_exp(logits);
    loss += (lse + zmax) - logits[static_cast<size_t>(data.label(i))];
    // argmax with ties broken toward the lowest class id
    size_t best = 0;
    for (size_t k = 1; k < logits.size(); ++k)
      if (logits[k] > logits[best]) best = k;
    if (static_cast<int>(best) == data.label(i)) ++correct;
  }
  return {static_cast<double>(correct) / static_cast<double>(data.size()),
          loss / static_cast<double>(data.size())};
}

}  // namespace fedsim
