#include "evlab/model.hpp"

#include <algorithm>

#include "evlab/dataset.hpp"
#include "evlab/errors.hpp"
#include "evlab/ops.hpp"
#include "evlab/optim.hpp"
#include "json.hpp"

namespace evlab {

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::ParallelConvNet: return "parallel_conv_net";
    case ModelKind::Ffnn: return "ffnn";
    case ModelKind::Decoder: return "decoder";
  }
  return "?";
}

std::string_view to_string(FreezePolicy p) {
  switch (p) {
    case FreezePolicy::None: return "none";
    case FreezePolicy::ThroughPenultimate: return "penultimate";
    case FreezePolicy::LastTwoDense: return "last2";
  }
  return "?";
}

FreezePolicy parse_freeze(std::string_view s) {
  if (s == "none") return FreezePolicy::None;
  if (s == "penultimate") return FreezePolicy::ThroughPenultimate;
  if (s == "last2") return FreezePolicy::LastTwoDense;
  throw UsageError("unknown freeze policy '" + std::string(s) + "' (expected none|penultimate|last2)");
}

void Model::add_parameter(std::string name, Tensor value) {
  if (has_parameter(name)) throw UsageError("duplicate parameter " + name);
  params_.emplace_back(std::move(name), std::move(value));
}

bool Model::has_parameter(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p.first == name; });
}

const Tensor& Model::parameter(std::string_view name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw UsageError("no parameter named " + std::string(name));
}

Tensor& Model::parameter(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const Model&>(*this).parameter(name));
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.second);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.second.numel();
  return n;
}

std::size_t Model::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.second.requires_grad()) n += p.second.numel();
  }
  return n;
}

Model Model::detached() const {
  Model m(kind_, channels_);
  for (const auto& [n, t] : params_) m.params_.emplace_back(n, t.detach());
  m.layers_ = layers_;
  return m;
}

Model Model::clone() const {
  Model m(kind_, channels_);
  for (const auto& [n, t] : params_) m.params_.emplace_back(n, t.clone());
  m.layers_ = layers_;
  return m;
}

namespace {

std::string_view layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::ParallelConv: return "parallel_conv";
    case LayerKind::MaxPool: return "max_pool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::LayerNorm: return "layer_norm";
    case LayerKind::Elu: return "elu";
    case LayerKind::Linear: return "linear";
    case LayerKind::Sigmoid: return "sigmoid";
  }
  return "?";
}

void add_linear(Model& m, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  m.add_parameter(name + ".weight", xavier_init({out, in}, rng));
  m.add_parameter(name + ".bias", Tensor({out}, true));
  m.add_layer({LayerKind::Linear, name, in, out, {}});
}

void add_norm_elu(Model& m, const std::string& norm, const std::string& act, std::size_t width) {
  m.add_parameter(norm + ".gamma", Tensor::filled({width}, 1.0, true));
  m.add_parameter(norm + ".beta", Tensor({width}, true));
  m.add_layer({LayerKind::LayerNorm, norm, width, width, {}});
  m.add_layer({LayerKind::Elu, act, width, width, {}});
}

}  // namespace

std::string Model::layer_plan_json() const {
  nlohmann::ordered_json j;
  j["kind"] = to_string(kind_);
  j["channels"] = channels_;
  j["parameters"] = parameter_count();
  j["trainable"] = trainable_parameter_count();
  auto& layers = j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : layers_) {
    nlohmann::ordered_json e;
    e["name"] = l.name;
    e["type"] = layer_kind_name(l.kind);
    e["in"] = l.in;
    e["out"] = l.out;
    if (!l.kernels.empty()) e["kernels"] = l.kernels;
    layers.push_back(std::move(e));
  }
  auto& params = j["parameter_shapes"] = nlohmann::ordered_json::object();
  for (const auto& [n, t] : params_) {
    params[n] = {{"shape", t.shape()}, {"trainable", t.requires_grad()}};
  }
  return j.dump(2) + "\n";
}

Model build_parallel_conv_net(std::size_t channels, Rng& rng) {
  if (channels == 0) throw UsageError("model needs at least one input channel");
  Model m(ModelKind::ParallelConvNet, channels);
  const std::vector<std::size_t> kernels = {3, 7, 11};
  for (auto k : kernels) {
    const auto name = "conv" + std::to_string(k);
    m.add_parameter(name + ".weight", xavier_init({kConvFilters, channels, k}, rng));
    m.add_parameter(name + ".bias", Tensor({kConvFilters}, true));
  }
  m.add_layer({LayerKind::ParallelConv, "conv", channels, kConvFilters, kernels});
  m.add_layer({LayerKind::MaxPool, "pool", kSamplesPerTrial, kSamplesPerTrial / 2, {2}});
  m.add_layer({LayerKind::Flatten, "raster", kConvFilters * kSamplesPerTrial / 2, kRasterWidth, {}});
  add_norm_elu(m, "ln0", "elu0", kRasterWidth);
  add_linear(m, "fc1", kRasterWidth, 1024, rng);
  add_norm_elu(m, "ln1", "elu1", 1024);
  add_linear(m, "fc2", 1024, kEmbeddingWidth, rng);
  add_norm_elu(m, "ln2", "embedding", kEmbeddingWidth);
  add_linear(m, "fc3", kEmbeddingWidth, 1, rng);
  m.add_layer({LayerKind::Sigmoid, "prob", 1, 1, {}});
  return m;
}

Model build_ffnn(std::size_t channels, Rng& rng) {
  if (channels == 0) throw UsageError("model needs at least one input channel");
  Model m(ModelKind::Ffnn, channels);
  const std::size_t in = channels * kSamplesPerTrial;
  m.add_layer({LayerKind::Flatten, "raster", in, in, {}});
  add_linear(m, "fc1", in, 1024, rng);
  add_norm_elu(m, "ln1", "elu1", 1024);
  add_linear(m, "fc2", 1024, 256, rng);
  add_norm_elu(m, "ln2", "elu2", 256);
  add_linear(m, "fc3", 256, 1, rng);
  m.add_layer({LayerKind::Sigmoid, "prob", 1, 1, {}});
  return m;
}

Model build_decoder(std::size_t channels, Rng& rng) {
  if (channels == 0) throw UsageError("decoder needs at least one output channel");
  Model m(ModelKind::Decoder, channels);
  add_linear(m, "dec.fc1", kEmbeddingWidth, 1024, rng);
  add_norm_elu(m, "dec.ln1", "dec.elu1", 1024);
  add_linear(m, "dec.fc2", 1024, kRasterWidth, rng);
  add_norm_elu(m, "dec.ln2", "dec.elu2", kRasterWidth);
  add_linear(m, "dec.fc3", kRasterWidth, channels * kSamplesPerTrial, rng);
  return m;
}

Tensor forward(const Model& model, const Tensor& input, std::string_view stop_after) {
  bool unbatched = false;
  Tensor x = input;
  if (model.kind() == ModelKind::Decoder) {
    if (input.rank() == 1) {
      unbatched = true;
      x = input.reshape({1, input.dim(0)});
    } else if (input.rank() != 2) {
      throw DimensionError("decoder input must be [128] or [B, 128], got " + shape_str(input.shape()));
    }
  } else {
    if (input.rank() == 2) {
      unbatched = true;
      x = input.reshape({1, input.dim(0), input.dim(1)});
    } else if (input.rank() != 3) {
      throw DimensionError("model input must be [C, 256] or [B, C, 256], got " + shape_str(input.shape()));
    }
    if (x.dim(1) != model.channels() || x.dim(2) != kSamplesPerTrial) {
      throw DimensionError("model expects [" + std::to_string(model.channels()) + ", " +
                           std::to_string(kSamplesPerTrial) + "] trials, got " + shape_str(input.shape()));
    }
  }

  bool stopped = stop_after.empty();
  for (const auto& layer : model.layers()) {
    switch (layer.kind) {
      case LayerKind::ParallelConv: {
        Tensor acc;
        for (auto k : layer.kernels) {
          const auto name = "conv" + std::to_string(k);
          Tensor y = ops::conv1d_same(x, model.parameter(name + ".weight"), model.parameter(name + ".bias"));
          acc = acc.defined() ? ops::add(acc, y) : y;
        }
        x = acc;
        break;
      }
      case LayerKind::MaxPool:
        x = ops::max_pool1d(x, layer.kernels.empty() ? 2 : layer.kernels[0]);
        break;
      case LayerKind::Flatten:
        x = ops::flatten_batch(x);
        break;
      case LayerKind::LayerNorm:
        x = ops::layer_norm(x, model.parameter(layer.name + ".gamma"), model.parameter(layer.name + ".beta"));
        break;
      case LayerKind::Elu:
        x = ops::elu(x);
        break;
      case LayerKind::Linear:
        x = ops::linear(x, model.parameter(layer.name + ".weight"), model.parameter(layer.name + ".bias"));
        break;
      case LayerKind::Sigmoid:
        x = ops::sigmoid(x);
        break;
    }
    if (!stop_after.empty() && layer.name == stop_after) {
      stopped = true;
      break;
    }
  }
  if (!stopped) throw UsageError("no layer named " + std::string(stop_after));
  if (unbatched) {
    Shape s(x.shape().begin() + 1, x.shape().end());
    x = x.reshape(std::move(s));
  }
  return x;
}

Tensor forward_probs(const Model& model, const Tensor& input) {
  if (model.kind() == ModelKind::Decoder) throw UsageError("decoder has no probability output");
  Tensor y = forward(model, input);
  return y.reshape({y.numel()});
}

double forward_prob(const Model& model, const Tensor& trial) {
  if (trial.rank() != 2) throw DimensionError("forward_prob expects a single [C, 256] trial");
  return forward_probs(model, trial).item();
}

Tensor penultimate_embedding(const Model& model, const Tensor& input) {
  if (model.kind() != ModelKind::ParallelConvNet) {
    throw UsageError("penultimate embedding is defined for the convolutional net");
  }
  return forward(model, input, "embedding");
}

Tensor siamese_prob(const Model& model, const SiameseHead& head, const Tensor& xa, const Tensor& xb) {
  if (xa.shape() != xb.shape()) {
    throw DimensionError("siamese inputs differ: " + shape_str(xa.shape()) + " vs " + shape_str(xb.shape()));
  }
  const Tensor ea = penultimate_embedding(model, xa);
  const Tensor eb = penultimate_embedding(model, xb);
  return ops::sigmoid(ops::scale_shift(ops::euclidean_distance(ea, eb), head.scale, head.shift));
}

void apply_freeze(Model& model, FreezePolicy policy) {
  auto trainable = [&](const std::string& name) {
    switch (policy) {
      case FreezePolicy::None: return true;
      case FreezePolicy::ThroughPenultimate: return name.rfind("fc3.", 0) == 0;
      case FreezePolicy::LastTwoDense:
        return name.rfind("fc3.", 0) == 0 || name.rfind("fc2.", 0) == 0 || name.rfind("ln2.", 0) == 0;
    }
    return true;
  };
  if (policy != FreezePolicy::None && !model.has_parameter("fc3.weight")) {
    throw UsageError("freeze policy " + std::string(to_string(policy)) + " needs a classifier head");
  }
  for (const auto& [name, t] : model.named_parameters()) {
    Tensor handle = t;
    handle.set_requires_grad(trainable(name));
  }
}

void reinitialize_output_layer(Model& model, Rng& rng) {
  Tensor& w = model.parameter("fc3.weight");
  Tensor& b = model.parameter("fc3.bias");
  const Tensor fresh = xavier_init(w.shape(), rng);
  std::copy(fresh.data().begin(), fresh.data().end(), w.mutable_data().begin());
  std::fill(b.mutable_data().begin(), b.mutable_data().end(), 0.0);
  w.zero_grad();
  b.zero_grad();
}

std::size_t expected_parallel_conv_parameters(std::size_t channels) {
  std::size_t total = 0;
  for (std::size_t k : {3, 7, 11}) total += kConvFilters * channels * k + kConvFilters;
  auto dense = [](std::size_t in, std::size_t out) { return in * out + out; };
  total += 2 * kRasterWidth;         // ln0
  total += dense(kRasterWidth, 1024);
  total += 2 * 1024;                 // ln1
  total += dense(1024, kEmbeddingWidth);
  total += 2 * kEmbeddingWidth;      // ln2
  total += dense(kEmbeddingWidth, 1);
  return total;
}

}  // namespace evlab
