#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "evlab/rng.hpp"
#include "evlab/tensor.hpp"

namespace evlab {

inline constexpr std::size_t kConvFilters = 32;
inline constexpr std::size_t kRasterWidth = 4096;
inline constexpr std::size_t kEmbeddingWidth = 128;

enum class ModelKind { ParallelConvNet, Ffnn, Decoder };

enum class FreezePolicy {
  None,
  /// Only the final 128 -> 1 layer trains.
  ThroughPenultimate,
  /// The 1024 -> 128 stack (linear + its layer norm) and the 128 -> 1 layer train.
  LastTwoDense,
};

std::string_view to_string(ModelKind k);
std::string_view to_string(FreezePolicy p);
/// "none" | "penultimate" | "last2"
FreezePolicy parse_freeze(std::string_view s);

enum class LayerKind { ParallelConv, MaxPool, Flatten, LayerNorm, Elu, Linear, Sigmoid };

struct LayerSpec {
  LayerKind kind;
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;
  /// ParallelConv branch kernel sizes; MaxPool uses kernels[0] as the window.
  std::vector<std::size_t> kernels;
};

/// Named parameters plus the layer plan that consumes them.
///
/// Parameters are stored in insertion order; that order is the order used by
/// the optimizer and by weight files. A parameter is trainable iff its
/// tensor has requires_grad set.
class Model {
 public:
  Model(ModelKind kind, std::size_t channels) : kind_(kind), channels_(channels) {}

  ModelKind kind() const { return kind_; }
  std::size_t channels() const { return channels_; }

  void add_parameter(std::string name, Tensor value);
  bool has_parameter(std::string_view name) const;
  const Tensor& parameter(std::string_view name) const;
  Tensor& parameter(std::string_view name);
  const std::vector<std::pair<std::string, Tensor>>& named_parameters() const { return params_; }
  /// Shared handles in storage order.
  std::vector<Tensor> parameters() const;

  std::size_t parameter_count() const;
  std::size_t trainable_parameter_count() const;

  void add_layer(LayerSpec spec) { layers_.push_back(std::move(spec)); }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::string layer_plan_json() const;

  /// Deep copy of every parameter (flags included).
  Model clone() const;
  /// Copies values without gradient tracking; for inference and input
  /// gradients only.
  Model detached() const;

 private:
  ModelKind kind_;
  std::size_t channels_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<LayerSpec> layers_;
};

/// conv{3,7,11} (32 filters, same padding) summed -> maxpool(2) -> raster 4096
/// -> LN -> ELU -> 1024 -> LN -> ELU -> 128 -> LN -> ELU -> 1 -> sigmoid.
/// Xavier weights, zero biases, unit gamma, zero beta.
Model build_parallel_conv_net(std::size_t channels, Rng& rng);
/// raster(C*256) -> 1024 -> LN -> ELU -> 256 -> LN -> ELU -> 1 -> sigmoid.
Model build_ffnn(std::size_t channels, Rng& rng);
/// 128 -> 1024 -> LN -> ELU -> 4096 -> LN -> ELU -> C*256.
Model build_decoder(std::size_t channels, Rng& rng);

/// Runs the layer plan. Accepts [C, 256] / [B, C, 256] for convolutional and
/// feed-forward nets and [128] / [B, 128] for decoders. When `stop_after` names
/// a layer, returns that layer's activations. Unbatched inputs yield
/// unbatched outputs.
Tensor forward(const Model& model, const Tensor& input, std::string_view stop_after = {});

/// Classifier probabilities: [B] for batched input, [1] for a single trial.
Tensor forward_probs(const Model& model, const Tensor& input);
double forward_prob(const Model& model, const Tensor& trial);

/// Activations after the 1024 -> 128 stack (post-LN, post-ELU).
Tensor penultimate_embedding(const Model& model, const Tensor& input);

/// Trainable affine head of the Siamese pass.
struct SiameseHead {
  Tensor scale = Tensor::scalar(1.0, true);
  Tensor shift = Tensor::scalar(0.0, true);
  SiameseHead clone() const { return {scale.clone(), shift.clone()}; }
};

/// sigmoid(scale * ||emb(a) - emb(b)|| + shift), one value per pair.
Tensor siamese_prob(const Model& model, const SiameseHead& head, const Tensor& xa, const Tensor& xb);

/// Sets requires_grad on every parameter according to `policy`.
void apply_freeze(Model& model, FreezePolicy policy);
/// Re-draws the final 128 -> 1 layer (Xavier weight, zero bias).
void reinitialize_output_layer(Model& model, Rng& rng);

/// Independent per-layer parameter count of the convolutional net.
std::size_t expected_parallel_conv_parameters(std::size_t channels);

// Weight files: "EVLW", u32 version, then per parameter
// u32 name length, UTF-8 name, u32 rank, u32 dims[rank], f64 values; all little-endian.
void save_tensors(const std::filesystem::path& path,
                  const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> load_tensors(const std::filesystem::path& path);

void save_weights(const Model& model, const std::filesystem::path& path);
/// Rebuilds the architecture from the stored parameter names and shapes.
Model load_weights(const std::filesystem::path& path);

}  // namespace evlab
