#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "advarena/ops.hpp"
#include "advarena/tensor.hpp"

namespace advarena {

struct ConvLayer {
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool operator==(const ConvLayer&) const = default;
};

struct DenseLayer {
  std::size_t width;
  bool operator==(const DenseLayer&) const = default;
};

struct ReluLayer {
  bool operator==(const ReluLayer&) const = default;
};

using LayerSpec = std::variant<ConvLayer, DenseLayer, ReluLayer>;

/// Layer chain from an input image to C logits. Dense layers flatten their input.
struct ModelSpec {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t classes = 10;
  std::vector<LayerSpec> layers;

  Shape input_shape() const { return {channels, height, width}; }
  /// Output shape of every layer, in order. Throws std::invalid_argument when the chain is inconsistent.
  std::vector<Shape> output_shapes() const;
  /// Shapes of all parameter tensors (kernel, bias per conv; matrix, bias per dense).
  std::vector<Shape> weight_shapes() const;
  void validate() const;
  /// Index into the activation trace (0 = input, i + 1 = output of layer i) of the topmost
  /// convolutional feature map: the last conv output, after its ReLU when one follows. Empty when
  /// the model has no convolution.
  std::optional<std::size_t> topmost_conv_feature() const;

  std::string to_text() const;
  static ModelSpec from_text(std::string_view text);

  bool operator==(const ModelSpec&) const = default;
};

/// Per-layer activations of one forward pass. acts[0] is the input, acts[i + 1] the output of layer i.
struct Trace {
  std::vector<Tensor> acts;
  const Tensor& logits() const { return acts.back(); }
};

/// A trained (or freshly initialised) feed-forward classifier. Immutable through its const interface.
class Classifier {
 public:
  Classifier() = default;
  Classifier(std::string name, ModelSpec spec, std::vector<Tensor> weights);

  /// Seeded He-uniform initialisation, zero biases.
  static Classifier build(std::string name, const ModelSpec& spec, std::uint64_t seed);

  const std::string& name() const { return name_; }
  const ModelSpec& spec() const { return spec_; }
  const std::vector<Tensor>& weights() const { return weights_; }
  std::vector<Tensor>& mutable_weights() { return weights_; }
  std::size_t classes() const { return spec_.classes; }

  Trace forward(const Tensor& x) const;
  Tensor logits(const Tensor& x) const;
  std::size_t predict(const Tensor& x) const;
  Tensor probabilities(const Tensor& x) const;

  /// Cross-entropy at (x, label) and its exact gradient with respect to x.
  ops::LossGrad loss_grad_input(const Tensor& x, std::size_t label) const;

  /// Pulls `upstream` (gradient at trace.acts[level]) back to the input.
  Tensor backward_input(const Trace& trace, std::size_t level, Tensor upstream) const;

  /// Parameter gradients for an upstream gradient at the logits; optionally also the input gradient.
  std::vector<Tensor> backward_params(const Trace& trace, const Tensor& upstream_logits,
                                      Tensor* grad_input = nullptr) const;

  std::uint64_t weights_hash() const;

  void save(const std::filesystem::path& path) const;
  static Classifier load(const std::filesystem::path& path);

 private:
  void check_input(const Tensor& x) const;

  std::string name_;
  ModelSpec spec_;
  std::vector<Tensor> weights_;
  std::vector<std::size_t> param_offset_;  // first weight index of each layer
};

}  // namespace advarena
