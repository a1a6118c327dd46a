#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "evloop/tensor.hpp"

EVLOOP_NAMESPACE_BEGIN

struct Conv2d {
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;  // zero padding on every side; 0 is "valid"
};
struct Relu {};
struct MaxPool2d {
  std::size_t kernel = 2;
  std::size_t stride = 2;
};
struct Dense {
  std::size_t out_features = 1;
};
struct GlobalAvgPool {};
struct Dropout {
  double p = 0.5;
};
struct Flatten {};

using LayerKind =
    std::variant<Conv2d, Relu, MaxPool2d, Dense, GlobalAvgPool, Dropout, Flatten>;

struct LayerSpec {
  std::string name;
  LayerKind kind;
};

std::string_view layer_kind_name(const LayerKind& kind);

enum class Mode { train, inference };

/// How ReLU sites propagate adjoints. `guided` additionally zeroes negative
/// upstream gradients (guided backpropagation); every other layer kind uses
/// its exact adjoint under either policy.
enum class ReluBackwardPolicy { standard, guided };

/// Weight and bias of one layer. Both are empty for parameter-free layers.
/// Conv weights are (out, in, k, k); dense weights are (out, in).
struct LayerParams {
  Tensor weight;
  Tensor bias;
};

/// A feed-forward chain of layers ending in a single scalar output.
///
/// Shapes are propagated and validated at construction. Every mutation of
/// parameters or mode stamps the network with a fresh version number so that
/// forward caches produced earlier can be recognised as stale.
class Network {
 public:
  Network() = default;
  Network(Shape input_shape, std::vector<LayerSpec> layers);

  /// He-normal weights, zero biases.
  void init_parameters(std::uint64_t seed);

  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  const LayerSpec& layer(std::size_t i) const { return layers_.at(i); }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  /// Output shape of layer i.
  const Shape& output_shape(std::size_t i) const { return shapes_.at(i + 1); }
  /// Shape entering layer i.
  const Shape& input_shape_of(std::size_t i) const { return shapes_.at(i); }

  /// Throws LookupError for unknown names.
  std::size_t layer_index(std::string_view name) const;

  const LayerParams& params(std::size_t i) const { return params_.at(i); }
  LayerParams& mutable_params(std::size_t i);
  const std::vector<LayerParams>& all_params() const noexcept { return params_; }
  std::vector<LayerParams>& mutable_all_params();
  std::size_t parameter_count() const;

  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode mode);

  std::uint64_t version() const noexcept { return version_; }

 private:
  void touch();

  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;  // shapes_[0] is the input, shapes_[i+1] layer i's output
  std::vector<LayerParams> params_;
  Mode mode_ = Mode::inference;
  std::uint64_t version_ = 0;
};

struct ForwardOptions {
  /// Seeds the dropout masks in train mode. Ignored in inference mode.
  std::uint64_t dropout_seed = 0;
};

/// Everything the backward pass needs: activations[0] is the input,
/// activations[i + 1] the output of layer i.
struct ForwardCache {
  std::vector<Tensor> activations;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<std::vector<Real>> dropout_scale;
  Real prediction = 0;
  std::uint64_t network_version = 0;
};

struct ForwardResult {
  Real prediction = 0;
  ForwardCache cache;
};

ForwardResult forward(const Network& net, const Tensor& input,
                      const ForwardOptions& options = {});

/// Prediction only; skips storing the cache.
Real predict_scalar(const Network& net, const Tensor& input);

/// Runs the layers after `layer_id` on an activation injected at that layer's
/// output. Inference mode only.
Real forward_from_layer(const Network& net, std::string_view layer_id,
                        const Tensor& activation);

/// d prediction / d input.
Tensor backward_to_input(const Network& net, const ForwardCache& cache,
                         ReluBackwardPolicy policy = ReluBackwardPolicy::standard);

/// d prediction / d (output of layer `layer_id`).
Tensor backward_to_layer(const Network& net, const ForwardCache& cache,
                         std::string_view layer_id,
                         ReluBackwardPolicy policy = ReluBackwardPolicy::standard);

/// Accumulates `output_grad` * d prediction / d parameters into `grads`
/// (which must match the network's parameter layout) and returns nothing.
void accumulate_parameter_gradients(const Network& net, const ForwardCache& cache,
                                    Real output_grad,
                                    std::vector<LayerParams>& grads);

/// Zero tensors shaped like the network's parameters.
std::vector<LayerParams> zeros_like_params(const Network& net);

EVLOOP_NAMESPACE_END
