#pragma once

#include <optional>
#include <string>

#include "evloop/explanation_map.hpp"
#include "evloop/network.hpp"

EVLOOP_NAMESPACE_BEGIN

enum class ChannelReduce { max_abs, mean_abs, l2 };

std::string_view channel_reduce_name(ChannelReduce r);
ChannelReduce parse_channel_reduce(std::string_view name);

struct AttributionConfig {
  AttributionMethod method = AttributionMethod::guided_backprop;
  std::size_t ig_steps = 50;
  /// Integrated-gradients baseline; all zeros when unset.
  std::optional<Tensor> ig_baseline;
  /// Layer whose feature maps Grad-CAM weighs. Required for the Grad-CAM
  /// methods; Model-level entry points fill it from the preset.
  std::string grad_cam_layer;
  ChannelReduce channel_reduce = ChannelReduce::max_abs;
};

/// Collapses a (C, H, W) per-channel attribution to an (H, W) nonnegative grid.
Tensor reduce_channels(const Tensor& per_channel, ChannelReduce reduce);

// All entry points take a (C, H, W) input matching the network's input shape
// and return an (H, W) nonnegative map.

ExplanationMap saliency(const Network& net, const Tensor& input, const AttributionConfig& cfg);
ExplanationMap guided_backprop(const Network& net, const Tensor& input,
                               const AttributionConfig& cfg);
ExplanationMap integrated_gradients(const Network& net, const Tensor& input,
                                    const AttributionConfig& cfg);
ExplanationMap grad_cam(const Network& net, const Tensor& input, const AttributionConfig& cfg);
ExplanationMap guided_grad_cam(const Network& net, const Tensor& input,
                               const AttributionConfig& cfg);

/// Dispatches on cfg.method.
ExplanationMap attribute(const Network& net, const Tensor& input, const AttributionConfig& cfg);

/// Per-channel integrated-gradients attributions (input - baseline) * mean
/// gradient, before channel reduction. Their sum approximates
/// F(input) - F(baseline).
Tensor integrated_gradients_attributions(const Network& net, const Tensor& input,
                                         const AttributionConfig& cfg);

/// Grad-CAM at the layer's own resolution, before upscaling: ReLU of the
/// feature maps weighted by their spatially averaged gradients.
Tensor grad_cam_coarse(const Network& net, const Tensor& input, const std::string& layer);

EVLOOP_NAMESPACE_END
