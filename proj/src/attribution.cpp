#include "evloop/attribution.hpp"

#include <algorithm>
#include <cmath>

#include "evloop/error.hpp"
#include "evloop/image.hpp"

EVLOOP_NAMESPACE_BEGIN

namespace {

void check_input(const Network& net, const Tensor& input) {
  if (input.shape() != net.input_shape()) {
    throw ShapeError("attribution input " + shape_to_string(input.shape()) +
                     " does not match network input " + shape_to_string(net.input_shape()));
  }
  if (input.rank() != 3) throw ShapeError("attribution needs a (C, H, W) input");
}

ExplanationMap wrap(Tensor grid, AttributionMethod m, std::optional<std::string> layer = {}) {
  for (auto& v : grid.values()) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in explanation map");
    if (v < Real(0)) v = Real(0);
  }
  ExplanationMap map;
  map.grid = std::move(grid);
  map.method = m;
  map.layer = std::move(layer);
  return map;
}

Tensor input_gradient(const Network& net, const Tensor& input, ReluBackwardPolicy policy) {
  const ForwardResult fr = forward(net, input);
  return backward_to_input(net, fr.cache, policy);
}

}  // namespace

std::string_view channel_reduce_name(ChannelReduce r) {
  switch (r) {
    case ChannelReduce::max_abs: return "max_abs";
    case ChannelReduce::mean_abs: return "mean_abs";
    case ChannelReduce::l2: return "l2";
  }
  return "max_abs";
}

ChannelReduce parse_channel_reduce(std::string_view name) {
  if (name == "max_abs") return ChannelReduce::max_abs;
  if (name == "mean_abs") return ChannelReduce::mean_abs;
  if (name == "l2") return ChannelReduce::l2;
  throw LookupError("unknown channel reduction '" + std::string(name) +
                    "' (valid: max_abs, mean_abs, l2)");
}

Tensor reduce_channels(const Tensor& t, ChannelReduce reduce) {
  if (t.rank() != 3) throw ShapeError("channel reduction needs a (C, H, W) tensor");
  const std::size_t c = t.dim(0), hw = t.dim(1) * t.dim(2);
  Tensor out({t.dim(1), t.dim(2)});
  for (std::size_t i = 0; i < hw; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double v = std::abs(static_cast<double>(t[k * hw + i]));
      switch (reduce) {
        case ChannelReduce::max_abs: acc = std::max(acc, v); break;
        case ChannelReduce::mean_abs: acc += v; break;
        case ChannelReduce::l2: acc += v * v; break;
      }
    }
    if (reduce == ChannelReduce::mean_abs) acc /= static_cast<double>(c);
    if (reduce == ChannelReduce::l2) acc = std::sqrt(acc);
    out[i] = static_cast<Real>(acc);
  }
  return out;
}

ExplanationMap saliency(const Network& net, const Tensor& input, const AttributionConfig& cfg) {
  check_input(net, input);
  return wrap(reduce_channels(input_gradient(net, input, ReluBackwardPolicy::standard),
                              cfg.channel_reduce),
              AttributionMethod::saliency);
}

ExplanationMap guided_backprop(const Network& net, const Tensor& input,
                               const AttributionConfig& cfg) {
  check_input(net, input);
  return wrap(reduce_channels(input_gradient(net, input, ReluBackwardPolicy::guided),
                              cfg.channel_reduce),
              AttributionMethod::guided_backprop);
}

Tensor integrated_gradients_attributions(const Network& net, const Tensor& input,
                                         const AttributionConfig& cfg) {
  check_input(net, input);
  if (cfg.ig_steps < 1) throw ArgumentError("ig_steps must be >= 1");
  const Tensor baseline = cfg.ig_baseline ? *cfg.ig_baseline : Tensor(input.shape());
  if (baseline.shape() != input.shape()) {
    throw ShapeError("integrated-gradients baseline " + shape_to_string(baseline.shape()) +
                     " does not match input " + shape_to_string(input.shape()));
  }
  std::vector<double> sum(input.size(), 0.0);
  Tensor point(input.shape());
  // Midpoint rule on alpha in [0, 1].
  for (std::size_t s = 0; s < cfg.ig_steps; ++s) {
    const double alpha = (static_cast<double>(s) + 0.5) / static_cast<double>(cfg.ig_steps);
    for (std::size_t i = 0; i < input.size(); ++i) {
      point[i] = static_cast<Real>(baseline[i] + alpha * (static_cast<double>(input[i]) - baseline[i]));
    }
    const Tensor g = input_gradient(net, point, ReluBackwardPolicy::standard);
    for (std::size_t i = 0; i < g.size(); ++i) sum[i] += g[i];
  }
  Tensor attr(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    attr[i] = static_cast<Real>((static_cast<double>(input[i]) - baseline[i]) * sum[i] /
                                static_cast<double>(cfg.ig_steps));
  }
  return attr;
}

ExplanationMap integrated_gradients(const Network& net, const Tensor& input,
                                    const AttributionConfig& cfg) {
  return wrap(reduce_channels(integrated_gradients_attributions(net, input, cfg),
                              cfg.channel_reduce),
              AttributionMethod::integrated_gradients);
}

Tensor grad_cam_coarse(const Network& net, const Tensor& input, const std::string& layer) {
  check_input(net, input);
  if (layer.empty()) throw LookupError("Grad-CAM needs a layer identifier");
  const std::size_t idx = net.layer_index(layer);
  if (net.output_shape(idx).size() != 3) {
    throw LookupError("Grad-CAM layer '" + layer + "' does not produce spatial feature maps");
  }
  const ForwardResult fr = forward(net, input);
  const Tensor grad = backward_to_layer(net, fr.cache, layer);
  const Tensor& feats = fr.cache.activations[idx + 1];
  const std::size_t c = feats.dim(0), h = feats.dim(1), w = feats.dim(2), hw = h * w;
  std::vector<double> cam(hw, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    double alpha = 0.0;
    for (std::size_t i = 0; i < hw; ++i) alpha += grad[k * hw + i];
    alpha /= static_cast<double>(hw);
    for (std::size_t i = 0; i < hw; ++i) cam[i] += alpha * feats[k * hw + i];
  }
  Tensor out({h, w});
  for (std::size_t i = 0; i < hw; ++i) out[i] = static_cast<Real>(std::max(cam[i], 0.0));
  return out;
}

ExplanationMap grad_cam(const Network& net, const Tensor& input, const AttributionConfig& cfg) {
  const Tensor coarse = grad_cam_coarse(net, input, cfg.grad_cam_layer);
  return wrap(resize_plane_bilinear(coarse, input.dim(1), input.dim(2)),
              AttributionMethod::grad_cam, cfg.grad_cam_layer);
}

ExplanationMap guided_grad_cam(const Network& net, const Tensor& input,
                               const AttributionConfig& cfg) {
  const ExplanationMap gbp = guided_backprop(net, input, cfg);
  const ExplanationMap cam = grad_cam(net, input, cfg);
  Tensor prod(gbp.grid.shape());
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = gbp.grid[i] * cam.grid[i];
  return wrap(std::move(prod), AttributionMethod::guided_grad_cam, cfg.grad_cam_layer);
}

ExplanationMap attribute(const Network& net, const Tensor& input, const AttributionConfig& cfg) {
  switch (cfg.method) {
    case AttributionMethod::saliency: return saliency(net, input, cfg);
    case AttributionMethod::guided_backprop: return guided_backprop(net, input, cfg);
    case AttributionMethod::integrated_gradients: return integrated_gradients(net, input, cfg);
    case AttributionMethod::grad_cam: return grad_cam(net, input, cfg);
    case AttributionMethod::guided_grad_cam: return guided_grad_cam(net, input, cfg);
  }
  throw LookupError("unknown attribution method");
}

EVLOOP_NAMESPACE_END
