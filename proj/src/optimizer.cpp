#include "evloop/optimizer.hpp"

#include <cmath>

#include "evloop/error.hpp"
#include "evloop/parallel.hpp"

EVLOOP_NAMESPACE_BEGIN

AdamState AdamState::for_network(const Network& net) {
  AdamState s;
  s.first_moment = zeros_like_params(net);
  s.second_moment = zeros_like_params(net);
  return s;
}

void adam_update(Network& net, const std::vector<LayerParams>& grads, AdamState& state,
                 const AdamConfig& config) {
  if (state.first_moment.size() != net.layer_count()) {
    state = AdamState::for_network(net);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  auto& params = net.mutable_all_params();
  auto update = [&](Tensor& p, const Tensor& g, Tensor& m, Tensor& v) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k];
      const double mk = config.beta1 * m[k] + (1.0 - config.beta1) * gk;
      const double vk = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk;
      m[k] = static_cast<Real>(mk);
      v[k] = static_cast<Real>(vk);
      const double mhat = mk / bc1;
      const double vhat = vk / bc2;
      p[k] = static_cast<Real>(p[k] - config.learning_rate * mhat /
                                          (std::sqrt(vhat) + config.epsilon));
    }
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].weight.empty()) continue;
    update(params[i].weight, grads[i].weight, state.first_moment[i].weight,
           state.second_moment[i].weight);
    update(params[i].bias, grads[i].bias, state.first_moment[i].bias,
           state.second_moment[i].bias);
  }
}

Real train_step(Network& net, const Batch& batch, AdamState& state, const AdamConfig& config,
                std::uint64_t dropout_seed) {
  const std::size_t n = batch.inputs.size();
  if (n == 0) throw ArgumentError("train_step needs a non-empty batch");
  if (batch.labels.size() != n) throw ArgumentError("batch inputs and labels differ in length");
  if (net.mode() != Mode::train) throw ArgumentError("train_step requires train mode");

  std::vector<std::vector<LayerParams>> per_sample(n);
  std::vector<double> sq_err(n);
  const Network& cnet = net;
  parallel_for(n, [&](std::size_t i) {
    ForwardOptions opt{dropout_seed * 0x100000001B3ULL + i};
    ForwardResult fr = forward(cnet, batch.inputs[i], opt);
    const double err = static_cast<double>(fr.prediction) - batch.labels[i];
    sq_err[i] = err * err;
    per_sample[i] = zeros_like_params(cnet);
    accumulate_parameter_gradients(cnet, fr.cache,
                                   static_cast<Real>(2.0 * err / static_cast<double>(n)),
                                   per_sample[i]);
  });

  double loss = 0.0;
  for (double e : sq_err) loss += e;
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw NumericError("non-finite training loss");

  std::vector<LayerParams> grads = std::move(per_sample[0]);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t l = 0; l < grads.size(); ++l) {
      if (grads[l].weight.empty()) continue;
      auto add = [](Tensor& dst, const Tensor& src) {
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      };
      add(grads[l].weight, per_sample[i][l].weight);
      add(grads[l].bias, per_sample[i][l].bias);
    }
  }
  adam_update(net, grads, state, config);
  return static_cast<Real>(loss);
}

EVLOOP_NAMESPACE_END
