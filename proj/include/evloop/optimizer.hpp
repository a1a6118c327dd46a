#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evloop/network.hpp"

EVLOOP_NAMESPACE_BEGIN

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates per parameter plus the step counter.
struct AdamState {
  std::vector<LayerParams> first_moment;
  std::vector<LayerParams> second_moment;
  std::uint64_t step = 0;

  static AdamState for_network(const Network& net);
};

struct Batch {
  std::span<const Tensor> inputs;
  std::span<const Real> labels;
};

/// One Adam step on the mean squared error of the batch. The network must be
/// in train mode. Returns the batch loss computed before the update.
///
/// Per-sample gradients are evaluated in parallel but summed in sample order,
/// so the result does not depend on the thread count.
Real train_step(Network& net, const Batch& batch, AdamState& state, const AdamConfig& config,
                std::uint64_t dropout_seed = 0);

/// Applies one Adam update from precomputed gradients.
void adam_update(Network& net, const std::vector<LayerParams>& grads, AdamState& state,
                 const AdamConfig& config);

EVLOOP_NAMESPACE_END
