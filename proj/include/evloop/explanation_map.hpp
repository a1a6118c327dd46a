#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "evloop/tensor.hpp"

EVLOOP_NAMESPACE_BEGIN

enum class AttributionMethod {
  saliency,
  guided_backprop,
  integrated_gradients,
  grad_cam,
  guided_grad_cam,
};

std::string_view method_name(AttributionMethod m);
/// Throws LookupError listing the valid names.
AttributionMethod parse_method(std::string_view name);
std::string valid_method_names();

/// Nonnegative relevance grid over the input's spatial extent, shape (H, W).
struct ExplanationMap {
  Tensor grid;
  AttributionMethod method = AttributionMethod::saliency;
  std::optional<std::string> layer;
  bool normalized = false;

  std::size_t height() const { return grid.dim(0); }
  std::size_t width() const { return grid.dim(1); }
  Real at(std::size_t y, std::size_t x) const { return grid[y * grid.dim(1) + x]; }

  static ExplanationMap zeros(std::size_t h, std::size_t w, AttributionMethod m);
};

EVLOOP_NAMESPACE_END
