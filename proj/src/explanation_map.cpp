#include "evloop/explanation_map.hpp"

#include <array>

#include "evloop/error.hpp"

EVLOOP_NAMESPACE_BEGIN

namespace {
constexpr std::array<std::pair<AttributionMethod, std::string_view>, 5> kMethods{{
    {AttributionMethod::saliency, "saliency"},
    {AttributionMethod::guided_backprop, "guided_backprop"},
    {AttributionMethod::integrated_gradients, "integrated_gradients"},
    {AttributionMethod::grad_cam, "grad_cam"},
    {AttributionMethod::guided_grad_cam, "guided_grad_cam"},
}};
}  // namespace

std::string_view method_name(AttributionMethod m) {
  for (const auto& [k, v] : kMethods) {
    if (k == m) return v;
  }
  return "unknown";
}

std::string valid_method_names() {
  std::string out;
  for (const auto& [k, v] : kMethods) {
    if (!out.empty()) out += ", ";
    out += v;
  }
  return out;
}

AttributionMethod parse_method(std::string_view name) {
  for (const auto& [k, v] : kMethods) {
    if (v == name) return k;
  }
  throw LookupError("unknown attribution method '" + std::string(name) +
                    "' (valid: " + valid_method_names() + ")");
}

ExplanationMap ExplanationMap::zeros(std::size_t h, std::size_t w, AttributionMethod m) {
  ExplanationMap map;
  map.grid = Tensor({h, w});
  map.method = m;
  return map;
}

EVLOOP_NAMESPACE_END
