#include "evloop/checkpoint.hpp"

#include <fstream>
#include <limits>
#include <unordered_map>

#include "binary_io.hpp"
#include "evloop/error.hpp"

EVLOOP_NAMESPACE_BEGIN

namespace {

constexpr std::string_view kMagic = "EVNET1";
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeF64 = 1;
constexpr std::uint8_t kNativeDtype = sizeof(Real) == 8 ? kDtypeF64 : kDtypeF32;

}  // namespace

void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& entries) {
  if (entries.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ArgumentError("too many checkpoint entries");
  }
  os.write(kMagic.data(), kMagic.size());
  detail::write_le<std::uint16_t>(os, kCheckpointVersion);
  detail::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ArgumentError("checkpoint entry name too long");
    }
    detail::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    os.put(static_cast<char>(kNativeDtype));
    os.put(static_cast<char>(e.tensor.rank()));
    for (std::size_t d : e.tensor.shape()) {
      detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    }
    for (Real v : e.tensor.values()) {
      if constexpr (sizeof(Real) == 8) {
        detail::write_f64(os, v);
      } else {
        detail::write_f32(os, v);
      }
    }
  }
  if (!os) throw IoError("failed writing checkpoint");
}

std::vector<NamedTensor> read_checkpoint(std::istream& is) {
  detail::expect_magic(is, std::string(kMagic));
  const auto version = detail::read_le<std::uint16_t>(is);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = detail::read_le<std::uint16_t>(is);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint16_t i = 0; i < count; ++i) {
    NamedTensor e;
    const auto len = detail::read_le<std::uint16_t>(is);
    e.name.resize(len);
    is.read(e.name.data(), len);
    const auto dtype = detail::read_le<std::uint8_t>(is);
    const auto rank = detail::read_le<std::uint8_t>(is);
    if (dtype != kDtypeF32 && dtype != kDtypeF64) {
      throw DataError("unknown dtype tag " + std::to_string(dtype) + " in '" + e.name + "'");
    }
    Shape shape(rank);
    for (auto& d : shape) d = detail::read_le<std::uint32_t>(is);
    std::vector<Real> values(shape_size(shape));
    for (auto& v : values) {
      v = dtype == kDtypeF64 ? static_cast<Real>(detail::read_f64(is))
                             : static_cast<Real>(detail::read_f32(is));
    }
    e.tensor = Tensor(std::move(shape), std::move(values));
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<NamedTensor> network_parameters(const Network& net) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const auto& p = net.params(i);
    if (p.weight.empty()) continue;
    out.push_back({net.layer(i).name + ".weight", p.weight});
    out.push_back({net.layer(i).name + ".bias", p.bias});
  }
  return out;
}

void assign_parameters(Network& net, const std::vector<NamedTensor>& entries) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e.tensor;
  auto take = [&](const std::string& name, Tensor& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint lacks parameter '" + name + "'");
    if (it->second->shape() != dst.shape()) {
      throw ShapeError("checkpoint parameter '" + name + "' has shape " +
                       shape_to_string(it->second->shape()) + ", network expects " +
                       shape_to_string(dst.shape()));
    }
    dst = *it->second;
  };
  auto& params = net.mutable_all_params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].weight.empty()) continue;
    take(net.layer(i).name + ".weight", params[i].weight);
    take(net.layer(i).name + ".bias", params[i].bias);
  }
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(os, network_parameters(net));
}

void load_checkpoint(Network& net, const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  assign_parameters(net, read_checkpoint(is));
}

EVLOOP_NAMESPACE_END
