#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "evloop/network.hpp"

EVLOOP_NAMESPACE_BEGIN

/// One stored parameter tensor. Entries are named "<layer>.weight" and
/// "<layer>.bias".
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// EVNET1 layout: magic "EVNET1", u16 format version, u16 entry count, then per
/// entry: u16 name length, UTF-8 name, u8 dtype (0 = f32, 1 = f64), u8 rank,
/// u32 dims, raw little-endian values. Values are stored at the library's
/// native precision.
inline constexpr std::uint16_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_checkpoint(std::istream& is);

std::vector<NamedTensor> network_parameters(const Network& net);
/// Copies stored entries into `net`. Every parameter of `net` must be present
/// with a matching shape; f64 data is narrowed when loading into a 32-bit build.
void assign_parameters(Network& net, const std::vector<NamedTensor>& entries);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
void load_checkpoint(Network& net, const std::filesystem::path& path);

EVLOOP_NAMESPACE_END
