#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evloop/synthetic.hpp"

EVLOOP_NAMESPACE_BEGIN

struct ManifestEntry {
  std::size_t id = 0;
  int grade = 0;
  std::uint64_t seed = 0;
};

/// manifest.json: {version, generator_cfg_hash, image_size, entries: [{id, grade, seed}]}.
struct Manifest {
  int version = 1;
  std::string generator_cfg_hash;
  std::size_t image_size = 0;
  std::vector<ManifestEntry> entries;
};

/// Stable FNV-1a hash (hex) of the generator configuration.
std::string generator_config_hash(const GeneratorConfig& cfg);
std::string generator_config_json(const GeneratorConfig& cfg);
/// Strict parse: unknown keys raise ArgumentError; missing keys keep defaults.
GeneratorConfig generator_config_from_json(const std::string& text);

/// "0007" style identifier, at least four digits.
std::string entry_stem(std::size_t id);

/// Writes images/NNNN.png, masks/NNNN.<type>.png (all four types, empty masks
/// included) and manifest.json. Grades are shuffled by `seed`; each scene gets
/// its own derived seed.
Manifest generate_dataset(const GeneratorConfig& cfg, const std::array<std::size_t, 4>& counts,
                          std::uint64_t seed, const std::filesystem::path& out_dir);

/// Throws DataError for missing or malformed manifests.
Manifest read_manifest(const std::filesystem::path& dir);
void write_manifest(const std::filesystem::path& dir, const Manifest& manifest);

Image load_entry_image(const std::filesystem::path& dir, const ManifestEntry& e);
std::array<BinaryMask, kLesionTypes> load_entry_masks(const std::filesystem::path& dir,
                                                      const ManifestEntry& e);

EVLOOP_NAMESPACE_END
