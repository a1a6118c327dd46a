#include "evloop/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "evloop/error.hpp"
#include "evloop/parallel.hpp"
#include "evloop/png_io.hpp"

EVLOOP_NAMESPACE_BEGIN

namespace {

using nlohmann::ordered_json;

ordered_json range_json(CountRange r) { return ordered_json::array({r.min, r.max}); }
ordered_json range_json(RadiusRange r) { return ordered_json::array({r.min, r.max}); }

ordered_json to_json(const GeneratorConfig& c) {
  return ordered_json{
      {"image_size", c.image_size},
      {"background_amplitude", c.background_amplitude},
      {"noise_amplitude", c.noise_amplitude},
      {"vessel_count", c.vessel_count},
      {"vessel_darkening", c.vessel_darkening},
      {"grade1_micro_dots", range_json(c.grade1_micro_dots)},
      {"micro_dots", range_json(c.micro_dots)},
      {"dark_blobs", range_json(c.dark_blobs)},
      {"bright_blobs", range_json(c.bright_blobs)},
      {"diffuse_patches", range_json(c.diffuse_patches)},
      {"micro_dot_radius", range_json(c.micro_dot_radius)},
      {"blob_radius", range_json(c.blob_radius)},
      {"diffuse_radius", range_json(c.diffuse_radius)},
      {"micro_dot_offset", c.micro_dot_offset},
      {"dark_blob_offset", c.dark_blob_offset},
      {"bright_blob_offset", c.bright_blob_offset},
      {"diffuse_patch_offset", c.diffuse_patch_offset},
  };
}

// splitmix64 finaliser: decorrelates consecutive scene seeds.
std::uint64_t mix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void write_scene(const std::filesystem::path& dir, std::size_t id, const SyntheticScene& s) {
  const std::string stem = entry_stem(id);
  write_png(dir / "images" / (stem + ".png"), s.image);
  for (LesionType t : kAllLesionTypes) {
    write_mask_png(dir / "masks" / (stem + "." + std::string(lesion_type_name(t)) + ".png"),
                   s.mask(t));
  }
}

}  // namespace

std::string generator_config_json(const GeneratorConfig& cfg) { return to_json(cfg).dump(2); }

std::string generator_config_hash(const GeneratorConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

GeneratorConfig generator_config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ArgumentError(std::string("generator config: ") + e.what());
  }
  if (!j.is_object()) throw ArgumentError("generator config must be a JSON object");
  GeneratorConfig c;
  const ordered_json defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ArgumentError("unknown generator config key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::remove_reference_t<decltype(field)>>();
    };
    auto get_count = [&](const char* key, CountRange& r) {
      if (j.contains(key)) r = {j[key].at(0).get<std::size_t>(), j[key].at(1).get<std::size_t>()};
    };
    auto get_radius = [&](const char* key, RadiusRange& r) {
      if (j.contains(key)) r = {j[key].at(0).get<double>(), j[key].at(1).get<double>()};
    };
    get("image_size", c.image_size);
    get("background_amplitude", c.background_amplitude);
    get("noise_amplitude", c.noise_amplitude);
    get("vessel_count", c.vessel_count);
    get("vessel_darkening", c.vessel_darkening);
    get_count("grade1_micro_dots", c.grade1_micro_dots);
    get_count("micro_dots", c.micro_dots);
    get_count("dark_blobs", c.dark_blobs);
    get_count("bright_blobs", c.bright_blobs);
    get_count("diffuse_patches", c.diffuse_patches);
    get_radius("micro_dot_radius", c.micro_dot_radius);
    get_radius("blob_radius", c.blob_radius);
    get_radius("diffuse_radius", c.diffuse_radius);
    get("micro_dot_offset", c.micro_dot_offset);
    get("dark_blob_offset", c.dark_blob_offset);
    get("bright_blob_offset", c.bright_blob_offset);
    get("diffuse_patch_offset", c.diffuse_patch_offset);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("generator config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string entry_stem(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", id);
  return buf;
}

Manifest generate_dataset(const GeneratorConfig& cfg, const std::array<std::size_t, 4>& counts,
                          std::uint64_t seed, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (!ec) std::filesystem::create_directories(out_dir / "masks", ec);
  if (ec) throw IoError("cannot create dataset directory '" + out_dir.string() + "': " + ec.message());

  Manifest m;
  m.generator_cfg_hash = generator_config_hash(cfg);
  m.image_size = cfg.image_size;
  std::vector<int> grades;
  for (int g = 0; g < 4; ++g) grades.insert(grades.end(), counts[static_cast<std::size_t>(g)], g);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with the engine directly; std::shuffle is implementation defined.
  for (std::size_t i = grades.size(); i > 1; --i) {
    std::swap(grades[i - 1], grades[rng() % i]);
  }
  for (std::size_t i = 0; i < grades.size(); ++i) {
    m.entries.push_back({i, grades[i], mix(seed ^ mix(i))});
  }

  // Scenes are rendered in parallel chunks and written by this thread only.
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < m.entries.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, m.entries.size() - start);
    std::vector<SyntheticScene> scenes(n);
    parallel_for(n, [&](std::size_t k) {
      const ManifestEntry& e = m.entries[start + k];
      scenes[k] = generate_scene(cfg, e.grade, e.seed);
    });
    for (std::size_t k = 0; k < n; ++k) write_scene(out_dir, start + k, scenes[k]);
  }
  write_manifest(out_dir, m);
  {
    std::ofstream os(out_dir / "generator_config.json");
    os << generator_config_json(cfg) << '\n';
    if (!os) throw IoError("cannot write generator_config.json");
  }
  return m;
}

void write_manifest(const std::filesystem::path& dir, const Manifest& manifest) {
  ordered_json j;
  j["version"] = manifest.version;
  j["generator_cfg_hash"] = manifest.generator_cfg_hash;
  j["image_size"] = manifest.image_size;
  j["entries"] = ordered_json::array();
  for (const auto& e : manifest.entries) {
    j["entries"].push_back({{"id", e.id}, {"grade", e.grade}, {"seed", e.seed}});
  }
  std::ofstream os(dir / "manifest.json");
  os << j.dump(2) << '\n';
  if (!os) throw IoError("cannot write manifest in '" + dir.string() + "'");
}

Manifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream is(path);
  if (!is) throw DataError("missing manifest '" + path.string() + "'");
  Manifest m;
  try {
    const auto j = ordered_json::parse(is);
    m.version = j.at("version").get<int>();
    if (m.version != 1) throw DataError("unsupported manifest version " + std::to_string(m.version));
    m.generator_cfg_hash = j.value("generator_cfg_hash", std::string());
    m.image_size = j.value("image_size", std::size_t{0});
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry{e.at("id").get<std::size_t>(), e.at("grade").get<int>(),
                          e.at("seed").get<std::uint64_t>()};
      if (entry.grade < 0 || entry.grade > 3) {
        throw DataError("manifest entry " + std::to_string(entry.id) + " has grade outside 0..3");
      }
      m.entries.push_back(entry);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt manifest '" + path.string() + "': " + e.what());
  }
  return m;
}

Image load_entry_image(const std::filesystem::path& dir, const ManifestEntry& e) {
  return read_png(dir / "images" / (entry_stem(e.id) + ".png"));
}

std::array<BinaryMask, kLesionTypes> load_entry_masks(const std::filesystem::path& dir,
                                                      const ManifestEntry& e) {
  std::array<BinaryMask, kLesionTypes> out;
  for (LesionType t : kAllLesionTypes) {
    out[static_cast<std::size_t>(t)] = read_mask_png(
        dir / "masks" / (entry_stem(e.id) + "." + std::string(lesion_type_name(t)) + ".png"));
  }
  return out;
}

EVLOOP_NAMESPACE_END
