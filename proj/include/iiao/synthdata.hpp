#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iiao/densitymap.hpp"
#include "iiao/tensor.hpp"

namespace iiao::synthdata {

enum class Background { flat, gradient, noise };

struct SceneSpec {
  int width = 256;
  int height = 256;
  int n_points = 50;
  double head_radius_min = 2.0;
  double head_radius_max = 5.0;
  Background background = Background::gradient;
  // Points from a mixture of 1-4 Gaussian clusters instead of uniform.
  bool clustered = false;
  std::uint64_t seed = 0;

  std::vector<std::string> validate() const;
};

struct Scene {
  Tensor image;  // 3 x H x W, values in [0, 1]
  densitymap::AnnotationSet annotations;
};

// Deterministic for a given spec (seed included).
Scene generate(const SceneSpec& spec);

// Shared settings for every scene of a split; each scene draws its own head
// count from [count_min, count_max] and its own seed.
struct SplitTemplate {
  SceneSpec scene;
  int count_min = 10;
  int count_max = 300;
};

struct ManifestEntry {
  std::string split;  // "train" or "test"
  std::string id;
  std::uint64_t seed = 0;
  int n_points = 0;
  Background background = Background::gradient;
  bool clustered = false;
};

struct Manifest {
  std::uint64_t seed = 0;
  SplitTemplate templ;
  std::vector<ManifestEntry> scenes;
};

// Per-scene specs for a split, without touching the disk.
Manifest plan_split(int n_train, int n_test, const SplitTemplate& templ, std::uint64_t seed);

// Writes {split}/{id}.ppm, {split}/{id}.json and manifest.json under `out`.
Manifest generate_split(int n_train, int n_test, const SplitTemplate& templ, std::uint64_t seed,
                        const std::filesystem::path& out);

// Re-creates every scene listed in a manifest under `out`.
void regenerate(const Manifest& manifest, const std::filesystem::path& out);

std::string manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const std::string& text);
Manifest load_manifest(const std::filesystem::path& path);

SceneSpec spec_for(const Manifest& manifest, const ManifestEntry& entry);

std::string to_string(Background b);
Background parse_background(const std::string& name);

}  // namespace iiao::synthdata
