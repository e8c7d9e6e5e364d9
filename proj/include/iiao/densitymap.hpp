#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iiao/tensor.hpp"

namespace iiao::densitymap {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Head-point annotations for one image. Points satisfy 0 <= x < width and
// 0 <= y < height; `clamped` counts the points pulled inside at ingestion.
struct AnnotationSet {
  std::string image_id;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Point> points;
  std::size_t clamped = 0;

  std::size_t count() const noexcept { return points.size(); }
};

// Moves every point inside the image and returns how many were moved. An
// out-of-range coordinate lands just inside the far edge (dim - 1e-3) or on 0.
std::size_t clamp_points(AnnotationSet& ann);

// Non-negative grid of persons-per-pixel, row-major (y, x).
struct DensityMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  DensityMap() = default;
  DensityMap(std::size_t w, std::size_t h) : width(w), height(h), values(w * h, 0.0) {}

  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  double sum() const noexcept;

  // 1x1xHxW tensor view (copy).
  Tensor to_tensor() const;
  // Accepts any tensor with H*W elements laid out as a single plane.
  static DensityMap from_tensor(const Tensor& t);
};

enum class AnnotationFormat { json, csv };

// JSON: {"w":int,"h":int,"points":[[x,y],...]}. CSV: header "x,y", one point
// per row; the image size comes from `dims` or, if absent, from a sidecar
// file next to it with the extension ".dims" holding "width height".
// Throws std::runtime_error naming the line or field on malformed input.
AnnotationSet load_annotations(const std::filesystem::path& path, AnnotationFormat format,
                               std::optional<std::pair<std::size_t, std::size_t>> dims = {});
AnnotationSet parse_annotations_json(const std::string& text, const std::string& image_id = {});
void save_annotations_json(const AnnotationSet& ann, const std::filesystem::path& path);

// Discrete Gaussian at pixel centers, truncated to a square of radius
// ceil(4 sigma) and renormalized over the pixels that survive truncation and
// image clipping, so every head contributes exactly 1.
DensityMap render_fixed(const AnnotationSet& ann, double sigma);

struct AdaptiveKernel {
  int k = 3;
  double beta = 0.3;
  double sigma_min = 1.0;
  double sigma_max = 15.0;
};

// Per-point sigma: beta times the mean distance to the k nearest other points,
// clamped to [sigma_min, sigma_max]; sigma_max when there are <= k points.
std::vector<double> adaptive_sigmas(const AnnotationSet& ann, const AdaptiveKernel& params);
DensityMap render_adaptive(const AnnotationSet& ann, const AdaptiveKernel& params);

enum class LabelMode { fixed, adaptive };

// Ground-truth rendering choice shared by training and label generation.
struct LabelConfig {
  LabelMode mode = LabelMode::fixed;
  double sigma = 4.0;  // fixed-kernel width in pixels
  AdaptiveKernel adaptive;

  std::vector<std::string> validate() const;
};

DensityMap render(const AnnotationSet& ann, const LabelConfig& cfg);

// Renders one head of unit mass into `map`.
void splat_gaussian(DensityMap& map, Point p, double sigma);

// Sum-pools by `factor`; the total is preserved.
DensityMap to_target_grid(const DensityMap& dm, int factor = 8);

// Export formats.
void write_csv(const DensityMap& dm, const std::filesystem::path& path);
DensityMap read_csv(const std::filesystem::path& path);
// 16-bit binary PGM; pixel = round(value * scale) with scale = 65535 / max,
// recorded in a "# scale <s>" header comment. Returns the scale.
double write_pgm(const DensityMap& dm, const std::filesystem::path& path);

}  // namespace iiao::densitymap
