#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iiao/dataset.hpp"
#include "iiao/densitymap.hpp"
#include "iiao/model.hpp"

namespace iiao::eval {

struct Prediction {
  double count = 0.0;
  densitymap::DensityMap map;  // ceil(H/8) x ceil(W/8)
};

// Whole-image inference on a 3 x H x W image. Sides that are not multiples
// of 16 are reflection-padded on the bottom/right and the map is cropped back
// to ceil(side / 8); the count is the sum of the cropped map.
Prediction predict_count(const Tensor& image, const model::ModelParams& params,
                         const model::ModelConfig& config);

// Images whose longer side exceeds `limit` are resized by `factor`; the
// returned image is unchanged otherwise.
Tensor rescale_large(const Tensor& image, std::size_t limit = 5000, double factor = 0.8);

struct EvalRow {
  std::string image_id;
  double gt_count = 0.0;
  double pred_count = 0.0;
};

struct Metrics {
  double mae = 0.0;
  double mse = 0.0;  // root of the mean squared residual
};

// Throws std::invalid_argument on empty input.
Metrics mae_mse(std::span<const EvalRow> rows);
Metrics mae_mse_residuals(std::span<const double> residuals);

struct LevelMetrics {
  std::string label;  // "[0,50]", "(50,500]", ">500"
  double lower = 0.0;
  std::optional<double> upper;  // inclusive; none for the last bucket
  std::size_t n = 0;
  Metrics metrics;
};

// Buckets rows by gt count: [0, b0], (b0, b1], ..., > b_last. Empty buckets
// are omitted. `bounds` must be strictly increasing and non-negative.
std::vector<LevelMetrics> level_breakdown(std::span<const EvalRow> rows, std::span<const double> bounds);

struct EvalReport {
  std::vector<EvalRow> per_image;
  Metrics overall;
  std::vector<LevelMetrics> levels;
};

struct EvalOptions {
  std::vector<double> level_bounds = {50.0, 500.0};
  bool rescale_large = true;
};

EvalReport evaluate(const std::vector<Sample>& samples, const model::ModelParams& params,
                    const model::ModelConfig& config, const EvalOptions& options = {});

std::string report_to_json(const EvalReport& report);
void write_report_json(const EvalReport& report, const std::filesystem::path& path);
// One "gt,pred" line per image after a "gt,pred" header.
void write_scatter_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace iiao::eval
