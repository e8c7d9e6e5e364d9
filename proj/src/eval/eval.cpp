#include "iiao/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "iiao/image_ops.hpp"

namespace iiao::eval {

namespace fs = std::filesystem;

Prediction predict_count(const Tensor& image, const model::ModelParams& params,
                         const model::ModelConfig& config) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeError("predict_count: expected 3 x H x W image, got " + shape_str(image.shape()));
  const std::size_t H = image.dim(1), W = image.dim(2);
  auto round16 = [](std::size_t v) { return (v + 15) / 16 * 16; };
  const Tensor padded = image::reflect_pad(image, round16(H), round16(W));
  const model::ForwardOutputs out =
      model::network_forward(padded.reshaped(Shape{1, 3, padded.dim(1), padded.dim(2)}), params, config);

  const std::size_t mh = (H + 7) / 8, mw = (W + 7) / 8;
  const std::size_t fw = out.f_pre.dim(3);
  Prediction p;
  p.map = densitymap::DensityMap(mw, mh);
  for (std::size_t y = 0; y < mh; ++y)
    for (std::size_t x = 0; x < mw; ++x) p.map.at(y, x) = out.f_pre[y * fw + x];
  p.count = p.map.sum();
  return p;
}

Tensor rescale_large(const Tensor& image, std::size_t limit, double factor) {
  const std::size_t H = image.dim(1), W = image.dim(2);
  if (std::max(H, W) <= limit) return image;
  auto scaled = [&](std::size_t v) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(v) * factor)));
  };
  return image::resize_bilinear(image, scaled(H), scaled(W));
}

Metrics mae_mse_residuals(std::span<const double> residuals) {
  if (residuals.empty()) throw std::invalid_argument("mae_mse: no rows");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (double r : residuals) {
    abs_sum += std::abs(r);
    sq_sum += r * r;
  }
  const auto n = static_cast<double>(residuals.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

Metrics mae_mse(std::span<const EvalRow> rows) {
  std::vector<double> residuals;
  residuals.reserve(rows.size());
  for (const auto& r : rows) residuals.push_back(r.pred_count - r.gt_count);
  return mae_mse_residuals(residuals);
}

namespace {

std::string fmt_bound(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::vector<LevelMetrics> level_breakdown(std::span<const EvalRow> rows, std::span<const double> bounds) {
  if (bounds.empty()) throw std::invalid_argument("level_breakdown: need at least one bound");
  for (std::size_t i = 0; i < bounds.size(); ++i)
    if (!(bounds[i] >= 0.0) || (i > 0 && !(bounds[i] > bounds[i - 1])))
      throw std::invalid_argument("level_breakdown: bounds must be non-negative and strictly increasing");

  std::vector<std::vector<EvalRow>> buckets(bounds.size() + 1);
  for (const auto& r : rows) {
    const auto it = std::lower_bound(bounds.begin(), bounds.end(), r.gt_count);
    buckets[static_cast<std::size_t>(it - bounds.begin())].push_back(r);
  }

  std::vector<LevelMetrics> levels;
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    if (buckets[i].empty()) continue;
    LevelMetrics lm;
    lm.lower = i == 0 ? 0.0 : bounds[i - 1];
    if (i < bounds.size()) lm.upper = bounds[i];
    if (i == 0)
      lm.label = "[0," + fmt_bound(bounds[0]) + "]";
    else if (i < bounds.size())
      lm.label = "(" + fmt_bound(bounds[i - 1]) + "," + fmt_bound(bounds[i]) + "]";
    else
      lm.label = ">" + fmt_bound(bounds.back());
    lm.n = buckets[i].size();
    lm.metrics = mae_mse(buckets[i]);
    levels.push_back(std::move(lm));
  }
  return levels;
}

EvalReport evaluate(const std::vector<Sample>& samples, const model::ModelParams& params,
                    const model::ModelConfig& config, const EvalOptions& options) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no images");
  EvalReport report;
  report.per_image.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const Tensor img = options.rescale_large ? rescale_large(s.image) : s.image;
    report.per_image[i] = {s.id, static_cast<double>(s.annotations.count()),
                           predict_count(img, params, config).count};
  }
  report.overall = mae_mse(report.per_image);
  report.levels = level_breakdown(report.per_image, options.level_bounds);
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["mae"] = report.overall.mae;
  j["mse"] = report.overall.mse;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : report.per_image)
    rows.push_back({{"image_id", r.image_id}, {"gt", r.gt_count}, {"pred", r.pred_count}});
  j["per_image"] = std::move(rows);
  auto levels = nlohmann::ordered_json::object();
  for (const auto& l : report.levels)
    levels[l.label] = {{"n", l.n}, {"mae", l.metrics.mae}, {"mse", l.metrics.mse}};
  j["levels"] = std::move(levels);
  return j.dump(2);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

void write_report_json(const EvalReport& report, const fs::path& path) {
  write_text(path, report_to_json(report) + "\n");
}

void write_scatter_csv(const EvalReport& report, const fs::path& path) {
  std::string text = "gt,pred\n";
  char buf[80];
  for (const auto& r : report.per_image) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", r.gt_count, r.pred_count);
    text += buf;
  }
  write_text(path, text);
}

}  // namespace iiao::eval
