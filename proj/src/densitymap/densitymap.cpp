#include "iiao/densitymap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace iiao::densitymap {

namespace fs = std::filesystem;
using nlohmann::json;

double DensityMap::sum() const noexcept {
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc;
}

Tensor DensityMap::to_tensor() const { return Tensor(Shape{1, 1, height, width}, values); }

DensityMap DensityMap::from_tensor(const Tensor& t) {
  if (t.rank() < 2) throw ShapeError("density map needs at least 2 dims, got " + shape_str(t.shape()));
  const std::size_t h = t.shape()[t.rank() - 2], w = t.shape()[t.rank() - 1];
  if (h * w != t.size())
    throw ShapeError("density map tensor must hold a single plane, got " + shape_str(t.shape()));
  DensityMap dm(w, h);
  std::copy(t.values().begin(), t.values().end(), dm.values.begin());
  return dm;
}

std::size_t clamp_points(AnnotationSet& ann) {
  constexpr double kInset = 1e-3;
  std::size_t moved = 0;
  const double w = static_cast<double>(ann.width), h = static_cast<double>(ann.height);
  for (Point& p : ann.points) {
    bool changed = false;
    if (p.x < 0.0) { p.x = 0.0; changed = true; }
    if (p.x >= w) { p.x = w - kInset; changed = true; }
    if (p.y < 0.0) { p.y = 0.0; changed = true; }
    if (p.y >= h) { p.y = h - kInset; changed = true; }
    moved += changed;
  }
  return moved;
}

namespace {

void validate_dims(long w, long h, const std::string& where) {
  if (w <= 0 || h <= 0)
    throw std::runtime_error(where + ": image dimensions must be positive, got w=" +
                             std::to_string(w) + " h=" + std::to_string(h));
}

void finish(AnnotationSet& ann) {
  for (std::size_t i = 0; i < ann.points.size(); ++i)
    if (!std::isfinite(ann.points[i].x) || !std::isfinite(ann.points[i].y))
      throw std::runtime_error("annotation " + ann.image_id + ": point " + std::to_string(i) +
                               " is not finite");
  ann.clamped = clamp_points(ann);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

AnnotationSet parse_annotations_json(const std::string& text, const std::string& image_id) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("annotation " + image_id + ": " + e.what());
  }
  auto field = [&](const char* name) -> const json& {
    if (!doc.is_object() || !doc.contains(name))
      throw std::runtime_error("annotation " + image_id + ": missing field '" + name + "'");
    return doc.at(name);
  };
  const json& jw = field("w");
  const json& jh = field("h");
  if (!jw.is_number_integer() || !jh.is_number_integer())
    throw std::runtime_error("annotation " + image_id + ": fields 'w' and 'h' must be integers");
  validate_dims(jw.get<long>(), jh.get<long>(), "annotation " + image_id);

  AnnotationSet ann;
  ann.image_id = image_id;
  ann.width = jw.get<std::size_t>();
  ann.height = jh.get<std::size_t>();
  const json& pts = field("points");
  if (!pts.is_array()) throw std::runtime_error("annotation " + image_id + ": 'points' must be an array");
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const json& p = pts[i];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw std::runtime_error("annotation " + image_id + ": points[" + std::to_string(i) +
                               "] must be [x, y]");
    ann.points.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  finish(ann);
  return ann;
}

AnnotationSet load_annotations(const fs::path& path, AnnotationFormat format,
                               std::optional<std::pair<std::size_t, std::size_t>> dims) {
  const std::string id = path.stem().string();
  if (format == AnnotationFormat::json) {
    AnnotationSet ann = parse_annotations_json(read_file(path), id);
    if (dims) {
      ann.width = dims->first;
      ann.height = dims->second;
      ann.clamped += clamp_points(ann);
    }
    return ann;
  }

  AnnotationSet ann;
  ann.image_id = id;
  if (dims) {
    validate_dims(static_cast<long>(dims->first), static_cast<long>(dims->second), path.string());
    ann.width = dims->first;
    ann.height = dims->second;
  } else {
    fs::path sidecar = path;
    sidecar.replace_extension(".dims");
    std::istringstream in(read_file(sidecar));
    long w = -1, h = -1;
    if (!(in >> w >> h))
      throw std::runtime_error(sidecar.string() + ": expected \"width height\"");
    validate_dims(w, h, sidecar.string());
    ann.width = static_cast<std::size_t>(w);
    ann.height = static_cast<std::size_t>(h);
  }

  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "x,y")
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": expected header 'x,y'");
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 'x,y'");
    try {
      std::size_t used_x = 0, used_y = 0;
      const std::string xs = line.substr(0, comma), ys = line.substr(comma + 1);
      const double x = std::stod(xs, &used_x);
      const double y = std::stod(ys, &used_y);
      if (used_x != xs.size() || used_y != ys.size()) throw std::invalid_argument("trailing");
      ann.points.push_back({x, y});
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": malformed number in '" + line + "'");
    }
  }
  if (!header_seen) throw std::runtime_error(path.string() + ": missing header 'x,y'");
  finish(ann);
  return ann;
}

void save_annotations_json(const AnnotationSet& ann, const fs::path& path) {
  json doc;
  doc["w"] = ann.width;
  doc["h"] = ann.height;
  json pts = json::array();
  for (const Point& p : ann.points) pts.push_back({p.x, p.y});
  doc["points"] = std::move(pts);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// rendering

void splat_gaussian(DensityMap& map, Point p, double sigma) {
  const long w = static_cast<long>(map.width), h = static_cast<long>(map.height);
  const long radius = static_cast<long>(std::ceil(4.0 * sigma));
  const long cx = static_cast<long>(std::floor(p.x)), cy = static_cast<long>(std::floor(p.y));
  const long x0 = std::max(0L, cx - radius), x1 = std::min(w - 1, cx + radius);
  const long y0 = std::max(0L, cy - radius), y1 = std::min(h - 1, cy + radius);
  if (x0 > x1 || y0 > y1) return;

  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> gx(static_cast<std::size_t>(x1 - x0 + 1));
  std::vector<double> gy(static_cast<std::size_t>(y1 - y0 + 1));
  double sx = 0.0, sy = 0.0;
  for (long x = x0; x <= x1; ++x) {
    const double d = static_cast<double>(x) + 0.5 - p.x;
    sx += gx[static_cast<std::size_t>(x - x0)] = std::exp(-d * d * inv);
  }
  for (long y = y0; y <= y1; ++y) {
    const double d = static_cast<double>(y) + 0.5 - p.y;
    sy += gy[static_cast<std::size_t>(y - y0)] = std::exp(-d * d * inv);
  }
  if (!(sx > 0.0) || !(sy > 0.0)) {
    // kernel narrower than a pixel underflowed: all mass on the containing pixel
    map.at(static_cast<std::size_t>(std::clamp(cy, 0L, h - 1)),
           static_cast<std::size_t>(std::clamp(cx, 0L, w - 1))) += 1.0;
    return;
  }
  for (long y = y0; y <= y1; ++y) {
    const double wy = gy[static_cast<std::size_t>(y - y0)] / sy;
    double* row = map.values.data() + static_cast<std::size_t>(y) * map.width;
    for (long x = x0; x <= x1; ++x) row[x] += wy * gx[static_cast<std::size_t>(x - x0)] / sx;
  }
}

DensityMap render_fixed(const AnnotationSet& ann, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("render_fixed: sigma must be > 0");
  DensityMap dm(ann.width, ann.height);
  for (const Point& p : ann.points) splat_gaussian(dm, p, sigma);
  return dm;
}

std::vector<double> adaptive_sigmas(const AnnotationSet& ann, const AdaptiveKernel& params) {
  if (params.k < 1) throw std::invalid_argument("render_adaptive: k must be >= 1");
  if (!(params.beta > 0.0)) throw std::invalid_argument("render_adaptive: beta must be > 0");
  if (!(params.sigma_min > 0.0) || params.sigma_max < params.sigma_min)
    throw std::invalid_argument("render_adaptive: need 0 < sigma_min <= sigma_max");

  const std::size_t n = ann.points.size(), k = static_cast<std::size_t>(params.k);
  std::vector<double> sigmas(n, params.sigma_max);
  if (n <= k) return sigmas;

  std::vector<double> dist(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dist[m++] = std::hypot(ann.points[i].x - ann.points[j].x, ann.points[i].y - ann.points[j].y);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
    double mean = 0.0;
    for (std::size_t q = 0; q < k; ++q) mean += dist[q];
    mean /= static_cast<double>(k);
    sigmas[i] = std::clamp(params.beta * mean, params.sigma_min, params.sigma_max);
  }
  return sigmas;
}

DensityMap render_adaptive(const AnnotationSet& ann, const AdaptiveKernel& params) {
  const std::vector<double> sigmas = adaptive_sigmas(ann, params);
  DensityMap dm(ann.width, ann.height);
  for (std::size_t i = 0; i < ann.points.size(); ++i) splat_gaussian(dm, ann.points[i], sigmas[i]);
  return dm;
}

std::vector<std::string> LabelConfig::validate() const {
  std::vector<std::string> errors;
  if (!(sigma > 0.0)) errors.push_back("labels.sigma must be > 0");
  if (adaptive.k < 1) errors.push_back("labels.k must be >= 1");
  if (!(adaptive.beta > 0.0)) errors.push_back("labels.beta must be > 0");
  if (!(adaptive.sigma_min > 0.0) || adaptive.sigma_max < adaptive.sigma_min)
    errors.push_back("labels.sigma_min/sigma_max need 0 < min <= max");
  return errors;
}

DensityMap render(const AnnotationSet& ann, const LabelConfig& cfg) {
  return cfg.mode == LabelMode::fixed ? render_fixed(ann, cfg.sigma)
                                      : render_adaptive(ann, cfg.adaptive);
}

DensityMap to_target_grid(const DensityMap& dm, int factor) {
  if (factor < 1) throw std::invalid_argument("to_target_grid: factor must be >= 1");
  const auto f = static_cast<std::size_t>(factor);
  if (dm.width % f || dm.height % f)
    throw std::invalid_argument("to_target_grid: " + std::to_string(dm.width) + "x" +
                                std::to_string(dm.height) + " map not divisible by " +
                                std::to_string(f));
  DensityMap out(dm.width / f, dm.height / f);
  for (std::size_t y = 0; y < dm.height; ++y)
    for (std::size_t x = 0; x < dm.width; ++x) out.at(y / f, x / f) += dm.at(y, x);
  return out;
}

// ---------------------------------------------------------------------------
// export

void write_csv(const DensityMap& dm, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[32];
  for (std::size_t y = 0; y < dm.height; ++y) {
    for (std::size_t x = 0; x < dm.width; ++x) {
      std::snprintf(buf, sizeof buf, "%.17g", dm.at(y, x));
      if (x) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

DensityMap read_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<double> values;
  std::size_t width = 0, height = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t count = 0, pos = 0;
    while (pos <= line.size()) {
      const auto comma = std::min(line.find(',', pos), line.size());
      try {
        values.push_back(std::stod(line.substr(pos, comma - pos)));
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(height + 1) +
                                 ": malformed value");
      }
      ++count;
      pos = comma + 1;
    }
    if (height == 0) width = count;
    if (count != width)
      throw std::runtime_error(path.string() + ":" + std::to_string(height + 1) +
                               ": ragged row (" + std::to_string(count) + " vs " +
                               std::to_string(width) + " columns)");
    ++height;
  }
  DensityMap dm(width, height);
  dm.values = std::move(values);
  return dm;
}

double write_pgm(const DensityMap& dm, const fs::path& path) {
  double mx = 0.0;
  for (double v : dm.values) mx = std::max(mx, v);
  const double scale = mx > 0.0 ? 65535.0 / mx : 1.0;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", scale);
  out << "P5\n# scale " << buf << "\n" << dm.width << ' ' << dm.height << "\n65535\n";
  for (double v : dm.values) {
    const double q = std::clamp(std::round(std::max(v, 0.0) * scale), 0.0, 65535.0);
    const auto u = static_cast<unsigned>(q);
    out.put(static_cast<char>((u >> 8) & 0xFF));
    out.put(static_cast<char>(u & 0xFF));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
  return scale;
}

}  // namespace iiao::densitymap
