#include "iiao/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "iiao/image_io.hpp"
#include "iiao/rng.hpp"

namespace iiao::synthdata {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Background b) {
  switch (b) {
    case Background::flat: return "flat";
    case Background::gradient: return "gradient";
    case Background::noise: return "noise";
  }
  return "?";
}

Background parse_background(const std::string& name) {
  if (name == "flat") return Background::flat;
  if (name == "gradient") return Background::gradient;
  if (name == "noise") return Background::noise;
  throw std::invalid_argument("unknown background '" + name + "' (flat|gradient|noise)");
}

std::vector<std::string> SceneSpec::validate() const {
  std::vector<std::string> errors;
  if (width <= 0 || height <= 0) errors.push_back("scene width and height must be positive");
  if (n_points < 0) errors.push_back("scene n_points must be >= 0");
  if (!(head_radius_min > 0.0) || head_radius_max < head_radius_min)
    errors.push_back("scene head radii need 0 < min <= max");
  return errors;
}

namespace {

void paint_background(Tensor& img, Background bg, Rng& rng) {
  const std::size_t H = img.dim(1), W = img.dim(2);
  std::array<double, 3> base{}, other{};
  for (auto& c : base) c = rng.uniform(0.55, 0.85);
  for (auto& c : other) c = rng.uniform(0.45, 0.9);
  const double angle = rng.uniform(0.0, 6.283185307179586);
  const double dx = std::cos(angle), dy = std::sin(angle);
  const double span = std::abs(dx) * static_cast<double>(W) + std::abs(dy) * static_cast<double>(H);

  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double t = 0.0;
      if (bg == Background::gradient) {
        const double proj = dx * (static_cast<double>(x) - W / 2.0) + dy * (static_cast<double>(y) - H / 2.0);
        t = std::clamp(proj / span + 0.5, 0.0, 1.0);
      }
      const double jitter = bg == Background::noise ? rng.uniform(-0.08, 0.08) : 0.0;
      for (std::size_t c = 0; c < 3; ++c)
        img[(c * H + y) * W + x] = std::clamp((1.0 - t) * base[c] + t * other[c] + jitter, 0.0, 1.0);
    }
}

std::vector<densitymap::Point> sample_points(const SceneSpec& spec, Rng& rng) {
  const double W = spec.width, H = spec.height;
  std::vector<densitymap::Point> pts;
  pts.reserve(static_cast<std::size_t>(spec.n_points));
  if (!spec.clustered) {
    for (int i = 0; i < spec.n_points; ++i) pts.push_back({rng.uniform(0.0, W), rng.uniform(0.0, H)});
    return pts;
  }

  struct Cluster {
    double cx, cy, spread, weight;
  };
  std::vector<Cluster> clusters(static_cast<std::size_t>(rng.integer(1, 4)));
  double total = 0.0;
  for (auto& c : clusters) {
    c = {rng.uniform(0.0, W), rng.uniform(0.0, H), rng.uniform(0.06, 0.2) * std::min(W, H),
         rng.uniform(0.5, 1.5)};
    total += c.weight;
  }
  for (int i = 0; i < spec.n_points; ++i) {
    double pick = rng.uniform(0.0, total);
    const Cluster* c = &clusters.back();
    for (const auto& cl : clusters) {
      if (pick < cl.weight) {
        c = &cl;
        break;
      }
      pick -= cl.weight;
    }
    densitymap::Point p{};
    int tries = 0;
    do {
      p = {rng.normal(c->cx, c->spread), rng.normal(c->cy, c->spread)};
    } while ((p.x < 0.0 || p.x >= W || p.y < 0.0 || p.y >= H) && ++tries < 32);
    if (tries >= 32) p = {rng.uniform(0.0, W), rng.uniform(0.0, H)};
    pts.push_back(p);
  }
  return pts;
}

void draw_head(Tensor& img, densitymap::Point p, double radius, double fill, double rim) {
  const long H = static_cast<long>(img.dim(1)), W = static_cast<long>(img.dim(2));
  const long x0 = std::max(0L, static_cast<long>(std::floor(p.x - radius)));
  const long x1 = std::min(W - 1, static_cast<long>(std::ceil(p.x + radius)));
  const long y0 = std::max(0L, static_cast<long>(std::floor(p.y - radius)));
  const long y1 = std::min(H - 1, static_cast<long>(std::ceil(p.y + radius)));
  const double rim_width = std::max(1.0, 0.3 * radius);
  for (long y = y0; y <= y1; ++y)
    for (long x = x0; x <= x1; ++x) {
      const double d = std::hypot(static_cast<double>(x) + 0.5 - p.x, static_cast<double>(y) + 0.5 - p.y);
      if (d > radius) continue;
      const double v = d > radius - rim_width ? rim : fill;
      for (long c = 0; c < 3; ++c) img[static_cast<std::size_t>((c * H + y) * W + x)] = v;
    }
}

}  // namespace

Scene generate(const SceneSpec& spec) {
  const auto errors = spec.validate();
  if (!errors.empty()) throw std::invalid_argument("invalid scene spec: " + errors.front());

  Rng rng(spec.seed, 0x7363656eULL);
  Scene scene;
  scene.image = Tensor(Shape{3, static_cast<std::size_t>(spec.height), static_cast<std::size_t>(spec.width)});
  paint_background(scene.image, spec.background, rng);

  auto& ann = scene.annotations;
  ann.width = static_cast<std::size_t>(spec.width);
  ann.height = static_cast<std::size_t>(spec.height);
  ann.points = sample_points(spec, rng);
  for (const auto& p : ann.points) {
    const double radius = rng.uniform(spec.head_radius_min, spec.head_radius_max);
    const double fill = rng.uniform(0.12, 0.35);
    draw_head(scene.image, p, radius, fill, fill * 0.4);
  }
  return scene;
}

// ---------------------------------------------------------------------------

SceneSpec spec_for(const Manifest& manifest, const ManifestEntry& entry) {
  SceneSpec spec = manifest.templ.scene;
  spec.seed = entry.seed;
  spec.n_points = entry.n_points;
  spec.background = entry.background;
  spec.clustered = entry.clustered;
  return spec;
}

Manifest plan_split(int n_train, int n_test, const SplitTemplate& templ, std::uint64_t seed) {
  if (n_train < 1 || n_test < 1) throw std::invalid_argument("split sizes must be >= 1");
  if (templ.count_min < 0 || templ.count_max < templ.count_min)
    throw std::invalid_argument("split head-count range needs 0 <= min <= max");
  const auto errors = templ.scene.validate();
  if (!errors.empty()) throw std::invalid_argument("invalid scene template: " + errors.front());

  Manifest m;
  m.seed = seed;
  m.templ = templ;
  Rng rng(seed, 0x73706c74ULL);
  int index = 0;
  for (const auto& [split, n] : {std::pair{"train", n_train}, std::pair{"test", n_test}}) {
    for (int i = 0; i < n; ++i, ++index) {
      ManifestEntry e;
      e.split = split;
      char id[32];
      std::snprintf(id, sizeof id, "%s_%04d", split, i);
      e.id = id;
      e.seed = mix_seed(seed, static_cast<std::uint64_t>(index));
      e.n_points = static_cast<int>(rng.integer(templ.count_min, templ.count_max));
      e.background = templ.scene.background;
      e.clustered = templ.scene.clustered;
      m.scenes.push_back(std::move(e));
    }
  }
  return m;
}

void regenerate(const Manifest& manifest, const fs::path& out) {
  for (const auto& entry : manifest.scenes) {
    const fs::path dir = out / entry.split;
    fs::create_directories(dir);
    Scene scene = generate(spec_for(manifest, entry));
    scene.annotations.image_id = entry.id;
    write_ppm(scene.image, dir / (entry.id + ".ppm"));
    densitymap::save_annotations_json(scene.annotations, dir / (entry.id + ".json"));
  }
}

Manifest generate_split(int n_train, int n_test, const SplitTemplate& templ, std::uint64_t seed,
                        const fs::path& out) {
  Manifest m = plan_split(n_train, n_test, templ, seed);
  fs::create_directories(out);
  regenerate(m, out);
  std::ofstream f(out / "manifest.json", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + (out / "manifest.json").string());
  f << manifest_to_json(m) << '\n';
  if (!f) throw std::runtime_error("write failed: " + (out / "manifest.json").string());
  return m;
}

std::string manifest_to_json(const Manifest& m) {
  json j;
  j["seed"] = m.seed;
  const SceneSpec& s = m.templ.scene;
  j["template"] = {{"width", s.width},
                   {"height", s.height},
                   {"head_radius_min", s.head_radius_min},
                   {"head_radius_max", s.head_radius_max},
                   {"background", to_string(s.background)},
                   {"clustered", s.clustered},
                   {"count_min", m.templ.count_min},
                   {"count_max", m.templ.count_max}};
  json scenes = json::array();
  for (const auto& e : m.scenes)
    scenes.push_back({{"split", e.split},
                      {"id", e.id},
                      {"seed", e.seed},
                      {"n_points", e.n_points},
                      {"background", to_string(e.background)},
                      {"clustered", e.clustered}});
  j["scenes"] = std::move(scenes);
  return j.dump(2);
}

Manifest manifest_from_json(const std::string& text) {
  const json j = json::parse(text);
  Manifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  const json& t = j.at("template");
  m.templ.scene.width = t.at("width").get<int>();
  m.templ.scene.height = t.at("height").get<int>();
  m.templ.scene.head_radius_min = t.at("head_radius_min").get<double>();
  m.templ.scene.head_radius_max = t.at("head_radius_max").get<double>();
  m.templ.scene.background = parse_background(t.at("background").get<std::string>());
  m.templ.scene.clustered = t.at("clustered").get<bool>();
  m.templ.count_min = t.at("count_min").get<int>();
  m.templ.count_max = t.at("count_max").get<int>();
  for (const json& s : j.at("scenes")) {
    ManifestEntry e;
    e.split = s.at("split").get<std::string>();
    e.id = s.at("id").get<std::string>();
    e.seed = s.at("seed").get<std::uint64_t>();
    e.n_points = s.at("n_points").get<int>();
    e.background = parse_background(s.at("background").get<std::string>());
    e.clustered = s.at("clustered").get<bool>();
    m.scenes.push_back(std::move(e));
  }
  return m;
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str());
}

}  // namespace iiao::synthdata
