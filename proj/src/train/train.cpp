#include "iiao/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "iiao/image_ops.hpp"
#include "iiao/tape.hpp"

namespace iiao::train {

namespace fs = std::filesystem;
using densitymap::AnnotationSet;
using densitymap::Point;

std::vector<std::string> TrainConfig::validate() const {
  std::vector<std::string> errors;
  if (crop < 16 || crop % 16 != 0) errors.push_back("train.crop must be a positive multiple of 16");
  if (!(flip_p >= 0.0 && flip_p <= 1.0)) errors.push_back("train.flip_p must lie in [0, 1]");
  if (!(gray_p >= 0.0 && gray_p <= 1.0)) errors.push_back("train.gray_p must lie in [0, 1]");
  if (!(lr0 > 0.0)) errors.push_back("train.lr0 must be > 0");
  if (halve_every < 1) errors.push_back("train.halve_every must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) errors.push_back("train.adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) errors.push_back("train.adam_beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) errors.push_back("train.adam_eps must be > 0");
  if (batch_size < 1) errors.push_back("train.batch_size must be >= 1");
  if (epochs < 1) errors.push_back("train.epochs must be >= 1");
  if (!(grad_clip >= 0.0)) errors.push_back("train.grad_clip must be >= 0");
  return errors;
}

void TrainConfig::require_valid() const {
  const auto errors = validate();
  if (errors.empty()) return;
  std::string msg = "invalid train config:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw std::invalid_argument(msg);
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("lr_at: epoch must be >= 0");
  return cfg.lr0 * std::ldexp(1.0, -(epoch / cfg.halve_every));
}

// ---------------------------------------------------------------------------
// augmentation

namespace {

// Copies of coordinate v (image extent n) that reflection padding places in
// [n, out). Pixel j reappears at j + kP and, mirrored, at P - j + kP with
// P = 2n - 2; the edge pixels are not repeated by the padding, so they get
// only the first family.
std::vector<double> reflected_copies(double v, std::size_t n, std::size_t out) {
  std::vector<double> copies;
  if (out <= n) return copies;
  const double hi = static_cast<double>(out);
  if (n == 1) {
    for (double c = v + 1.0; c < hi; c += 1.0) copies.push_back(c);
    return copies;
  }
  const double period = 2.0 * static_cast<double>(n) - 2.0;
  const auto j = static_cast<std::size_t>(std::floor(v));
  const bool edge = j == 0 || j == n - 1;
  const double lo = static_cast<double>(n);
  for (double base = 0.0; base < hi; base += period) {
    const double same = v + base;
    if (same >= lo && same < hi) copies.push_back(same);
    if (!edge) {
      const double mirrored = period + 1.0 - v + base;
      if (mirrored >= lo && mirrored < hi) copies.push_back(mirrored);
    }
  }
  return copies;
}

}  // namespace

Patch reflect_pad(const Tensor& image, const AnnotationSet& ann, std::size_t h, std::size_t w) {
  Patch p;
  p.image = image::reflect_pad(image, h, w);
  const std::size_t H = image.dim(1), W = image.dim(2);
  const std::size_t oh = p.image.dim(1), ow = p.image.dim(2);
  p.annotations = ann;
  p.annotations.width = ow;
  p.annotations.height = oh;
  if (oh == H && ow == W) return p;

  std::vector<Point>& pts = p.annotations.points;
  const std::size_t original = pts.size();
  for (std::size_t i = 0; i < original; ++i) {
    std::vector<double> xs{pts[i].x}, ys{pts[i].y};
    for (double x : reflected_copies(pts[i].x, W, ow)) xs.push_back(x);
    for (double y : reflected_copies(pts[i].y, H, oh)) ys.push_back(y);
    for (double y : ys)
      for (double x : xs)
        if (x != pts[i].x || y != pts[i].y) pts.push_back({x, y});
  }
  return p;
}

AnnotationSet crop_points(const AnnotationSet& ann, std::size_t top, std::size_t left,
                          std::size_t h, std::size_t w) {
  AnnotationSet out;
  out.image_id = ann.image_id;
  out.width = w;
  out.height = h;
  const double x0 = static_cast<double>(left), y0 = static_cast<double>(top);
  for (const Point& p : ann.points) {
    const double x = p.x - x0, y = p.y - y0;
    if (x >= 0.0 && x < static_cast<double>(w) && y >= 0.0 && y < static_cast<double>(h))
      out.points.push_back({x, y});
  }
  return out;
}

AnnotationSet flip_points(const AnnotationSet& ann) {
  AnnotationSet out = ann;
  const double w = static_cast<double>(ann.width);
  for (Point& p : out.points) p.x = std::min(w - p.x, w - 1e-3);
  return out;
}

Augmented augment(const Tensor& image, const AnnotationSet& ann, const TrainConfig& cfg,
                  const densitymap::LabelConfig& labels, Rng& rng) {
  const auto crop = static_cast<std::size_t>(cfg.crop);
  Patch padded = reflect_pad(image, ann, crop, crop);
  const std::size_t H = padded.image.dim(1), W = padded.image.dim(2);
  const auto top = static_cast<std::size_t>(rng.integer(0, static_cast<long>(H - crop)));
  const auto left = static_cast<std::size_t>(rng.integer(0, static_cast<long>(W - crop)));

  Augmented out;
  out.image = image::crop(padded.image, top, left, crop, crop);
  out.annotations = crop_points(padded.annotations, top, left, crop, crop);
  if (rng.bernoulli(cfg.flip_p)) {
    out.image = image::flip_horizontal(out.image);
    out.annotations = flip_points(out.annotations);
  }
  if (rng.bernoulli(cfg.gray_p)) out.image = image::to_grayscale(out.image);
  out.target = densitymap::to_target_grid(densitymap::render(out.annotations, labels), 8);
  return out;
}

// ---------------------------------------------------------------------------
// optimizer

void Adam::step(model::ModelParams& params, const model::Gradients& grads, double lr) {
  for (const auto& [name, g] : grads) {
    const auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("Adam: gradient for unknown parameter " + name);
    if (it->second.shape() != g.shape())
      throw ShapeError("Adam: gradient " + shape_str(g.shape()) + " does not match parameter " + name +
                       " " + shape_str(it->second.shape()));
    if (!g.all_finite()) throw NonFiniteGradient(name);
  }

  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    Moments& s = state_[name];
    if (s.m.empty()) {
      s.m.assign(p.size(), 0.0);
      s.v.assign(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = s.m[i] / c1, vhat = s.v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double clip_global_norm(model::Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& v : g.values()) v *= scale;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// loop

BatchResult evaluate_batch(const model::ModelParams& params, const model::ModelConfig& model_cfg,
                           const losses::LossConfig& loss_cfg, const Tensor& images,
                           const Tensor& targets, bool with_grads) {
  Tape tape;
  const model::BoundParams bound(tape, params, with_grads);
  const Var x = tape.input(images, false);
  const Var gt = tape.constant(targets);
  const model::ForwardVars fwd = model::network_forward(tape, x, bound, model_cfg);
  const losses::LossTerms terms = losses::total_loss(tape, fwd, gt, loss_cfg);

  BatchResult r;
  r.total = tape.value(terms.total).item();
  for (Var w : terms.wei) r.wei.push_back(tape.value(w).item());
  r.pre = tape.value(terms.pre).item();
  const Tensor& f_pre = tape.value(fwd.f_pre);
  const std::size_t B = f_pre.dim(0), plane = f_pre.size() / B;
  for (std::size_t b = 0; b < B; ++b) {
    const double* p = f_pre.data() + b * plane;
    r.pred_counts.push_back(std::accumulate(p, p + plane, 0.0));
  }
  if (with_grads && std::isfinite(r.total)) {
    tape.backward(terms.total);
    r.grads = bound.gradients(tape);
  }
  return r;
}

std::string log_header(std::size_t heads) {
  std::string h = "epoch,lr,loss_total";
  for (std::size_t i = 1; i <= heads; ++i) h += ",loss_wei" + std::to_string(i);
  return h + ",loss_pre,train_mae";
}

std::string format_log_row(const EpochLog& row) {
  char buf[64];
  std::string line = std::to_string(row.epoch);
  auto add = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    line += buf;
  };
  add(row.lr);
  add(row.loss_total);
  for (double w : row.loss_wei) add(w);
  add(row.loss_pre);
  add(row.train_mae);
  return line;
}

namespace {

Tensor stack(const std::vector<const Tensor*>& items) {
  Shape shape = items.front()->shape();
  shape.insert(shape.begin(), items.size());
  Tensor out(shape);
  const std::size_t n = items.front()->size();
  for (std::size_t i = 0; i < items.size(); ++i)
    std::copy(items[i]->data(), items[i]->data() + n, out.data() + i * n);
  return out;
}

}  // namespace

TrainResult train_loop(const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                       const losses::LossConfig& loss_cfg, const densitymap::LabelConfig& labels,
                       const std::vector<Sample>& dataset, const TrainOutputs& out) {
  model_cfg.require_valid();
  cfg.require_valid();
  loss_cfg.require_valid();
  if (dataset.empty()) throw std::invalid_argument("train_loop: dataset is empty");
  const auto label_errors = labels.validate();
  if (!label_errors.empty()) throw std::invalid_argument("invalid label config: " + label_errors.front());

  TrainResult result;
  result.params = model::init_params(model_cfg);
  Adam adam({cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
  Rng shuffle_rng(cfg.seed, 0x73687566ULL);
  Rng augment_rng(cfg.seed, 0x61756730ULL);

  std::ofstream log;
  if (!out.dir.empty()) {
    fs::create_directories(out.dir);
    log.open(out.dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + (out.dir / "metrics.csv").string());
    log << log_header(static_cast<std::size_t>(model_cfg.iiao_stack)) << '\n' << std::flush;
  }

  std::vector<std::size_t> order(dataset.size());
  for (int epoch = 0; epoch < cfg.epochs && !result.aborted; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);
    const double lr = lr_at(epoch, cfg);

    EpochLog row;
    row.epoch = epoch;
    row.lr = lr;
    row.loss_wei.assign(static_cast<std::size_t>(model_cfg.iiao_stack), 0.0);
    double abs_err = 0.0;

    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<Augmented> batch;
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = dataset[order[i]];
        batch.push_back(augment(s.image, s.annotations, cfg, labels, augment_rng));
      }
      std::vector<const Tensor*> imgs;
      std::vector<Tensor> tgts;
      for (const auto& a : batch) {
        imgs.push_back(&a.image);
        tgts.push_back(a.target.to_tensor().reshaped(Shape{1, a.target.height, a.target.width}));
      }
      std::vector<const Tensor*> tgt_ptrs;
      for (const auto& t : tgts) tgt_ptrs.push_back(&t);

      BatchResult r = evaluate_batch(result.params, model_cfg, loss_cfg, stack(imgs), stack(tgt_ptrs), true);
      if (!std::isfinite(r.total)) {
        result.aborted = true;
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
        break;
      }
      if (cfg.grad_clip > 0.0) clip_global_norm(r.grads, cfg.grad_clip);
      try {
        adam.step(result.params, r.grads, lr);
      } catch (const NonFiniteGradient& e) {
        result.aborted = true;
        result.abort_reason = std::string(e.what()) + " at epoch " + std::to_string(epoch);
        break;
      }

      const auto n = static_cast<double>(batch.size());
      row.loss_total += r.total * n;
      for (std::size_t h = 0; h < r.wei.size(); ++h) row.loss_wei[h] += r.wei[h] * n;
      row.loss_pre += r.pre * n;
      for (std::size_t i = 0; i < batch.size(); ++i)
        abs_err += std::abs(r.pred_counts[i] - batch[i].target.sum());
    }
    if (result.aborted) break;

    const auto N = static_cast<double>(dataset.size());
    row.loss_total /= N;
    for (double& w : row.loss_wei) w /= N;
    row.loss_pre /= N;
    row.train_mae = abs_err / N;
    result.log.push_back(row);

    const bool best = result.best_epoch < 0 || row.train_mae < result.best_mae;
    if (best) {
      result.best_mae = row.train_mae;
      result.best_epoch = epoch;
      result.best_params = result.params;
    }
    if (!out.dir.empty()) {
      log << format_log_row(row) << '\n' << std::flush;
      if (best) model::save_checkpoint({model_cfg, result.params, epoch}, out.dir / "best.ckpt");
      model::save_checkpoint({model_cfg, result.params, epoch}, out.dir / "last.ckpt");
    }
    if (out.on_epoch) out.on_epoch(row);
  }
  return result;
}

}  // namespace iiao::train
