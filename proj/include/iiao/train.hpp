#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "iiao/dataset.hpp"
#include "iiao/densitymap.hpp"
#include "iiao/losses.hpp"
#include "iiao/model.hpp"
#include "iiao/rng.hpp"

namespace iiao::train {

struct TrainConfig {
  int crop = 400;
  double flip_p = 0.5;
  double gray_p = 0.1;
  double lr0 = 1e-4;
  int halve_every = 100;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;
  int epochs = 400;
  std::uint64_t seed = 0;
  double grad_clip = 0.0;  // global-norm cap; 0 disables

  std::vector<std::string> validate() const;
  void require_valid() const;
};

// lr0 * 0.5^floor(epoch / halve_every)
double lr_at(int epoch, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// augmentation

// Reflection-pads image and points on the bottom/right up to (h, w). Points
// are mirrored along with the pixels, so heads in the padded band stay
// annotated.
struct Patch {
  Tensor image;  // 3 x H x W
  densitymap::AnnotationSet annotations;
};
Patch reflect_pad(const Tensor& image, const densitymap::AnnotationSet& ann, std::size_t h, std::size_t w);

// Keeps points inside the window, translated to its origin.
densitymap::AnnotationSet crop_points(const densitymap::AnnotationSet& ann, std::size_t top,
                                      std::size_t left, std::size_t h, std::size_t w);

// Mirrors x about the vertical center line: x' = width - x (pixel j lands in
// pixel width-1-j, matching flip_horizontal). x = 0 maps just inside the edge.
densitymap::AnnotationSet flip_points(const densitymap::AnnotationSet& ann);

struct Augmented {
  Tensor image;                  // 3 x crop x crop
  densitymap::AnnotationSet annotations;
  densitymap::DensityMap target;  // crop/8 x crop/8
};

// Pad if needed, random crop, optional flip, optional grayscale, then render
// the target from the surviving points. Draws from `rng` in that order.
Augmented augment(const Tensor& image, const densitymap::AnnotationSet& ann, const TrainConfig& cfg,
                  const densitymap::LabelConfig& labels, Rng& rng);

// ---------------------------------------------------------------------------
// optimizer

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter " + param), param_(param) {}
  const std::string& param() const noexcept { return param_; }

 private:
  std::string param_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Bias-corrected Adam update. Every gradient is checked first; on a
  // non-finite value nothing is modified and NonFiniteGradient is thrown.
  void step(model::ModelParams& params, const model::Gradients& grads, double lr);
  long steps() const noexcept { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Moments> state_;
};

// Scales all gradients so their global L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_global_norm(model::Gradients& grads, double max_norm);

// ---------------------------------------------------------------------------
// loop

struct BatchResult {
  double total = 0.0;
  std::vector<double> wei;
  double pre = 0.0;
  std::vector<double> pred_counts;  // sum of F_pre per image
  model::Gradients grads;          // empty unless requested
};

// Forward (and optionally backward) on one batch: images B x 3 x H x W,
// targets B x 1 x H/8 x W/8.
BatchResult evaluate_batch(const model::ModelParams& params, const model::ModelConfig& model_cfg,
                           const losses::LossConfig& loss_cfg, const Tensor& images,
                           const Tensor& targets, bool with_grads);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  std::vector<double> loss_wei;
  double loss_pre = 0.0;
  double train_mae = 0.0;
};

std::string log_header(std::size_t heads);
std::string format_log_row(const EpochLog& row);

struct TrainResult {
  model::ModelParams params;       // after the last completed step
  model::ModelParams best_params;  // lowest train MAE epoch
  double best_mae = 0.0;
  int best_epoch = -1;
  std::vector<EpochLog> log;
  bool aborted = false;
  std::string abort_reason;
};

struct TrainOutputs {
  // Receives metrics.csv, best.ckpt and last.ckpt; nothing is written if empty.
  std::filesystem::path dir;
  std::function<void(const EpochLog&)> on_epoch;
};

// Seeded shuffling, augmentation and init use independent streams, so the
// loss trajectory is a pure function of the configs and the dataset. A
// non-finite loss or gradient stops training; files written so far stay as
// they were at the last good epoch.
TrainResult train_loop(const model::ModelConfig& model_cfg, const TrainConfig& train_cfg,
                       const losses::LossConfig& loss_cfg, const densitymap::LabelConfig& labels,
                       const std::vector<Sample>& dataset, const TrainOutputs& out = {});

}  // namespace iiao::train
