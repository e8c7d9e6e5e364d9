#include "iiao/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "iiao/ops.hpp"
#include "iiao/rng.hpp"

namespace iiao::model {

namespace {

constexpr std::array<int, 5> kBlockDepths = {2, 2, 3, 3, 3};

int block_width(const ModelConfig& cfg, std::size_t block) {
  return cfg.encoder_widths[std::min<std::size_t>(block, 3)];
}

std::string conv_name(std::size_t block, int layer) {
  return "encoder.conv" + std::to_string(block + 1) + "_" + std::to_string(layer + 1);
}

std::string iiao_prefix(int i) { return "iiao" + std::to_string(i + 1); }

void add_conv(std::map<std::string, Shape>& shapes, const std::string& name, std::size_t out,
              std::size_t in, std::size_t k) {
  shapes[name + ".weight"] = Shape{out, in, k, k};
  shapes[name + ".bias"] = Shape{out};
}

Var conv(Tape& tape, Var x, const BoundParams& p, const std::string& name, int kernel) {
  return ops::conv2d(tape, x, p(name + ".weight"), p(name + ".bias"),
                     {.stride = 1, .padding = kernel / 2});
}

}  // namespace

std::vector<std::string> ModelConfig::validate() const {
  std::vector<std::string> errors;
  if (base_channels <= 0 || base_channels % 16 != 0)
    errors.push_back("model.base_channels must be a positive multiple of 16 (got " +
                     std::to_string(base_channels) + ")");
  if (reduction_ratio < 1)
    errors.push_back("model.reduction_ratio must be >= 1");
  else if (base_channels > 0 && base_channels % reduction_ratio != 0)
    errors.push_back("model.base_channels (" + std::to_string(base_channels) +
                     ") must be divisible by model.reduction_ratio (" +
                     std::to_string(reduction_ratio) + ")");
  if (iiao_stack < 1) errors.push_back("model.iiao_stack must be >= 1");
  if (encoder_widths.size() != 4)
    errors.push_back("model.encoder_widths needs exactly 4 entries");
  for (int w : encoder_widths)
    if (w <= 0) errors.push_back("model.encoder_widths entries must be positive");
  if (asp_kernels.size() != 4) errors.push_back("model.asp_kernels needs exactly 4 branches");
  for (auto [a, b] : asp_kernels)
    if (a <= 0 || b <= 0 || a % 2 == 0 || b % 2 == 0)
      errors.push_back("model.asp_kernels sizes must be positive and odd");
  if (!(init_std > 0.0)) errors.push_back("model.init_std must be > 0");
  return errors;
}

void ModelConfig::require_valid() const {
  const auto errors = validate();
  if (errors.empty()) return;
  std::string msg = "invalid model config:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw std::invalid_argument(msg);
}

std::map<std::string, Shape> param_shapes(const ModelConfig& cfg) {
  cfg.require_valid();
  std::map<std::string, Shape> shapes;
  std::size_t in = 3;
  for (std::size_t block = 0; block < kBlockDepths.size(); ++block) {
    const auto width = static_cast<std::size_t>(block_width(cfg, block));
    for (int layer = 0; layer < kBlockDepths[block]; ++layer) {
      add_conv(shapes, conv_name(block, layer), width, in, 3);
      in = width;
    }
  }
  const auto C = static_cast<std::size_t>(cfg.base_channels);
  const auto deep = static_cast<std::size_t>(cfg.encoder_widths[3]);
  add_conv(shapes, "encoder.fuse", C, 2 * deep, 1);

  for (int i = 0; i < cfg.iiao_stack; ++i) {
    const std::string pre = iiao_prefix(i);
    add_conv(shapes, pre + ".asp.compress", C / 4, C, 1);
    for (std::size_t br = 0; br < 4; ++br) {
      const std::string b = pre + ".asp.branch" + std::to_string(br + 1);
      add_conv(shapes, b + ".conv1", C / 16, C / 4,
               static_cast<std::size_t>(cfg.asp_kernels[br].first));
      add_conv(shapes, b + ".conv2", C / 4, C / 16,
               static_cast<std::size_t>(cfg.asp_kernels[br].second));
    }
    const std::size_t squeezed = C / static_cast<std::size_t>(cfg.reduction_ratio);
    add_conv(shapes, pre + ".tau.reduce", squeezed, C, 1);
    add_conv(shapes, pre + ".tau.expand", C, squeezed, 1);
  }
  add_conv(shapes, "head", 1, C, 1);
  return shapes;
}

ModelParams init_params(const ModelConfig& cfg) {
  ModelParams params;
  Rng rng(cfg.seed, 0x696e6974ULL);
  for (const auto& [name, shape] : param_shapes(cfg)) {
    Tensor t(shape);
    if (name.ends_with(".weight")) {
      double std = cfg.init_std;
      if (name.starts_with("encoder.conv") && cfg.encoder_init == EncoderInit::he) {
        const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
        std = std::sqrt(2.0 / fan_in);
      }
      for (double& v : t.values()) v = rng.normal(0.0, std);
    }
    params.emplace(name, std::move(t));
  }
  return params;
}

// ---------------------------------------------------------------------------

BoundParams::BoundParams(Tape& tape, const ModelParams& params, bool requires_grad) {
  for (const auto& [name, t] : params) {
    vars_.emplace(name, tape.input(t, requires_grad));
    shapes_.emplace(name, t.shape());
  }
}

BoundParams::BoundParams(const Tape& tape, const std::vector<std::string>& names,
                         std::span<const Var> vars) {
  if (names.size() != vars.size())
    throw std::invalid_argument("BoundParams: " + std::to_string(names.size()) + " names for " +
                                std::to_string(vars.size()) + " vars");
  for (std::size_t i = 0; i < names.size(); ++i) {
    vars_.emplace(names[i], vars[i]);
    shapes_.emplace(names[i], tape.value(vars[i]).shape());
  }
}

Var BoundParams::operator()(const std::string& name) const {
  const auto it = vars_.find(name);
  if (it == vars_.end()) throw std::out_of_range("missing model parameter '" + name + "'");
  return it->second;
}

Gradients BoundParams::gradients(const Tape& tape) const {
  Gradients grads;
  for (const auto& [name, v] : vars_) {
    auto g = tape.grad(v);
    grads.emplace(name, Tensor(shapes_.at(name), std::vector<double>(g.begin(), g.end())));
  }
  return grads;
}

// ---------------------------------------------------------------------------

Var encoder_forward(Tape& tape, Var image, const BoundParams& p, const ModelConfig&) {
  const Tensor& x = tape.value(image);
  require_4d(x, "encoder_forward");
  if (x.dim(1) != 3)
    throw ShapeError("encoder_forward: expected 3 input channels, got " + shape_str(x.shape()));
  if (x.dim(2) % 16 || x.dim(3) % 16 || x.dim(2) == 0 || x.dim(3) == 0)
    throw ShapeError("encoder_forward: spatial dims of " + shape_str(x.shape()) +
                     " must be positive multiples of 16");

  Var h = image;
  Var skip{};
  for (std::size_t block = 0; block < kBlockDepths.size(); ++block) {
    for (int layer = 0; layer < kBlockDepths[block]; ++layer)
      h = ops::relu(tape, conv(tape, h, p, conv_name(block, layer), 3));
    if (block == 3) skip = h;  // 1/8 resolution, after the third pool
    if (block < 4) h = ops::resample(tape, h, ops::Resample::maxpool2());
  }
  // h: fifth block at 1/16 -> back to 1/8 and fused with the skip path.
  h = ops::resample(tape, h, ops::Resample::bilinear_up2());
  h = ops::concat_channels(tape, h, skip);
  return conv(tape, h, p, "encoder.fuse", 1);
}

Var asp_forward(Tape& tape, Var f_in, const BoundParams& p, const std::string& prefix,
                const ModelConfig& cfg) {
  const Tensor& x = tape.value(f_in);
  require_4d(x, "asp_forward");
  if (x.dim(1) % 16)
    throw ShapeError("asp_forward: channel count of " + shape_str(x.shape()) +
                     " not divisible by 16");
  const Var compressed = ops::relu(tape, conv(tape, f_in, p, prefix + ".asp.compress", 1));
  Var merged{};
  for (std::size_t br = 0; br < 4; ++br) {
    const std::string b = prefix + ".asp.branch" + std::to_string(br + 1);
    Var y = ops::relu(tape, conv(tape, compressed, p, b + ".conv1", cfg.asp_kernels[br].first));
    y = ops::relu(tape, conv(tape, y, p, b + ".conv2", cfg.asp_kernels[br].second));
    merged = br == 0 ? y : ops::concat_channels(tape, merged, y);
  }
  return merged;
}

Var tau_forward(Tape& tape, Var f_in, const BoundParams& p, const std::string& prefix,
                const ModelConfig&) {
  const Var squeezed = ops::relu(tape, conv(tape, f_in, p, prefix + ".tau.reduce", 1));
  return ops::sigmoid(tape, conv(tape, squeezed, p, prefix + ".tau.expand", 1));
}

SoftBlockVars soft_block(Tape& tape, Var f_att, Var f_mul) {
  const Tensor& a = tape.value(f_att);
  const Tensor& m = tape.value(f_mul);
  require_4d(a, "soft_block f_att");
  if (a.shape() != m.shape())
    throw ShapeError("soft_block: f_att " + shape_str(a.shape()) + " vs f_mul " +
                     shape_str(m.shape()));
  const Var f_out = ops::mul(tape, f_att, f_mul);
  const Var weights = ops::channel_softmax(tape, f_att);
  const Var f_wei = ops::sum_channels(tape, ops::mul(tape, weights, f_mul));
  return {f_out, f_wei};
}

ForwardVars network_forward(Tape& tape, Var image, const BoundParams& p, const ModelConfig& cfg) {
  ForwardVars out;
  Var f = encoder_forward(tape, image, p, cfg);
  for (int i = 0; i < cfg.iiao_stack; ++i) {
    const std::string pre = iiao_prefix(i);
    const Var f_mul = asp_forward(tape, f, p, pre, cfg);
    const Var f_att = tau_forward(tape, f, p, pre, cfg);
    const SoftBlockVars sb = soft_block(tape, f_att, f_mul);
    out.f_wei.push_back(sb.f_wei);
    f = sb.f_out;
  }
  out.f_pre = conv(tape, f, p, "head", 1);
  return out;
}

ForwardOutputs network_forward(const Tensor& image, const ModelParams& params,
                               const ModelConfig& cfg) {
  Tape tape;
  const BoundParams bound(tape, params, false);
  const Var x = tape.input(image, false);
  const ForwardVars vars = network_forward(tape, x, bound, cfg);
  ForwardOutputs out;
  for (Var v : vars.f_wei) out.f_wei.push_back(tape.value(v));
  out.f_pre = tape.value(vars.f_pre);
  return out;
}

}  // namespace iiao::model
