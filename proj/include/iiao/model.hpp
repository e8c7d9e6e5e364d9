#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iiao/tape.hpp"
#include "iiao/tensor.hpp"

// The counting network: a VGG-style encoder that produces F_in at 1/8 input
// resolution, a stack of IIAO modules (scale pyramid + attention unit + soft
// block), and a 1x1 regression head producing the density map F_pre.
namespace iiao::model {

enum class EncoderInit { he, gaussian };

struct ModelConfig {
  int base_channels = 64;    // C, channels of F_in
  int reduction_ratio = 16;  // r, attention bottleneck
  int iiao_stack = 2;
  // Widths of the first four VGG blocks; the fifth block reuses the fourth.
  std::vector<int> encoder_widths = {16, 32, 64, 64};
  // (first, second) kernel sizes for each of the four pyramid branches.
  std::vector<std::pair<int, int>> asp_kernels = {{1, 1}, {1, 3}, {1, 5}, {3, 5}};
  EncoderInit encoder_init = EncoderInit::he;
  double init_std = 0.01;  // Gaussian std for every non-encoder kernel
  std::uint64_t seed = 0;

  // Every violated constraint, empty when valid.
  std::vector<std::string> validate() const;
  // Throws std::invalid_argument listing every problem.
  void require_valid() const;
};

// Layer path -> kernel or bias. Ordered, so iteration is deterministic.
using ModelParams = std::map<std::string, Tensor>;
using Gradients = std::map<std::string, Tensor>;

// Kernels: encoder ~ He-normal (or N(0, init_std^2) with EncoderInit::gaussian),
// all others ~ N(0, init_std^2); biases zero. Bit-identical for equal seeds.
ModelParams init_params(const ModelConfig& config);

// Shapes every parameter must have for `config`.
std::map<std::string, Shape> param_shapes(const ModelConfig& config);

// Parameters placed on a tape as gradient-requiring leaves.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ModelParams& params, bool requires_grad = true);
  // Wraps leaves already on the tape; names[i] labels vars[i].
  BoundParams(const Tape& tape, const std::vector<std::string>& names, std::span<const Var> vars);
  Var operator()(const std::string& name) const;
  // d(root)/d(param) for every parameter after tape.backward(root).
  Gradients gradients(const Tape& tape) const;

 private:
  std::map<std::string, Var> vars_;
  std::map<std::string, Shape> shapes_;
};

struct ForwardVars {
  std::vector<Var> f_wei;  // one per IIAO module, B x 1 x h x w
  Var f_pre;               // B x 1 x h x w
};

struct ForwardOutputs {
  std::vector<Tensor> f_wei;
  Tensor f_pre;
};

struct SoftBlockVars {
  Var f_out;
  Var f_wei;
};

// Image B x 3 x H x W (H, W divisible by 16) -> F_in B x C x H/8 x W/8.
Var encoder_forward(Tape& tape, Var image, const BoundParams& params, const ModelConfig& config);

// Scale pyramid: 1x1 compression C -> C/4, then four branches
// (k1: C/4 -> C/16, ReLU, k2: C/16 -> C/4, ReLU) concatenated back to C.
Var asp_forward(Tape& tape, Var f_in, const BoundParams& params, const std::string& prefix,
                const ModelConfig& config);

// Attention unit: sigmoid(conv1x1(relu(conv1x1(F_in)))) with a C/r bottleneck.
Var tau_forward(Tape& tape, Var f_in, const BoundParams& params, const std::string& prefix,
                const ModelConfig& config);

// F_out = F_att * F_mul; F_wei = sum_c softmax_c(F_att) * F_mul.
SoftBlockVars soft_block(Tape& tape, Var f_att, Var f_mul);

ForwardVars network_forward(Tape& tape, Var image, const BoundParams& params,
                            const ModelConfig& config);

// Value-only convenience wrapper (builds and discards its own tape).
ForwardOutputs network_forward(const Tensor& image, const ModelParams& params,
                               const ModelConfig& config);

// Checkpoint: versioned little-endian binary with the config embedded as JSON.
struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  int epoch = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

}  // namespace iiao::model
