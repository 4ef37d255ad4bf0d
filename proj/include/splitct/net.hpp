#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "splitct/core.hpp"

namespace splitct {

/// Two-scale encoder–decoder acting on one image channel:
///
///   conv(1→C)+relu → conv(C→C)+relu ──────────────────────────┐ skip
///     → avgpool2 → conv(C→2C)+relu → conv(2C→2C)+relu          │
///     → nearest-upsample2 → concat[up (2C), skip (C)] → conv(3C→C)+relu
///     → conv(C→1) (+ input when `residual`)
///
/// All convolutions are 3×3, stride 1, zero padded.
struct NetConfig {
  int channels = 16;
  bool residual = true;

  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

/// Parameter layout of one convolution inside the flat parameter vector:
/// weights [out][in][3][3] followed by biases [out].
struct ConvLayout {
  int in = 0;
  int out = 0;
  std::size_t weights = 0;
  std::size_t bias = 0;

  std::size_t weight_count() const { return std::size_t(in) * out * 9; }
};

inline constexpr int kNetLayers = 6;

std::array<ConvLayout, kNetLayers> net_layout(const NetConfig& cfg);
std::size_t param_count(const NetConfig& cfg);

struct ModelParams {
  NetConfig cfg;
  std::vector<double> values;
};

/// Kernels ~ U(−√(6/fan_in), √(6/fan_in)) (standard deviation √(2/fan_in)),
/// biases zero. With the residual skip the last convolution starts at zero,
/// so a fresh network is the identity map.
ModelParams init_params(const NetConfig& cfg, std::uint64_t seed);

/// Intermediate activations (post-rectifier) kept for the backward pass.
struct NetTape {
  int height = 0;
  int width = 0;
  std::vector<double> input;
  std::vector<double> a1, a2;  // C × H × W
  std::vector<double> pooled;  // C × H/2 × W/2
  std::vector<double> a3, a4;  // 2C × H/2 × W/2
  std::vector<double> concat;  // 3C × H × W
  std::vector<double> a5;      // C × H × W
};

Image net_forward(const ModelParams& params, const Image& img, NetTape* tape = nullptr);

/// Adds ∂L/∂θ into `grad_params` and, if requested, writes ∂L/∂input.
void net_backward_accumulate(const ModelParams& params, const NetTape& tape, const Image& grad_out,
                             std::span<double> grad_params, Image* grad_input);

struct NetGradients {
  std::vector<double> params;
  Image input;
};

NetGradients net_backward(const ModelParams& params, const NetTape& tape, const Image& grad_out);

/// Applies the network to every material channel with shared weights.
MaterialImage net_apply(const ModelParams& params, const MaterialImage& x,
                        std::vector<NetTape>* tapes = nullptr);

// Building blocks, exposed for layer-level gradient checks. Layout is CHW.
void conv3x3_forward(std::span<const double> in, int c_in, int h, int w,
                     std::span<const double> weights, std::span<const double> bias, int c_out,
                     std::span<double> out);
void conv3x3_backward(std::span<const double> in, int c_in, int h, int w,
                      std::span<const double> weights, int c_out, std::span<const double> grad_out,
                      std::span<double> grad_in, std::span<double> grad_weights,
                      std::span<double> grad_bias);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;

  static AdamState fresh(std::size_t n, AdamConfig cfg = {});
};

/// Bias-corrected Adam update. Throws std::runtime_error on non-finite grads.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

/// Directory with `params.splt`, `adam_m.splt`, `adam_v.splt` and `meta.txt`.
struct Checkpoint {
  ModelParams params;
  AdamState adam;
  int epoch = 0;
  std::map<std::string, std::string> meta;  // extra key/value metadata
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace splitct
