#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "irstd/tensor.hpp"

namespace irstd {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Plain U-Net with 4 scales plus per-scale prediction heads and a fusion
// head. Scale i is the decoder feature map of spatial size
// H/2^{4-i}: scale 1 is the bottleneck, scale 4 is full resolution. The
// channel count at scale i is base_channels * channel_multipliers[i-1].
struct UNetConfig {
  int height = 64;
  int width = 64;
  int base_channels = 8;
  std::array<int, 4> channel_multipliers = {8, 4, 2, 1};  // coarse -> fine
  uint64_t seed = 0;
  // Without per-channel normalization the He-initialized conv stack
  // attenuates its input ~5-10x per stage; by the fusion head the output is
  // spatially near-constant and training stalls. Normalized is the default.
  bool use_instance_norm = true;

  int scale_channels(int scale) const {  // scale in 1..4
    return base_channels * channel_multipliers[scale - 1];
  }
  bool operator==(const UNetConfig&) const = default;
};

struct ModelParams {
  UNetConfig config;
  std::vector<std::pair<std::string, Tensor>> params;  // fixed creation order

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  int64_t parameter_count() const;
  void zero_grad();
};

// The five prediction maps: scale_preds[i] is p_{i+1} (HxW tensors of
// probabilities, coarse to fine), fused is the full-resolution fusion p.
struct MultiScaleOutputs {
  std::vector<Tensor> scale_preds;
  Tensor fused;
};

// Deterministic He-style initialization from config.seed.
ModelParams build(const UNetConfig& config);

// image must be 1x1xHxW matching the config.
MultiScaleOutputs forward(const ModelParams& params, const Tensor& image);

// Versioned binary container: "MSHN1" magic, config block, little-endian
// float64 parameter blobs, trailing FNV-1a checksum.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
// Throws CheckpointError on corruption, ConfigMismatchError if expect is
// given and differs from the stored config.
ModelParams load_checkpoint(const std::filesystem::path& path,
                            const UNetConfig* expect = nullptr);

}  // namespace irstd
