#pragma once

// Frame, flow and color-map value types plus the resampling primitives every
// other module builds on. Flows are backward displacements expressed in
// normalized coordinates: the image domain is [-1, 1]^2 with -1 and +1 at the
// centers of the first and last pixel of each axis.

#include <array>
#include <cstdint>
#include <torch/torch.h>

namespace animscape {

inline constexpr int64_t kLatentDim = 8;

/// H x W x 3 image with values in [-1, 1], stored channel-first as a [3, H, W] tensor.
class NormalizedImage {
 public:
  NormalizedImage() = default;
  explicit NormalizedImage(torch::Tensor chw);

  const torch::Tensor& tensor() const { return data_; }
  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }
  bool defined() const { return data_.defined(); }

  /// [1, 3, H, W] view for batched operations.
  torch::Tensor batched() const { return data_.unsqueeze(0); }

 private:
  torch::Tensor data_;
};

/// Per-pixel backward displacement, [2, H, W] (x component first).
class FlowField {
 public:
  FlowField() = default;
  explicit FlowField(torch::Tensor chw);

  static FlowField zeros(int64_t height, int64_t width,
                         torch::TensorOptions options = torch::kFloat32);

  const torch::Tensor& tensor() const { return data_; }
  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }
  bool defined() const { return data_.defined(); }
  torch::Tensor batched() const { return data_.unsqueeze(0); }

 private:
  torch::Tensor data_;
};

/// Multiplicative (weight) and additive (bias) maps, each [3, H, W] in [-1, 1].
struct ColorTransferMap {
  torch::Tensor weight;
  torch::Tensor bias;

  /// Splits a 6-channel predictor output: channels 0..2 weight, 3..5 bias.
  static ColorTransferMap from_channels(const torch::Tensor& six_channel);
  torch::Tensor to_channels() const;
  int64_t height() const { return weight.size(1); }
  int64_t width() const { return weight.size(2); }
};

struct LatentCode {
  std::array<float, kLatentDim> values{};

  torch::Tensor to_tensor(torch::Dtype dtype = torch::kFloat32) const;
  /// Accepts any tensor with exactly kLatentDim elements.
  static LatentCode from_tensor(const torch::Tensor& t);

  LatentCode operator+(const LatentCode& o) const;
  LatentCode operator-(const LatentCode& o) const;
  LatentCode operator*(float s) const;
  bool operator==(const LatentCode&) const = default;
};

/// 8-bit H x W x 3 (uint8) image to [-1, 1] via v = 2u/255 - 1.
NormalizedImage normalize_image(const torch::Tensor& raw_hwc);
/// Inverse of normalize_image: clamp to [-1, 1], then quantize to the nearest 8-bit level.
torch::Tensor to_8bit(const NormalizedImage& image);

NormalizedImage resize(const NormalizedImage& image, int64_t height, int64_t width);
FlowField resize(const FlowField& flow, int64_t height, int64_t width);
ColorTransferMap resize(const ColorTransferMap& map, int64_t height, int64_t width);

NormalizedImage reflect_pad(const NormalizedImage& image, int64_t margin);
FlowField reflect_pad(const FlowField& flow, int64_t margin);

NormalizedImage warp(const NormalizedImage& source, const FlowField& flow);
FlowField compose_flows(const FlowField& accumulated, const FlowField& step);
FlowField restrict_flow(const FlowField& raw, double beta, bool allow_unrestricted = false);

namespace ops {

/// Bilinear resampling of an [N, C, H, W] tensor (corner-aligned, so values at
/// the four corners are preserved and flow values need no rescaling).
torch::Tensor resize(const torch::Tensor& nchw, int64_t height, int64_t width);

/// Mirror padding of the last two axes without repeating the edge sample.
/// Each margin must be smaller than the corresponding axis length.
torch::Tensor reflect_pad(const torch::Tensor& t, int64_t margin_y, int64_t margin_x);

/// Samples `source` ([N, C, H, W]) at p + flow(p) with bilinear interpolation.
/// `flow` is [N, 2, H, W]. Out-of-range positions read the mirrored source.
/// Differentiable with respect to both arguments.
torch::Tensor warp(const torch::Tensor& source, const torch::Tensor& flow);

/// result(p) = step(p) + accumulated(p + step(p)).
torch::Tensor compose_flows(const torch::Tensor& accumulated, const torch::Tensor& step);

/// Divides raw tanh flow by beta. beta must exceed 1; beta == 1 is accepted
/// only with allow_unrestricted (the unrestricted ablation).
torch::Tensor restrict_flow(const torch::Tensor& raw, double beta, bool allow_unrestricted = false);

/// Tiles [N, D] codes to [N, D, H, W].
torch::Tensor tile_latent(const torch::Tensor& codes, int64_t height, int64_t width);

}  // namespace ops

}  // namespace animscape
