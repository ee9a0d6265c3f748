#pragma once

// Predictor (image + latent code -> flow or color-transfer channels), encoder
// (flow or image -> latent code) and the recurrent latent-code model.

#include <array>
#include <torch/torch.h>
#include <utility>

#include "animscape/core.hpp"

namespace animscape {

struct PredictorConfig {
  int64_t out_channels = 2;       // 2 for motion, 6 for appearance, 3 for the direct ablation
  int64_t base_channels = 128;    // downsampling widths are base, 2*base, 4*base
  int64_t residual_blocks = 5;

  bool operator==(const PredictorConfig&) const = default;
};

struct EncoderConfig {
  int64_t in_channels = 2;        // 2 for flow, 3 for RGB
  int64_t base_channels = 64;     // residual widths are 2*base, 3*base, 4*base
  int64_t input_size = 128;

  bool operator==(const EncoderConfig&) const = default;
};

struct LatentLstmConfig {
  int64_t hidden = 128;

  bool operator==(const LatentLstmConfig&) const = default;
};

/// conv-norm-relu-conv-norm with an identity shortcut.
struct ResidualBlockImpl : torch::nn::Module {
  explicit ResidualBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::InstanceNorm2d norm1{nullptr}, norm2{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Fully convolutional encoder-decoder with U-Net skips. The latent code is
/// tiled and concatenated to the input of each downsampling convolution.
/// Spatial dimensions must be divisible by 8; the output has the same spatial
/// size as the input and is tanh-bounded.
struct PredictorNetImpl : torch::nn::Module {
  explicit PredictorNetImpl(PredictorConfig config = {});
  torch::Tensor forward(const torch::Tensor& images, const torch::Tensor& codes);

  const PredictorConfig& config() const { return config_; }

  /// Zeroes the corresponding skip input (conv3, conv2, conv1) when false.
  std::array<bool, 3> skip_enabled{true, true, true};

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  torch::nn::InstanceNorm2d norm2{nullptr}, norm3{nullptr};
  torch::nn::Sequential residual{nullptr};
  torch::nn::Conv2d upconv1{nullptr}, upconv2{nullptr}, upconv3{nullptr};
  torch::nn::InstanceNorm2d upnorm1{nullptr}, upnorm2{nullptr};

 private:
  PredictorConfig config_;
};
TORCH_MODULE(PredictorNet);

/// Pre-activation residual block that halves the resolution (mean-pool on
/// both paths, 1x1 projection on the shortcut).
struct DownResidualBlockImpl : torch::nn::Module {
  DownResidualBlockImpl(int64_t in_channels, int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::InstanceNorm2d norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, shortcut{nullptr};
};
TORCH_MODULE(DownResidualBlock);

/// Latent encoder: conv, three downsampling residual blocks, LeakyReLU(0.2),
/// average pooling over the remaining 8x8 map, then a linear layer to 8 values.
struct EncoderNetImpl : torch::nn::Module {
  explicit EncoderNetImpl(EncoderConfig config = {});
  /// [N, in_channels, input_size, input_size] -> [N, 8]
  torch::Tensor forward(const torch::Tensor& x);

  const EncoderConfig& config() const { return config_; }

  torch::nn::Conv2d conv1{nullptr};
  DownResidualBlock res1{nullptr}, res2{nullptr}, res3{nullptr};
  torch::nn::Linear fc{nullptr};

 private:
  EncoderConfig config_;
};
TORCH_MODULE(EncoderNet);

/// Linear(8 -> hidden), LSTM cell(hidden), Linear(hidden -> 8).
struct LatentLstmImpl : torch::nn::Module {
  using State = std::pair<torch::Tensor, torch::Tensor>;

  explicit LatentLstmImpl(LatentLstmConfig config = {});

  /// One recurrent step: [N, 8] -> [N, 8]; `state` is updated in place
  /// (undefined tensors start from zeros).
  torch::Tensor step(const torch::Tensor& code, State& state);
  /// Teacher-forced pass over [N, T, 8]; returns the next-code prediction at every step.
  torch::Tensor forward(const torch::Tensor& sequence);

  const LatentLstmConfig& config() const { return config_; }

  torch::nn::Linear fc_in{nullptr};
  torch::nn::LSTMCell cell{nullptr};
  torch::nn::Linear fc_out{nullptr};

 private:
  LatentLstmConfig config_;
};
TORCH_MODULE(LatentLstm);

/// Convolution weights ~ N(0, 0.02), biases zero.
void init_weights(torch::nn::Module& module);

/// Order-independent checksum over all parameters (used to assert frozen weights).
double parameter_checksum(const torch::nn::Module& module);

}  // namespace animscape
