#pragma once

// Appearance learning: the predictor infers per-pixel color-transfer maps that
// recolor the source frame toward a target frame described by a latent code.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "animscape/codebook.hpp"
#include "animscape/core.hpp"
#include "animscape/features.hpp"
#include "animscape/motion.hpp"
#include "animscape/networks.hpp"

namespace animscape {

struct AppearanceHyperParams {
  double lambda_s = 1.0;
  double lambda_sp = 1e-2;   // 0 reproduces the "uniform appearance" ablation
  double lambda_c = 1e-5;
  double lambda_tv = 0.1;
  double sigma = 0.1;
  int64_t sp_grid = 32;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int batch_size = 8;
  int epochs = 5000;
  uint64_t seed = 0;

  void validate() const;
};

/// Predictor with 6 output channels (transfer maps) or, in direct mode, 3
/// channels interpreted as the output image itself.
struct AppearanceModel {
  PredictorNet predictor;
  EncoderNet encoder;
  int64_t predictor_size = 256;

  AppearanceModel(PredictorConfig predictor_config = {6, 128, 5}, EncoderConfig encoder_config = {3, 64, 128},
                  int64_t predictor_size = 256);

  bool direct() const { return predictor->config().out_channels == 3; }
};

/// tanh(weight * image + bias). Inputs are [N, 3, H, W] tensors of one shape.
torch::Tensor color_transfer(const torch::Tensor& weight, const torch::Tensor& bias, const torch::Tensor& images);
NormalizedImage color_transfer(const ColorTransferMap& map, const NormalizedImage& image);

/// Sum over style taps of squared Frobenius distance between Gram matrices.
torch::Tensor style_loss(FeatureExtractor& fx, const torch::Tensor& output, const torch::Tensor& target);

/// Squared L2 distance between per-cell channel means over a grid x grid
/// partition (near-equal integer cells when the size is not a multiple).
torch::Tensor spatial_pyramid_loss(const torch::Tensor& output, const torch::Tensor& target, int64_t grid = 32);

/// Squared L2 distance between content-tap activations of source and output.
torch::Tensor content_loss(FeatureExtractor& fx, const torch::Tensor& output, const torch::Tensor& source);

struct AppearanceLossTerms {
  torch::Tensor style, pyramid, content, tv;
};

torch::Tensor appearance_total_loss(const AppearanceLossTerms& terms, const AppearanceHyperParams& hp);

/// Evaluates every term for a raw predictor output ([N, 6, H, W] maps, or
/// [N, 3, H, W] direct images). Returns the recolored output alongside.
AppearanceLossTerms appearance_loss_terms(FeatureExtractor& fx, const torch::Tensor& raw, const torch::Tensor& source,
                                          const torch::Tensor& target, const AppearanceHyperParams& hp,
                                          torch::Tensor* output = nullptr);

struct AppearanceEpochRecord {
  int epoch = 0;
  double style = 0.0;
  double pyramid = 0.0;
  double content = 0.0;
  double tv = 0.0;
  double total = 0.0;
  double wall_seconds = 0.0;
};

using AppearanceObserver = std::function<void(const AppearanceEpochRecord&)>;

struct AppearanceTrainResult {
  AppearanceCodebook codebook;
  std::vector<AppearanceEpochRecord> history;
  std::vector<std::string> skipped_clips;
};

/// Trains predictor and encoder on random (source, target) frame pairs of each
/// clip; the codebook holds one code per frame of every usable clip.
AppearanceTrainResult train_appearance(const std::vector<Clip>& clips, AppearanceModel& model, FeatureExtractor& fx,
                                       const AppearanceHyperParams& hp, const AppearanceObserver& observer = {});

LatentCode encode_appearance(AppearanceModel& model, const NormalizedImage& image);

/// Codes for every frame of a clip, in order.
std::vector<LatentCode> encode_appearance_sequence(AppearanceModel& model, const std::vector<NormalizedImage>& frames);

struct AppearanceFrame {
  NormalizedImage image;
  ColorTransferMap map;  // undefined tensors in direct mode
};

/// Infers the map at the predictor resolution, resizes it to the input's
/// native resolution and recolors the native input.
AppearanceFrame predict_appearance_frame(AppearanceModel& model, const NormalizedImage& input, const LatentCode& code);

}  // namespace animscape
