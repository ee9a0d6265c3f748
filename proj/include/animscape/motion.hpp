#pragma once

// Self-supervised motion learning: the predictor infers a restricted backward
// flow between consecutive frames, the encoder compresses each clip's common
// motion field into a latent code, and inference chains per-step flows into a
// single flow back to the input image.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "animscape/codebook.hpp"
#include "animscape/core.hpp"
#include "animscape/networks.hpp"

namespace animscape {

struct MotionHyperParams {
  double lambda_p = 1.0;
  double lambda_tv = 1.0;
  double sigma = 0.1;
  double beta = 64.0;
  bool allow_unrestricted = false;  // permits beta == 1
  double learning_rate = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int batch_size = 8;
  int epochs = 5000;
  uint64_t seed = 0;

  /// Throws ArgumentError on non-positive values or an illegal beta.
  void validate() const;
};

/// A time-ordered frame sequence from one video.
struct Clip {
  std::string id;
  std::vector<NormalizedImage> frames;
};

struct MotionModel {
  PredictorNet predictor;
  EncoderNet encoder;
  double beta = 64.0;
  bool allow_unrestricted = false;
  int64_t predictor_size = 256;  // square training/inference resolution of the predictor

  MotionModel(PredictorConfig predictor_config = {2, 128, 5}, EncoderConfig encoder_config = {2, 64, 128},
              double beta = 64.0, int64_t predictor_size = 256);
};

struct MotionEpochRecord {
  int epoch = 0;
  double photometric = 0.0;
  double tv = 0.0;
  double total = 0.0;
  double wall_seconds = 0.0;
};

using MotionObserver = std::function<void(const MotionEpochRecord&)>;

struct MotionTrainResult {
  MotionCodebook codebook;
  std::vector<MotionEpochRecord> history;
  std::vector<std::string> skipped_clips;
  std::map<std::string, FlowField> common_fields;  // at encoder resolution
};

/// Sum of squared differences.
torch::Tensor motion_photometric_loss(const torch::Tensor& predicted, const torch::Tensor& target);

/// Edge-aware total variation over each pixel's right and upper neighbor:
/// sum w(g(p), g(q)) * |f(p) - f(q)|_1 with w(x, y) = exp(-|x - y|_1 / sigma).
/// `field` is [N, C, H, W]; `guide` is [N, G, H, W] on the same grid.
torch::Tensor weighted_tv_loss(const torch::Tensor& field, const torch::Tensor& guide, double sigma);

/// Unweighted neighbor-difference energy (same neighborhood as weighted_tv_loss).
torch::Tensor total_variation(const torch::Tensor& field);

torch::Tensor motion_total_loss(const torch::Tensor& photometric, const torch::Tensor& tv,
                                const MotionHyperParams& hp);

/// Complete per-pair objective for a flow `flow` ([N, 2, H, W]) taking
/// `current` to `next`.
torch::Tensor motion_pair_loss(const torch::Tensor& current, const torch::Tensor& next, const torch::Tensor& flow,
                               const MotionHyperParams& hp);

/// Trains predictor and encoder jointly; returns one code per usable clip.
/// Clips with fewer than two frames are skipped (and listed); an empty
/// dataset throws ArgumentError. `hp.beta` becomes the model's restriction.
MotionTrainResult train_motion(const std::vector<Clip>& clips, MotionModel& model, const MotionHyperParams& hp,
                               const MotionObserver& observer = {});

/// Encodes a flow field (any resolution) into a motion code.
LatentCode encode_motion(MotionModel& model, const FlowField& flow);

/// Restricted flow for one step, inferred at the predictor resolution and
/// resized to the frame's native resolution.
FlowField infer_flow(MotionModel& model, const NormalizedImage& frame, const LatentCode& code);

/// Maps the current frame to the next per-step backward flow (native resolution).
using FlowStepper = std::function<FlowField(const NormalizedImage& current)>;

struct MotionSequence {
  std::vector<NormalizedImage> frames;  // predicted frames t = 2 .. frames + 1
  std::vector<FlowField> flows;         // composed flow back to the input for each frame
};

/// Recurrent rollout. Each per-step flow is scaled by speed_scale and composed
/// into the running flow; every frame is one warp of the original input.
MotionSequence predict_motion_sequence(const NormalizedImage& input, const FlowStepper& stepper, int frames,
                                       double speed_scale = 1.0);
MotionSequence predict_motion_sequence(const NormalizedImage& input, MotionModel& model, const LatentCode& code,
                                       int frames, double speed_scale = 1.0);

/// Mean over consecutive pairs of the RMSE between warp(I_t, flow) and I_{t+1},
/// at the predictor resolution.
double mean_reconstruction_rmse(MotionModel& model, const Clip& clip, const LatentCode& code);

}  // namespace animscape
