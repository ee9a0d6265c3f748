#pragma once

// Single-image video generation: motion rollout, optional looping, and
// per-frame color transfer driven by an interpolated appearance code sequence.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "animscape/appearance.hpp"
#include "animscape/codebook.hpp"
#include "animscape/motion.hpp"

namespace animscape {

struct SynthesisConfig {
  int frame_count = 64;
  bool loop_enabled = true;
  std::optional<int> crossfade_window;  // default: a quarter of the rollout
  double motion_speed_scale = 1.0;
  int loop_repeats = 1;                 // loop repetitions per appearance cycle

  // Explicit codes win over codebook ids; with neither, a seeded random
  // codebook entry is used.
  std::optional<LatentCode> motion_code;
  std::string motion_clip_id;
  std::vector<LatentCode> appearance_codes;
  std::string appearance_clip_id;

  int64_t output_width = 0;   // 0 keeps the input resolution
  int64_t output_height = 0;
  uint64_t seed = 0;

  /// Throws ArgumentError on inconsistent values.
  void validate() const;
  /// Frames in one motion loop (frame_count / loop_repeats in loop mode).
  int loop_length() const;
  int window() const;
};

/// Cross-fades the tail of `frames` into its head: out has len - window
/// frames and out[i] = (1 - a_i) * frames[len - window + i] + a_i * frames[i]
/// for i < window with a_i = (i + 1) / (window + 1). Playing out cyclically,
/// the last frame is followed by a frame that continues it.
std::vector<NormalizedImage> generate_loop(const std::vector<NormalizedImage>& frames, int window);

/// Piecewise-linear interpolation of equally spaced keys. Non-cyclic keys sit
/// at k (T - 1) / (K - 1); cyclic keys at k T / K with a closing segment from
/// the last key back to the first.
std::vector<LatentCode> interpolate_latent_sequence(const std::vector<LatentCode>& keys, int total_frames,
                                                    bool cyclic);

struct SynthesisResult {
  std::vector<NormalizedImage> frames;
  std::vector<NormalizedImage> motion_frames;  // before color transfer (one loop in loop mode)
  LatentCode motion_code;
  std::vector<LatentCode> appearance_codes;    // one per output frame
};

/// Resolves codes from the config and codebooks (either codebook may be null
/// when explicit codes are given). Throws ConfigError when a code is missing.
LatentCode resolve_motion_code(const SynthesisConfig& cfg, const MotionCodebook* codebook);
std::vector<LatentCode> resolve_appearance_keys(const SynthesisConfig& cfg, const AppearanceCodebook* codebook);

SynthesisResult synthesize(const NormalizedImage& input, const SynthesisConfig& cfg, MotionModel& motion,
                           AppearanceModel& appearance, const MotionCodebook* motion_codebook,
                           const AppearanceCodebook* appearance_codebook);

/// Same pipeline with the motion step and the appearance step injected.
using AppearanceStepper = std::function<NormalizedImage(const NormalizedImage& frame, const LatentCode& code)>;
SynthesisResult synthesize(const NormalizedImage& input, const SynthesisConfig& cfg, const FlowStepper& motion,
                           const AppearanceStepper& appearance, const LatentCode& motion_code,
                           const std::vector<LatentCode>& appearance_keys);

using PerceptualScorer = std::function<double(const NormalizedImage& generated, const NormalizedImage& reference)>;

struct SequenceEvaluation {
  std::vector<double> rmse;
  std::vector<double> perceptual;  // empty without a scorer
};

SequenceEvaluation evaluate_sequence(const std::vector<NormalizedImage>& generated,
                                     const std::vector<NormalizedImage>& reference,
                                     const PerceptualScorer& scorer = {});

/// Mean over the feature taps of the mean squared difference of unit-normalized
/// activations.
PerceptualScorer feature_distance_scorer(FeatureExtractor& extractor);

}  // namespace animscape
