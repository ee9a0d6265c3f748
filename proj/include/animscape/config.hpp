#pragma once

// Run configuration (one JSON document holding every hyperparameter) and the
// trained model bundle directory:
//   motion.json              {"version": 1, "beta": .., "allow_unrestricted": .., "predictor_size": ..}
//   motion_predictor.pt      motion_encoder.pt      motion_codebook.json
//   appearance.json          {"version": 1, "predictor_size": ..}
//   appearance_predictor.pt  appearance_encoder.pt  appearance_codebook.json
//   lstm.pt                  (optional)

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "animscape/appearance.hpp"
#include "animscape/control.hpp"
#include "animscape/dataset.hpp"
#include "animscape/features.hpp"
#include "animscape/motion.hpp"
#include "animscape/synthesis.hpp"

namespace animscape {

struct ModelShape {
  int64_t predictor_base = 128;
  int64_t encoder_base = 64;
  int64_t residual_blocks = 5;
  int64_t predictor_size = 256;
  int64_t encoder_size = 128;
  bool direct_appearance = false;  // 3-channel "direct" ablation instead of transfer maps
};

struct FeatureConfig {
  std::string kind = "vgg16";  // "vgg16" or "compact"
  std::string weights;         // pickled state dict for vgg16
  int64_t input_size = 256;
  uint64_t seed = 7;
  int64_t compact_width = 8;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  size_t max_upload_bytes = 16u << 20;
  int64_t preview_width = 0;   // 0: a quarter of the input
  int64_t preview_height = 0;
  int preview_frames = 16;
  int optimization_steps = 200;
  double optimization_timeout_seconds = 30.0;
  uint64_t seed = 0;
};

struct AppConfig {
  ModelShape shape;
  MotionHyperParams motion;
  AppearanceHyperParams appearance;
  MotionSamplingParams motion_sampling;
  AppearanceSamplingParams appearance_sampling{10.0, 1.0, 0.3};
  SynthesisConfig synthesis;
  ControlOptions control;
  LstmTrainOptions lstm;
  FeatureConfig features;
  ServiceConfig service;
  int threads = 0;  // 0: library default
};

/// Unknown keys and ill-typed values throw ConfigError. Missing keys keep defaults.
AppConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const AppConfig& config);
/// Missing file: MissingArtifactError; malformed: ConfigError.
AppConfig load_config(const std::filesystem::path& path);

MotionModel make_motion_model(const ModelShape& shape, double beta);
AppearanceModel make_appearance_model(const ModelShape& shape);

/// vgg16 without weights is a ConfigError; a missing weights file is a MissingArtifactError.
std::shared_ptr<FeatureExtractor> make_feature_extractor(const FeatureConfig& config);

struct ModelBundle {
  std::unique_ptr<MotionModel> motion;
  std::unique_ptr<AppearanceModel> appearance;
  MotionCodebook motion_codebook;
  AppearanceCodebook appearance_codebook;
  std::optional<LatentLstm> lstm;
};

void save_motion_bundle(const std::filesystem::path& dir, MotionModel& model, const MotionCodebook& codebook);
void save_appearance_bundle(const std::filesystem::path& dir, AppearanceModel& model,
                            const AppearanceCodebook& codebook);
void save_lstm(const std::filesystem::path& dir, LatentLstm& lstm);

/// Loads whichever halves are requested; a missing required file throws MissingArtifactError.
ModelBundle load_bundle(const std::filesystem::path& dir, bool need_motion = true, bool need_appearance = true);

}  // namespace animscape
