#pragma once

// User control: latent-code search from arrow and patch annotations, and
// recurrent prediction of appearance code sequences.
//
// Annotation document (JSON, shared by the CLI and the service):
//   {"version": 1,
//    "arrows":  [{"x": px, "y": px, "dx": px, "dy": px}, ...],
//    "patches": [{"x": px, "y": px, "width": px, "height": px, "image": "file.png"}, ...]}
// Coordinates are input-image pixels. An arrow starts at (x, y) and points
// along (dx, dy), the direction the scene should visibly move.

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "animscape/appearance.hpp"
#include "animscape/codebook.hpp"
#include "animscape/motion.hpp"
#include "animscape/networks.hpp"

namespace animscape {

inline constexpr int kAnnotationVersion = 1;

struct Arrow {
  double x = 0, y = 0, dx = 0, dy = 0;
  bool operator==(const Arrow&) const = default;
};

struct PatchSpec {
  int64_t x = 0, y = 0, width = 0, height = 0;
  std::string image;  // file name (CLI: relative to the document; service: multipart part name)
  bool operator==(const PatchSpec&) const = default;
};

struct AnnotationDocument {
  std::vector<Arrow> arrows;
  std::vector<PatchSpec> patches;
  bool operator==(const AnnotationDocument&) const = default;
};

/// Throws ParseError on malformed JSON, MigrationError on another version.
AnnotationDocument parse_annotation(const std::string& text);
std::string serialize_annotation(const AnnotationDocument& doc);

struct MotionAnnotation {
  std::vector<Arrow> arrows;
  double margin = 0.5;
};

struct AppearancePatch {
  int64_t x = 0, y = 0;
  NormalizedImage image;  // its size is the patch rectangle
};

struct AppearanceAnnotation {
  std::vector<AppearancePatch> patches;
};

/// Loads each patch image (resized to its rectangle) through `load`.
AppearanceAnnotation resolve_patches(const std::vector<PatchSpec>& specs,
                                     const std::function<NormalizedImage(const std::string&)>& load);

struct Raster {
  torch::Tensor target;  // [C, H, W]
  torch::Tensor mask;    // [1, H, W] in {0, 1}
};

/// Paints each arrow as a 3-pixel-wide segment at the given grid size. Pixels
/// store the backward flow that moves content along the arrow: the negated
/// unit direction (in normalized coordinates) divided by beta.
Raster rasterize_motion(const MotionAnnotation& ann, int64_t image_height, int64_t image_width, int64_t grid_height,
                        int64_t grid_width, double beta);

/// Places each patch (resized to its rectangle mapped onto the grid).
Raster rasterize_appearance(const AppearanceAnnotation& ann, int64_t image_height, int64_t image_width,
                            int64_t grid_height, int64_t grid_width);

/// Per-pixel cosine between flows ([N, 2, H, W]), 0 where either has zero length.
torch::Tensor flow_cosine(const torch::Tensor& a, const torch::Tensor& b);

/// sum over pixels of max(0, M (1 - D - m))^2.
torch::Tensor motion_control_objective(const torch::Tensor& flow, const Raster& raster, double margin);

/// || M (U - output) ||^2.
torch::Tensor appearance_control_objective(const torch::Tensor& output, const Raster& raster);

struct ControlOptions {
  int steps = 200;
  double learning_rate = 1e-2;
  int random_restarts = 3;          // codebook entries tried besides the mean
  double init_jitter = 0.0;         // std of Gaussian noise added to each start
  uint64_t seed = 0;
  double time_budget_seconds = 0.0; // <= 0: unlimited
};

struct ControlRun {
  LatentCode init;
  LatentCode best;
  double initial_objective = 0.0;
  double best_objective = 0.0;
  int best_step = 0;
  std::vector<double> trace;  // objective at each iterate, starting with the initial code
};

struct ControlResult {
  LatentCode code;
  double objective = 0.0;
  int best_step = 0;
  std::vector<double> trace;  // of the winning run
  std::vector<ControlRun> runs;
  bool timed_out = false;
};

/// Codebook mean followed by `random_restarts` seeded codebook draws, each
/// jittered when requested. An empty codebook starts from zero.
std::vector<LatentCode> initial_codes(const std::vector<LatentCode>& codebook, const ControlOptions& options);

using CodeObjective = std::function<torch::Tensor(const torch::Tensor& code)>;  // [1, 8] -> scalar

/// Adam over the code only; returns the best iterate across all starts.
ControlResult optimize_code(const CodeObjective& objective, const std::vector<LatentCode>& starts,
                            const ControlOptions& options);

ControlResult optimize_motion_code(const NormalizedImage& input, const MotionAnnotation& ann, MotionModel& model,
                                   const std::vector<LatentCode>& starts, const ControlOptions& options = {});

ControlResult optimize_appearance_code(const NormalizedImage& input, const AppearanceAnnotation& ann,
                                       AppearanceModel& model, const std::vector<LatentCode>& starts,
                                       const ControlOptions& options = {});

/// Flow for `code` at the predictor resolution, with gradients to the code.
torch::Tensor motion_flow_for_code(const NormalizedImage& input, MotionModel& model, const torch::Tensor& code);

struct LstmTrainOptions {
  int epochs = 500;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
};

/// Teacher-forced next-code regression (mean squared error) over every
/// sequence with two or more codes. Returns the mean loss per epoch.
std::vector<double> train_latent_lstm(const AppearanceCodebook& codebook, LatentLstm& lstm,
                                      const LstmTrainOptions& options = {});

/// code[0] = first; code[k + 1] = lstm(code[k]) with the state carried along.
std::vector<LatentCode> predict_code_sequence(const LatentCode& first, LatentLstm& lstm, int length);
std::vector<LatentCode> predict_code_sequence(const NormalizedImage& seed, AppearanceModel& model, LatentLstm& lstm,
                                              int length);

}  // namespace animscape
