#include "animscape/synthesis.hpp"

#include <cmath>
#include <random>

#include "animscape/errors.hpp"

namespace animscape {

void SynthesisConfig::validate() const {
  if (frame_count < 1) throw ArgumentError("synthesis: frame_count must be positive");
  if (loop_repeats < 1) throw ArgumentError("synthesis: loop_repeats must be at least 1");
  if (!(motion_speed_scale >= 0)) throw ArgumentError("synthesis: motion speed must be non-negative");
  if ((output_width > 0) != (output_height > 0) || output_width < 0 || output_height < 0) {
    throw ArgumentError("synthesis: output width and height must both be set or both be 0");
  }
  if (crossfade_window && (*crossfade_window < 0 || *crossfade_window >= frame_count)) {
    throw ArgumentError("synthesis: crossfade window must be in [0, frame_count)");
  }
  if (loop_enabled && frame_count % loop_repeats != 0) {
    throw ArgumentError("synthesis: frame_count must be a multiple of loop_repeats");
  }
}

int SynthesisConfig::loop_length() const { return loop_enabled ? frame_count / loop_repeats : frame_count; }

int SynthesisConfig::window() const {
  if (!loop_enabled) return 0;
  if (crossfade_window) return *crossfade_window;
  // A quarter of the rollout, which is loop length + window frames long.
  return std::max(1, static_cast<int>(std::lround(loop_length() / 3.0)));
}

std::vector<NormalizedImage> generate_loop(const std::vector<NormalizedImage>& frames, int window) {
  const int len = static_cast<int>(frames.size());
  if (window < 0 || window >= len) throw ArgumentError("generate_loop: window must be in [0, frame count)");
  std::vector<NormalizedImage> out(frames.begin(), frames.end() - window);
  for (int i = 0; i < window; ++i) {
    const double a = static_cast<double>(i + 1) / (window + 1);
    out[i] = NormalizedImage((1.0 - a) * frames[len - window + i].tensor() + a * frames[i].tensor());
  }
  return out;
}

std::vector<LatentCode> interpolate_latent_sequence(const std::vector<LatentCode>& keys, int total_frames,
                                                    bool cyclic) {
  if (keys.empty()) throw ArgumentError("interpolate_latent_sequence: no keys");
  if (total_frames < static_cast<int>(keys.size())) {
    throw ArgumentError("interpolate_latent_sequence: fewer frames than keys");
  }
  const int k = static_cast<int>(keys.size());
  std::vector<LatentCode> out;
  out.reserve(total_frames);
  auto lerp = [](const LatentCode& a, const LatentCode& b, double f) {
    LatentCode c;
    for (int d = 0; d < kLatentDim; ++d) {
      c.values[d] = static_cast<float>(a.values[d] + f * (static_cast<double>(b.values[d]) - a.values[d]));
    }
    return c;
  };
  for (int t = 0; t < total_frames; ++t) {
    if (k == 1) {
      out.push_back(keys[0]);
      continue;
    }
    double pos = cyclic ? static_cast<double>(t) * k / total_frames
                        : (total_frames == 1 ? 0.0 : static_cast<double>(t) * (k - 1) / (total_frames - 1));
    int seg = std::min(static_cast<int>(std::floor(pos)), cyclic ? k - 1 : k - 2);
    const double frac = pos - seg;
    const LatentCode& a = keys[seg];
    const LatentCode& b = keys[cyclic ? (seg + 1) % k : seg + 1];
    out.push_back(frac == 0.0 ? a : lerp(a, b, frac));
  }
  return out;
}

LatentCode resolve_motion_code(const SynthesisConfig& cfg, const MotionCodebook* codebook) {
  if (cfg.motion_code) return *cfg.motion_code;
  if (!codebook || codebook->entries.empty()) {
    throw ConfigError("no motion code given and no motion codebook available");
  }
  if (!cfg.motion_clip_id.empty()) {
    auto it = codebook->entries.find(cfg.motion_clip_id);
    if (it == codebook->entries.end()) throw ConfigError("motion codebook has no clip '" + cfg.motion_clip_id + "'");
    return it->second;
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<size_t> pick(0, codebook->entries.size() - 1);
  return std::next(codebook->entries.begin(), static_cast<long>(pick(rng)))->second;
}

std::vector<LatentCode> resolve_appearance_keys(const SynthesisConfig& cfg, const AppearanceCodebook* codebook) {
  if (!cfg.appearance_codes.empty()) return cfg.appearance_codes;
  if (!codebook || codebook->entries.empty()) {
    throw ConfigError("no appearance codes given and no appearance codebook available");
  }
  const std::vector<LatentCode>* seq = nullptr;
  if (!cfg.appearance_clip_id.empty()) {
    auto it = codebook->entries.find(cfg.appearance_clip_id);
    if (it == codebook->entries.end()) {
      throw ConfigError("appearance codebook has no clip '" + cfg.appearance_clip_id + "'");
    }
    seq = &it->second;
  } else {
    std::mt19937_64 rng(cfg.seed + 1);
    std::uniform_int_distribution<size_t> pick(0, codebook->entries.size() - 1);
    seq = &std::next(codebook->entries.begin(), static_cast<long>(pick(rng)))->second;
  }
  if (seq->empty()) throw ConfigError("selected appearance code sequence is empty");
  return *seq;
}

namespace {

// Evenly subsamples keys when there are more keys than frames.
std::vector<LatentCode> fit_keys(const std::vector<LatentCode>& keys, int frames) {
  if (static_cast<int>(keys.size()) <= frames) return keys;
  std::vector<LatentCode> out;
  for (int i = 0; i < frames; ++i) out.push_back(keys[static_cast<size_t>(i) * keys.size() / frames]);
  return out;
}

}  // namespace

SynthesisResult synthesize(const NormalizedImage& input, const SynthesisConfig& cfg, const FlowStepper& motion,
                           const AppearanceStepper& appearance, const LatentCode& motion_code,
                           const std::vector<LatentCode>& appearance_keys) {
  cfg.validate();
  if (appearance_keys.empty()) throw ConfigError("synthesis: no appearance codes");
  SynthesisResult result;
  result.motion_code = motion_code;

  const int loop_len = cfg.loop_length();
  const int window = cfg.window();
  const int rollout = loop_len + window;
  std::vector<NormalizedImage> rolled{input};
  if (rollout > 1) {
    auto seq = predict_motion_sequence(input, motion, rollout - 1, cfg.motion_speed_scale);
    rolled.insert(rolled.end(), seq.frames.begin(), seq.frames.end());
  }
  result.motion_frames = cfg.loop_enabled ? generate_loop(rolled, window) : rolled;

  result.appearance_codes =
      interpolate_latent_sequence(fit_keys(appearance_keys, cfg.frame_count), cfg.frame_count, cfg.loop_enabled);

  result.frames.reserve(cfg.frame_count);
  for (int t = 0; t < cfg.frame_count; ++t) {
    const auto& frame = result.motion_frames[static_cast<size_t>(t % loop_len)];
    auto out = appearance(frame, result.appearance_codes[t]);
    if (cfg.output_width > 0 && (out.width() != cfg.output_width || out.height() != cfg.output_height)) {
      out = resize(out, cfg.output_height, cfg.output_width);
    }
    result.frames.push_back(std::move(out));
  }
  return result;
}

SynthesisResult synthesize(const NormalizedImage& input, const SynthesisConfig& cfg, MotionModel& motion,
                           AppearanceModel& appearance, const MotionCodebook* motion_codebook,
                           const AppearanceCodebook* appearance_codebook) {
  cfg.validate();
  const LatentCode motion_code = resolve_motion_code(cfg, motion_codebook);
  const auto keys = resolve_appearance_keys(cfg, appearance_codebook);
  motion.predictor->eval();
  FlowStepper step = [&](const NormalizedImage& current) { return infer_flow(motion, current, motion_code); };
  AppearanceStepper recolor = [&](const NormalizedImage& frame, const LatentCode& code) {
    return predict_appearance_frame(appearance, frame, code).image;
  };
  return synthesize(input, cfg, step, recolor, motion_code, keys);
}

SequenceEvaluation evaluate_sequence(const std::vector<NormalizedImage>& generated,
                                     const std::vector<NormalizedImage>& reference, const PerceptualScorer& scorer) {
  if (generated.size() != reference.size()) throw ArgumentError("evaluate_sequence: sequence lengths differ");
  SequenceEvaluation eval;
  for (size_t i = 0; i < generated.size(); ++i) {
    const auto& g = generated[i].tensor();
    const auto& r = reference[i].tensor();
    if (g.sizes() != r.sizes()) throw ArgumentError("evaluate_sequence: frame shapes differ");
    eval.rmse.push_back(std::sqrt((g.to(torch::kDouble) - r.to(torch::kDouble)).pow(2).mean().item<double>()));
    if (scorer) eval.perceptual.push_back(scorer(generated[i], reference[i]));
  }
  return eval;
}

PerceptualScorer feature_distance_scorer(FeatureExtractor& extractor) {
  return [&extractor](const NormalizedImage& g, const NormalizedImage& r) {
    torch::NoGradGuard no_grad;
    auto taps = extractor.tap_names();
    auto fg = extractor.extract(g.batched().to(torch::kFloat32), taps);
    auto fr = extractor.extract(r.batched().to(torch::kFloat32), taps);
    double total = 0.0;
    for (const auto& name : taps) {
      auto a = fg.at(name) / (fg.at(name).norm(2, {1}, true) + 1e-10);
      auto b = fr.at(name) / (fr.at(name).norm(2, {1}, true) + 1e-10);
      total += (a - b).pow(2).sum(1).mean().item<double>();
    }
    return total / static_cast<double>(taps.size());
  };
}

}  // namespace animscape
