// Command-line front end: dataset ingestion, training, synthesis, latent-code
// control, evaluation and the editing service.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "animscape/config.hpp"
#include "animscape/control.hpp"
#include "animscape/dataset.hpp"
#include "animscape/errors.hpp"
#include "animscape/image_io.hpp"
#include "animscape/service.hpp"
#include "animscape/synthesis.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace animscape;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;

AppConfig read_config(const std::string& path) {
  AppConfig c = path.empty() ? AppConfig{} : load_config(path);
  if (c.threads > 0) torch::set_num_threads(c.threads);
  return c;
}

std::string read_text(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifactError("file not found: " + path.string());
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text << '\n';
}

LatentCode read_code_file(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
    auto v = j.at("code").get<std::vector<float>>();
    if (v.size() != static_cast<size_t>(kLatentDim)) throw ConfigError(path.string() + ": code must have 8 values");
    LatentCode c;
    std::copy(v.begin(), v.end(), c.values.begin());
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json control_report(const ControlResult& r) {
  return {{"code", std::vector<float>(r.code.values.begin(), r.code.values.end())},
          {"objective", r.objective},
          {"best_step", r.best_step},
          {"trace", r.trace},
          {"timed_out", r.timed_out}};
}

EditService* g_service = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-image time-lapse animation"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("-c,--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Sample videos into a clip store");
  std::string kind = "motion", store_dir;
  std::vector<std::string> videos;
  ingest->add_option("--kind", kind, "motion or appearance")->check(CLI::IsMember({"motion", "appearance"}));
  ingest->add_option("--store", store_dir, "Clip store directory")->required();
  ingest->add_option("videos", videos, "Video files or frame directories")->required();

  // train-motion / train-appearance
  std::string bundle_dir;
  auto* train_motion_cmd = app.add_subcommand("train-motion", "Train the motion networks and codebook");
  train_motion_cmd->add_option("--store", store_dir, "Clip store directory")->required();
  train_motion_cmd->add_option("--out", bundle_dir, "Model bundle directory")->required();
  int epochs_override = -1;
  train_motion_cmd->add_option("--epochs", epochs_override, "Override the configured epoch count");

  auto* train_app_cmd = app.add_subcommand("train-appearance", "Train the appearance networks and codebook");
  train_app_cmd->add_option("--store", store_dir, "Clip store directory")->required();
  train_app_cmd->add_option("--out", bundle_dir, "Model bundle directory")->required();
  train_app_cmd->add_option("--epochs", epochs_override, "Override the configured epoch count");
  bool with_lstm = false;
  train_app_cmd->add_flag("--lstm", with_lstm, "Also train the latent-sequence LSTM");

  // synthesize
  auto* synth = app.add_subcommand("synthesize", "Animate a single image");
  std::string input_path, out_dir, video_path, motion_code_file, appearance_code_file;
  double fps = 30.0;
  int frames = -1, window = -1, repeats = -1, lstm_length = -1;
  double speed = -1;
  bool no_loop = false;
  std::string motion_clip, appearance_clip;
  int64_t seed = -1, out_w = 0, out_h = 0;
  synth->add_option("--bundle", bundle_dir, "Model bundle directory")->required();
  synth->add_option("--input", input_path, "Input image")->required();
  synth->add_option("--out", out_dir, "Output directory for PNG frames")->required();
  synth->add_option("--video", video_path, "Also encode a video file");
  synth->add_option("--fps", fps, "Video frame rate");
  synth->add_option("--frames", frames, "Output frame count");
  synth->add_flag("--no-loop", no_loop, "Disable looping");
  synth->add_option("--window", window, "Cross-fade window in frames");
  synth->add_option("--speed", speed, "Motion speed scale");
  synth->add_option("--repeats", repeats, "Motion loops per appearance cycle");
  synth->add_option("--motion-clip", motion_clip, "Motion codebook entry");
  synth->add_option("--appearance-clip", appearance_clip, "Appearance codebook entry");
  synth->add_option("--motion-code", motion_code_file, "Code file written by control-motion");
  synth->add_option("--appearance-code", appearance_code_file, "Code file written by control-appearance");
  synth->add_option("--lstm-length", lstm_length, "Predict this many appearance codes with the bundle's LSTM");
  synth->add_option("--seed", seed, "Seed for codebook selection");
  synth->add_option("--width", out_w, "Output width");
  synth->add_option("--height", out_h, "Output height");

  // control
  std::string annotation_path, code_out;
  int steps = -1;
  auto* ctl_motion = app.add_subcommand("control-motion", "Search a motion code matching arrow annotations");
  auto* ctl_app = app.add_subcommand("control-appearance", "Search an appearance code matching patch annotations");
  for (auto* cmd : {ctl_motion, ctl_app}) {
    cmd->add_option("--bundle", bundle_dir, "Model bundle directory")->required();
    cmd->add_option("--input", input_path, "Input image")->required();
    cmd->add_option("--annotation", annotation_path, "Annotation document")->required();
    cmd->add_option("--out", code_out, "Where to write the code and objective trace")->required();
    cmd->add_option("--steps", steps, "Optimization steps");
  }

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Per-frame RMSE between two frame directories");
  std::string generated_dir, reference_dir, report_path;
  eval->add_option("--generated", generated_dir, "Generated frames")->required();
  eval->add_option("--reference", reference_dir, "Reference frames")->required();
  eval->add_option("--report", report_path, "JSON report path");
  bool perceptual = false;
  eval->add_flag("--perceptual", perceptual, "Also score with the configured feature extractor");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the editing service");
  std::string host;
  int port = -1;
  serve->add_option("--bundle", bundle_dir, "Model bundle directory")->required();
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    AppConfig cfg = read_config(config_path);

    if (*ingest) {
      ClipStore store(store_dir);
      std::vector<fs::path> paths(videos.begin(), videos.end());
      auto report = kind == "motion" ? ingest_motion_clips(paths, store, cfg.motion_sampling)
                                     : ingest_appearance_clips(paths, store, cfg.appearance_sampling);
      json entries = json::array();
      for (const auto& e : report.entries) {
        entries.push_back({{"source", e.source},
                           {"clips", e.clip_ids},
                           {"input_frames", e.input_frames},
                           {"kept_frames", e.kept_frames},
                           {"skipped", e.skipped_reason}});
      }
      std::cout << json{{"kind", kind}, {"clips", report.clip_count()}, {"entries", entries}}.dump(2) << '\n';
      return 0;
    }

    if (*train_motion_cmd) {
      ClipStore store(store_dir);
      auto clips = store.load_clips(ClipKind::Motion);
      if (epochs_override >= 0) cfg.motion.epochs = epochs_override;
      auto model = make_motion_model(cfg.shape, cfg.motion.beta);
      auto result = train_motion(clips, model, cfg.motion, [](const MotionEpochRecord& r) {
        std::cerr << "epoch " << r.epoch << " photometric " << r.photometric << " tv " << r.tv << " total " << r.total
                  << " (" << r.wall_seconds << " s)\n";
      });
      save_motion_bundle(bundle_dir, model, result.codebook);
      std::cout << "motion codebook entries: " << result.codebook.entries.size() << '\n';
      return 0;
    }

    if (*train_app_cmd) {
      ClipStore store(store_dir);
      auto clips = store.load_clips(ClipKind::Appearance);
      if (epochs_override >= 0) cfg.appearance.epochs = epochs_override;
      auto fx = make_feature_extractor(cfg.features);
      auto model = make_appearance_model(cfg.shape);
      auto result = train_appearance(clips, model, *fx, cfg.appearance, [](const AppearanceEpochRecord& r) {
        std::cerr << "epoch " << r.epoch << " style " << r.style << " pyramid " << r.pyramid << " content "
                  << r.content << " tv " << r.tv << " total " << r.total << " (" << r.wall_seconds << " s)\n";
      });
      save_appearance_bundle(bundle_dir, model, result.codebook);
      if (with_lstm) {
        LatentLstm lstm;
        train_latent_lstm(result.codebook, lstm, cfg.lstm);
        save_lstm(bundle_dir, lstm);
      }
      std::cout << "appearance codebook entries: " << result.codebook.entries.size() << '\n';
      return 0;
    }

    if (*synth) {
      auto bundle = load_bundle(bundle_dir);
      auto input = load_image(input_path);
      SynthesisConfig s = cfg.synthesis;
      if (frames > 0) s.frame_count = frames;
      if (no_loop) s.loop_enabled = false;
      if (window >= 0) s.crossfade_window = window;
      if (speed >= 0) s.motion_speed_scale = speed;
      if (repeats > 0) s.loop_repeats = repeats;
      if (!motion_clip.empty()) s.motion_clip_id = motion_clip;
      if (!appearance_clip.empty()) s.appearance_clip_id = appearance_clip;
      if (seed >= 0) s.seed = static_cast<uint64_t>(seed);
      if (out_w > 0 || out_h > 0) {
        s.output_width = out_w;
        s.output_height = out_h;
      }
      if (!motion_code_file.empty()) s.motion_code = read_code_file(motion_code_file);
      if (!appearance_code_file.empty()) {
        s.appearance_codes = {encode_appearance(*bundle.appearance, input), read_code_file(appearance_code_file)};
      } else if (lstm_length > 0) {
        if (!bundle.lstm) throw MissingArtifactError("bundle has no lstm.pt");
        s.appearance_codes = predict_code_sequence(input, *bundle.appearance, *bundle.lstm, lstm_length);
      }
      try {
        s.validate();
      } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
      }
      auto result = synthesize(input, s, *bundle.motion, *bundle.appearance, &bundle.motion_codebook,
                               &bundle.appearance_codebook);
      save_frame_sequence(out_dir, result.frames);
      if (!video_path.empty()) write_video(video_path, result.frames, fps);
      std::cout << "wrote " << result.frames.size() << " frames to " << out_dir << '\n';
      return 0;
    }

    if (*ctl_motion || *ctl_app) {
      const bool motion = ctl_motion->parsed();
      auto bundle = load_bundle(bundle_dir, motion, !motion);
      auto input = load_image(input_path);
      auto doc = parse_annotation(read_text(annotation_path));
      ControlOptions options = cfg.control;
      if (steps >= 0) options.steps = steps;
      ControlResult result;
      if (motion) {
        std::vector<LatentCode> codes;
        for (const auto& [id, c] : bundle.motion_codebook.entries) codes.push_back(c);
        result = optimize_motion_code(input, {doc.arrows, 0.5}, *bundle.motion, initial_codes(codes, options), options);
      } else {
        const fs::path base = fs::path(annotation_path).parent_path();
        auto ann = resolve_patches(doc.patches, [&](const std::string& name) { return load_image(base / name); });
        std::vector<LatentCode> codes;
        for (const auto& [id, seq] : bundle.appearance_codebook.entries) codes.insert(codes.end(), seq.begin(), seq.end());
        result = optimize_appearance_code(input, ann, *bundle.appearance, initial_codes(codes, options), options);
      }
      write_text(code_out, control_report(result).dump(2));
      std::cout << "objective " << result.trace.front() << " -> " << result.objective << " (step " << result.best_step
                << ")\n";
      return 0;
    }

    if (*eval) {
      auto generated = read_video_frames(generated_dir);
      auto reference = read_video_frames(reference_dir);
      std::shared_ptr<FeatureExtractor> fx;
      PerceptualScorer scorer;
      if (perceptual) {
        fx = make_feature_extractor(cfg.features);
        scorer = feature_distance_scorer(*fx);
      }
      auto result = evaluate_sequence(generated, reference, scorer);
      json report{{"rmse", result.rmse}, {"perceptual", result.perceptual}};
      if (!report_path.empty()) write_text(report_path, report.dump(2));
      std::cout << report.dump(2) << '\n';
      return 0;
    }

    if (*serve) {
      auto bundle = load_bundle(bundle_dir);
      EditService service(bundle, cfg.service, cfg.synthesis, cfg.control);
      const std::string h = host.empty() ? cfg.service.host : host;
      const int p = port >= 0 ? port : cfg.service.port;
      const int bound = service.bind(h, p);
      if (bound < 0) throw std::runtime_error("cannot bind " + h + ":" + std::to_string(p));
      g_service = &service;
      std::signal(SIGINT, [](int) {
        if (g_service) g_service->stop();
      });
      std::cout << "listening on " << h << ":" << bound << std::endl;
      service.listen();
      g_service = nullptr;
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return kExitMissing;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
