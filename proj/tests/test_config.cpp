#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "animscape/config.hpp"
#include "animscape/errors.hpp"
#include "animscape/image_io.hpp"
#include "support.hpp"

using namespace animscape;
using namespace testing_support;
using nlohmann::json;

namespace {

ModelShape tiny_shape() {
  ModelShape s;
  s.predictor_base = 4;
  s.encoder_base = 4;
  s.residual_blocks = 1;
  s.predictor_size = 32;
  s.encoder_size = 32;
  return s;
}

void write_file(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(ANIMSCAPE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsMatchDocumentedValues) {
  auto c = config_from_json(json::object());
  EXPECT_EQ(c.shape.predictor_base, 128);
  EXPECT_EQ(c.shape.residual_blocks, 5);
  EXPECT_EQ(c.shape.predictor_size, 256);
  EXPECT_EQ(c.motion.beta, 64.0);
  EXPECT_EQ(c.motion.learning_rate, 1e-4);
  EXPECT_EQ(c.appearance.lambda_sp, 1e-2);
  EXPECT_EQ(c.appearance.batch_size, 8);
  EXPECT_EQ(c.motion_sampling.pair_threshold, 0.02);
  EXPECT_EQ(c.appearance_sampling.color_threshold, 0.3);
  EXPECT_EQ(c.synthesis.frame_count, 64);
  EXPECT_EQ(c.lstm.learning_rate, 1e-3);
  EXPECT_EQ(c.service.preview_frames, 16);
}

TEST(Config, JsonRoundTrip) {
  AppConfig c;
  c.shape = tiny_shape();
  c.motion.beta = 32;
  c.appearance.lambda_tv = 0.25;
  c.synthesis.crossfade_window = 5;
  c.synthesis.motion_code = LatentCode{};
  c.synthesis.motion_code->values[2] = 1.5f;
  c.features.kind = "compact";
  c.service.port = 9000;
  auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(back.synthesis.crossfade_window, 5);
  EXPECT_EQ(back.synthesis.motion_code->values[2], 1.5f);
  EXPECT_EQ(back.shape.predictor_size, 32);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_json(json{{"modle", json::object()}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"motion", {{"lamda_p", 1}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"motion", {{"beta", "big"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"motion", 3}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"features", {{"kind", "resnet"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"synthesis", {{"motion_code", {1, 2}}}}}), ConfigError);
}

TEST(Config, LoadFromFile) {
  auto dir = temp_dir("config");
  EXPECT_THROW(load_config(dir / "absent.json"), MissingArtifactError);
  write_file(dir / "bad.json", "{ nope");
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  write_file(dir / "ok.json", R"({"synthesis": {"frame_count": 12}})");
  EXPECT_EQ(load_config(dir / "ok.json").synthesis.frame_count, 12);
}

TEST(Config, FeatureExtractorFactory) {
  FeatureConfig f;
  EXPECT_THROW(make_feature_extractor(f), ConfigError);
  f.weights = "/nonexistent/vgg16.pt";
  EXPECT_THROW(make_feature_extractor(f), MissingArtifactError);
  f.kind = "compact";
  f.input_size = 0;
  auto fx = make_feature_extractor(f);
  EXPECT_EQ(fx->tap_names().size(), 4u);
}

TEST(Bundle, SaveAndLoad) {
  auto dir = temp_dir("bundle");
  torch::manual_seed(0);
  auto motion = make_motion_model(tiny_shape(), 16.0);
  auto appearance = make_appearance_model(tiny_shape());
  MotionCodebook mcb;
  mcb.entries["m"].values.fill(0.5f);
  AppearanceCodebook acb;
  acb.entries["a"] = {LatentCode{}, LatentCode{}};
  save_motion_bundle(dir, motion, mcb);
  EXPECT_THROW(load_bundle(dir), MissingArtifactError);
  auto half = load_bundle(dir, true, false);
  EXPECT_EQ(half.motion->beta, 16.0);
  EXPECT_EQ(half.motion->predictor_size, 32);
  EXPECT_EQ(half.motion_codebook, mcb);
  EXPECT_FALSE(half.appearance);

  save_appearance_bundle(dir, appearance, acb);
  LatentLstm lstm;
  save_lstm(dir, lstm);
  auto full = load_bundle(dir);
  EXPECT_EQ(full.appearance_codebook, acb);
  ASSERT_TRUE(full.lstm.has_value());
  auto img = torch::rand({1, 3, 32, 32});
  auto code = torch::zeros({1, 8});
  torch::NoGradGuard no_grad;
  motion.predictor->eval();
  full.motion->predictor->eval();
  EXPECT_TRUE(torch::equal(motion.predictor->forward(img, code), full.motion->predictor->forward(img, code)));
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = temp_dir("cli");
    json cfg = {{"model", {{"predictor_base", 4}, {"encoder_base", 4}, {"residual_blocks", 1},
                           {"predictor_size", 32}, {"encoder_size", 32}}},
                {"motion", {{"epochs", 1}, {"batch_size", 2}}},
                {"appearance", {{"epochs", 1}, {"batch_size", 2}, {"sp_grid", 8}}},
                {"sampling", {{"appearance_frames_per_real_minute", 0.1}}},
                {"synthesis", {{"frame_count", 6}}},
                {"control", {{"steps", 3}, {"random_restarts", 1}}},
                {"lstm", {{"epochs", 2}}},
                {"features", {{"kind", "compact"}, {"input_size", 0}, {"compact_width", 2}}}};
    write_file(dir / "config.json", cfg.dump());
    config = "-c " + (dir / "config.json").string();
  }
  std::filesystem::path dir;
  std::string config;
};

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("--help", dir / "log"), 0);
  EXPECT_EQ(run_cli("frobnicate", dir / "log"), 2);
  EXPECT_EQ(run_cli("synthesize --input x.png", dir / "log"), 2);  // missing required options
  write_file(dir / "bad.json", R"({"motion": {"beta": "high"}})");
  EXPECT_EQ(run_cli("-c " + (dir / "bad.json").string() + " evaluate --generated a --reference b", dir / "log"), 2);
  save_image(dir / "in.png", NormalizedImage(smooth_texture(32, 32, 1)));
  EXPECT_EQ(run_cli(config + " synthesize --bundle " + (dir / "nobundle").string() + " --input " +
                        (dir / "in.png").string() + " --out " + (dir / "out").string(),
                    dir / "log"),
            3);
}

TEST_F(Cli, EndToEndPipeline) {
  auto clip = translating_clip("walk", 32, 8, 2.0, 1, 8);
  save_frame_sequence(dir / "videos" / "walk", clip.frames);
  std::vector<NormalizedImage> day;
  for (int i = 0; i < 6; ++i) day.emplace_back(smooth_texture(32, 32, 1) * 0.3 - 0.6 + 0.2 * i);
  save_frame_sequence(dir / "videos" / "day", day);
  const auto store = (dir / "store").string(), bundle = (dir / "bundle").string();
  const auto log = dir / "log";

  ASSERT_EQ(run_cli(config + " ingest --store " + store + " " + (dir / "videos" / "walk").string(), log), 0)
      << read_file(log);
  ASSERT_EQ(run_cli(config + " ingest --kind appearance --store " + store + " " + (dir / "videos" / "day").string(),
                    log),
            0)
      << read_file(log);
  ASSERT_EQ(run_cli(config + " train-motion --store " + store + " --out " + bundle, log), 0) << read_file(log);
  ASSERT_EQ(run_cli(config + " train-appearance --lstm --store " + store + " --out " + bundle, log), 0)
      << read_file(log);
  EXPECT_EQ(load_motion_codebook(dir / "bundle" / "motion_codebook.json").entries.count("walk"), 1u);
  EXPECT_EQ(load_appearance_codebook(dir / "bundle" / "appearance_codebook.json").entries.at("day").size(), 6u);

  save_image(dir / "in.png", NormalizedImage(smooth_texture(24, 40, 3)));
  const auto input = " --input " + (dir / "in.png").string();
  ASSERT_EQ(run_cli(config + " synthesize --bundle " + bundle + input + " --out " + (dir / "frames").string() +
                        " --lstm-length 3",
                    log),
            0)
      << read_file(log);
  auto frames = read_video_frames(dir / "frames");
  ASSERT_EQ(frames.size(), 6u);
  EXPECT_EQ(frames[0].width(), 40);

  write_file(dir / "arrows.json", R"({"version": 1, "arrows": [{"x": 5, "y": 12, "dx": 20, "dy": 0}]})");
  ASSERT_EQ(run_cli(config + " control-motion --bundle " + bundle + input + " --annotation " +
                        (dir / "arrows.json").string() + " --out " + (dir / "code.json").string(),
                    log),
            0)
      << read_file(log);
  auto report = json::parse(read_file(dir / "code.json"));
  EXPECT_EQ(report.at("code").size(), 8u);

  save_image(dir / "patch.png", NormalizedImage(torch::full({3, 8, 8}, 0.4)));
  write_file(dir / "patches.json",
             R"({"version": 1, "patches": [{"x": 2, "y": 2, "width": 8, "height": 8, "image": "patch.png"}]})");
  ASSERT_EQ(run_cli(config + " control-appearance --bundle " + bundle + input + " --annotation " +
                        (dir / "patches.json").string() + " --out " + (dir / "look.json").string(),
                    log),
            0)
      << read_file(log);

  ASSERT_EQ(run_cli(config + " synthesize --bundle " + bundle + input + " --out " + (dir / "edited").string() +
                        " --motion-code " + (dir / "code.json").string() + " --appearance-code " +
                        (dir / "look.json").string() + " --no-loop --frames 4",
                    log),
            0)
      << read_file(log);
  ASSERT_EQ(read_video_frames(dir / "edited").size(), 4u);

  ASSERT_EQ(run_cli(config + " evaluate --perceptual --generated " + (dir / "frames").string() + " --reference " +
                        (dir / "frames").string() + " --report " + (dir / "eval.json").string(),
                    log),
            0)
      << read_file(log);
  auto eval = json::parse(read_file(dir / "eval.json"));
  EXPECT_EQ(eval.at("rmse").size(), 6u);
  EXPECT_EQ(eval.at("rmse")[0].get<double>(), 0.0);
}
