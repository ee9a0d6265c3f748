#include "animscape/config.hpp"

#include <fstream>
#include <set>

#include "animscape/checkpoint.hpp"
#include "animscape/errors.hpp"

namespace animscape {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads known fields out of one config section, rejecting unknown keys.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + name_ + "." + it.key() + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  Section sub(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, name_.empty() ? key : name_ + "." + key);
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

LatentCode code_from(const std::vector<float>& v, const std::string& what) {
  if (v.size() != static_cast<size_t>(kLatentDim)) throw ConfigError(what + " must have 8 values");
  LatentCode c;
  std::copy(v.begin(), v.end(), c.values.begin());
  return c;
}

std::vector<float> code_values(const LatentCode& c) { return {c.values.begin(), c.values.end()}; }

}  // namespace

AppConfig config_from_json(const json& j) {
  AppConfig c;
  Section root(j, "");
  root.get("threads", c.threads);
  {
    auto s = root.sub("model");
    s.get("predictor_base", c.shape.predictor_base);
    s.get("encoder_base", c.shape.encoder_base);
    s.get("residual_blocks", c.shape.residual_blocks);
    s.get("predictor_size", c.shape.predictor_size);
    s.get("encoder_size", c.shape.encoder_size);
    s.get("direct_appearance", c.shape.direct_appearance);
  }
  {
    auto s = root.sub("motion");
    auto& m = c.motion;
    s.get("lambda_p", m.lambda_p);
    s.get("lambda_tv", m.lambda_tv);
    s.get("sigma", m.sigma);
    s.get("beta", m.beta);
    s.get("allow_unrestricted", m.allow_unrestricted);
    s.get("learning_rate", m.learning_rate);
    s.get("adam_beta1", m.adam_beta1);
    s.get("adam_beta2", m.adam_beta2);
    s.get("batch_size", m.batch_size);
    s.get("epochs", m.epochs);
    s.get("seed", m.seed);
  }
  {
    auto s = root.sub("appearance");
    auto& a = c.appearance;
    s.get("lambda_s", a.lambda_s);
    s.get("lambda_sp", a.lambda_sp);
    s.get("lambda_c", a.lambda_c);
    s.get("lambda_tv", a.lambda_tv);
    s.get("sigma", a.sigma);
    s.get("sp_grid", a.sp_grid);
    s.get("learning_rate", a.learning_rate);
    s.get("adam_beta1", a.adam_beta1);
    s.get("adam_beta2", a.adam_beta2);
    s.get("batch_size", a.batch_size);
    s.get("epochs", a.epochs);
    s.get("seed", a.seed);
  }
  {
    auto s = root.sub("sampling");
    s.get("motion_frame_stride", c.motion_sampling.frame_stride);
    s.get("motion_pair_threshold", c.motion_sampling.pair_threshold);
    s.get("appearance_spacing_minutes", c.appearance_sampling.spacing_minutes);
    s.get("appearance_frames_per_real_minute", c.appearance_sampling.frames_per_real_minute);
    s.get("appearance_color_threshold", c.appearance_sampling.color_threshold);
  }
  {
    auto s = root.sub("synthesis");
    auto& y = c.synthesis;
    s.get("frame_count", y.frame_count);
    s.get("loop", y.loop_enabled);
    int window = -1;
    s.get("crossfade_window", window);
    if (window >= 0) y.crossfade_window = window;
    s.get("motion_speed_scale", y.motion_speed_scale);
    s.get("loop_repeats", y.loop_repeats);
    std::vector<float> code;
    s.get("motion_code", code);
    if (!code.empty()) y.motion_code = code_from(code, "synthesis.motion_code");
    s.get("motion_clip_id", y.motion_clip_id);
    std::vector<std::vector<float>> codes;
    s.get("appearance_codes", codes);
    for (const auto& v : codes) y.appearance_codes.push_back(code_from(v, "synthesis.appearance_codes entry"));
    s.get("appearance_clip_id", y.appearance_clip_id);
    s.get("output_width", y.output_width);
    s.get("output_height", y.output_height);
    s.get("seed", y.seed);
  }
  {
    auto s = root.sub("control");
    s.get("steps", c.control.steps);
    s.get("learning_rate", c.control.learning_rate);
    s.get("random_restarts", c.control.random_restarts);
    s.get("init_jitter", c.control.init_jitter);
    s.get("seed", c.control.seed);
    s.get("time_budget_seconds", c.control.time_budget_seconds);
  }
  {
    auto s = root.sub("lstm");
    s.get("epochs", c.lstm.epochs);
    s.get("learning_rate", c.lstm.learning_rate);
    s.get("seed", c.lstm.seed);
  }
  {
    auto s = root.sub("features");
    s.get("kind", c.features.kind);
    s.get("weights", c.features.weights);
    s.get("input_size", c.features.input_size);
    s.get("seed", c.features.seed);
    s.get("compact_width", c.features.compact_width);
  }
  {
    auto s = root.sub("service");
    auto& v = c.service;
    s.get("host", v.host);
    s.get("port", v.port);
    s.get("max_upload_bytes", v.max_upload_bytes);
    s.get("preview_width", v.preview_width);
    s.get("preview_height", v.preview_height);
    s.get("preview_frames", v.preview_frames);
    s.get("optimization_steps", v.optimization_steps);
    s.get("optimization_timeout_seconds", v.optimization_timeout_seconds);
    s.get("seed", v.seed);
  }
  try {
    c.motion.validate();
    c.appearance.validate();
    c.synthesis.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  if (c.features.kind != "vgg16" && c.features.kind != "compact") {
    throw ConfigError("features.kind must be 'vgg16' or 'compact'");
  }
  if (c.shape.predictor_size % 8 != 0 || c.shape.predictor_size < 8) {
    throw ConfigError("model.predictor_size must be a positive multiple of 8");
  }
  if (c.shape.encoder_size % 16 != 0 || c.shape.encoder_size < 16) {
    throw ConfigError("model.encoder_size must be a positive multiple of 16");
  }
  return c;
}

json config_to_json(const AppConfig& c) {
  json synthesis = {{"frame_count", c.synthesis.frame_count},
                    {"loop", c.synthesis.loop_enabled},
                    {"crossfade_window", c.synthesis.crossfade_window.value_or(-1)},
                    {"motion_speed_scale", c.synthesis.motion_speed_scale},
                    {"loop_repeats", c.synthesis.loop_repeats},
                    {"motion_clip_id", c.synthesis.motion_clip_id},
                    {"appearance_clip_id", c.synthesis.appearance_clip_id},
                    {"output_width", c.synthesis.output_width},
                    {"output_height", c.synthesis.output_height},
                    {"seed", c.synthesis.seed}};
  if (c.synthesis.motion_code) synthesis["motion_code"] = code_values(*c.synthesis.motion_code);
  if (!c.synthesis.appearance_codes.empty()) {
    json codes = json::array();
    for (const auto& code : c.synthesis.appearance_codes) codes.push_back(code_values(code));
    synthesis["appearance_codes"] = codes;
  }
  return {
      {"threads", c.threads},
      {"model",
       {{"predictor_base", c.shape.predictor_base},
        {"encoder_base", c.shape.encoder_base},
        {"residual_blocks", c.shape.residual_blocks},
        {"predictor_size", c.shape.predictor_size},
        {"encoder_size", c.shape.encoder_size},
        {"direct_appearance", c.shape.direct_appearance}}},
      {"motion",
       {{"lambda_p", c.motion.lambda_p},
        {"lambda_tv", c.motion.lambda_tv},
        {"sigma", c.motion.sigma},
        {"beta", c.motion.beta},
        {"allow_unrestricted", c.motion.allow_unrestricted},
        {"learning_rate", c.motion.learning_rate},
        {"adam_beta1", c.motion.adam_beta1},
        {"adam_beta2", c.motion.adam_beta2},
        {"batch_size", c.motion.batch_size},
        {"epochs", c.motion.epochs},
        {"seed", c.motion.seed}}},
      {"appearance",
       {{"lambda_s", c.appearance.lambda_s},
        {"lambda_sp", c.appearance.lambda_sp},
        {"lambda_c", c.appearance.lambda_c},
        {"lambda_tv", c.appearance.lambda_tv},
        {"sigma", c.appearance.sigma},
        {"sp_grid", c.appearance.sp_grid},
        {"learning_rate", c.appearance.learning_rate},
        {"adam_beta1", c.appearance.adam_beta1},
        {"adam_beta2", c.appearance.adam_beta2},
        {"batch_size", c.appearance.batch_size},
        {"epochs", c.appearance.epochs},
        {"seed", c.appearance.seed}}},
      {"sampling",
       {{"motion_frame_stride", c.motion_sampling.frame_stride},
        {"motion_pair_threshold", c.motion_sampling.pair_threshold},
        {"appearance_spacing_minutes", c.appearance_sampling.spacing_minutes},
        {"appearance_frames_per_real_minute", c.appearance_sampling.frames_per_real_minute},
        {"appearance_color_threshold", c.appearance_sampling.color_threshold}}},
      {"synthesis", synthesis},
      {"control",
       {{"steps", c.control.steps},
        {"learning_rate", c.control.learning_rate},
        {"random_restarts", c.control.random_restarts},
        {"init_jitter", c.control.init_jitter},
        {"seed", c.control.seed},
        {"time_budget_seconds", c.control.time_budget_seconds}}},
      {"lstm", {{"epochs", c.lstm.epochs}, {"learning_rate", c.lstm.learning_rate}, {"seed", c.lstm.seed}}},
      {"features",
       {{"kind", c.features.kind},
        {"weights", c.features.weights},
        {"input_size", c.features.input_size},
        {"seed", c.features.seed},
        {"compact_width", c.features.compact_width}}},
      {"service",
       {{"host", c.service.host},
        {"port", c.service.port},
        {"max_upload_bytes", c.service.max_upload_bytes},
        {"preview_width", c.service.preview_width},
        {"preview_height", c.service.preview_height},
        {"preview_frames", c.service.preview_frames},
        {"optimization_steps", c.service.optimization_steps},
        {"optimization_timeout_seconds", c.service.optimization_timeout_seconds},
        {"seed", c.service.seed}}},
  };
}

AppConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifactError("config file not found: " + path.string());
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

MotionModel make_motion_model(const ModelShape& s, double beta) {
  MotionModel m({2, s.predictor_base, s.residual_blocks}, {2, s.encoder_base, s.encoder_size}, beta,
                s.predictor_size);
  init_weights(*m.predictor);
  init_weights(*m.encoder);
  return m;
}

AppearanceModel make_appearance_model(const ModelShape& s) {
  AppearanceModel m({s.direct_appearance ? 3 : 6, s.predictor_base, s.residual_blocks}, {3, s.encoder_base, s.encoder_size},
                    s.predictor_size);
  init_weights(*m.predictor);
  init_weights(*m.encoder);
  return m;
}

std::shared_ptr<FeatureExtractor> make_feature_extractor(const FeatureConfig& config) {
  if (config.kind == "compact") {
    return std::make_shared<CompactExtractor>(config.input_size, config.seed, config.compact_width);
  }
  if (config.kind != "vgg16") throw ConfigError("unknown feature extractor '" + config.kind + "'");
  if (config.weights.empty()) {
    throw ConfigError("features.weights must name a VGG16 state dict (or set features.kind to 'compact')");
  }
  auto vgg = std::make_shared<Vgg16Extractor>(config.input_size);
  vgg->load_weights(config.weights);
  return vgg;
}

namespace {

void write_meta(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_meta(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifactError("bundle file not found: " + path.string());
  std::ifstream in(path);
  try {
    auto j = json::parse(in);
    if (j.at("version").get<int>() != 1) throw MigrationError(path.string() + ": unsupported bundle version");
    return j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace

void save_motion_bundle(const fs::path& dir, MotionModel& model, const MotionCodebook& codebook) {
  write_meta(dir / "motion.json", {{"version", 1},
                                   {"beta", model.beta},
                                   {"allow_unrestricted", model.allow_unrestricted},
                                   {"predictor_size", model.predictor_size}});
  save_checkpoint(dir / "motion_predictor.pt", model.predictor);
  save_checkpoint(dir / "motion_encoder.pt", model.encoder);
  save_codebook(dir / "motion_codebook.json", codebook);
}

void save_appearance_bundle(const fs::path& dir, AppearanceModel& model, const AppearanceCodebook& codebook) {
  write_meta(dir / "appearance.json", {{"version", 1}, {"predictor_size", model.predictor_size}});
  save_checkpoint(dir / "appearance_predictor.pt", model.predictor);
  save_checkpoint(dir / "appearance_encoder.pt", model.encoder);
  save_codebook(dir / "appearance_codebook.json", codebook);
}

void save_lstm(const fs::path& dir, LatentLstm& lstm) { save_checkpoint(dir / "lstm.pt", lstm); }

ModelBundle load_bundle(const fs::path& dir, bool need_motion, bool need_appearance) {
  if (!fs::is_directory(dir)) throw MissingArtifactError("model bundle directory not found: " + dir.string());
  ModelBundle b;
  if (need_motion) {
    auto meta = read_meta(dir / "motion.json");
    auto predictor = load_predictor(dir / "motion_predictor.pt");
    auto encoder = load_encoder(dir / "motion_encoder.pt");
    try {
      b.motion = std::make_unique<MotionModel>(predictor->config(), encoder->config(), meta.at("beta").get<double>(),
                                               meta.at("predictor_size").get<int64_t>());
      b.motion->allow_unrestricted = meta.value("allow_unrestricted", false);
    } catch (const json::exception& e) {
      throw ParseError("motion.json: " + std::string(e.what()));
    }
    b.motion->predictor = predictor;
    b.motion->encoder = encoder;
    b.motion_codebook = load_motion_codebook(dir / "motion_codebook.json");
  }
  if (need_appearance) {
    auto meta = read_meta(dir / "appearance.json");
    auto predictor = load_predictor(dir / "appearance_predictor.pt");
    auto encoder = load_encoder(dir / "appearance_encoder.pt");
    try {
      b.appearance = std::make_unique<AppearanceModel>(predictor->config(), encoder->config(),
                                                       meta.at("predictor_size").get<int64_t>());
    } catch (const json::exception& e) {
      throw ParseError("appearance.json: " + std::string(e.what()));
    }
    b.appearance->predictor = predictor;
    b.appearance->encoder = encoder;
    b.appearance_codebook = load_appearance_codebook(dir / "appearance_codebook.json");
  }
  if (fs::exists(dir / "lstm.pt")) b.lstm = load_latent_lstm(dir / "lstm.pt");
  return b;
}

}  // namespace animscape
