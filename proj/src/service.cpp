#include "animscape/service.hpp"

#include <httplib.h>

#include <random>
#include <sstream>

#include "animscape/errors.hpp"
#include "animscape/image_io.hpp"

namespace animscape {

using nlohmann::json;

std::string base64_encode(const std::string& bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const uint32_t v = (static_cast<uint8_t>(bytes[i]) << 16) | (static_cast<uint8_t>(bytes[i + 1]) << 8) |
                       static_cast<uint8_t>(bytes[i + 2]);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    uint32_t v = static_cast<uint8_t>(bytes[i]) << 16;
    if (i + 1 < bytes.size()) v |= static_cast<uint8_t>(bytes[i + 1]) << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

struct EditService::Session {
  std::mutex mutex;
  std::string id;
  NormalizedImage image;
  LatentCode motion_code;
  std::vector<LatentCode> appearance_keys;
  std::vector<double> motion_trace;
  std::vector<double> appearance_trace;
  uint64_t version = 0;
  std::map<std::pair<int64_t, int64_t>, std::vector<std::string>> preview_cache;  // (w, h) -> PNG frames
};

struct EditService::Http {
  httplib::Server server;
};

namespace {

ServiceResponse error(int status, const std::string& message) {
  return {status, "application/json", json{{"error", message}}.dump(), {}};
}

ServiceResponse ok(const json& j, int status = 200) { return {status, "application/json", j.dump(), {}}; }

json code_json(const LatentCode& c) { return std::vector<float>(c.values.begin(), c.values.end()); }

json control_json(const ControlResult& r) {
  return {{"code", code_json(r.code)},
          {"objective", r.objective},
          {"best_step", r.best_step},
          {"trace", r.trace},
          {"timed_out", r.timed_out}};
}

std::vector<LatentCode> codebook_codes(const MotionCodebook& cb) {
  std::vector<LatentCode> out;
  for (const auto& [id, c] : cb.entries) out.push_back(c);
  return out;
}

std::vector<LatentCode> codebook_codes(const AppearanceCodebook& cb) {
  std::vector<LatentCode> out;
  for (const auto& [id, seq] : cb.entries) out.insert(out.end(), seq.begin(), seq.end());
  return out;
}

}  // namespace

EditService::EditService(ModelBundle& bundle, ServiceConfig config, SynthesisConfig synthesis,
                         ControlOptions control)
    : bundle_(bundle), config_(std::move(config)), synthesis_(std::move(synthesis)), control_(control) {
  if (!bundle_.motion || !bundle_.appearance) throw ConfigError("the service needs motion and appearance models");
  if (config_.preview_frames < 1) throw ConfigError("service.preview_frames must be positive");
  bundle_.motion->predictor->eval();
  bundle_.motion->encoder->eval();
  bundle_.appearance->predictor->eval();
  bundle_.appearance->encoder->eval();
}

EditService::~EditService() { stop(); }

std::shared_ptr<EditService::Session> EditService::find(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

ServiceResponse EditService::create_session(const std::string& image_bytes) {
  if (image_bytes.empty()) return error(400, "empty image upload");
  if (image_bytes.size() > config_.max_upload_bytes) return error(413, "image upload exceeds the size limit");
  NormalizedImage image;
  try {
    image = decode_image(image_bytes);
  } catch (const ParseError& e) {
    return error(400, e.what());
  }
  auto session = std::make_shared<Session>();
  session->image = image;

  std::lock_guard lock(sessions_mutex_);
  const uint64_t n = next_session_++;
  // Default codes come from the codebooks through a generator seeded per session.
  SynthesisConfig pick = synthesis_;
  pick.motion_code.reset();
  pick.appearance_codes.clear();
  pick.seed = config_.seed + n;
  session->motion_code = bundle_.motion_codebook.entries.empty() ? LatentCode{}
                                                                 : resolve_motion_code(pick, &bundle_.motion_codebook);
  session->appearance_keys = bundle_.appearance_codebook.entries.empty()
                                 ? std::vector<LatentCode>{LatentCode{}}
                                 : resolve_appearance_keys(pick, &bundle_.appearance_codebook);
  std::random_device rd;
  std::ostringstream id;
  id << std::hex << n << '-' << ((static_cast<uint64_t>(rd()) << 32) | rd());
  session->id = id.str();
  sessions_[session->id] = session;
  return ok({{"session", session->id}, {"width", image.width()}, {"height", image.height()}}, 201);
}

ServiceResponse EditService::submit_motion_annotation(const std::string& id, const std::string& document) {
  auto session = find(id);
  if (!session) return error(404, "unknown session");
  AnnotationDocument doc;
  try {
    doc = parse_annotation(document);
  } catch (const std::exception& e) {
    return error(400, e.what());
  }
  if (doc.arrows.empty()) return error(422, "motion annotation has no arrows");

  std::lock_guard lock(session->mutex);
  ControlOptions options = control_;
  options.steps = config_.optimization_steps;
  options.time_budget_seconds = config_.optimization_timeout_seconds;
  ControlResult result;
  try {
    MotionAnnotation ann{doc.arrows, 0.5};
    auto starts = initial_codes(codebook_codes(bundle_.motion_codebook), options);
    result = optimize_motion_code(session->image, ann, *bundle_.motion, starts, options);
  } catch (const ArgumentError& e) {
    return error(422, e.what());
  }
  session->motion_code = result.code;
  session->motion_trace = result.trace;
  ++session->version;
  session->preview_cache.clear();
  return ok(control_json(result));
}

ServiceResponse EditService::submit_appearance_annotation(const std::string& id, const std::string& document,
                                                          const std::map<std::string, std::string>& files) {
  auto session = find(id);
  if (!session) return error(404, "unknown session");
  AnnotationDocument doc;
  try {
    doc = parse_annotation(document);
  } catch (const std::exception& e) {
    return error(400, e.what());
  }
  if (doc.patches.empty()) return error(422, "appearance annotation has no patches");

  AppearanceAnnotation ann;
  try {
    ann = resolve_patches(doc.patches, [&](const std::string& name) {
      auto it = files.find(name);
      if (it == files.end()) throw ParseError("missing patch image part '" + name + "'");
      return decode_image(it->second);
    });
  } catch (const ParseError& e) {
    return error(400, e.what());
  } catch (const ArgumentError& e) {
    return error(422, e.what());
  }

  std::lock_guard lock(session->mutex);
  ControlOptions options = control_;
  options.steps = config_.optimization_steps;
  options.time_budget_seconds = config_.optimization_timeout_seconds;
  ControlResult result;
  try {
    auto starts = initial_codes(codebook_codes(bundle_.appearance_codebook), options);
    result = optimize_appearance_code(session->image, ann, *bundle_.appearance, starts, options);
  } catch (const ArgumentError& e) {
    return error(422, e.what());
  }
  // The edited appearance cycles from the input's own look to the target and back.
  session->appearance_keys = {encode_appearance(*bundle_.appearance, session->image), result.code};
  session->appearance_trace = result.trace;
  ++session->version;
  session->preview_cache.clear();
  return ok(control_json(result));
}

ServiceResponse EditService::preview(const std::string& id, int from, int count, int64_t width, int64_t height,
                                     const std::string& if_none_match) {
  auto session = find(id);
  if (!session) return error(404, "unknown session");
  std::lock_guard lock(session->mutex);
  const int total = config_.preview_frames;
  if (count < 0) count = total - from;
  if (from < 0 || count < 1 || from + count > total) {
    ServiceResponse r = error(416, "frame range outside [0, " + std::to_string(total) + ")");
    r.headers["Content-Range"] = "frames */" + std::to_string(total);
    return r;
  }
  if (width <= 0) width = config_.preview_width > 0 ? config_.preview_width : std::max<int64_t>(8, session->image.width() / 4);
  if (height <= 0) {
    height = config_.preview_height > 0 ? config_.preview_height : std::max<int64_t>(8, session->image.height() / 4);
  }
  if (width > 4096 || height > 4096) return error(400, "preview resolution too large");

  std::ostringstream etag;
  etag << '"' << session->id << '-' << session->version << '-' << from << '-' << count << '-' << width << 'x'
       << height << '"';
  if (!if_none_match.empty() && if_none_match == etag.str()) {
    ServiceResponse r{304, "application/json", "", {}};
    r.headers["ETag"] = etag.str();
    return r;
  }

  auto& frames = session->preview_cache[{width, height}];
  if (frames.empty()) {
    SynthesisConfig cfg = synthesis_;
    cfg.frame_count = total;
    cfg.loop_enabled = true;
    cfg.loop_repeats = 1;
    cfg.crossfade_window.reset();
    cfg.output_width = 0;
    cfg.output_height = 0;
    cfg.motion_code = session->motion_code;
    cfg.appearance_codes = session->appearance_keys;
    auto small = resize(session->image, height, width);
    auto result = synthesize(small, cfg, *bundle_.motion, *bundle_.appearance, nullptr, nullptr);
    for (const auto& f : result.frames) frames.push_back(encode_png(f));
  }
  json encoded = json::array();
  for (int i = from; i < from + count; ++i) encoded.push_back(base64_encode(frames[static_cast<size_t>(i)]));
  auto r = ok({{"session", session->id},
               {"version", session->version},
               {"from", from},
               {"count", count},
               {"total", total},
               {"width", width},
               {"height", height},
               {"frames", encoded}});
  r.headers["ETag"] = etag.str();
  return r;
}

ServiceResponse EditService::state(const std::string& id) {
  auto session = find(id);
  if (!session) return error(404, "unknown session");
  std::lock_guard lock(session->mutex);
  json keys = json::array();
  for (const auto& k : session->appearance_keys) keys.push_back(code_json(k));
  return ok({{"session", session->id},
             {"version", session->version},
             {"width", session->image.width()},
             {"height", session->image.height()},
             {"motion_code", code_json(session->motion_code)},
             {"appearance_codes", keys},
             {"motion_trace", session->motion_trace},
             {"appearance_trace", session->appearance_trace}});
}

ServiceResponse EditService::codebook(const std::string& kind) {
  json entries = json::array();
  if (kind == "motion") {
    for (const auto& [id, c] : bundle_.motion_codebook.entries) entries.push_back({{"clip_id", id}, {"code", code_json(c)}});
  } else if (kind == "appearance") {
    for (const auto& [id, seq] : bundle_.appearance_codebook.entries) {
      json codes = json::array();
      for (const auto& c : seq) codes.push_back(code_json(c));
      entries.push_back({{"clip_id", id}, {"code_sequence", codes}});
    }
  } else {
    return error(404, "unknown codebook kind '" + kind + "'");
  }
  return ok({{"version", kCodebookVersion}, {"kind", kind}, {"entries", entries}});
}

namespace {

void reply(httplib::Response& res, const ServiceResponse& r) {
  res.status = r.status;
  for (const auto& [k, v] : r.headers) res.set_header(k, v);
  if (!r.body.empty()) res.set_content(r.body, r.content_type);
}

int int_param(const httplib::Request& req, const char* name, int fallback) {
  if (!req.has_param(name)) return fallback;
  return std::stoi(req.get_param_value(name));
}

}  // namespace

int EditService::bind(const std::string& host, int port) {
  http_ = std::make_unique<Http>();
  auto& s = http_->server;
  s.set_payload_max_length(config_.max_upload_bytes + (1u << 16));
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    int status = 500;
    try {
      std::rethrow_exception(ep);
    } catch (const std::invalid_argument& e) {
      status = 400;
      message = e.what();
    } catch (const std::exception& e) {
      message = e.what();
    }
    reply(res, error(status, message));
  });

  s.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    if (req.is_multipart_form_data()) {
      if (!req.has_file("image")) return reply(res, error(400, "multipart field 'image' is required"));
      return reply(res, create_session(req.get_file_value("image").content));
    }
    reply(res, create_session(req.body));
  });
  s.Post(R"(/sessions/([^/]+)/annotations/motion)", [this](const httplib::Request& req, httplib::Response& res) {
    reply(res, submit_motion_annotation(req.matches[1], req.body));
  });
  s.Post(R"(/sessions/([^/]+)/annotations/appearance)",
         [this](const httplib::Request& req, httplib::Response& res) {
           if (!req.is_multipart_form_data() || !req.has_file("annotation")) {
             return reply(res, error(400, "multipart field 'annotation' is required"));
           }
           std::map<std::string, std::string> files;
           for (const auto& [name, part] : req.files) {
             if (name != "annotation") files[name] = part.content;
             if (!part.filename.empty() && name != "annotation") files[part.filename] = part.content;
           }
           reply(res, submit_appearance_annotation(req.matches[1], req.get_file_value("annotation").content, files));
         });
  s.Get(R"(/sessions/([^/]+)/preview)", [this](const httplib::Request& req, httplib::Response& res) {
    reply(res, preview(req.matches[1], int_param(req, "from", 0), int_param(req, "count", -1), int_param(req, "w", 0),
                       int_param(req, "h", 0), req.get_header_value("If-None-Match")));
  });
  s.Get(R"(/sessions/([^/]+)/state)",
        [this](const httplib::Request& req, httplib::Response& res) { reply(res, state(req.matches[1])); });
  s.Get(R"(/codebooks/([^/]+))",
        [this](const httplib::Request& req, httplib::Response& res) { reply(res, codebook(req.matches[1])); });

  if (port == 0) return s.bind_to_any_port(host);
  return s.bind_to_port(host, port) ? port : -1;
}

void EditService::listen() {
  if (!http_) throw std::logic_error("EditService::listen called before bind");
  http_->server.listen_after_bind();
}

void EditService::stop() {
  if (http_) http_->server.stop();
}

}  // namespace animscape
