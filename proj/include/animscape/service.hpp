#pragma once

// Stateful editing service over HTTP + JSON.
//
//   POST /sessions                          multipart "image" (or a raw image body) -> 201 {"session": id}
//   POST /sessions/{id}/annotations/motion  annotation JSON (arrows)       -> {"code", "objective", "best_step", "trace", "timed_out"}
//   POST /sessions/{id}/annotations/appearance
//                                           multipart "annotation" JSON plus one part per patch image
//   GET  /sessions/{id}/preview?from=&count=&w=&h=
//                                           -> {"version", "from", "count", "width", "height", "frames": [base64 PNG]}
//                                              with an ETag; If-None-Match gives 304
//   GET  /sessions/{id}/state               -> current codes and last traces
//   GET  /codebooks/{kind}                  -> codebook document (kind: motion | appearance)
//
// Errors are {"error": message} with 400 (malformed), 404 (unknown), 413
// (oversized upload), 416 (preview range) or 422 (empty annotation).
// Mutations on one session are serialized; the last writer's codes win.
// Network weights are never modified.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "animscape/config.hpp"

namespace animscape {

struct ServiceResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

std::string base64_encode(const std::string& bytes);

class EditService {
 public:
  /// `bundle` must outlive the service and hold both motion and appearance models.
  EditService(ModelBundle& bundle, ServiceConfig config, SynthesisConfig synthesis = {}, ControlOptions control = {});
  ~EditService();

  EditService(const EditService&) = delete;
  EditService& operator=(const EditService&) = delete;

  // Transport-independent handlers (also used by the HTTP routes).
  ServiceResponse create_session(const std::string& image_bytes);
  ServiceResponse submit_motion_annotation(const std::string& id, const std::string& document);
  ServiceResponse submit_appearance_annotation(const std::string& id, const std::string& document,
                                               const std::map<std::string, std::string>& files);
  ServiceResponse preview(const std::string& id, int from, int count, int64_t width, int64_t height,
                          const std::string& if_none_match = "");
  ServiceResponse state(const std::string& id);
  ServiceResponse codebook(const std::string& kind);

  /// Binds the HTTP listener; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  void listen();
  void stop();

 private:
  struct Session;
  struct Http;

  std::shared_ptr<Session> find(const std::string& id);

  ModelBundle& bundle_;
  ServiceConfig config_;
  SynthesisConfig synthesis_;
  ControlOptions control_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  uint64_t next_session_ = 0;
  std::unique_ptr<Http> http_;
};

}  // namespace animscape
