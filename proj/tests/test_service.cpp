#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "animscape/errors.hpp"
#include "animscape/image_io.hpp"
#include "animscape/service.hpp"
#include "support.hpp"

using namespace animscape;
using namespace testing_support;
using nlohmann::json;

namespace {

ModelBundle tiny_bundle() {
  torch::manual_seed(0);
  ModelBundle b;
  b.motion = std::make_unique<MotionModel>(PredictorConfig{2, 4, 1}, EncoderConfig{2, 4, 32}, 64.0, 32);
  b.appearance = std::make_unique<AppearanceModel>(PredictorConfig{6, 4, 1}, EncoderConfig{3, 4, 32}, 32);
  init_weights(*b.motion->predictor);
  init_weights(*b.appearance->predictor);
  init_weights(*b.appearance->encoder);
  LatentCode m;
  m.values.fill(0.2f);
  b.motion_codebook.entries["river"] = m;
  b.appearance_codebook.entries["day"] = {LatentCode{}, m};
  return b;
}

ServiceConfig small_config() {
  ServiceConfig c;
  c.preview_frames = 4;
  c.optimization_steps = 3;
  c.optimization_timeout_seconds = 30;
  return c;
}

std::string png_of(int64_t h, int64_t w, uint64_t seed) { return encode_png(NormalizedImage(smooth_texture(h, w, seed))); }

std::string create(EditService& s, int64_t h = 40, int64_t w = 64) {
  auto r = s.create_session(png_of(h, w, 1));
  EXPECT_EQ(r.status, 201);
  return json::parse(r.body).at("session").get<std::string>();
}

std::string base64_decode(const std::string& in) {
  static const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  uint32_t buf = 0;
  int bits = 0;
  for (char c : in) {
    if (c == '=') break;
    buf = (buf << 6) | static_cast<uint32_t>(alphabet.find(c));
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += static_cast<char>((buf >> bits) & 0xff);
    }
  }
  return out;
}

const std::string kArrows = R"({"version": 1, "arrows": [{"x": 10, "y": 20, "dx": 30, "dy": 0}]})";

}  // namespace

TEST(Base64, KnownVectors) {
  EXPECT_EQ(base64_encode(""), "");
  EXPECT_EQ(base64_encode("f"), "Zg==");
  EXPECT_EQ(base64_encode("fo"), "Zm8=");
  EXPECT_EQ(base64_encode("foo"), "Zm9v");
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
  EXPECT_EQ(base64_encode(std::string("\xff\x00\x10", 3)), "/wAQ");
}

TEST(EditService, RequiresBothModels) {
  ModelBundle empty;
  EXPECT_THROW(EditService(empty, small_config()), ConfigError);
}

TEST(EditService, CreateSessionValidation) {
  auto bundle = tiny_bundle();
  auto cfg = small_config();
  cfg.max_upload_bytes = 200;
  EditService s(bundle, cfg);
  EXPECT_EQ(s.create_session("").status, 400);
  EXPECT_EQ(s.create_session("definitely not an image").status, 400);
  EXPECT_EQ(s.create_session(png_of(64, 64, 2)).status, 413);
  auto ok = s.create_session(encode_png(NormalizedImage(torch::zeros({3, 4, 6}))));
  EXPECT_EQ(ok.status, 201);
  auto body = json::parse(ok.body);
  EXPECT_EQ(body.at("width"), 6);
  EXPECT_EQ(body.at("height"), 4);
}

TEST(EditService, PreviewRangesAndCaching) {
  auto bundle = tiny_bundle();
  EditService s(bundle, small_config());
  const auto id = create(s);
  EXPECT_EQ(s.preview("nope", 0, -1, 0, 0).status, 404);

  auto r = s.preview(id, 0, -1, 0, 0);
  ASSERT_EQ(r.status, 200);
  auto body = json::parse(r.body);
  EXPECT_EQ(body.at("frames").size(), 4u);
  EXPECT_EQ(body.at("width"), 16);  // a quarter of 64
  EXPECT_EQ(body.at("height"), 10);
  auto frame = decode_image(base64_decode(body.at("frames")[0].get<std::string>()));
  EXPECT_EQ(frame.width(), 16);

  auto sub = s.preview(id, 1, 2, 16, 10);
  EXPECT_EQ(json::parse(sub.body).at("frames")[0], body.at("frames")[1]);

  auto bad = s.preview(id, 3, 2, 0, 0);
  EXPECT_EQ(bad.status, 416);
  EXPECT_EQ(bad.headers.at("Content-Range"), "frames */4");
  EXPECT_EQ(s.preview(id, -1, 1, 0, 0).status, 416);

  const auto etag = r.headers.at("ETag");
  EXPECT_EQ(s.preview(id, 0, -1, 0, 0, etag).status, 304);
  ASSERT_EQ(s.submit_motion_annotation(id, kArrows).status, 200);
  auto after = s.preview(id, 0, -1, 0, 0, etag);
  EXPECT_EQ(after.status, 200);
  EXPECT_NE(after.headers.at("ETag"), etag);
  EXPECT_EQ(json::parse(after.body).at("version"), 1);
}

TEST(EditService, MotionAnnotation) {
  auto bundle = tiny_bundle();
  std::vector<torch::Tensor> before;
  for (auto& p : bundle.motion->predictor->parameters()) before.push_back(p.detach().clone());
  EditService s(bundle, small_config());
  const auto id = create(s);
  EXPECT_EQ(s.submit_motion_annotation("nope", kArrows).status, 404);
  EXPECT_EQ(s.submit_motion_annotation(id, "{").status, 400);
  EXPECT_EQ(s.submit_motion_annotation(id, R"({"version": 7})").status, 400);
  EXPECT_EQ(s.submit_motion_annotation(id, R"({"arrows": []})").status, 422);
  EXPECT_EQ(s.submit_motion_annotation(id, R"({"arrows": [{"x": 900, "y": 900, "dx": 1, "dy": 0}]})").status, 422);

  auto r = s.submit_motion_annotation(id, kArrows);
  ASSERT_EQ(r.status, 200);
  auto body = json::parse(r.body);
  EXPECT_EQ(body.at("code").size(), 8u);
  EXPECT_LE(body.at("objective").get<double>(), body.at("trace")[0].get<double>());
  auto state = json::parse(s.state(id).body);
  EXPECT_EQ(state.at("motion_code"), body.at("code"));
  EXPECT_EQ(state.at("version"), 1);

  auto params = bundle.motion->predictor->parameters();
  for (size_t i = 0; i < params.size(); ++i) EXPECT_TRUE(torch::equal(params[i], before[i]));
}

TEST(EditService, AppearanceAnnotation) {
  auto bundle = tiny_bundle();
  EditService s(bundle, small_config());
  const auto id = create(s);
  const std::string doc = R"({"version": 1, "patches": [{"x": 4, "y": 4, "width": 8, "height": 8, "image": "p"}]})";
  std::map<std::string, std::string> files = {{"p", png_of(8, 8, 4)}};
  EXPECT_EQ(s.submit_appearance_annotation(id, doc, {}).status, 400);
  EXPECT_EQ(s.submit_appearance_annotation(id, R"({"patches": []})", files).status, 422);
  const std::string outside = R"({"patches": [{"x": 60, "y": 4, "width": 8, "height": 8, "image": "p"}]})";
  EXPECT_EQ(s.submit_appearance_annotation(id, outside, files).status, 422);

  auto r = s.submit_appearance_annotation(id, doc, files);
  ASSERT_EQ(r.status, 200);
  auto state = json::parse(s.state(id).body);
  ASSERT_EQ(state.at("appearance_codes").size(), 2u);
  EXPECT_EQ(state.at("appearance_codes")[1], json::parse(r.body).at("code"));
}

TEST(EditService, Codebooks) {
  auto bundle = tiny_bundle();
  EditService s(bundle, small_config());
  auto m = json::parse(s.codebook("motion").body);
  EXPECT_EQ(m.at("version"), kCodebookVersion);
  EXPECT_EQ(m.at("entries")[0].at("clip_id"), "river");
  auto a = json::parse(s.codebook("appearance").body);
  EXPECT_EQ(a.at("entries")[0].at("code_sequence").size(), 2u);
  EXPECT_EQ(s.codebook("sound").status, 404);
  EXPECT_EQ(s.state("nope").status, 404);
}

TEST(EditService, ConcurrentEditsAreSerialized) {
  auto bundle = tiny_bundle();
  EditService s(bundle, small_config());
  const auto id = create(s);
  std::vector<int> statuses(4);
  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&, i] { statuses[i] = s.submit_motion_annotation(id, kArrows).status; });
  }
  for (auto& t : threads) t.join();
  for (int st : statuses) EXPECT_EQ(st, 200);
  EXPECT_EQ(json::parse(s.state(id).body).at("version"), 4);
}

TEST(EditService, HttpRoutes) {
  auto bundle = tiny_bundle();
  EditService s(bundle, small_config());
  const int port = s.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  std::thread server([&] { s.listen(); });
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(60, 0);

  auto created = client.Post("/sessions", png_of(32, 48, 1), "image/png");
  ASSERT_TRUE(created);
  ASSERT_EQ(created->status, 201);
  const auto id = json::parse(created->body).at("session").get<std::string>();

  httplib::MultipartFormDataItems form = {{"image", png_of(32, 32, 2), "in.png", "image/png"}};
  auto created2 = client.Post("/sessions", form);
  ASSERT_TRUE(created2);
  EXPECT_EQ(created2->status, 201);

  auto preview = client.Get("/sessions/" + id + "/preview?from=0&count=2&w=16&h=8");
  ASSERT_TRUE(preview);
  ASSERT_EQ(preview->status, 200);
  EXPECT_EQ(json::parse(preview->body).at("frames").size(), 2u);
  const auto etag = preview->get_header_value("ETag");
  auto cached = client.Get("/sessions/" + id + "/preview?from=0&count=2&w=16&h=8", {{"If-None-Match", etag}});
  ASSERT_TRUE(cached);
  EXPECT_EQ(cached->status, 304);
  auto range = client.Get("/sessions/" + id + "/preview?from=9");
  ASSERT_TRUE(range);
  EXPECT_EQ(range->status, 416);
  auto nan = client.Get("/sessions/" + id + "/preview?from=abc");
  ASSERT_TRUE(nan);
  EXPECT_EQ(nan->status, 400);

  auto motion = client.Post("/sessions/" + id + "/annotations/motion", kArrows, "application/json");
  ASSERT_TRUE(motion);
  EXPECT_EQ(motion->status, 200);

  httplib::MultipartFormDataItems patch_form = {
      {"annotation", R"({"patches": [{"x": 0, "y": 0, "width": 8, "height": 8, "image": "sky.png"}]})", "", ""},
      {"sky", png_of(8, 8, 3), "sky.png", "image/png"}};
  auto appearance = client.Post("/sessions/" + id + "/annotations/appearance", patch_form);
  ASSERT_TRUE(appearance);
  EXPECT_EQ(appearance->status, 200);

  auto state = client.Get("/sessions/" + id + "/state");
  ASSERT_TRUE(state);
  EXPECT_EQ(json::parse(state->body).at("version"), 2);
  auto book = client.Get("/codebooks/motion");
  ASSERT_TRUE(book);
  EXPECT_EQ(book->status, 200);
  auto missing = client.Get("/sessions/none/state");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);

  s.stop();
  server.join();
}
