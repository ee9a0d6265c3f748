#include <gtest/gtest.h>

#include <chrono>
#include <fstream>

#include "animscape/dataset.hpp"
#include "animscape/errors.hpp"
#include "animscape/image_io.hpp"
#include "support.hpp"

using namespace animscape;
using namespace testing_support;

namespace {

NormalizedImage flat(double v, int64_t size = 8) { return NormalizedImage(torch::full({3, size, size}, v)); }

NormalizedImage flat_rgb(double r, double g, double b, int64_t size = 8) {
  auto t = torch::stack({torch::full({size, size}, r), torch::full({size, size}, g), torch::full({size, size}, b)});
  return NormalizedImage(t);
}

LatentCode code_of(float base) {
  LatentCode c;
  for (int i = 0; i < kLatentDim; ++i) c.values[i] = base + 0.125f * static_cast<float>(i) + 1e-7f;
  return c;
}

}  // namespace

TEST(Metrics, MeanAbsDifferenceAndChannelChange) {
  EXPECT_NEAR(mean_abs_difference(flat(0.1), flat(0.4)), 0.3, 1e-6);
  EXPECT_NEAR(channel_mean_change(flat_rgb(0, 0.1, 0.2), flat_rgb(0.1, 0.1, -0.2)), 0.5, 1e-6);
}

TEST(MotionSampling, KeepsEveryOtherFrameAndSplitsAtStillPairs) {
  // Kept frames (even indices) step by 0.05, 0.01, 0.05, 0.05, 0.001.
  const std::vector<double> kept = {0.0, 0.05, 0.06, 0.11, 0.16, 0.161};
  std::vector<NormalizedImage> frames;
  for (size_t k = 0; k < kept.size(); ++k) {
    frames.push_back(flat(kept[k]));
    frames.push_back(flat(-0.9));  // odd frames are never looked at
  }
  auto segments = sample_motion_segments(frames, {});
  ASSERT_EQ(segments.size(), 2u);
  EXPECT_EQ(segments[0], (std::vector<size_t>{0, 2}));
  EXPECT_EQ(segments[1], (std::vector<size_t>{4, 6, 8}));
}

TEST(MotionSampling, StaticClipProducesNothing) {
  std::vector<NormalizedImage> frames(10, flat(0.3));
  EXPECT_TRUE(sample_motion_segments(frames, {}).empty());
  EXPECT_TRUE(sample_motion_segments({flat(0.0)}, {}).empty());
  EXPECT_THROW(sample_motion_segments(frames, {0, 0.02}), ArgumentError);
}

TEST(AppearanceSampling, StrideAndColorThreshold) {
  // Each channel mean rises by 0.2 / 3 every 10 frames: one stride changes the
  // summed mean by 0.2 (dropped), two strides by 0.4 (kept).
  std::vector<NormalizedImage> frames;
  for (int i = 0; i < 61; ++i) frames.push_back(flat(-0.9 + i * 0.02 / 3.0));
  AppearanceSamplingParams params;
  params.frames_per_real_minute = 1.0;
  EXPECT_EQ(sample_appearance_frames(frames, params), (std::vector<size_t>{0, 20, 40, 60}));
  params.color_threshold = 0.1;
  EXPECT_EQ(sample_appearance_frames(frames, params), (std::vector<size_t>{0, 10, 20, 30, 40, 50, 60}));
  params.frames_per_real_minute = 0.5;  // stride 5
  params.color_threshold = 0.0;
  EXPECT_EQ(sample_appearance_frames(frames, params).size(), 13u);
}

TEST(AppearanceSampling, ConstantCollapsesAndRateIsRequired) {
  std::vector<NormalizedImage> frames(40, flat(0.2));
  AppearanceSamplingParams params;
  params.frames_per_real_minute = 1.0;
  EXPECT_EQ(sample_appearance_frames(frames, params), std::vector<size_t>{0});
  params.frames_per_real_minute = 0.0;
  EXPECT_THROW(sample_appearance_frames(frames, params), ConfigError);
}

TEST(ClipKind, StringRoundTrip) {
  EXPECT_EQ(clip_kind_from_string(to_string(ClipKind::Motion)), ClipKind::Motion);
  EXPECT_EQ(clip_kind_from_string(to_string(ClipKind::Appearance)), ClipKind::Appearance);
  EXPECT_ANY_THROW(clip_kind_from_string("sound"));
}

TEST(ClipStore, PersistsAndReloads) {
  auto root = temp_dir("store");
  std::vector<NormalizedImage> frames = {NormalizedImage(smooth_texture(12, 20, 1)),
                                         NormalizedImage(smooth_texture(12, 20, 2))};
  {
    ClipStore store(root);
    auto rec = store.add_clip("river", "file:///river.mp4", ClipKind::Motion, frames);
    EXPECT_EQ(rec.width, 20);
    EXPECT_EQ(rec.height, 12);
    EXPECT_EQ(rec.frame_files.size(), 2u);
    store.add_clip("sky", "", ClipKind::Appearance, {frames[0]});
  }
  ClipStore reopened(root);
  EXPECT_EQ(reopened.records().size(), 2u);
  EXPECT_EQ(reopened.records(ClipKind::Appearance).size(), 1u);
  ASSERT_TRUE(reopened.find("river").has_value());
  EXPECT_EQ(reopened.find("river")->source_uri, "file:///river.mp4");
  EXPECT_FALSE(reopened.find("lake").has_value());

  auto clip = reopened.load_clip("river");
  ASSERT_EQ(clip.frames.size(), 2u);
  // PNG storage quantizes to 8 bits.
  EXPECT_LE((clip.frames[1].tensor() - frames[1].tensor()).abs().max().item<double>(), 1.0 / 255.0 + 1e-6);
  EXPECT_THROW(reopened.load_clip("lake"), MissingArtifactError);
  EXPECT_EQ(reopened.load_clips(ClipKind::Motion).size(), 1u);

  reopened.add_clip("river", "", ClipKind::Motion, {frames[0], frames[1], frames[0]});
  EXPECT_EQ(reopened.records().size(), 2u);
  EXPECT_EQ(reopened.load_clip("river").frames.size(), 3u);

  MotionCodebook cb;
  cb.entries["river"] = code_of(0);
  cb.entries["lake"] = code_of(1);
  EXPECT_EQ(reopened.missing_ids(cb), std::vector<std::string>{"lake"});
}

TEST(Codebook, RoundTripsExactly) {
  auto dir = temp_dir("codebook");
  MotionCodebook m;
  m.entries["a"] = code_of(-0.3f);
  m.entries["b"] = code_of(1.7f);
  save_codebook(dir / "m.json", m);
  EXPECT_EQ(load_motion_codebook(dir / "m.json"), m);

  AppearanceCodebook a;
  a.entries["day"] = {code_of(0.1f), code_of(0.2f), code_of(0.3f)};
  a.entries["night"] = {code_of(-2.0f)};
  save_codebook(dir / "a.json", a);
  EXPECT_EQ(load_appearance_codebook(dir / "a.json"), a);

  // Kinds are not interchangeable.
  EXPECT_THROW(load_appearance_codebook(dir / "m.json"), ParseError);
}

TEST(Codebook, ErrorKinds) {
  auto dir = temp_dir("codebook_err");
  EXPECT_THROW(load_motion_codebook(dir / "absent.json"), MissingArtifactError);
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream(dir / name) << body;
    return dir / name;
  };
  EXPECT_THROW(load_motion_codebook(write("garbage.json", "{not json")), ParseError);
  EXPECT_THROW(load_motion_codebook(write("future.json", R"({"version": 2, "kind": "motion", "entries": []})")),
               MigrationError);
  EXPECT_THROW(load_motion_codebook(write("noversion.json", R"({"kind": "motion", "entries": []})")), ParseError);
  EXPECT_THROW(
      load_motion_codebook(write("short.json", R"({"version": 1, "kind": "motion",
                                                   "entries": [{"clip_id": "a", "code": [1, 2, 3]}]})")),
      ParseError);
  EXPECT_THROW(load_motion_codebook(write("noentries.json", R"({"version": 1, "kind": "motion"})")), ParseError);
}

TEST(Codebook, LargeCodebookLoadsQuickly) {
  auto dir = temp_dir("codebook_large");
  MotionCodebook cb;
  for (int i = 0; i < 1825; ++i) cb.entries["clip_" + std::to_string(i)] = code_of(static_cast<float>(i) * 1e-3f);
  save_codebook(dir / "m.json", cb);
  const auto start = std::chrono::steady_clock::now();
  auto loaded = load_motion_codebook(dir / "m.json");
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(loaded.entries.size(), 1825u);
  EXPECT_LT(seconds, 1.0);
}

TEST(Ingest, MotionFromFrameDirectories) {
  auto dir = temp_dir("ingest");
  auto moving = translating_clip("waves", 16, 10, 2.0, 3, 8);
  save_frame_sequence(dir / "waves", moving.frames);
  save_frame_sequence(dir / "still", std::vector<NormalizedImage>(6, flat(0.1, 16)));
  // Two moving stretches separated by a pause.
  std::vector<NormalizedImage> paused(moving.frames.begin(), moving.frames.begin() + 5);
  for (int i = 0; i < 4; ++i) paused.push_back(moving.frames[4]);
  paused.insert(paused.end(), moving.frames.begin() + 4, moving.frames.end());
  save_frame_sequence(dir / "paused", paused);

  ClipStore store(dir / "store");
  auto report = ingest_motion_clips({dir / "waves", dir / "still", dir / "paused", dir / "absent.mp4"}, store);
  ASSERT_EQ(report.entries.size(), 4u);
  EXPECT_EQ(report.entries[0].clip_ids, std::vector<std::string>{"waves"});
  EXPECT_EQ(report.entries[0].input_frames, 10u);
  EXPECT_EQ(report.entries[0].kept_frames, 5u);
  EXPECT_TRUE(report.entries[1].clip_ids.empty());
  EXPECT_FALSE(report.entries[1].skipped_reason.empty());
  EXPECT_EQ(report.entries[2].clip_ids, (std::vector<std::string>{"paused_0", "paused_1"}));
  EXPECT_FALSE(report.entries[3].skipped_reason.empty());
  EXPECT_EQ(report.clip_count(), 3u);
  EXPECT_EQ(store.load_clip("waves").frames.size(), 5u);
}

TEST(Ingest, AppearanceNeedsRate) {
  auto dir = temp_dir("ingest_app");
  std::vector<NormalizedImage> frames;
  for (int i = 0; i < 30; ++i) frames.push_back(flat(-0.9 + 0.05 * i, 8));
  save_frame_sequence(dir / "day", frames);
  ClipStore store(dir / "store");
  EXPECT_THROW(ingest_appearance_clips({dir / "day"}, store, {}), ConfigError);
  AppearanceSamplingParams params;
  params.frames_per_real_minute = 0.5;  // stride 5
  auto report = ingest_appearance_clips({dir / "day"}, store, params);
  EXPECT_EQ(report.entries[0].clip_ids, std::vector<std::string>{"day"});
  EXPECT_EQ(store.load_clip("day").frames.size(), 6u);
  EXPECT_EQ(store.find("day")->kind, ClipKind::Appearance);
}
