#pragma once

// Time-lapse ingestion: frame sampling heuristics for motion and appearance
// clips, an on-disk clip store, and codebook files.
//
// Store layout:
//   <root>/index.json                 {"version": 1, "clips": [ClipRecord...]}
//   <root>/<clip id>/000000.png ...   frames in time order

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "animscape/codebook.hpp"
#include "animscape/core.hpp"
#include "animscape/motion.hpp"

namespace animscape {

enum class ClipKind { Motion, Appearance };

std::string to_string(ClipKind kind);
ClipKind clip_kind_from_string(const std::string& name);

struct MotionSamplingParams {
  int frame_stride = 2;           // keep every other frame
  double pair_threshold = 0.02;   // drop pairs whose mean |difference| is below this
};

struct AppearanceSamplingParams {
  double spacing_minutes = 10.0;
  double frames_per_real_minute = 0.0;  // capture rate; <= 0 means unknown
  double color_threshold = 0.3;         // drop frames whose summed channel-mean change is below this
};

/// Mean over pixels and channels of |a - b|.
double mean_abs_difference(const NormalizedImage& a, const NormalizedImage& b);
/// Sum over RGB of |mean_c(a) - mean_c(b)|.
double channel_mean_change(const NormalizedImage& a, const NormalizedImage& b);

/// Frame indices (into `frames`) of each consecutive segment that survives
/// motion sampling. Segments break at dropped pairs; segments need two frames.
std::vector<std::vector<size_t>> sample_motion_segments(const std::vector<NormalizedImage>& frames,
                                                        const MotionSamplingParams& params);

/// Frame indices kept by appearance sampling. Throws ConfigError when the
/// capture rate is unknown.
std::vector<size_t> sample_appearance_frames(const std::vector<NormalizedImage>& frames,
                                             const AppearanceSamplingParams& params);

struct ClipRecord {
  std::string id;
  std::string source_uri;
  ClipKind kind = ClipKind::Motion;
  int64_t width = 0;
  int64_t height = 0;
  std::vector<std::string> frame_files;  // relative to the store root
};

class ClipStore {
 public:
  /// Opens (or creates) a store rooted at `root`, reading index.json if present.
  explicit ClipStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  /// Writes frames as PNG and records the clip. An existing id is replaced.
  ClipRecord add_clip(const std::string& id, const std::string& source_uri, ClipKind kind,
                      const std::vector<NormalizedImage>& frames);

  std::vector<ClipRecord> records() const;
  std::vector<ClipRecord> records(ClipKind kind) const;
  std::optional<ClipRecord> find(const std::string& id) const;

  /// Loads a clip's frames. Unknown ids throw MissingArtifactError.
  Clip load_clip(const std::string& id) const;
  std::vector<Clip> load_clips(ClipKind kind) const;

  /// Ids referenced by a codebook but absent from the store.
  std::vector<std::string> missing_ids(const MotionCodebook& codebook) const;
  std::vector<std::string> missing_ids(const AppearanceCodebook& codebook) const;

 private:
  void write_index() const;

  std::filesystem::path root_;
  std::vector<ClipRecord> records_;
  mutable std::mutex mutex_;
};

struct IngestEntry {
  std::string source;
  std::vector<std::string> clip_ids;
  size_t input_frames = 0;
  size_t kept_frames = 0;
  std::string skipped_reason;  // empty unless the video produced nothing
};

struct IngestReport {
  std::vector<IngestEntry> entries;
  size_t clip_count() const;
};

/// Reads each video (file or frame directory), samples it and stores the
/// surviving segments as clips "<stem>" or "<stem>_<k>" when split.
IngestReport ingest_motion_clips(const std::vector<std::filesystem::path>& videos, ClipStore& store,
                                 const MotionSamplingParams& params = {});
IngestReport ingest_appearance_clips(const std::vector<std::filesystem::path>& videos, ClipStore& store,
                                     const AppearanceSamplingParams& params);

// Codebook files:
//   {"version": 1, "kind": "motion",
//    "entries": [{"clip_id": "...", "code": [8 numbers]}, ...]}
//   {"version": 1, "kind": "appearance",
//    "entries": [{"clip_id": "...", "code_sequence": [[8 numbers], ...]}, ...]}
inline constexpr int kCodebookVersion = 1;

void save_codebook(const std::filesystem::path& path, const MotionCodebook& codebook);
void save_codebook(const std::filesystem::path& path, const AppearanceCodebook& codebook);
/// Missing file: MissingArtifactError. Other version: MigrationError. Malformed: ParseError.
MotionCodebook load_motion_codebook(const std::filesystem::path& path);
AppearanceCodebook load_appearance_codebook(const std::filesystem::path& path);

}  // namespace animscape
