#include "animscape/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "animscape/errors.hpp"
#include "animscape/image_io.hpp"

namespace animscape {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ClipKind kind) { return kind == ClipKind::Motion ? "motion" : "appearance"; }

ClipKind clip_kind_from_string(const std::string& name) {
  if (name == "motion") return ClipKind::Motion;
  if (name == "appearance") return ClipKind::Appearance;
  throw ParseError("unknown clip kind '" + name + "'");
}

double mean_abs_difference(const NormalizedImage& a, const NormalizedImage& b) {
  if (a.tensor().sizes() != b.tensor().sizes()) throw ShapeError("mean_abs_difference: frame sizes differ");
  return (a.tensor().to(torch::kDouble) - b.tensor().to(torch::kDouble)).abs().mean().item<double>();
}

double channel_mean_change(const NormalizedImage& a, const NormalizedImage& b) {
  auto ma = a.tensor().to(torch::kDouble).mean({1, 2});
  auto mb = b.tensor().to(torch::kDouble).mean({1, 2});
  return (ma - mb).abs().sum().item<double>();
}

std::vector<std::vector<size_t>> sample_motion_segments(const std::vector<NormalizedImage>& frames,
                                                        const MotionSamplingParams& params) {
  if (params.frame_stride < 1) throw ArgumentError("sample_motion_segments: stride must be positive");
  std::vector<size_t> kept;
  for (size_t i = 0; i < frames.size(); i += static_cast<size_t>(params.frame_stride)) kept.push_back(i);

  std::vector<std::vector<size_t>> segments;
  std::vector<size_t> current;
  auto flush = [&] {
    if (current.size() >= 2) segments.push_back(current);
    current.clear();
  };
  for (size_t k = 0; k + 1 < kept.size(); ++k) {
    const bool moving = mean_abs_difference(frames[kept[k]], frames[kept[k + 1]]) >= params.pair_threshold;
    if (!moving) {
      flush();
      continue;
    }
    if (current.empty()) current.push_back(kept[k]);
    current.push_back(kept[k + 1]);
  }
  flush();
  return segments;
}

std::vector<size_t> sample_appearance_frames(const std::vector<NormalizedImage>& frames,
                                             const AppearanceSamplingParams& params) {
  if (!(params.frames_per_real_minute > 0)) {
    throw ConfigError("appearance sampling needs a capture rate (frames per real minute)");
  }
  if (!(params.spacing_minutes > 0)) throw ConfigError("appearance sampling spacing must be positive");
  const auto stride =
      std::max<size_t>(1, static_cast<size_t>(std::llround(params.spacing_minutes * params.frames_per_real_minute)));
  std::vector<size_t> kept;
  for (size_t i = 0; i < frames.size(); i += stride) {
    if (!kept.empty() && channel_mean_change(frames[kept.back()], frames[i]) < params.color_threshold) continue;
    kept.push_back(i);
  }
  return kept;
}

namespace {

json record_to_json(const ClipRecord& r) {
  return {{"id", r.id},         {"source_uri", r.source_uri}, {"kind", to_string(r.kind)},
          {"width", r.width},   {"height", r.height},         {"frames", r.frame_files}};
}

ClipRecord record_from_json(const json& j) {
  ClipRecord r;
  r.id = j.at("id").get<std::string>();
  r.source_uri = j.value("source_uri", "");
  r.kind = clip_kind_from_string(j.at("kind").get<std::string>());
  r.width = j.at("width").get<int64_t>();
  r.height = j.at("height").get<int64_t>();
  r.frame_files = j.at("frames").get<std::vector<std::string>>();
  return r;
}

json read_json_file(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifactError("file not found: " + path.string());
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

std::string frame_name(size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu.png", index);
  return buf;
}

}  // namespace

ClipStore::ClipStore(fs::path root) : root_(std::move(root)) {
  const auto index = root_ / "index.json";
  if (!fs::exists(index)) return;
  auto j = read_json_file(index);
  try {
    if (j.at("version").get<int>() != 1) throw MigrationError("clip index " + index.string() + " has another version");
    for (const auto& c : j.at("clips")) records_.push_back(record_from_json(c));
  } catch (const json::exception& e) {
    throw ParseError(index.string() + ": " + e.what());
  }
}

ClipRecord ClipStore::add_clip(const std::string& id, const std::string& source_uri, ClipKind kind,
                               const std::vector<NormalizedImage>& frames) {
  if (id.empty() || id.find('/') != std::string::npos || id == "." || id == "..") {
    throw ArgumentError("ClipStore: invalid clip id '" + id + "'");
  }
  if (frames.empty()) throw ArgumentError("ClipStore: clip '" + id + "' has no frames");
  ClipRecord record{id, source_uri, kind, frames.front().width(), frames.front().height(), {}};
  const fs::path dir = root_ / id;
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (size_t i = 0; i < frames.size(); ++i) {
    const auto name = frame_name(i);
    save_image(dir / name, frames[i]);
    record.frame_files.push_back((fs::path(id) / name).generic_string());
  }
  std::lock_guard lock(mutex_);
  std::erase_if(records_, [&](const ClipRecord& r) { return r.id == id; });
  records_.push_back(record);
  write_index();
  return record;
}

void ClipStore::write_index() const {
  json clips = json::array();
  for (const auto& r : records_) clips.push_back(record_to_json(r));
  write_json_file(root_ / "index.json", {{"version", 1}, {"clips", clips}});
}

std::vector<ClipRecord> ClipStore::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::vector<ClipRecord> ClipStore::records(ClipKind kind) const {
  std::lock_guard lock(mutex_);
  std::vector<ClipRecord> out;
  for (const auto& r : records_)
    if (r.kind == kind) out.push_back(r);
  return out;
}

std::optional<ClipRecord> ClipStore::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  for (const auto& r : records_)
    if (r.id == id) return r;
  return std::nullopt;
}

Clip ClipStore::load_clip(const std::string& id) const {
  auto record = find(id);
  if (!record) throw MissingArtifactError("clip '" + id + "' is not in the store");
  Clip clip{id, {}};
  for (const auto& f : record->frame_files) clip.frames.push_back(load_image(root_ / f));
  return clip;
}

std::vector<Clip> ClipStore::load_clips(ClipKind kind) const {
  std::vector<Clip> clips;
  for (const auto& r : records(kind)) clips.push_back(load_clip(r.id));
  return clips;
}

std::vector<std::string> ClipStore::missing_ids(const MotionCodebook& codebook) const {
  std::vector<std::string> out;
  for (const auto& [id, code] : codebook.entries)
    if (!find(id)) out.push_back(id);
  return out;
}

std::vector<std::string> ClipStore::missing_ids(const AppearanceCodebook& codebook) const {
  std::vector<std::string> out;
  for (const auto& [id, codes] : codebook.entries)
    if (!find(id)) out.push_back(id);
  return out;
}

size_t IngestReport::clip_count() const {
  size_t n = 0;
  for (const auto& e : entries) n += e.clip_ids.size();
  return n;
}

namespace {

template <typename Sampler>
IngestReport ingest(const std::vector<fs::path>& videos, ClipStore& store, ClipKind kind, Sampler sample) {
  IngestReport report;
  for (const auto& video : videos) {
    IngestEntry entry;
    entry.source = video.string();
    std::vector<NormalizedImage> frames;
    try {
      frames = read_video_frames(video);
    } catch (const std::exception& e) {
      entry.skipped_reason = std::string("undecodable: ") + e.what();
    }
    entry.input_frames = frames.size();
    if (entry.skipped_reason.empty()) {
      auto segments = sample(frames);
      const std::string stem = video.stem().string();
      for (size_t s = 0; s < segments.size(); ++s) {
        std::vector<NormalizedImage> kept;
        for (size_t i : segments[s]) kept.push_back(frames[i]);
        const std::string id = segments.size() == 1 ? stem : stem + "_" + std::to_string(s);
        store.add_clip(id, entry.source, kind, kept);
        entry.clip_ids.push_back(id);
        entry.kept_frames += kept.size();
      }
      if (segments.empty()) entry.skipped_reason = "no frames survived sampling";
    }
    if (!entry.skipped_reason.empty()) {
      std::cerr << "ingest: skipping " << entry.source << " (" << entry.skipped_reason << ")\n";
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace

IngestReport ingest_motion_clips(const std::vector<fs::path>& videos, ClipStore& store,
                                 const MotionSamplingParams& params) {
  return ingest(videos, store, ClipKind::Motion,
                [&](const std::vector<NormalizedImage>& f) { return sample_motion_segments(f, params); });
}

IngestReport ingest_appearance_clips(const std::vector<fs::path>& videos, ClipStore& store,
                                     const AppearanceSamplingParams& params) {
  if (!(params.frames_per_real_minute > 0)) {
    throw ConfigError("appearance ingestion needs a capture rate (frames per real minute)");
  }
  return ingest(videos, store, ClipKind::Appearance, [&](const std::vector<NormalizedImage>& f) {
    std::vector<std::vector<size_t>> out;
    auto kept = sample_appearance_frames(f, params);
    if (!kept.empty()) out.push_back(std::move(kept));
    return out;
  });
}

namespace {

json code_to_json(const LatentCode& c) { return json(std::vector<float>(c.values.begin(), c.values.end())); }

LatentCode code_from_json(const json& j) {
  auto v = j.get<std::vector<float>>();
  if (v.size() != static_cast<size_t>(kLatentDim)) {
    throw ParseError("codebook code has " + std::to_string(v.size()) + " values");
  }
  LatentCode c;
  std::copy(v.begin(), v.end(), c.values.begin());
  return c;
}

json open_codebook(const fs::path& path, const std::string& kind) {
  auto j = read_json_file(path);
  if (!j.is_object() || !j.contains("version") || !j["version"].is_number_integer()) {
    throw ParseError(path.string() + ": codebook lacks an integer version");
  }
  if (j["version"].get<int>() != kCodebookVersion) {
    throw MigrationError(path.string() + ": codebook version " + std::to_string(j["version"].get<int>()) +
                         " is not supported");
  }
  if (j.value("kind", "") != kind) throw ParseError(path.string() + ": expected a " + kind + " codebook");
  return j;
}

}  // namespace

void save_codebook(const fs::path& path, const MotionCodebook& codebook) {
  json entries = json::array();
  for (const auto& [id, code] : codebook.entries) entries.push_back({{"clip_id", id}, {"code", code_to_json(code)}});
  write_json_file(path, {{"version", kCodebookVersion}, {"kind", "motion"}, {"entries", entries}});
}

void save_codebook(const fs::path& path, const AppearanceCodebook& codebook) {
  json entries = json::array();
  for (const auto& [id, codes] : codebook.entries) {
    json seq = json::array();
    for (const auto& c : codes) seq.push_back(code_to_json(c));
    entries.push_back({{"clip_id", id}, {"code_sequence", seq}});
  }
  write_json_file(path, {{"version", kCodebookVersion}, {"kind", "appearance"}, {"entries", entries}});
}

MotionCodebook load_motion_codebook(const fs::path& path) {
  auto j = open_codebook(path, "motion");
  MotionCodebook cb;
  try {
    for (const auto& e : j.at("entries")) cb.entries[e.at("clip_id").get<std::string>()] = code_from_json(e.at("code"));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return cb;
}

AppearanceCodebook load_appearance_codebook(const fs::path& path) {
  auto j = open_codebook(path, "appearance");
  AppearanceCodebook cb;
  try {
    for (const auto& e : j.at("entries")) {
      auto& seq = cb.entries[e.at("clip_id").get<std::string>()];
      for (const auto& c : e.at("code_sequence")) seq.push_back(code_from_json(c));
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return cb;
}

}  // namespace animscape
