#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "animscape/core.hpp"

namespace animscape {

/// Reads an 8-bit PNG/JPEG (any format OpenCV decodes) as RGB.
NormalizedImage load_image(const std::filesystem::path& path);
/// Writes an 8-bit image; the container is chosen from the extension.
void save_image(const std::filesystem::path& path, const NormalizedImage& image);

/// Decodes an in-memory encoded image. Throws ParseError when undecodable.
NormalizedImage decode_image(const std::string& bytes);
std::string encode_png(const NormalizedImage& image);

/// Frames of a video source: either a directory of still images (sorted by
/// file name) or a container OpenCV can decode.
std::vector<NormalizedImage> read_video_frames(const std::filesystem::path& source);

/// Writes frame_000000.png, frame_000001.png, ... into `dir`.
void save_frame_sequence(const std::filesystem::path& dir, const std::vector<NormalizedImage>& frames);
/// Encodes frames into a video container (codec picked from the extension:
/// .avi uses MJPG, anything else mp4v).
void write_video(const std::filesystem::path& path, const std::vector<NormalizedImage>& frames, double fps);

}  // namespace animscape
