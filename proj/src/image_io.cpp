#include "animscape/image_io.hpp"

#include <algorithm>
#include <cstdio>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "animscape/errors.hpp"

namespace animscape {

namespace fs = std::filesystem;

namespace {

NormalizedImage from_bgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  if (bgr.channels() == 1) {
    cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
  } else if (bgr.channels() == 4) {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  }
  if (rgb.depth() != CV_8U) rgb.convertTo(rgb, CV_8U);
  auto raw = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return normalize_image(raw);
}

cv::Mat to_bgr(const NormalizedImage& image) {
  auto u8 = to_8bit(image);
  cv::Mat rgb(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC3, u8.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

}  // namespace

NormalizedImage load_image(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifactError("image not found: " + path.string());
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ParseError("cannot decode image: " + path.string());
  return from_bgr(bgr);
}

void save_image(const fs::path& path, const NormalizedImage& image) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), to_bgr(image))) {
    throw std::runtime_error("cannot write image: " + path.string());
  }
}

NormalizedImage decode_image(const std::string& bytes) {
  if (bytes.empty()) throw ParseError("empty image payload");
  std::vector<uchar> buf(bytes.begin(), bytes.end());
  cv::Mat bgr = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (bgr.empty()) throw ParseError("undecodable image payload");
  return from_bgr(bgr);
}

std::string encode_png(const NormalizedImage& image) {
  std::vector<uchar> buf;
  cv::imencode(".png", to_bgr(image), buf);
  return {buf.begin(), buf.end()};
}

std::vector<NormalizedImage> read_video_frames(const fs::path& source) {
  if (!fs::exists(source)) throw MissingArtifactError("video source not found: " + source.string());
  std::vector<NormalizedImage> frames;
  if (fs::is_directory(source)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(source)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) frames.push_back(load_image(f));
    return frames;
  }
  cv::VideoCapture capture(source.string());
  if (!capture.isOpened()) throw ParseError("cannot decode video: " + source.string());
  cv::Mat bgr;
  while (capture.read(bgr)) frames.push_back(from_bgr(bgr));
  if (frames.empty()) throw ParseError("video has no decodable frames: " + source.string());
  return frames;
}

void save_frame_sequence(const fs::path& dir, const std::vector<NormalizedImage>& frames) {
  fs::create_directories(dir);
  char name[32];
  for (size_t i = 0; i < frames.size(); ++i) {
    std::snprintf(name, sizeof(name), "frame_%06zu.png", i);
    save_image(dir / name, frames[i]);
  }
}

void write_video(const fs::path& path, const std::vector<NormalizedImage>& frames, double fps) {
  if (frames.empty()) throw ArgumentError("write_video: no frames");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const int fourcc = path.extension() == ".avi" ? cv::VideoWriter::fourcc('M', 'J', 'P', 'G')
                                                : cv::VideoWriter::fourcc('m', 'p', '4', 'v');
  const cv::Size size(static_cast<int>(frames.front().width()), static_cast<int>(frames.front().height()));
  cv::VideoWriter writer(path.string(), fourcc, fps, size);
  if (!writer.isOpened()) throw std::runtime_error("cannot open video writer for " + path.string());
  for (const auto& f : frames) writer.write(to_bgr(f));
}

}  // namespace animscape
