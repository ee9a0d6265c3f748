#pragma once

#include <map>
#include <string>
#include <vector>

#include "animscape/core.hpp"

namespace animscape {

/// One latent code per training clip.
struct MotionCodebook {
  std::map<std::string, LatentCode> entries;

  bool operator==(const MotionCodebook&) const = default;
};

/// One latent code per sampled frame of each training clip, in time order.
struct AppearanceCodebook {
  std::map<std::string, std::vector<LatentCode>> entries;

  bool operator==(const AppearanceCodebook&) const = default;
};

inline LatentCode mean_code(const std::vector<LatentCode>& codes) {
  LatentCode sum;
  if (codes.empty()) return sum;
  for (const auto& c : codes) sum = sum + c;
  return sum * (1.0f / static_cast<float>(codes.size()));
}

}  // namespace animscape
