#pragma once

// Network checkpoints: a torch serialization archive holding the named
// parameter/buffer tensors plus three metadata records:
//   animscape.format_version  int   (currently 1)
//   animscape.kind            str   "predictor" | "encoder" | "latent_lstm"
//   animscape.config          str   JSON architecture record
// Loading rebuilds the module from the config record before reading tensors.

#include <filesystem>

#include "animscape/networks.hpp"

namespace animscape {

inline constexpr int64_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, PredictorNet& net);
void save_checkpoint(const std::filesystem::path& path, EncoderNet& net);
void save_checkpoint(const std::filesystem::path& path, LatentLstm& net);

PredictorNet load_predictor(const std::filesystem::path& path);
EncoderNet load_encoder(const std::filesystem::path& path);
LatentLstm load_latent_lstm(const std::filesystem::path& path);

}  // namespace animscape
