#include "animscape/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "animscape/errors.hpp"

namespace animscape {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersionKey = "animscape.format_version";
constexpr const char* kKindKey = "animscape.kind";
constexpr const char* kConfigKey = "animscape.config";

void write_archive(const fs::path& path, torch::nn::Module& module, const std::string& kind, const json& config) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  torch::serialize::OutputArchive archive;
  module.save(archive);
  archive.write(kVersionKey, c10::IValue(kCheckpointVersion));
  archive.write(kKindKey, c10::IValue(kind));
  archive.write(kConfigKey, c10::IValue(config.dump()));
  archive.save_to(path.string());
}

struct OpenedArchive {
  torch::serialize::InputArchive archive;
  json config;
};

OpenedArchive open_archive(const fs::path& path, const std::string& expected_kind) {
  if (!fs::exists(path)) throw MissingArtifactError("checkpoint not found: " + path.string());
  OpenedArchive opened;
  try {
    opened.archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw ParseError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  c10::IValue version, kind, config;
  if (!opened.archive.try_read(kVersionKey, version) || !opened.archive.try_read(kKindKey, kind) ||
      !opened.archive.try_read(kConfigKey, config)) {
    throw ParseError("checkpoint " + path.string() + " lacks metadata records");
  }
  if (version.toInt() != kCheckpointVersion) {
    throw MigrationError("checkpoint " + path.string() + " has format version " +
                         std::to_string(version.toInt()));
  }
  if (kind.toStringRef() != expected_kind) {
    throw ParseError("checkpoint " + path.string() + " holds a " + kind.toStringRef() + ", expected " +
                     expected_kind);
  }
  try {
    opened.config = json::parse(config.toStringRef());
  } catch (const json::exception& e) {
    throw ParseError("checkpoint config record is not valid JSON: " + std::string(e.what()));
  }
  return opened;
}

template <typename Net>
void read_tensors(Net& net, torch::serialize::InputArchive& archive, const fs::path& path) {
  try {
    net->load(archive);
  } catch (const c10::Error& e) {
    throw ParseError("checkpoint " + path.string() + " tensors do not match its config: " +
                     e.what_without_backtrace());
  }
}

}  // namespace

void save_checkpoint(const fs::path& path, PredictorNet& net) {
  const auto& c = net->config();
  write_archive(path, *net, "predictor",
                {{"out_channels", c.out_channels}, {"base_channels", c.base_channels},
                 {"residual_blocks", c.residual_blocks}});
}

void save_checkpoint(const fs::path& path, EncoderNet& net) {
  const auto& c = net->config();
  write_archive(path, *net, "encoder",
                {{"in_channels", c.in_channels}, {"base_channels", c.base_channels}, {"input_size", c.input_size}});
}

void save_checkpoint(const fs::path& path, LatentLstm& net) {
  write_archive(path, *net, "latent_lstm", {{"hidden", net->config().hidden}});
}

static int64_t config_int(const json& config, const char* key, const fs::path& path) {
  try {
    return config.at(key).get<int64_t>();
  } catch (const json::exception&) {
    throw ParseError("checkpoint " + path.string() + " config lacks integer '" + key + "'");
  }
}

PredictorNet load_predictor(const fs::path& path) {
  auto opened = open_archive(path, "predictor");
  PredictorConfig c;
  c.out_channels = config_int(opened.config, "out_channels", path);
  c.base_channels = config_int(opened.config, "base_channels", path);
  c.residual_blocks = config_int(opened.config, "residual_blocks", path);
  PredictorNet net(c);
  read_tensors(net, opened.archive, path);
  return net;
}

EncoderNet load_encoder(const fs::path& path) {
  auto opened = open_archive(path, "encoder");
  EncoderConfig c;
  c.in_channels = config_int(opened.config, "in_channels", path);
  c.base_channels = config_int(opened.config, "base_channels", path);
  c.input_size = config_int(opened.config, "input_size", path);
  EncoderNet net(c);
  read_tensors(net, opened.archive, path);
  return net;
}

LatentLstm load_latent_lstm(const fs::path& path) {
  auto opened = open_archive(path, "latent_lstm");
  LatentLstmConfig c;
  c.hidden = config_int(opened.config, "hidden", path);
  LatentLstm net(c);
  read_tensors(net, opened.archive, path);
  return net;
}

}  // namespace animscape
