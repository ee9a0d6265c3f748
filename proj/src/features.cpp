#include "animscape/features.hpp"

#include <fstream>
#include <iterator>
#include <torch/serialize.h>

#include "animscape/core.hpp"
#include "animscape/errors.hpp"

namespace animscape {

namespace {

torch::nn::AnyModule conv3x3(int64_t in, int64_t out) {
  return torch::nn::AnyModule(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)));
}
torch::nn::AnyModule relu() { return torch::nn::AnyModule(torch::nn::ReLU()); }
torch::nn::AnyModule pool() {
  return torch::nn::AnyModule(torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2).stride(2)));
}

}  // namespace

FeatureExtractor::FeatureExtractor(int64_t input_size, bool imagenet_normalization)
    : features(register_module("features", torch::nn::Sequential())),
      input_size_(input_size),
      imagenet_normalization_(imagenet_normalization) {}

void FeatureExtractor::add_layer(torch::nn::AnyModule layer) { features->push_back(std::move(layer)); }

void FeatureExtractor::add_tap(std::string name) { taps_[std::move(name)] = features->size() - 1; }

void FeatureExtractor::freeze() {
  for (auto& p : parameters()) p.set_requires_grad(false);
  eval();
}

std::vector<std::string> FeatureExtractor::tap_names() const {
  std::vector<std::string> names;
  for (const auto& [name, index] : taps_) names.push_back(name);
  return names;
}

std::map<std::string, torch::Tensor> FeatureExtractor::extract(const torch::Tensor& images,
                                                               const std::vector<std::string>& taps) {
  size_t last = 0;
  std::map<size_t, std::vector<std::string>> wanted;
  for (const auto& name : taps) {
    auto it = taps_.find(name);
    if (it == taps_.end()) throw ArgumentError("unknown feature tap: " + name);
    wanted[it->second].push_back(name);
    last = std::max(last, it->second);
  }
  if (images.dim() != 4 || images.size(1) != 3) {
    throw ShapeError("FeatureExtractor: expected [N, 3, H, W] images");
  }
  std::map<std::string, torch::Tensor> out;
  if (taps.empty()) return out;

  auto x = images;
  if (input_size_ > 0) x = ops::resize(x, input_size_, input_size_);
  x = (x + 1.0) * 0.5;
  if (imagenet_normalization_) {
    auto mean = torch::tensor({0.485, 0.456, 0.406}, x.options()).view({1, 3, 1, 1});
    auto stdev = torch::tensor({0.229, 0.224, 0.225}, x.options()).view({1, 3, 1, 1});
    x = (x - mean) / stdev;
  }
  auto layer = features->begin();
  for (size_t i = 0; i <= last; ++i, ++layer) {
    x = layer->forward(x);
    if (auto it = wanted.find(i); it != wanted.end()) {
      for (const auto& name : it->second) out[name] = x;
    }
  }
  return out;
}

Vgg16Extractor::Vgg16Extractor(int64_t input_size) : FeatureExtractor(input_size, true) {
  // Block widths and layer indices follow the standard VGG16 trunk up to relu4_3.
  const std::vector<std::vector<int64_t>> blocks = {{64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}};
  const std::vector<std::string> names = {"relu1_2", "relu2_2", "relu3_3", "relu4_3"};
  int64_t in = 3;
  for (size_t b = 0; b < blocks.size(); ++b) {
    if (b > 0) add_layer(pool());
    for (int64_t out : blocks[b]) {
      add_layer(conv3x3(in, out));
      add_layer(relu());
      in = out;
    }
    add_tap(names[b]);
  }
  freeze();
}

void Vgg16Extractor::load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("feature-extractor weights not found: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  c10::IValue value;
  try {
    value = torch::pickle_load(bytes);
  } catch (const c10::Error& e) {
    throw ParseError("cannot read feature-extractor weights: " + std::string(e.what_without_backtrace()));
  }
  if (!value.isGenericDict()) throw ParseError("feature-extractor weights: expected a dict of tensors");
  auto dict = value.toGenericDict();
  torch::NoGradGuard no_grad;
  for (auto& item : named_parameters()) {
    const auto& key = item.key();
    auto it = dict.find(c10::IValue(key));
    if (it == dict.end() || !it->value().isTensor()) {
      throw ParseError("feature-extractor weights: missing tensor " + key);
    }
    auto src = it->value().toTensor();
    if (src.sizes() != item.value().sizes()) {
      throw ParseError("feature-extractor weights: shape mismatch for " + key);
    }
    item.value().copy_(src);
  }
}

CompactExtractor::CompactExtractor(int64_t input_size, uint64_t seed, int64_t width)
    : FeatureExtractor(input_size, false) {
  const std::vector<std::vector<int64_t>> blocks = {
      {width, width}, {2 * width, 2 * width}, {2 * width, 2 * width}, {2 * width, 2 * width}};
  const std::vector<std::string> names = {"relu1_2", "relu2_2", "relu3_3", "relu4_3"};
  int64_t in = 3;
  for (size_t b = 0; b < blocks.size(); ++b) {
    if (b > 0) add_layer(pool());
    for (int64_t out : blocks[b]) {
      add_layer(conv3x3(in, out));
      add_layer(relu());
      in = out;
    }
    add_tap(names[b]);
  }
  torch::NoGradGuard no_grad;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  for (auto& item : named_parameters()) {
    auto& p = item.value();
    if (p.dim() == 4) {
      const double fan_in = static_cast<double>(p.size(1) * p.size(2) * p.size(3));
      p.normal_(0.0, std::sqrt(2.0 / fan_in), gen);
    } else {
      p.normal_(0.0, 0.05, gen);
    }
  }
  freeze();
}

torch::Tensor gram_matrix(const torch::Tensor& features) {
  if (features.dim() != 4) throw ShapeError("gram_matrix: expected [N, C, H, W] features");
  const auto n = features.size(0);
  const auto c = features.size(1);
  const auto positions = features.size(2) * features.size(3);
  auto flat = features.reshape({n, c, positions});
  return torch::bmm(flat, flat.transpose(1, 2)) / static_cast<double>(c * positions);
}

std::map<std::string, torch::Tensor> gram_features(FeatureExtractor& extractor, const torch::Tensor& images,
                                                   const std::vector<std::string>& taps) {
  auto feats = extractor.extract(images, taps);
  std::map<std::string, torch::Tensor> grams;
  for (auto& [name, f] : feats) grams[name] = gram_matrix(f);
  return grams;
}

}  // namespace animscape
