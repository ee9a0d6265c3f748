#pragma once

// Fixed (never trained) convolutional feature extractors exposing named
// activation taps, and Gram-matrix utilities for style statistics.

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <torch/torch.h>
#include <vector>

namespace animscape {

inline const std::vector<std::string> kStyleTaps = {"relu2_2", "relu3_3", "relu4_3"};
inline const std::string kContentTap = "relu1_2";

/// A frozen sequential network with named taps. Inputs are [N, 3, H, W]
/// images in [-1, 1]; preprocessing (resize, mean/std) happens inside.
/// Parameters never require gradients, but gradients flow to the input.
class FeatureExtractor : public torch::nn::Module {
 public:
  /// Activations for each requested tap. Unknown names throw ArgumentError.
  std::map<std::string, torch::Tensor> extract(const torch::Tensor& images,
                                               const std::vector<std::string>& taps);
  std::vector<std::string> tap_names() const;
  int64_t input_size() const { return input_size_; }

 protected:
  /// input_size <= 0 disables the resize step.
  FeatureExtractor(int64_t input_size, bool imagenet_normalization);
  void add_layer(torch::nn::AnyModule layer);
  void add_tap(std::string name);
  void freeze();

  torch::nn::Sequential features{nullptr};

 private:
  std::map<std::string, size_t> taps_;  // tap name -> index of the layer it follows
  int64_t input_size_;
  bool imagenet_normalization_;
};

/// VGG16 convolutional trunk with layer indices matching the common
/// pretrained state-dict layout (features.<i>.weight / .bias).
class Vgg16Extractor : public FeatureExtractor {
 public:
  explicit Vgg16Extractor(int64_t input_size = 256);

  /// Loads `features.*` tensors from a pickled state dict (torch.save of a
  /// dict of tensors, zip or legacy container). Missing keys throw ParseError.
  void load_weights(const std::filesystem::path& path);
};

/// Small randomly-initialized (seeded) extractor with the same tap names as
/// VGG16. Used by tests and smoke-scale runs where pretrained weights are
/// unavailable.
class CompactExtractor : public FeatureExtractor {
 public:
  explicit CompactExtractor(int64_t input_size = 0, uint64_t seed = 7, int64_t width = 8);
};

/// [N, C, H, W] -> [N, C, C] with G = F F^T / (C H W).
torch::Tensor gram_matrix(const torch::Tensor& features);

std::map<std::string, torch::Tensor> gram_features(FeatureExtractor& extractor,
                                                   const torch::Tensor& images,
                                                   const std::vector<std::string>& taps);

}  // namespace animscape
