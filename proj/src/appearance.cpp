#include "animscape/appearance.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>
#include <numeric>
#include <random>

#include "animscape/errors.hpp"

namespace animscape {

void AppearanceHyperParams::validate() const {
  if (lambda_s < 0 || lambda_sp < 0 || lambda_c < 0 || lambda_tv < 0 || !(sigma > 0) || sp_grid < 1 ||
      !(learning_rate > 0) || batch_size < 1 || epochs < 0 || !(adam_beta1 >= 0 && adam_beta1 < 1) ||
      !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ArgumentError("AppearanceHyperParams: weights must be non-negative, sigma/learning rate/batch positive");
  }
}

AppearanceModel::AppearanceModel(PredictorConfig predictor_config, EncoderConfig encoder_config,
                                 int64_t predictor_size_)
    : predictor(predictor_config), encoder(encoder_config), predictor_size(predictor_size_) {
  if (predictor_config.out_channels != 6 && predictor_config.out_channels != 3) {
    throw ArgumentError("AppearanceModel: predictor must output 6 (maps) or 3 (direct) channels");
  }
  if (encoder_config.in_channels != 3) throw ArgumentError("AppearanceModel: encoder must take RGB images");
  if (predictor_size < 8 || predictor_size % 8 != 0) {
    throw ArgumentError("AppearanceModel: predictor size must be a positive multiple of 8");
  }
}

torch::Tensor color_transfer(const torch::Tensor& weight, const torch::Tensor& bias, const torch::Tensor& images) {
  if (weight.sizes() != images.sizes() || bias.sizes() != images.sizes()) {
    throw ShapeError("color_transfer: map and image shapes differ");
  }
  return torch::tanh(weight * images + bias);
}

NormalizedImage color_transfer(const ColorTransferMap& map, const NormalizedImage& image) {
  if (!map.weight.defined() || !map.bias.defined() || map.weight.dim() != 3 || map.bias.dim() != 3) {
    throw ShapeError("color_transfer: map must hold [3, H, W] weight and bias");
  }
  return NormalizedImage(color_transfer(map.weight, map.bias, image.tensor()));
}

torch::Tensor style_loss(FeatureExtractor& fx, const torch::Tensor& output, const torch::Tensor& target) {
  if (output.sizes() != target.sizes()) throw ShapeError("style_loss: output and target shapes differ");
  const int64_t n = output.size(0);
  auto feats = fx.extract(torch::cat({output, target.detach()}, 0), kStyleTaps);
  auto total = torch::zeros({}, output.options());
  for (auto& [name, f] : feats) {
    auto g = gram_matrix(f);
    total = total + (g.narrow(0, n, n) - g.narrow(0, 0, n)).pow(2).sum();
  }
  return total;
}

torch::Tensor spatial_pyramid_loss(const torch::Tensor& output, const torch::Tensor& target, int64_t grid) {
  if (output.sizes() != target.sizes() || output.dim() != 4) {
    throw ShapeError("spatial_pyramid_loss: expected matching [N, C, H, W] tensors");
  }
  if (grid < 1 || output.size(2) < grid || output.size(3) < grid) {
    throw ArgumentError("spatial_pyramid_loss: image smaller than the pooling grid");
  }
  auto po = torch::adaptive_avg_pool2d(output, {grid, grid});
  auto pt = torch::adaptive_avg_pool2d(target, {grid, grid});
  return (pt - po).pow(2).sum();
}

torch::Tensor content_loss(FeatureExtractor& fx, const torch::Tensor& output, const torch::Tensor& source) {
  if (output.sizes() != source.sizes()) throw ShapeError("content_loss: output and source shapes differ");
  const int64_t n = output.size(0);
  auto f = fx.extract(torch::cat({output, source.detach()}, 0), {kContentTap}).at(kContentTap);
  return (f.narrow(0, n, n) - f.narrow(0, 0, n)).pow(2).sum();
}

torch::Tensor appearance_total_loss(const AppearanceLossTerms& t, const AppearanceHyperParams& hp) {
  return hp.lambda_s * t.style + hp.lambda_sp * t.pyramid + hp.lambda_c * t.content + hp.lambda_tv * t.tv;
}

AppearanceLossTerms appearance_loss_terms(FeatureExtractor& fx, const torch::Tensor& raw, const torch::Tensor& source,
                                          const torch::Tensor& target, const AppearanceHyperParams& hp,
                                          torch::Tensor* output) {
  if (raw.dim() != 4 || (raw.size(1) != 6 && raw.size(1) != 3)) {
    throw ShapeError("appearance_loss_terms: raw output must be [N, 6, H, W] or [N, 3, H, W]");
  }
  torch::Tensor out = raw.size(1) == 6 ? color_transfer(raw.narrow(1, 0, 3), raw.narrow(1, 3, 3), source) : raw;
  AppearanceLossTerms terms;
  terms.style = hp.lambda_s > 0 ? style_loss(fx, out, target) : torch::zeros({}, out.options());
  terms.pyramid = hp.lambda_sp > 0 ? spatial_pyramid_loss(out, target, hp.sp_grid) : torch::zeros({}, out.options());
  terms.content = hp.lambda_c > 0 ? content_loss(fx, out, source) : torch::zeros({}, out.options());
  terms.tv = weighted_tv_loss(raw, source, hp.sigma);
  if (output) *output = out;
  return terms;
}

AppearanceTrainResult train_appearance(const std::vector<Clip>& clips, AppearanceModel& model, FeatureExtractor& fx,
                                       const AppearanceHyperParams& hp, const AppearanceObserver& observer) {
  hp.validate();
  if (clips.empty()) throw ArgumentError("train_appearance: empty dataset");
  AppearanceTrainResult result;
  const int64_t size = model.predictor_size;
  const int64_t enc = model.encoder->config().input_size;

  struct Prepared {
    std::string id;
    torch::Tensor frames;   // [T, 3, size, size]
    torch::Tensor encoded;  // [T, 3, enc, enc]
  };
  std::vector<Prepared> data;
  for (const auto& clip : clips) {
    if (clip.frames.empty()) {
      std::cerr << "train_appearance: skipping empty clip '" << clip.id << "'\n";
      result.skipped_clips.push_back(clip.id);
      continue;
    }
    std::vector<torch::Tensor> frames;
    for (const auto& f : clip.frames) frames.push_back(resize(f, size, size).tensor());
    auto stacked = torch::stack(frames);
    data.push_back({clip.id, stacked, ops::resize(stacked, enc, enc)});
  }
  if (data.empty()) throw ArgumentError("train_appearance: every clip is empty");

  std::vector<torch::Tensor> params = model.predictor->parameters();
  for (auto& p : model.encoder->parameters()) params.push_back(p);
  torch::optim::Adam optimizer(
      params, torch::optim::AdamOptions(hp.learning_rate).betas({hp.adam_beta1, hp.adam_beta2}));

  std::mt19937_64 rng(hp.seed);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  model.predictor->train();
  model.encoder->train();
  const auto start = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    AppearanceEpochRecord record;
    record.epoch = epoch;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(hp.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(hp.batch_size));
      std::vector<torch::Tensor> sources, targets, encoded;
      for (size_t k = begin; k < end; ++k) {
        const auto& clip = data[order[k]];
        std::uniform_int_distribution<int64_t> pick(0, clip.frames.size(0) - 1);
        const int64_t t = pick(rng);
        const int64_t tau = pick(rng);
        sources.push_back(clip.frames[t]);
        targets.push_back(clip.frames[tau]);
        encoded.push_back(clip.encoded[tau]);
      }
      auto src = torch::stack(sources);
      auto tgt = torch::stack(targets);
      auto codes = model.encoder->forward(torch::stack(encoded));
      auto raw = model.predictor->forward(src, codes);
      auto terms = appearance_loss_terms(fx, raw, src, tgt, hp);
      auto loss = appearance_total_loss(terms, hp);

      optimizer.zero_grad();
      loss.backward();
      optimizer.step();

      record.style += terms.style.item<double>();
      record.pyramid += terms.pyramid.item<double>();
      record.content += terms.content.item<double>();
      record.tv += terms.tv.item<double>();
      record.total += loss.item<double>();
    }
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(record);
    if (observer) observer(record);
  }

  torch::NoGradGuard no_grad;
  model.predictor->eval();
  model.encoder->eval();
  for (const auto& clip : data) {
    auto codes = model.encoder->forward(clip.encoded);
    auto& seq = result.codebook.entries[clip.id];
    for (int64_t i = 0; i < codes.size(0); ++i) seq.push_back(LatentCode::from_tensor(codes[i]));
  }
  return result;
}

LatentCode encode_appearance(AppearanceModel& model, const NormalizedImage& image) {
  torch::NoGradGuard no_grad;
  model.encoder->eval();
  const int64_t enc = model.encoder->config().input_size;
  return LatentCode::from_tensor(model.encoder->forward(resize(image, enc, enc).batched().to(torch::kFloat32)));
}

std::vector<LatentCode> encode_appearance_sequence(AppearanceModel& model,
                                                   const std::vector<NormalizedImage>& frames) {
  std::vector<LatentCode> codes;
  codes.reserve(frames.size());
  for (const auto& f : frames) codes.push_back(encode_appearance(model, f));
  return codes;
}

AppearanceFrame predict_appearance_frame(AppearanceModel& model, const NormalizedImage& input,
                                         const LatentCode& code) {
  torch::NoGradGuard no_grad;
  model.predictor->eval();
  const int64_t s = model.predictor_size;
  auto small = resize(input, s, s).batched().to(torch::kFloat32);
  auto raw = model.predictor->forward(small, code.to_tensor().unsqueeze(0));
  auto native = ops::resize(raw, input.height(), input.width()).squeeze(0).to(input.tensor().dtype());
  AppearanceFrame frame;
  if (model.direct()) {
    frame.image = NormalizedImage(native.clamp(-1.0, 1.0));
    return frame;
  }
  frame.map = ColorTransferMap::from_channels(native);
  frame.image = color_transfer(frame.map, input);
  return frame;
}

}  // namespace animscape
