#include "animscape/motion.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>
#include <numeric>
#include <random>

#include "animscape/errors.hpp"

namespace animscape {

void MotionHyperParams::validate() const {
  if (lambda_p < 0 || lambda_tv < 0 || !(sigma > 0) || !(learning_rate > 0) || batch_size < 1 || epochs < 0 ||
      !(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ArgumentError("MotionHyperParams: weights must be non-negative, sigma/learning rate/batch size positive");
  }
  if (!(beta > 1.0) && !(allow_unrestricted && beta == 1.0)) {
    throw ArgumentError("MotionHyperParams: beta must be > 1 unless the unrestricted override is set");
  }
}

MotionModel::MotionModel(PredictorConfig predictor_config, EncoderConfig encoder_config, double beta_,
                         int64_t predictor_size_)
    : predictor(predictor_config), encoder(encoder_config), beta(beta_), predictor_size(predictor_size_) {
  if (predictor_config.out_channels != 2) throw ArgumentError("MotionModel: predictor must output 2 channels");
  if (encoder_config.in_channels != 2) throw ArgumentError("MotionModel: encoder must take 2-channel flow");
  if (predictor_size < 8 || predictor_size % 8 != 0) {
    throw ArgumentError("MotionModel: predictor size must be a positive multiple of 8");
  }
}

torch::Tensor motion_photometric_loss(const torch::Tensor& predicted, const torch::Tensor& target) {
  if (predicted.sizes() != target.sizes()) throw ShapeError("motion_photometric_loss: shape mismatch");
  return (target - predicted).pow(2).sum();
}

torch::Tensor weighted_tv_loss(const torch::Tensor& field, const torch::Tensor& guide, double sigma) {
  if (!(sigma > 0)) throw ArgumentError("weighted_tv_loss: sigma must be positive");
  if (field.dim() != 4 || guide.dim() != 4 || field.size(0) != guide.size(0) || field.size(2) != guide.size(2) ||
      field.size(3) != guide.size(3)) {
    throw ShapeError("weighted_tv_loss: field and guide must share [N, *, H, W] grids");
  }
  const int64_t h = field.size(2);
  const int64_t w = field.size(3);
  auto g = guide.detach().to(field.dtype());
  auto total = torch::zeros({}, field.options());
  if (w > 1) {
    auto wgt = torch::exp(-(g.narrow(3, 1, w - 1) - g.narrow(3, 0, w - 1)).abs().sum(1, true) / sigma);
    total = total + (wgt * (field.narrow(3, 1, w - 1) - field.narrow(3, 0, w - 1)).abs()).sum();
  }
  if (h > 1) {
    auto wgt = torch::exp(-(g.narrow(2, 0, h - 1) - g.narrow(2, 1, h - 1)).abs().sum(1, true) / sigma);
    total = total + (wgt * (field.narrow(2, 0, h - 1) - field.narrow(2, 1, h - 1)).abs()).sum();
  }
  return total;
}

torch::Tensor total_variation(const torch::Tensor& field) {
  if (field.dim() != 4) throw ShapeError("total_variation: expected [N, C, H, W]");
  const int64_t h = field.size(2);
  const int64_t w = field.size(3);
  auto total = torch::zeros({}, field.options());
  if (w > 1) total = total + (field.narrow(3, 1, w - 1) - field.narrow(3, 0, w - 1)).abs().sum();
  if (h > 1) total = total + (field.narrow(2, 0, h - 1) - field.narrow(2, 1, h - 1)).abs().sum();
  return total;
}

torch::Tensor motion_total_loss(const torch::Tensor& photometric, const torch::Tensor& tv,
                                const MotionHyperParams& hp) {
  return hp.lambda_p * photometric + hp.lambda_tv * tv;
}

torch::Tensor motion_pair_loss(const torch::Tensor& current, const torch::Tensor& next, const torch::Tensor& flow,
                               const MotionHyperParams& hp) {
  auto reconstructed = ops::warp(current, flow);
  return motion_total_loss(motion_photometric_loss(reconstructed, next), weighted_tv_loss(flow, next, hp.sigma), hp);
}

MotionTrainResult train_motion(const std::vector<Clip>& clips, MotionModel& model, const MotionHyperParams& hp,
                               const MotionObserver& observer) {
  hp.validate();
  if (clips.empty()) throw ArgumentError("train_motion: empty dataset");
  model.beta = hp.beta;
  model.allow_unrestricted = hp.allow_unrestricted;

  MotionTrainResult result;
  const int64_t size = model.predictor_size;
  const int64_t enc = model.encoder->config().input_size;

  struct Prepared {
    std::string id;
    torch::Tensor frames;  // [T, 3, size, size]
  };
  std::vector<Prepared> data;
  for (const auto& clip : clips) {
    if (clip.frames.size() < 2) {
      std::cerr << "train_motion: skipping clip '" << clip.id << "' with fewer than two frames\n";
      result.skipped_clips.push_back(clip.id);
      continue;
    }
    std::vector<torch::Tensor> frames;
    for (const auto& f : clip.frames) frames.push_back(resize(f, size, size).tensor());
    data.push_back({clip.id, torch::stack(frames)});
  }
  if (data.empty()) throw ArgumentError("train_motion: no clip has two or more frames");

  // Common motion fields start at zero and track the latest inferred flow.
  std::vector<torch::Tensor> common(data.size(), torch::zeros({2, enc, enc}));

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
    MotionEpochRecord record;
    record.epoch = epoch;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(hp.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(hp.batch_size));
      std::vector<torch::Tensor> current, next, fields;
      for (size_t k = begin; k < end; ++k) {
        const auto& clip = data[order[k]];
        std::uniform_int_distribution<int64_t> pick(0, clip.frames.size(0) - 2);
        const int64_t t = pick(rng);
        current.push_back(clip.frames[t]);
        next.push_back(clip.frames[t + 1]);
        fields.push_back(common[order[k]]);
      }
      auto it = torch::stack(current);
      auto it1 = torch::stack(next);
      auto codes = model.encoder->forward(torch::stack(fields));
      auto flow = ops::restrict_flow(model.predictor->forward(it, codes), model.beta, model.allow_unrestricted);
      auto lp = motion_photometric_loss(ops::warp(it, flow), it1);
      auto ltv = weighted_tv_loss(flow, it1, hp.sigma);
      auto loss = motion_total_loss(lp, ltv, hp);

      optimizer.zero_grad();
      loss.backward();
      optimizer.step();

      auto stored = ops::resize(flow.detach(), enc, enc);
      for (size_t k = begin; k < end; ++k) common[order[k]] = stored[static_cast<int64_t>(k - begin)].clone();

      record.photometric += lp.item<double>();
      record.tv += ltv.item<double>();
      record.total += loss.item<double>();
    }
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(record);
    if (observer) observer(record);
  }

  torch::NoGradGuard no_grad;
  model.predictor->eval();
  model.encoder->eval();
  for (size_t i = 0; i < data.size(); ++i) {
    result.codebook.entries[data[i].id] = LatentCode::from_tensor(model.encoder->forward(common[i].unsqueeze(0)));
    result.common_fields.emplace(data[i].id, FlowField(common[i]));
  }
  return result;
}

LatentCode encode_motion(MotionModel& model, const FlowField& flow) {
  torch::NoGradGuard no_grad;
  const int64_t enc = model.encoder->config().input_size;
  return LatentCode::from_tensor(model.encoder->forward(resize(flow, enc, enc).batched()));
}

FlowField infer_flow(MotionModel& model, const NormalizedImage& frame, const LatentCode& code) {
  torch::NoGradGuard no_grad;
  const int64_t s = model.predictor_size;
  auto input = resize(frame, s, s).batched().to(torch::kFloat32);
  auto raw = model.predictor->forward(input, code.to_tensor().unsqueeze(0));
  auto flow = ops::restrict_flow(raw, model.beta, model.allow_unrestricted);
  return FlowField(ops::resize(flow, frame.height(), frame.width()).squeeze(0).to(frame.tensor().dtype()));
}

MotionSequence predict_motion_sequence(const NormalizedImage& input, const FlowStepper& stepper, int frames,
                                       double speed_scale) {
  if (frames <= 0) throw ArgumentError("predict_motion_sequence: frame count must be positive");
  torch::NoGradGuard no_grad;
  MotionSequence seq;
  auto accumulated = FlowField::zeros(input.height(), input.width(), input.tensor().options());
  NormalizedImage current = input;
  for (int k = 0; k < frames; ++k) {
    FlowField step = stepper(current);
    if (step.height() != input.height() || step.width() != input.width()) {
      step = resize(step, input.height(), input.width());
    }
    if (speed_scale != 1.0) step = FlowField(step.tensor() * speed_scale);
    accumulated = compose_flows(accumulated, step);
    current = warp(input, accumulated);
    seq.frames.push_back(current);
    seq.flows.push_back(accumulated);
  }
  return seq;
}

MotionSequence predict_motion_sequence(const NormalizedImage& input, MotionModel& model, const LatentCode& code,
                                       int frames, double speed_scale) {
  model.predictor->eval();
  FlowStepper stepper = [&](const NormalizedImage& current) { return infer_flow(model, current, code); };
  return predict_motion_sequence(input, stepper, frames, speed_scale);
}

double mean_reconstruction_rmse(MotionModel& model, const Clip& clip, const LatentCode& code) {
  if (clip.frames.size() < 2) throw ArgumentError("mean_reconstruction_rmse: clip needs two frames");
  torch::NoGradGuard no_grad;
  model.predictor->eval();
  const int64_t s = model.predictor_size;
  double sum = 0.0;
  for (size_t t = 0; t + 1 < clip.frames.size(); ++t) {
    auto cur = resize(clip.frames[t], s, s);
    auto nxt = resize(clip.frames[t + 1], s, s);
    auto flow = infer_flow(model, cur, code);
    auto rec = warp(cur, flow);
    sum += std::sqrt((rec.tensor() - nxt.tensor()).pow(2).mean().item<double>());
  }
  return sum / static_cast<double>(clip.frames.size() - 1);
}

}  // namespace animscape
