#include "animscape/networks.hpp"

#include "animscape/errors.hpp"

namespace animscape {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d make_conv(int64_t in, int64_t out, int64_t kernel, int64_t stride, int64_t padding) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding));
}

torch::nn::InstanceNorm2d make_norm(int64_t channels) {
  return torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(channels));
}

torch::Tensor leaky(const torch::Tensor& x, double slope) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(slope));
}

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

constexpr double kPredictorSlope = 0.1;
constexpr double kEncoderSlope = 0.2;

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(int64_t channels)
    : conv1(register_module("conv1", make_conv(channels, channels, 3, 1, 1))),
      conv2(register_module("conv2", make_conv(channels, channels, 3, 1, 1))),
      norm1(register_module("norm1", make_norm(channels))),
      norm2(register_module("norm2", make_norm(channels))) {}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(norm1(conv1(x)));
  return x + norm2(conv2(y));
}

PredictorNetImpl::PredictorNetImpl(PredictorConfig config) : config_(config) {
  if (config.out_channels < 1 || config.base_channels < 1 || config.residual_blocks < 0) {
    throw ArgumentError("PredictorNet: invalid configuration");
  }
  const int64_t b = config.base_channels;
  conv1 = register_module("conv1", make_conv(3 + kLatentDim, b, 5, 2, 2));
  conv2 = register_module("conv2", make_conv(b + kLatentDim, 2 * b, 3, 2, 1));
  norm2 = register_module("norm2", make_norm(2 * b));
  conv3 = register_module("conv3", make_conv(2 * b + kLatentDim, 4 * b, 3, 2, 1));
  norm3 = register_module("norm3", make_norm(4 * b));
  residual = register_module("residual", torch::nn::Sequential());
  for (int64_t i = 0; i < config.residual_blocks; ++i) residual->push_back(ResidualBlock(4 * b));
  upconv1 = register_module("upconv1", make_conv(8 * b, 2 * b, 3, 1, 1));
  upnorm1 = register_module("upnorm1", make_norm(2 * b));
  upconv2 = register_module("upconv2", make_conv(4 * b, b, 3, 1, 1));
  upnorm2 = register_module("upnorm2", make_norm(b));
  upconv3 = register_module("upconv3", make_conv(2 * b, config.out_channels, 5, 1, 2));
  init_weights(*this);
}

torch::Tensor PredictorNetImpl::forward(const torch::Tensor& images, const torch::Tensor& codes) {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw ShapeError("PredictorNet: expected [N, 3, H, W] images");
  }
  if (codes.dim() != 2 || codes.size(1) != kLatentDim || codes.size(0) != images.size(0)) {
    throw ShapeError("PredictorNet: expected [N, 8] latent codes matching the image batch");
  }
  if (images.size(2) % 8 != 0 || images.size(3) % 8 != 0) {
    throw ShapeError("PredictorNet: spatial dimensions must be divisible by 8");
  }
  auto with_code = [&](const torch::Tensor& x) {
    return torch::cat({x, ops::tile_latent(codes.to(x.dtype()), x.size(2), x.size(3))}, 1);
  };
  auto skip = [&](const torch::Tensor& x, size_t i) { return skip_enabled[i] ? x : torch::zeros_like(x); };

  auto c1 = leaky(conv1(with_code(images)), kPredictorSlope);
  auto c2 = leaky(norm2(conv2(with_code(c1))), kPredictorSlope);
  auto c3 = leaky(norm3(conv3(with_code(c2))), kPredictorSlope);
  auto r = residual->forward(c3);
  auto u1 = leaky(upnorm1(upconv1(upsample2(torch::cat({r, skip(c3, 0)}, 1)))), kPredictorSlope);
  auto u2 = leaky(upnorm2(upconv2(upsample2(torch::cat({u1, skip(c2, 1)}, 1)))), kPredictorSlope);
  return torch::tanh(upconv3(upsample2(torch::cat({u2, skip(c1, 2)}, 1))));
}

DownResidualBlockImpl::DownResidualBlockImpl(int64_t in_channels, int64_t out_channels)
    : norm1(register_module("norm1", make_norm(in_channels))),
      norm2(register_module("norm2", make_norm(in_channels))),
      conv1(register_module("conv1", make_conv(in_channels, in_channels, 3, 1, 1))),
      conv2(register_module("conv2", make_conv(in_channels, out_channels, 3, 1, 1))),
      shortcut(register_module("shortcut", make_conv(in_channels, out_channels, 1, 1, 0))) {}

torch::Tensor DownResidualBlockImpl::forward(const torch::Tensor& x) {
  auto y = conv1(leaky(norm1(x), kEncoderSlope));
  y = F::avg_pool2d(conv2(leaky(norm2(y), kEncoderSlope)), F::AvgPool2dFuncOptions(2));
  return y + shortcut(F::avg_pool2d(x, F::AvgPool2dFuncOptions(2)));
}

EncoderNetImpl::EncoderNetImpl(EncoderConfig config) : config_(config) {
  if (config.in_channels < 1 || config.base_channels < 1 || config.input_size < 16 ||
      config.input_size % 16 != 0) {
    throw ArgumentError("EncoderNet: invalid configuration");
  }
  const int64_t b = config.base_channels;
  conv1 = register_module("conv1", make_conv(config.in_channels, b, 4, 2, 1));
  res1 = register_module("res1", DownResidualBlock(b, 2 * b));
  res2 = register_module("res2", DownResidualBlock(2 * b, 3 * b));
  res3 = register_module("res3", DownResidualBlock(3 * b, 4 * b));
  fc = register_module("fc", torch::nn::Linear(4 * b, kLatentDim));
  init_weights(*this);
}

torch::Tensor EncoderNetImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != config_.in_channels) {
    throw ShapeError("EncoderNet: expected [N, " + std::to_string(config_.in_channels) + ", H, W] input");
  }
  if (x.size(2) != config_.input_size || x.size(3) != config_.input_size) {
    throw ShapeError("EncoderNet: input must be resized to " + std::to_string(config_.input_size) +
                     "x" + std::to_string(config_.input_size));
  }
  auto y = res3(res2(res1(conv1(x))));
  y = F::avg_pool2d(leaky(y, kEncoderSlope), F::AvgPool2dFuncOptions(config_.input_size / 16));
  return fc(y.flatten(1));
}

LatentLstmImpl::LatentLstmImpl(LatentLstmConfig config) : config_(config) {
  if (config.hidden < 1) throw ArgumentError("LatentLstm: hidden width must be positive");
  fc_in = register_module("fc_in", torch::nn::Linear(kLatentDim, config.hidden));
  cell = register_module("cell", torch::nn::LSTMCell(config.hidden, config.hidden));
  fc_out = register_module("fc_out", torch::nn::Linear(config.hidden, kLatentDim));
}

torch::Tensor LatentLstmImpl::step(const torch::Tensor& code, State& state) {
  if (code.dim() != 2 || code.size(1) != kLatentDim) {
    throw ShapeError("LatentLstm: expected [N, 8] codes");
  }
  auto h = fc_in(code);
  std::tuple<torch::Tensor, torch::Tensor> next;
  if (state.first.defined()) {
    next = cell->forward(h, std::make_tuple(state.first, state.second));
  } else {
    next = cell->forward(h);
  }
  state = {std::get<0>(next), std::get<1>(next)};
  return fc_out(state.first);
}

torch::Tensor LatentLstmImpl::forward(const torch::Tensor& sequence) {
  if (sequence.dim() != 3 || sequence.size(2) != kLatentDim) {
    throw ShapeError("LatentLstm: expected [N, T, 8] sequence");
  }
  State state;
  std::vector<torch::Tensor> out;
  out.reserve(sequence.size(1));
  for (int64_t t = 0; t < sequence.size(1); ++t) out.push_back(step(sequence.select(1, t), state));
  return torch::stack(out, 1);
}

void init_weights(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  module.apply([](torch::nn::Module& m) {
    if (auto* conv = m.as<torch::nn::Conv2d>()) {
      conv->weight.normal_(0.0, 0.02);
      if (conv->bias.defined()) conv->bias.zero_();
    }
  });
}

double parameter_checksum(const torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  double sum = 0.0;
  for (const auto& p : module.parameters()) {
    auto flat = p.detach().to(torch::kFloat64).flatten();
    auto ramp = torch::arange(1, flat.numel() + 1, torch::kFloat64).sqrt();
    sum += (flat * ramp).sum().item<double>();
  }
  return sum;
}

}  // namespace animscape
