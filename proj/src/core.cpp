#include "animscape/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "animscape/errors.hpp"

namespace animscape {

namespace {

std::string shape_string(const torch::Tensor& t) {
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

void require_chw(const torch::Tensor& t, int64_t channels, const char* what) {
  if (!t.defined() || t.dim() != 3 || t.size(0) != channels || t.size(1) < 1 || t.size(2) < 1) {
    throw ShapeError(std::string(what) + ": expected [" + std::to_string(channels) +
                     ", H, W], got " + (t.defined() ? shape_string(t) : "undefined"));
  }
}

void require_same_grid(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.dim() != 4 || b.dim() != 4 || a.size(0) != b.size(0) || a.size(2) != b.size(2) ||
      a.size(3) != b.size(3)) {
    throw ShapeError(std::string(what) + ": spatial shape mismatch " + shape_string(a) +
                     " vs " + shape_string(b));
  }
}

// Mirror index for reflect padding: -1 -> 1, n -> n - 2.
int64_t mirror(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

torch::Tensor mirror_indices(int64_t n, int64_t margin) {
  std::vector<int64_t> idx;
  idx.reserve(n + 2 * margin);
  for (int64_t i = -margin; i < n + margin; ++i) idx.push_back(mirror(i, n));
  return torch::tensor(idx, torch::kLong);
}

// Folds continuous pixel coordinates into [0, n - 1] by reflection about the
// edge sample centers. Used when the displacement is too large to pad.
torch::Tensor fold_coordinates(const torch::Tensor& p, int64_t n) {
  if (n == 1) return torch::zeros_like(p);
  const double period = 2.0 * static_cast<double>(n - 1);
  auto r = torch::remainder(p, period);
  return torch::where(r > static_cast<double>(n - 1), period - r, r);
}

}  // namespace

NormalizedImage::NormalizedImage(torch::Tensor chw) : data_(std::move(chw)) {
  require_chw(data_, 3, "NormalizedImage");
}

FlowField::FlowField(torch::Tensor chw) : data_(std::move(chw)) {
  require_chw(data_, 2, "FlowField");
}

FlowField FlowField::zeros(int64_t height, int64_t width, torch::TensorOptions options) {
  return FlowField(torch::zeros({2, height, width}, options));
}

ColorTransferMap ColorTransferMap::from_channels(const torch::Tensor& six_channel) {
  require_chw(six_channel, 6, "ColorTransferMap");
  return {six_channel.slice(0, 0, 3), six_channel.slice(0, 3, 6)};
}

torch::Tensor ColorTransferMap::to_channels() const {
  require_chw(weight, 3, "ColorTransferMap weight");
  require_chw(bias, 3, "ColorTransferMap bias");
  if (weight.sizes() != bias.sizes()) throw ShapeError("ColorTransferMap: weight/bias shape mismatch");
  return torch::cat({weight, bias}, 0);
}

torch::Tensor LatentCode::to_tensor(torch::Dtype dtype) const {
  return torch::from_blob(const_cast<float*>(values.data()), {kLatentDim}, torch::kFloat32)
      .clone()
      .to(dtype);
}

LatentCode LatentCode::from_tensor(const torch::Tensor& t) {
  if (!t.defined() || t.numel() != kLatentDim) {
    throw ShapeError("LatentCode: expected " + std::to_string(kLatentDim) + " elements");
  }
  auto flat = t.detach().to(torch::kCPU, torch::kFloat32).contiguous().view({kLatentDim});
  LatentCode code;
  std::copy_n(flat.data_ptr<float>(), kLatentDim, code.values.begin());
  return code;
}

LatentCode LatentCode::operator+(const LatentCode& o) const {
  LatentCode r;
  for (int64_t i = 0; i < kLatentDim; ++i) r.values[i] = values[i] + o.values[i];
  return r;
}

LatentCode LatentCode::operator-(const LatentCode& o) const {
  LatentCode r;
  for (int64_t i = 0; i < kLatentDim; ++i) r.values[i] = values[i] - o.values[i];
  return r;
}

LatentCode LatentCode::operator*(float s) const {
  LatentCode r;
  for (int64_t i = 0; i < kLatentDim; ++i) r.values[i] = values[i] * s;
  return r;
}

NormalizedImage normalize_image(const torch::Tensor& raw_hwc) {
  if (!raw_hwc.defined() || raw_hwc.dim() != 3 || raw_hwc.size(2) != 3) {
    throw ShapeError("normalize_image: expected H x W x 3 image");
  }
  auto chw = raw_hwc.to(torch::kFloat32).permute({2, 0, 1}).contiguous();
  return NormalizedImage(chw * (2.0 / 255.0) - 1.0);
}

torch::Tensor to_8bit(const NormalizedImage& image) {
  auto v = image.tensor().detach().to(torch::kCPU, torch::kFloat32).clamp(-1.0, 1.0);
  auto u = torch::round((v + 1.0) * (255.0 / 2.0));
  return u.to(torch::kUInt8).permute({1, 2, 0}).contiguous();
}

NormalizedImage resize(const NormalizedImage& image, int64_t height, int64_t width) {
  return NormalizedImage(ops::resize(image.batched(), height, width).squeeze(0));
}

FlowField resize(const FlowField& flow, int64_t height, int64_t width) {
  return FlowField(ops::resize(flow.batched(), height, width).squeeze(0));
}

ColorTransferMap resize(const ColorTransferMap& map, int64_t height, int64_t width) {
  auto both = ops::resize(map.to_channels().unsqueeze(0), height, width).squeeze(0);
  return ColorTransferMap::from_channels(both);
}

NormalizedImage reflect_pad(const NormalizedImage& image, int64_t margin) {
  return NormalizedImage(ops::reflect_pad(image.tensor(), margin, margin));
}

FlowField reflect_pad(const FlowField& flow, int64_t margin) {
  return FlowField(ops::reflect_pad(flow.tensor(), margin, margin));
}

NormalizedImage warp(const NormalizedImage& source, const FlowField& flow) {
  return NormalizedImage(ops::warp(source.batched(), flow.batched()).squeeze(0));
}

FlowField compose_flows(const FlowField& accumulated, const FlowField& step) {
  return FlowField(ops::compose_flows(accumulated.batched(), step.batched()).squeeze(0));
}

FlowField restrict_flow(const FlowField& raw, double beta, bool allow_unrestricted) {
  return FlowField(ops::restrict_flow(raw.tensor(), beta, allow_unrestricted));
}

namespace ops {

torch::Tensor resize(const torch::Tensor& nchw, int64_t height, int64_t width) {
  if (height <= 0 || width <= 0) {
    throw ArgumentError("resize: target size must be positive");
  }
  if (nchw.dim() != 4) throw ShapeError("resize: expected [N, C, H, W], got " + shape_string(nchw));
  if (nchw.size(2) == height && nchw.size(3) == width) return nchw;
  namespace F = torch::nn::functional;
  return F::interpolate(nchw, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{height, width})
                                  .mode(torch::kBilinear)
                                  .align_corners(true));
}

torch::Tensor reflect_pad(const torch::Tensor& t, int64_t margin_y, int64_t margin_x) {
  if (!t.defined() || t.dim() < 2) throw ShapeError("reflect_pad: expected at least 2 dims");
  if (margin_y < 0 || margin_x < 0) throw ArgumentError("reflect_pad: negative margin");
  const int64_t h = t.size(-2);
  const int64_t w = t.size(-1);
  if ((margin_y > 0 && margin_y >= h) || (margin_x > 0 && margin_x >= w)) {
    throw ArgumentError("reflect_pad: margin must be smaller than the padded axis");
  }
  auto out = t;
  if (margin_y > 0) out = out.index_select(t.dim() - 2, mirror_indices(h, margin_y).to(t.device()));
  if (margin_x > 0) out = out.index_select(t.dim() - 1, mirror_indices(w, margin_x).to(t.device()));
  return out;
}

torch::Tensor warp(const torch::Tensor& source, const torch::Tensor& flow) {
  if (source.dim() != 4 || flow.dim() != 4 || flow.size(1) != 2) {
    throw ShapeError("warp: expected source [N, C, H, W] and flow [N, 2, H, W], got " +
                     shape_string(source) + " and " + shape_string(flow));
  }
  require_same_grid(source, flow, "warp");
  const int64_t n = source.size(0);
  const int64_t c = source.size(1);
  const int64_t h = source.size(2);
  const int64_t w = source.size(3);

  auto fopts = flow.options();
  const double sx = w > 1 ? (w - 1) / 2.0 : 0.0;
  const double sy = h > 1 ? (h - 1) / 2.0 : 0.0;
  auto px = torch::arange(w, fopts).view({1, 1, w}) + flow.select(1, 0) * sx;
  auto py = torch::arange(h, fopts).view({1, h, 1}) + flow.select(1, 1) * sy;

  // Pad by the largest displacement (in pixels) plus one; fall back to
  // coordinate folding when that does not fit the reflect precondition.
  double max_disp = 0.0;
  {
    torch::NoGradGuard no_grad;
    max_disp = std::max(flow.select(1, 0).abs().max().item<double>() * sx,
                        flow.select(1, 1).abs().max().item<double>() * sy);
  }
  const auto margin = static_cast<int64_t>(std::ceil(max_disp)) + 1;
  torch::Tensor padded;
  if (margin < std::min(h, w)) {
    padded = reflect_pad(source, margin, margin);
    px = px + static_cast<double>(margin);
    py = py + static_cast<double>(margin);
  } else {
    padded = source;
    px = fold_coordinates(px, w);
    py = fold_coordinates(py, h);
  }
  const int64_t hp = padded.size(2);
  const int64_t wp = padded.size(3);

  auto x0f = torch::floor(px.detach()).clamp(0, wp - 1);
  auto y0f = torch::floor(py.detach()).clamp(0, hp - 1);
  auto wx = (px - x0f).unsqueeze(1);
  auto wy = (py - y0f).unsqueeze(1);
  auto x0 = x0f.to(torch::kLong);
  auto y0 = y0f.to(torch::kLong);
  auto x1 = (x0 + 1).clamp_max(wp - 1);
  auto y1 = (y0 + 1).clamp_max(hp - 1);

  auto flat = padded.reshape({n, c, hp * wp});
  auto gather = [&](const torch::Tensor& yi, const torch::Tensor& xi) {
    auto idx = (yi * wp + xi).view({n, 1, h * w}).expand({n, c, h * w});
    return flat.gather(2, idx).view({n, c, h, w});
  };
  auto v00 = gather(y0, x0);
  auto v01 = gather(y0, x1);
  auto v10 = gather(y1, x0);
  auto v11 = gather(y1, x1);
  return v00 * (1 - wx) * (1 - wy) + v01 * wx * (1 - wy) + v10 * (1 - wx) * wy + v11 * wx * wy;
}

torch::Tensor compose_flows(const torch::Tensor& accumulated, const torch::Tensor& step) {
  if (accumulated.dim() != 4 || accumulated.size(1) != 2) {
    throw ShapeError("compose_flows: accumulated must be [N, 2, H, W]");
  }
  require_same_grid(accumulated, step, "compose_flows");
  return step + warp(accumulated, step);
}

torch::Tensor restrict_flow(const torch::Tensor& raw, double beta, bool allow_unrestricted) {
  if (!(beta > 1.0) && !(allow_unrestricted && beta == 1.0)) {
    throw ArgumentError("restrict_flow: beta must be > 1 (beta == 1 requires the unrestricted override)");
  }
  return raw / beta;
}

torch::Tensor tile_latent(const torch::Tensor& codes, int64_t height, int64_t width) {
  if (codes.dim() != 2 || codes.size(1) != kLatentDim) {
    throw ShapeError("tile_latent: expected [N, " + std::to_string(kLatentDim) + "] codes, got " +
                     shape_string(codes));
  }
  return codes.view({codes.size(0), kLatentDim, 1, 1}).expand({codes.size(0), kLatentDim, height, width});
}

}  // namespace ops

}  // namespace animscape
