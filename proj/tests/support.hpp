#pragma once

// Fixtures and independent reference implementations shared by the tests.

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <torch/torch.h>
#include <vector>

#include "animscape/core.hpp"
#include "animscape/motion.hpp"

namespace testing_support {

using animscape::NormalizedImage;

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  static std::random_device rd;
  auto dir = std::filesystem::temp_directory_path() / ("animscape_" + name + "_" + std::to_string(rd()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Smooth colored noise in [-1, 1], [3, h, w].
inline torch::Tensor smooth_texture(int64_t h, int64_t w, uint64_t seed, int64_t coarse = 16, double gain = 1.0) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto noise = at::randn({1, 3, coarse, coarse}, gen);
  namespace F = torch::nn::functional;
  auto up = F::interpolate(noise, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{h, w})
                                      .mode(torch::kBicubic)
                                      .align_corners(false));
  return torch::tanh(up[0] * gain).contiguous();
}

/// A clip of `frames` frames of `texture` translating by `speed` pixels per
/// frame along +x (content moves right), cut from a larger canvas so no frame
/// wraps.
inline animscape::Clip translating_clip(const std::string& id, int64_t size, int frames, double speed, uint64_t seed,
                                        int64_t coarse = 64) {
  const int64_t pad = static_cast<int64_t>(std::ceil(speed * frames)) + 4;
  auto canvas = smooth_texture(size + 2 * pad, size + 2 * pad, seed, coarse);
  animscape::Clip clip{id, {}};
  for (int t = 0; t < frames; ++t) {
    const double off = pad - t * speed;  // window slides left, so content moves right
    auto xs = torch::arange(size, torch::kFloat32) + off;
    auto x0 = xs.floor().to(torch::kLong);
    auto fx = (xs - xs.floor()).view({1, 1, size});
    auto rows = canvas.narrow(1, pad, size);
    auto f = rows.index_select(2, x0) * (1 - fx) + rows.index_select(2, x0 + 1) * fx;
    clip.frames.emplace_back(f.contiguous());
  }
  return clip;
}

/// Brute-force bilinear sample of img [C, H, W] at pixel position (x, y) with
/// mirror reflection (no edge repeat) for out-of-range coordinates.
inline double reflect_index(double v, int64_t n) {
  if (n == 1) return 0.0;
  const double period = 2.0 * (n - 1);
  v = std::fmod(std::fabs(v), period);
  return v > n - 1 ? period - v : v;
}

inline std::vector<double> sample_bilinear(const torch::Tensor& img, double x, double y) {
  const int64_t c = img.size(0), h = img.size(1), w = img.size(2);
  auto a = img.accessor<double, 3>();
  const double x0 = std::floor(x), y0 = std::floor(y);
  const double fx = x - x0, fy = y - y0;
  std::vector<double> out(static_cast<size_t>(c), 0.0);
  for (int dy = 0; dy <= 1; ++dy) {
    for (int dx = 0; dx <= 1; ++dx) {
      const double wgt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
      if (wgt == 0) continue;
      const auto xi = static_cast<int64_t>(reflect_index(x0 + dx, w));
      const auto yi = static_cast<int64_t>(reflect_index(y0 + dy, h));
      for (int64_t ch = 0; ch < c; ++ch) out[ch] += wgt * a[ch][yi][xi];
    }
  }
  return out;
}

/// Reference warp of img [C, H, W] (double) by flow [2, H, W] in normalized units.
inline torch::Tensor warp_oracle(const torch::Tensor& img, const torch::Tensor& flow) {
  const int64_t c = img.size(0), h = img.size(1), w = img.size(2);
  auto out = torch::zeros({c, h, w}, torch::kDouble);
  auto o = out.accessor<double, 3>();
  auto f = flow.accessor<double, 3>();
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const double px = x + f[0][y][x] * (w - 1) / 2.0;
      const double py = y + f[1][y][x] * (h - 1) / 2.0;
      auto v = sample_bilinear(img, px, py);
      for (int64_t ch = 0; ch < c; ++ch) o[ch][y][x] = v[ch];
    }
  }
  return out;
}

/// Smooth analytic RGB image evaluated at normalized coordinates (x, y).
inline torch::Tensor analytic_image(const torch::Tensor& x, const torch::Tensor& y) {
  const double params[3][3] = {{2.5, 1.3, 0.0}, {1.1, -2.2, 1.0}, {3.0, 0.5, 2.0}};
  std::vector<torch::Tensor> channels;
  for (const auto& p : params) channels.push_back(torch::sin(p[0] * x + p[1] * y + p[2]) * torch::cos(1.7 * y - 0.9 * x));
  return torch::stack(channels);
}

/// Normalized pixel-center coordinate grids (x, y) of an h x w image, double.
inline std::pair<torch::Tensor, torch::Tensor> normalized_grid(int64_t h, int64_t w) {
  auto ys = torch::linspace(-1, 1, h, torch::kDouble).view({h, 1}).expand({h, w}).contiguous();
  auto xs = torch::linspace(-1, 1, w, torch::kDouble).view({1, w}).expand({h, w}).contiguous();
  return {xs, ys};
}

/// Smooth step flow [2, h, w] with per-step magnitude below 1/64.
inline torch::Tensor smooth_step_flow(int64_t h, int64_t w) {
  auto [xs, ys] = normalized_grid(h, w);
  return torch::stack({0.012 * torch::sin(3 * ys), 0.01 * torch::cos(2 * xs)});
}

/// Exact result of applying the smooth step flow `steps` times to the analytic
/// image: each backward step samples the previous frame at x + B(x).
inline torch::Tensor analytic_chain(int64_t h, int64_t w, int steps) {
  auto [px, py] = normalized_grid(h, w);
  for (int k = 0; k < steps; ++k) {
    auto bx = 0.012 * torch::sin(3 * py), by = 0.01 * torch::cos(2 * px);
    px = px + bx;
    py = py + by;
  }
  return analytic_image(px, py);
}

// Independent double-loop evaluation of the edge-aware TV energy: every pixel
// paired with its right neighbor and with the neighbor above it.
inline double weighted_tv_oracle(const torch::Tensor& field, const torch::Tensor& guide, double sigma) {
  auto f = field.accessor<double, 4>();
  auto g = guide.accessor<double, 4>();
  const int64_t n = field.size(0), c = field.size(1), h = field.size(2), w = field.size(3), gc = guide.size(1);
  double total = 0;
  auto term = [&](int64_t b, int64_t y, int64_t x, int64_t qy, int64_t qx) {
    double gd = 0, fd = 0;
    for (int64_t k = 0; k < gc; ++k) gd += std::fabs(g[b][k][y][x] - g[b][k][qy][qx]);
    for (int64_t k = 0; k < c; ++k) fd += std::fabs(f[b][k][y][x] - f[b][k][qy][qx]);
    return std::exp(-gd / sigma) * fd;
  };
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        if (x + 1 < w) total += term(b, y, x, y, x + 1);
        if (y >= 1) total += term(b, y, x, y - 1, x);
      }
    }
  }
  return total;
}

// Per-cell channel means with the near-equal integer partition used by
// adaptive pooling: cell i spans [floor(i n / g), ceil((i + 1) n / g)).
inline torch::Tensor cell_means_oracle(const torch::Tensor& img, int64_t g) {
  const int64_t c = img.size(0), h = img.size(1), w = img.size(2);
  auto a = img.accessor<double, 3>();
  auto out = torch::zeros({c, g, g}, torch::kDouble);
  for (int64_t ci = 0; ci < c; ++ci) {
    for (int64_t i = 0; i < g; ++i) {
      const int64_t y0 = i * h / g, y1 = ((i + 1) * h + g - 1) / g;
      for (int64_t j = 0; j < g; ++j) {
        const int64_t x0 = j * w / g, x1 = ((j + 1) * w + g - 1) / g;
        double s = 0;
        for (int64_t y = y0; y < y1; ++y)
          for (int64_t x = x0; x < x1; ++x) s += a[ci][y][x];
        out[ci][i][j] = s / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return out;
}

inline double pyramid_oracle(const torch::Tensor& a, const torch::Tensor& b, int64_t g) {
  return (cell_means_oracle(a, g) - cell_means_oracle(b, g)).pow(2).sum().item<double>();
}

/// Norm-wise relative error between two gradients.
inline double relative_error(const torch::Tensor& a, const torch::Tensor& b) {
  const double denom = std::max(a.norm().item<double>(), b.norm().item<double>());
  return denom == 0 ? 0.0 : (a - b).norm().item<double>() / denom;
}

/// Central finite-difference gradient of a scalar function of x (double).
inline torch::Tensor numeric_gradient(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                                      double h = 1e-4) {
  auto g = torch::zeros_like(x);
  auto flat = x.clone().reshape({-1});
  auto gflat = g.view({-1});
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i] = orig + h;
    const double up = f(flat.view(x.sizes()));
    flat[i] = orig - h;
    const double down = f(flat.view(x.sizes()));
    flat[i] = orig;
    gflat[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace testing_support
