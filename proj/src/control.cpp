#include "animscape/control.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "animscape/errors.hpp"

namespace animscape {

using nlohmann::json;

AnnotationDocument parse_annotation(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("annotation is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("annotation must be a JSON object");
  if (j.contains("version") && j["version"] != kAnnotationVersion) {
    throw MigrationError("unsupported annotation version " + j["version"].dump());
  }
  AnnotationDocument doc;
  try {
    for (const auto& a : j.value("arrows", json::array())) {
      doc.arrows.push_back({a.at("x").get<double>(), a.at("y").get<double>(), a.at("dx").get<double>(),
                            a.at("dy").get<double>()});
    }
    for (const auto& p : j.value("patches", json::array())) {
      doc.patches.push_back({p.at("x").get<int64_t>(), p.at("y").get<int64_t>(), p.at("width").get<int64_t>(),
                             p.at("height").get<int64_t>(), p.at("image").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed annotation: ") + e.what());
  }
  return doc;
}

std::string serialize_annotation(const AnnotationDocument& doc) {
  json arrows = json::array();
  for (const auto& a : doc.arrows) arrows.push_back({{"x", a.x}, {"y", a.y}, {"dx", a.dx}, {"dy", a.dy}});
  json patches = json::array();
  for (const auto& p : doc.patches) {
    patches.push_back({{"x", p.x}, {"y", p.y}, {"width", p.width}, {"height", p.height}, {"image", p.image}});
  }
  return json{{"version", kAnnotationVersion}, {"arrows", arrows}, {"patches", patches}}.dump();
}

AppearanceAnnotation resolve_patches(const std::vector<PatchSpec>& specs,
                                     const std::function<NormalizedImage(const std::string&)>& load) {
  AppearanceAnnotation ann;
  for (const auto& s : specs) {
    if (s.width < 1 || s.height < 1) throw ArgumentError("patch rectangle must be non-empty");
    ann.patches.push_back({s.x, s.y, resize(load(s.image), s.height, s.width)});
  }
  return ann;
}

namespace {

double to_grid(double v, int64_t image_extent, int64_t grid_extent) {
  if (image_extent <= 1) return 0.0;
  return v * static_cast<double>(grid_extent - 1) / static_cast<double>(image_extent - 1);
}

}  // namespace

Raster rasterize_motion(const MotionAnnotation& ann, int64_t image_height, int64_t image_width, int64_t grid_height,
                        int64_t grid_width, double beta) {
  if (ann.arrows.empty()) throw ArgumentError("motion annotation has no arrows");
  if (!(beta > 0)) throw ArgumentError("rasterize_motion: beta must be positive");
  auto target = torch::zeros({2, grid_height, grid_width}, torch::kFloat32);
  auto mask = torch::zeros({1, grid_height, grid_width}, torch::kFloat32);
  auto t = target.accessor<float, 3>();
  auto m = mask.accessor<float, 3>();
  constexpr double kHalfWidth = 1.5;
  for (const auto& a : ann.arrows) {
    if (!std::isfinite(a.dx) || !std::isfinite(a.dy) || (a.dx == 0 && a.dy == 0)) {
      throw ArgumentError("arrow direction must be non-zero");
    }
    const double nx = a.dx * 2.0 / std::max<int64_t>(1, image_width - 1);
    const double ny = a.dy * 2.0 / std::max<int64_t>(1, image_height - 1);
    const double norm = std::hypot(nx, ny);
    const float fx = static_cast<float>(-nx / norm / beta);
    const float fy = static_cast<float>(-ny / norm / beta);

    const double x0 = to_grid(a.x, image_width, grid_width), y0 = to_grid(a.y, image_height, grid_height);
    const double x1 = to_grid(a.x + a.dx, image_width, grid_width);
    const double y1 = to_grid(a.y + a.dy, image_height, grid_height);
    const double sx = x1 - x0, sy = y1 - y0, len2 = sx * sx + sy * sy;
    const auto lo_x = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(x0, x1) - kHalfWidth)));
    const auto hi_x = std::min<int64_t>(grid_width - 1, static_cast<int64_t>(std::ceil(std::max(x0, x1) + kHalfWidth)));
    const auto lo_y = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(y0, y1) - kHalfWidth)));
    const auto hi_y = std::min<int64_t>(grid_height - 1, static_cast<int64_t>(std::ceil(std::max(y0, y1) + kHalfWidth)));
    for (int64_t y = lo_y; y <= hi_y; ++y) {
      for (int64_t x = lo_x; x <= hi_x; ++x) {
        double u = len2 > 0 ? ((x - x0) * sx + (y - y0) * sy) / len2 : 0.0;
        u = std::clamp(u, 0.0, 1.0);
        const double d = std::hypot(x - (x0 + u * sx), y - (y0 + u * sy));
        if (d <= kHalfWidth) {
          t[0][y][x] = fx;
          t[1][y][x] = fy;
          m[0][y][x] = 1.0f;
        }
      }
    }
  }
  return {target, mask};
}

Raster rasterize_appearance(const AppearanceAnnotation& ann, int64_t image_height, int64_t image_width,
                            int64_t grid_height, int64_t grid_width) {
  if (ann.patches.empty()) throw ArgumentError("appearance annotation has no patches");
  auto target = torch::zeros({3, grid_height, grid_width}, torch::kFloat32);
  auto mask = torch::zeros({1, grid_height, grid_width}, torch::kFloat32);
  for (const auto& p : ann.patches) {
    const int64_t w = p.image.width(), h = p.image.height();
    if (p.x < 0 || p.y < 0 || p.x + w > image_width || p.y + h > image_height) {
      throw ArgumentError("appearance patch lies outside the image");
    }
    auto gx0 = static_cast<int64_t>(std::lround(static_cast<double>(p.x) * grid_width / image_width));
    auto gy0 = static_cast<int64_t>(std::lround(static_cast<double>(p.y) * grid_height / image_height));
    auto gx1 = static_cast<int64_t>(std::lround(static_cast<double>(p.x + w) * grid_width / image_width));
    auto gy1 = static_cast<int64_t>(std::lround(static_cast<double>(p.y + h) * grid_height / image_height));
    gx0 = std::min(gx0, grid_width - 1);
    gy0 = std::min(gy0, grid_height - 1);
    gx1 = std::max(gx1, gx0 + 1);
    gy1 = std::max(gy1, gy0 + 1);
    auto patch = resize(p.image, gy1 - gy0, gx1 - gx0).tensor().to(torch::kFloat32);
    target.narrow(1, gy0, gy1 - gy0).narrow(2, gx0, gx1 - gx0).copy_(patch);
    mask.narrow(1, gy0, gy1 - gy0).narrow(2, gx0, gx1 - gx0).fill_(1.0f);
  }
  return {target, mask};
}

torch::Tensor flow_cosine(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.dim() != 4 || a.size(1) != 2 || b.sizes() != a.sizes()) {
    throw ShapeError("flow_cosine: expected two [N, 2, H, W] flows");
  }
  constexpr double kEps = 1e-12;
  auto na2 = a.pow(2).sum(1);
  auto nb2 = b.pow(2).sum(1);
  auto valid = (na2 > kEps) & (nb2 > kEps);
  // Safe denominators keep the gradient finite where the cosine is defined as 0.
  auto denom = torch::sqrt(torch::where(valid, na2 * nb2, torch::ones_like(na2)));
  return torch::where(valid, (a * b).sum(1) / denom, torch::zeros_like(na2));
}

torch::Tensor motion_control_objective(const torch::Tensor& flow, const Raster& raster, double margin) {
  auto target = raster.target.unsqueeze(0).to(flow.dtype()).expand_as(flow);
  auto d = flow_cosine(flow, target);  // [N, H, W]
  auto mask = raster.mask.to(flow.dtype()).squeeze(0);
  return torch::clamp_min(mask * (1.0 - d - margin), 0.0).pow(2).sum();
}

torch::Tensor appearance_control_objective(const torch::Tensor& output, const Raster& raster) {
  auto target = raster.target.unsqueeze(0).to(output.dtype());
  auto mask = raster.mask.unsqueeze(0).to(output.dtype());
  return (mask * (target - output)).pow(2).sum();
}

std::vector<LatentCode> initial_codes(const std::vector<LatentCode>& codebook, const ControlOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::vector<LatentCode> starts{mean_code(codebook)};
  if (!codebook.empty()) {
    std::uniform_int_distribution<size_t> pick(0, codebook.size() - 1);
    for (int k = 0; k < options.random_restarts; ++k) starts.push_back(codebook[pick(rng)]);
  }
  if (options.init_jitter > 0) {
    std::normal_distribution<float> noise(0.0f, static_cast<float>(options.init_jitter));
    for (auto& s : starts)
      for (auto& v : s.values) v += noise(rng);
  }
  return starts;
}

ControlResult optimize_code(const CodeObjective& objective, const std::vector<LatentCode>& starts,
                            const ControlOptions& options) {
  if (starts.empty()) throw ArgumentError("optimize_code: no starting codes");
  if (options.steps < 0 || !(options.learning_rate > 0)) throw ArgumentError("optimize_code: bad step settings");
  const auto start_time = std::chrono::steady_clock::now();
  auto out_of_time = [&] {
    if (options.time_budget_seconds <= 0) return false;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count() >
           options.time_budget_seconds;
  };

  ControlResult result;
  result.objective = std::numeric_limits<double>::infinity();
  for (const auto& init : starts) {
    ControlRun run;
    run.init = init;
    auto z = init.to_tensor().unsqueeze(0).clone().set_requires_grad(true);
    torch::optim::Adam adam({z}, torch::optim::AdamOptions(options.learning_rate));
    run.best_objective = std::numeric_limits<double>::infinity();
    for (int step = 0; step <= options.steps; ++step) {
      auto value = objective(z);
      const double v = value.item<double>();
      run.trace.push_back(v);
      if (v < run.best_objective) {
        run.best_objective = v;
        run.best_step = step;
        run.best = LatentCode::from_tensor(z.detach());
      }
      if (step == options.steps || v == 0.0) break;
      if (out_of_time()) {
        result.timed_out = true;
        break;
      }
      auto grad = torch::autograd::grad({value}, {z})[0];
      z.mutable_grad() = grad.detach();
      adam.step();
    }
    run.initial_objective = run.trace.front();
    if (run.best_objective < result.objective) {
      result.objective = run.best_objective;
      result.code = run.best;
      result.best_step = run.best_step;
      result.trace = run.trace;
    }
    result.runs.push_back(std::move(run));
    if (result.timed_out) break;
  }
  return result;
}

torch::Tensor motion_flow_for_code(const NormalizedImage& input, MotionModel& model, const torch::Tensor& code) {
  const int64_t s = model.predictor_size;
  auto image = resize(input, s, s).batched().to(torch::kFloat32);
  return ops::restrict_flow(model.predictor->forward(image, code), model.beta, model.allow_unrestricted);
}

ControlResult optimize_motion_code(const NormalizedImage& input, const MotionAnnotation& ann, MotionModel& model,
                                   const std::vector<LatentCode>& starts, const ControlOptions& options) {
  const int64_t s = model.predictor_size;
  auto raster = rasterize_motion(ann, input.height(), input.width(), s, s, model.beta);
  if (raster.mask.sum().item<double>() == 0) throw ArgumentError("motion annotation covers no pixels");
  model.predictor->eval();
  auto image = resize(input, s, s).batched().to(torch::kFloat32);
  CodeObjective objective = [&](const torch::Tensor& z) {
    auto flow = ops::restrict_flow(model.predictor->forward(image, z), model.beta, model.allow_unrestricted);
    return motion_control_objective(flow, raster, ann.margin);
  };
  return optimize_code(objective, starts, options);
}

ControlResult optimize_appearance_code(const NormalizedImage& input, const AppearanceAnnotation& ann,
                                       AppearanceModel& model, const std::vector<LatentCode>& starts,
                                       const ControlOptions& options) {
  const int64_t s = model.predictor_size;
  auto raster = rasterize_appearance(ann, input.height(), input.width(), s, s);
  model.predictor->eval();
  auto image = resize(input, s, s).batched().to(torch::kFloat32);
  CodeObjective objective = [&](const torch::Tensor& z) {
    auto raw = model.predictor->forward(image, z);
    auto out = model.direct() ? raw : color_transfer(raw.narrow(1, 0, 3), raw.narrow(1, 3, 3), image);
    return appearance_control_objective(out, raster);
  };
  return optimize_code(objective, starts, options);
}

std::vector<double> train_latent_lstm(const AppearanceCodebook& codebook, LatentLstm& lstm,
                                      const LstmTrainOptions& options) {
  std::vector<torch::Tensor> sequences;
  for (const auto& [id, codes] : codebook.entries) {
    if (codes.size() < 2) continue;
    std::vector<torch::Tensor> rows;
    for (const auto& c : codes) rows.push_back(c.to_tensor());
    sequences.push_back(torch::stack(rows).unsqueeze(0));  // [1, T, 8]
  }
  if (sequences.empty()) throw ArgumentError("train_latent_lstm: no code sequence has two or more entries");
  if (options.epochs < 0 || !(options.learning_rate > 0)) throw ArgumentError("train_latent_lstm: bad options");

  torch::optim::Adam adam(lstm->parameters(), torch::optim::AdamOptions(options.learning_rate));
  std::mt19937_64 rng(options.seed);
  std::vector<size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;
  lstm->train();
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (size_t i : order) {
      const auto& seq = sequences[i];
      const int64_t t = seq.size(1);
      auto pred = lstm->forward(seq.narrow(1, 0, t - 1));
      auto loss = torch::mse_loss(pred, seq.narrow(1, 1, t - 1));
      adam.zero_grad();
      loss.backward();
      adam.step();
      sum += loss.item<double>();
    }
    history.push_back(sum / static_cast<double>(sequences.size()));
  }
  lstm->eval();
  return history;
}

std::vector<LatentCode> predict_code_sequence(const LatentCode& first, LatentLstm& lstm, int length) {
  if (length < 1) throw ArgumentError("predict_code_sequence: length must be at least 1");
  torch::NoGradGuard no_grad;
  lstm->eval();
  std::vector<LatentCode> codes{first};
  LatentLstmImpl::State state;
  auto current = first.to_tensor().unsqueeze(0);
  for (int k = 1; k < length; ++k) {
    current = lstm->step(current, state);
    codes.push_back(LatentCode::from_tensor(current));
  }
  return codes;
}

std::vector<LatentCode> predict_code_sequence(const NormalizedImage& seed, AppearanceModel& model, LatentLstm& lstm,
                                              int length) {
  if (length < 1) throw ArgumentError("predict_code_sequence: length must be at least 1");
  return predict_code_sequence(encode_appearance(model, seed), lstm, length);
}

}  // namespace animscape
