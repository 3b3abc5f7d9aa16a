#include "rpnet/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace rpnet {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void require_image_batch(const Tensor& t, const char* who) {
  if (t.rank() != 4) throw ShapeError(std::string(who) + ": expects [B,C,H,W], got " + shape_string(t.shape));
}

}  // namespace

Pipeline pipeline_from_name(std::string_view name, int levels) {
  if (levels < 2) throw ConfigError("pipeline: levels must be >= 2, got " + std::to_string(levels));
  Pipeline p;
  p.levels = levels;
  const std::string n = lower(name);
  if (n == "none") {
  } else if (n == "tanh+bn") {
    p.stages = {StageKind::Tanh, StageKind::BatchNorm};
  } else if (n == "tanh+smooth") {
    p.stages = {StageKind::Tanh, StageKind::SmoothMax};
  } else if (n == "smooth+bn") {
    p.stages = {StageKind::SmoothMax, StageKind::BatchNorm};
  } else if (n == "all-three") {
    p.stages = {StageKind::Tanh, StageKind::SmoothMax, StageKind::BatchNorm};
  } else {
    throw ConfigError("unknown pipeline \"" + std::string(name) +
                      "\" (expected none, tanh+bn, tanh+smooth, smooth+bn, all-three)");
  }
  return p;
}

std::string pipeline_name(const Pipeline& p) {
  bool has_tanh = false, has_smooth = false, has_bn = false, other = false;
  for (StageKind s : p.stages) {
    switch (s) {
      case StageKind::Tanh: has_tanh = true; break;
      case StageKind::SmoothMax: has_smooth = true; break;
      case StageKind::BatchNorm: has_bn = true; break;
      default: other = true; break;
    }
  }
  if (!other) {
    if (!has_tanh && !has_smooth && !has_bn) return "none";
    if (has_tanh && has_bn && !has_smooth) return "tanh+bn";
    if (has_tanh && has_smooth && !has_bn) return "tanh+smooth";
    if (has_smooth && has_bn && !has_tanh) return "smooth+bn";
    if (has_tanh && has_smooth && has_bn) return "all-three";
  }
  // Non-canonical combination: spell the stages out.
  std::string out;
  for (StageKind s : p.stages) {
    if (!out.empty()) out += "+";
    switch (s) {
      case StageKind::Tanh: out += "tanh"; break;
      case StageKind::Sigmoid: out += "sigmoid"; break;
      case StageKind::SmoothMax: out += "smoothmax"; break;
      case StageKind::SmoothAvg: out += "smoothavg"; break;
      case StageKind::BatchNorm: out += "bn"; break;
    }
  }
  return out.empty() ? "none" : out;
}

Tensor apply_tanh(const Tensor& batch) {
  Tensor out(batch.shape);
  for (int64_t i = 0; i < batch.numel(); ++i) out[i] = std::tanh(batch[i]);
  return out;
}

Tensor apply_sigmoid(const Tensor& batch) {
  Tensor out(batch.shape);
  for (int64_t i = 0; i < batch.numel(); ++i) {
    const float x = batch[i];
    if (x >= 0.0f) {
      const float e = std::exp(-x);
      out[i] = 1.0f / (1.0f + e);
    } else {
      const float e = std::exp(x);
      out[i] = e / (1.0f + e);
    }
  }
  return out;
}

Tensor apply_smoothing(const Tensor& batch, SmoothMode mode, int window, int stride) {
  require_image_batch(batch, "smoothing");
  const int B = batch.shape[0], C = batch.shape[1], H = batch.shape[2], W = batch.shape[3];
  Tensor out(batch.shape);
  for (int bc = 0; bc < B * C; ++bc) {
    const float* in = batch.data.data() + static_cast<int64_t>(bc) * H * W;
    float* op = out.data.data() + static_cast<int64_t>(bc) * H * W;
    for (int bh = 0; bh < H; bh += stride) {
      const int h1 = std::min(bh + window, H);
      for (int bw = 0; bw < W; bw += stride) {
        const int w1 = std::min(bw + window, W);
        float agg = mode == SmoothMode::Max ? in[bh * W + bw] : 0.0f;
        if (mode == SmoothMode::Max) {
          for (int h = bh; h < h1; ++h)
            for (int w = bw; w < w1; ++w) agg = std::max(agg, in[h * W + w]);
        } else {
          for (int h = bh; h < h1; ++h)
            for (int w = bw; w < w1; ++w) agg += in[h * W + w];
          agg /= static_cast<float>((h1 - bh) * (w1 - bw));
        }
        for (int h = bh; h < h1; ++h)
          for (int w = bw; w < w1; ++w) op[h * W + w] = agg;
      }
    }
  }
  return out;
}

namespace {

std::pair<float, float> batch_mean_std(const Tensor& batch) {
  // Double accumulators; 60k x 784 pixels overflow float precision.
  double s = 0.0;
  for (float v : batch.data) s += v;
  const double mu = s / static_cast<double>(batch.numel());
  double sq = 0.0;
  for (float v : batch.data) {
    const double d = v - mu;
    sq += d * d;
  }
  const double var = sq / static_cast<double>(batch.numel());
  return {static_cast<float>(mu), static_cast<float>(std::sqrt(var))};
}

Tensor normalize_with(const Tensor& batch, float mu, float sigma, float epsilon) {
  Tensor out(batch.shape);
  const float inv = 1.0f / (sigma + epsilon);
  for (int64_t i = 0; i < batch.numel(); ++i) out[i] = (batch[i] - mu) * inv;
  return out;
}

}  // namespace

std::pair<Tensor, BatchStats> apply_batchnorm(const Tensor& batch, float epsilon) {
  auto [mu, sigma] = batch_mean_std(batch);
  BatchStats stats;
  stats.mu = mu;
  stats.sigma = sigma;
  stats.has_bn = true;
  return {normalize_with(batch, mu, sigma, epsilon), stats};
}

namespace {

Tensor run_stages(const Pipeline& p, const Tensor& batch, BatchStats& stats, bool frozen) {
  Tensor cur = batch;
  for (StageKind s : p.stages) {
    switch (s) {
      case StageKind::Tanh:
        cur = apply_tanh(cur);
        break;
      case StageKind::Sigmoid:
        cur = apply_sigmoid(cur);
        break;
      case StageKind::SmoothMax:
        cur = apply_smoothing(cur, SmoothMode::Max, p.smoothing_window, p.smoothing_stride);
        break;
      case StageKind::SmoothAvg:
        cur = apply_smoothing(cur, SmoothMode::Avg, p.smoothing_window, p.smoothing_stride);
        break;
      case StageKind::BatchNorm:
        if (frozen) {
          cur = normalize_with(cur, stats.mu, stats.sigma, p.bn_epsilon);
        } else {
          auto [mu, sigma] = batch_mean_std(cur);
          stats.mu = mu;
          stats.sigma = sigma;
          stats.has_bn = true;
          cur = normalize_with(cur, mu, sigma, p.bn_epsilon);
        }
        break;
    }
  }
  return cur;
}

}  // namespace

std::pair<Tensor, BatchStats> run_pipeline(const Pipeline& p, const Tensor& batch) {
  require_image_batch(batch, "pipeline");
  BatchStats stats;
  Tensor out = run_stages(p, batch, stats, /*frozen=*/false);
  float lo = out[0], hi = out[0];
  for (float v : out.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  stats.post_min = lo;
  stats.post_max = hi;
  return {std::move(out), stats};
}

Tensor run_pipeline_frozen(const Pipeline& p, const Tensor& batch, const BatchStats& stats) {
  require_image_batch(batch, "pipeline");
  BatchStats scratch = stats;
  return run_stages(p, batch, scratch, /*frozen=*/true);
}

IntTensor quantize(const Tensor& processed, const BatchStats& stats, int k) {
  if (k < 2) throw ConfigError("quantize: levels must be >= 2, got " + std::to_string(k));
  if (stats.post_max < stats.post_min)
    throw ShapeError("quantize: post_max < post_min in batch stats");
  const float range = stats.post_max - stats.post_min;
  IntTensor levels(processed.shape);
  for (int64_t i = 0; i < processed.numel(); ++i) {
    if (range <= 0.0f) {
      levels[i] = 0;
      continue;
    }
    const float vhat = (processed[i] - stats.post_min) / range;
    int level = static_cast<int>(std::floor(vhat * static_cast<float>(k)));
    level = std::clamp(level, 0, k - 1);
    levels[i] = level;
  }
  return levels;
}

EncodedBatch thermometer_encode(const IntTensor& levels, int k) {
  if (levels.shape.size() != 4 && levels.shape.size() != 3)
    throw ShapeError("thermometer: levels must be [B,H,W] or [B,1,H,W], got " +
                     shape_string(levels.shape));
  int B, H, W;
  if (levels.shape.size() == 4) {
    if (levels.shape[1] != 1)
      throw ShapeError("thermometer: level tensor channel dim must be 1, got " +
                       shape_string(levels.shape));
    B = levels.shape[0];
    H = levels.shape[2];
    W = levels.shape[3];
  } else {
    B = levels.shape[0];
    H = levels.shape[1];
    W = levels.shape[2];
  }
  EncodedBatch out;
  out.k = k;
  out.levels = IntTensor({B, H, W});
  out.thermo = Tensor({B, k, H, W});
  const int64_t HW = static_cast<int64_t>(H) * W;
  for (int b = 0; b < B; ++b) {
    for (int64_t p = 0; p < HW; ++p) {
      const int32_t level = levels[b * HW + p];
      if (level < 0 || level >= k)
        throw ShapeError("thermometer: level " + std::to_string(level) + " out of range [0," +
                         std::to_string(k) + ")");
      out.levels[b * HW + p] = level;
      for (int i = 0; i < k; ++i)
        out.thermo[(static_cast<int64_t>(b) * k + i) * HW + p] = i >= level ? 1.0f : 0.0f;
    }
  }
  return out;
}

IntTensor thermometer_decode(const Tensor& thermo) {
  if (thermo.rank() != 4) throw ShapeError("thermometer decode: expects [B,k,H,W], got " + shape_string(thermo.shape));
  const int B = thermo.shape[0], K = thermo.shape[1], H = thermo.shape[2], W = thermo.shape[3];
  const int64_t HW = static_cast<int64_t>(H) * W;
  IntTensor levels({B, H, W});
  for (int b = 0; b < B; ++b) {
    for (int64_t p = 0; p < HW; ++p) {
      int level = -1;
      for (int i = 0; i < K; ++i) {
        const float v = thermo[(static_cast<int64_t>(b) * K + i) * HW + p];
        if (v != 0.0f && v != 1.0f)
          throw DataError("thermometer decode: non-binary entry " + std::to_string(v));
        if (level < 0) {
          if (v == 1.0f) level = i;
        } else if (v != 1.0f) {
          throw DataError("thermometer decode: malformed word (zero after first one) at pixel " +
                          std::to_string(p));
        }
      }
      if (level < 0) throw DataError("thermometer decode: word with no ones at pixel " + std::to_string(p));
      levels[b * HW + p] = level;
    }
  }
  return levels;
}

std::pair<EncodedBatch, BatchStats> encode_batch(const Pipeline& p, const Tensor& batch) {
  auto [processed, stats] = run_pipeline(p, batch);
  IntTensor levels = quantize(processed, stats, p.levels);
  return {thermometer_encode(levels, p.levels), stats};
}

std::string make_pipeline_descriptor(const Pipeline& p, bool encoded, bool adv_trained) {
  std::string d = pipeline_name(p) + ";k=" + std::to_string(p.levels);
  if (!encoded) d += ";raw";
  if (adv_trained) d += ";adv";
  return d;
}

PipelineDescriptor parse_pipeline_descriptor(const std::string& descriptor) {
  PipelineDescriptor out;
  std::string name;
  int levels = 15;
  size_t pos = 0;
  bool first = true;
  while (pos <= descriptor.size()) {
    size_t next = descriptor.find(';', pos);
    if (next == std::string::npos) next = descriptor.size();
    const std::string tok = descriptor.substr(pos, next - pos);
    if (first) {
      name = tok;
      first = false;
    } else if (tok.rfind("k=", 0) == 0) {
      levels = std::stoi(tok.substr(2));
    } else if (tok == "raw") {
      out.encoded = false;
    } else if (tok == "adv") {
      out.adv_trained = true;
    } else if (!tok.empty()) {
      throw DataError("pipeline descriptor: unknown token \"" + tok + "\" in \"" + descriptor + "\"");
    }
    pos = next + 1;
  }
  try {
    out.pipeline = pipeline_from_name(name, levels);
  } catch (const ConfigError& e) {
    throw DataError(std::string("pipeline descriptor: ") + e.what());
  }
  return out;
}

}  // namespace rpnet
