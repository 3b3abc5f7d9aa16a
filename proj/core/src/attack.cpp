#include "rpnet/attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "rpnet/rng.hpp"

namespace rpnet {

namespace {

// -inf-equivalent logit for unreachable levels; large enough to vanish in
// softmax, small enough to stay clear of inf arithmetic.
constexpr float kMaskedLogit = -1e30f;

void require_raw_batch(const Tensor& batch, const char* who) {
  if (batch.rank() != 4 || batch.shape[1] != 1)
    throw ShapeError(std::string(who) + ": expects raw batch [B,1,H,W], got " +
                     shape_string(batch.shape));
}

std::pair<std::vector<int32_t>, Tensor> predict_with_per_image_loss(
    const ModelSpec& spec, const Parameters& params, const Tensor& input,
    const std::vector<int32_t>& labels) {
  Tape tape;
  BoundParams bound = bind_parameters(tape, params);
  NodeId logits = forward(spec, tape, bound, tape.leaf(input));
  NodeId per_image = cross_entropy_with_softmax(tape, logits, labels);
  return {argmax_classes(tape.value(logits)), tape.value(per_image)};
}

}  // namespace

void validate_attack_config(const AttackConfig& cfg) {
  if (cfg.epsilon < 0.0f) throw ConfigError("attack: epsilon must be >= 0");
  if (!(cfg.delta > 0.0f)) throw ConfigError("attack: delta must be > 0");
  if (!(cfg.xi > 0.0f)) throw ConfigError("attack: xi must be > 0");
  if (cfg.steps < 1) throw ConfigError("attack: steps must be >= 1");
  if (cfg.levels < 2) throw ConfigError("attack: levels must be >= 2");
  if (cfg.restarts < 1) throw ConfigError("attack: restarts must be >= 1");
  if (!(cfg.t0 > 0.0f)) throw ConfigError("attack: t0 must be > 0");
}

Tensor iterative_fgsm(const ModelSpec& spec, const Parameters& params, const Tensor& batch,
                      const std::vector<int32_t>& labels, float epsilon, float alpha_step,
                      int iters) {
  if (spec.input_channels != 1)
    throw ConfigError("fgsm: encoded-input model rejected (channels = " +
                      std::to_string(spec.input_channels) + ", need 1)");
  require_raw_batch(batch, "fgsm");
  if (!(alpha_step > 0.0f) && epsilon > 0.0f) throw ConfigError("fgsm: alpha_step must be > 0");
  if (iters < 1) throw ConfigError("fgsm: iters must be >= 1");

  Tensor x = batch;
  for (int it = 0; it < iters; ++it) {
    Tape tape;
    BoundParams bound = bind_parameters(tape, params);
    NodeId input = tape.leaf(x);
    NodeId logits = forward(spec, tape, bound, input);
    NodeId l = loss(tape, logits, labels);
    Grad grads = backward(tape, l);
    const Tensor& g = grads.at(input);
    for (int64_t i = 0; i < x.numel(); ++i) {
      const float s = g[i] > 0.0f ? 1.0f : g[i] < 0.0f ? -1.0f : 0.0f;
      float v = x[i] + alpha_step * s;
      v = std::clamp(v, batch[i] - epsilon, batch[i] + epsilon);
      x[i] = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return x;
}

Tensor fgsm(const ModelSpec& spec, const Parameters& params, const Tensor& batch,
            const std::vector<int32_t>& labels, float epsilon) {
  if (epsilon == 0.0f) return batch;
  return iterative_fgsm(spec, params, batch, labels, epsilon, epsilon, 1);
}

LevelMask build_level_mask(const Pipeline& pipeline, const Tensor& clean_batch, float epsilon,
                           int k) {
  require_raw_batch(clean_batch, "level mask");
  const int B = clean_batch.shape[0], H = clean_batch.shape[2], W = clean_batch.shape[3];
  const int64_t HW = static_cast<int64_t>(H) * W;

  auto [clean_processed, clean_stats] = run_pipeline(pipeline, clean_batch);
  const IntTensor clean_levels = quantize(clean_processed, clean_stats, k);

  Tensor low(clean_batch.shape), high(clean_batch.shape);
  for (int64_t i = 0; i < clean_batch.numel(); ++i) {
    low[i] = std::clamp(clean_batch[i] - epsilon, 0.0f, 1.0f);
    high[i] = std::clamp(clean_batch[i] + epsilon, 0.0f, 1.0f);
  }

  auto mask = std::make_shared<std::vector<uint8_t>>(
      static_cast<size_t>(B) * k * static_cast<size_t>(HW), 0);
  auto mark = [&](int b, int64_t p, int32_t level) {
    (*mask)[static_cast<size_t>((static_cast<int64_t>(b) * k + level) * HW + p)] = 1;
  };

  // The k+1 probes are coordinated mixes of the whole batch. Batch norm is
  // recomputed on each probe batch (the pipeline as deployed normalizes
  // whatever it is given), which is what lets a normalizing pipeline absorb
  // the shared shift; the quantizer keeps the clean batch's range so levels
  // stay comparable across probes. The processed value of a pixel varies
  // continuously along the mix path, so every level between consecutive
  // probes is reachable by some intermediate mix and the ranges are filled.
  Tensor mix(clean_batch.shape);
  IntTensor prev;
  for (int i = 0; i <= k; ++i) {
    const float alpha = static_cast<float>(i) / static_cast<float>(k);
    for (int64_t j = 0; j < mix.numel(); ++j)
      mix[j] = alpha * low[j] + (1.0f - alpha) * high[j];
    const IntTensor cur = quantize(run_pipeline(pipeline, mix).first, clean_stats, k);
    for (int b = 0; b < B; ++b)
      for (int64_t p = 0; p < HW; ++p) {
        const int32_t c = cur[b * HW + p];
        const int32_t lo = i == 0 ? c : std::min(prev[b * HW + p], c);
        const int32_t hi = i == 0 ? c : std::max(prev[b * HW + p], c);
        for (int32_t level = lo; level <= hi; ++level) mark(b, p, level);
      }
    prev = cur;
  }
  for (int b = 0; b < B; ++b)
    for (int64_t p = 0; p < HW; ++p) mark(b, p, clean_levels[b * HW + p]);

  LevelMask out;
  out.shape = {B, k, H, W};
  out.reachable = std::move(mask);
  return out;
}

NodeId soft_thermometer(Tape& tape, NodeId z) { return cumsum_levels(tape, z); }

LspgaResult lspga_attack(const ModelSpec& spec, const Parameters& params,
                         const Pipeline& pipeline, const Tensor& batch,
                         const std::vector<int32_t>& labels, const AttackConfig& cfg,
                         uint64_t seed, int batch_index) {
  validate_attack_config(cfg);
  require_raw_batch(batch, "lspga");
  const int k = cfg.levels;
  if (spec.input_channels != k)
    throw ConfigError("lspga: model expects " + std::to_string(spec.input_channels) +
                      " input channels but the attack encodes " + std::to_string(k) + " levels");
  if (pipeline.levels != k)
    throw ConfigError("lspga: pipeline levels " + std::to_string(pipeline.levels) +
                      " differ from attack levels " + std::to_string(k));

  const int B = batch.shape[0], H = batch.shape[2], W = batch.shape[3];
  const int64_t HW = static_cast<int64_t>(H) * W;
  const size_t nb = static_cast<size_t>(B);

  const LevelMask mask = build_level_mask(pipeline, batch, cfg.epsilon, k);
  const std::vector<uint8_t>& reach = *mask.reachable;

  LspgaResult result;
  result.encoded.k = k;
  result.encoded.levels = IntTensor({B, H, W});
  result.encoded.thermo = Tensor({B, k, H, W});
  result.success.assign(nb, 0);

  std::vector<float> best_loss(nb, -std::numeric_limits<float>::infinity());
  std::vector<uint8_t> have_candidate(nb, 0);

  for (int restart = 0; restart < cfg.restarts; ++restart) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(batch_index), static_cast<uint64_t>(restart)));

    Tensor u({B, k, H, W});
    for (int64_t i = 0; i < u.numel(); ++i)
      u[i] = reach[static_cast<size_t>(i)] ? rng.uniform() : kMaskedLogit;

    float temperature = cfg.t0;
    bool aborted = false;
    for (int step = 0; step < cfg.steps; ++step) {
      Tape tape;
      NodeId uid = tape.leaf(u);
      NodeId z = masked_level_softmax(tape, uid, mask.reachable, temperature);
      NodeId input = soft_thermometer(tape, z);
      BoundParams bound = bind_parameters(tape, params);
      NodeId logits = forward(spec, tape, bound, input);
      // per-image losses are summed, not averaged: the algorithm is defined
      // per image and each u[b] only influences its own loss term, so the
      // batched ascent must not damp the step by 1/B
      NodeId l = sum(tape, cross_entropy_with_softmax(tape, logits, labels));
      if (!std::isfinite(tape.value(l)[0])) {
        std::fprintf(stderr,
                     "lspga: non-finite loss at batch %d restart %d step %d; restart aborted\n",
                     batch_index, restart, step);
        aborted = true;
        break;
      }
      Grad grads = backward(tape, l);
      const Tensor& g = grads.at(uid);
      // sign steps in logit space: the PGD lineage takes L-inf steepest
      // ascent, and xi = 1 only moves a uniform-initialized logit field
      // when the step is sign-sized rather than raw-gradient-sized
      for (int64_t i = 0; i < u.numel(); ++i)
        if (reach[static_cast<size_t>(i)])
          u[i] += cfg.xi * (g[i] > 0.0f ? 1.0f : g[i] < 0.0f ? -1.0f : 0.0f);
      temperature =
          cfg.anneal == AttackConfig::Anneal::Multiply ? temperature * cfg.delta : temperature / cfg.delta;
    }
    if (aborted) {
      ++result.aborted_restarts;
      continue;
    }

    // Hard projection: first maximal reachable level in scan order.
    IntTensor proj({B, H, W});
    for (int b = 0; b < B; ++b)
      for (int64_t p = 0; p < HW; ++p) {
        int best = -1;
        float bestv = 0.0f;
        for (int level = 0; level < k; ++level) {
          const int64_t idx = (static_cast<int64_t>(b) * k + level) * HW + p;
          if (!reach[static_cast<size_t>(idx)]) continue;
          if (best < 0 || u[idx] > bestv) {
            best = level;
            bestv = u[idx];
          }
        }
        proj[b * HW + p] = best;
      }
    EncodedBatch enc = thermometer_encode(proj, k);
    auto [pred, per_image_loss] = predict_with_per_image_loss(spec, params, enc.thermo, labels);

    for (int b = 0; b < B; ++b) {
      const bool mis = pred[static_cast<size_t>(b)] != labels[static_cast<size_t>(b)];
      const float lb = per_image_loss[b];
      const bool better = !have_candidate[static_cast<size_t>(b)] ||
                          (mis && !result.success[static_cast<size_t>(b)]) ||
                          (mis == static_cast<bool>(result.success[static_cast<size_t>(b)]) &&
                           lb > best_loss[static_cast<size_t>(b)]);
      if (!better) continue;
      have_candidate[static_cast<size_t>(b)] = 1;
      result.success[static_cast<size_t>(b)] = mis ? 1 : 0;
      best_loss[static_cast<size_t>(b)] = lb;
      for (int64_t p = 0; p < HW; ++p)
        result.encoded.levels[b * HW + p] = enc.levels[b * HW + p];
      for (int64_t i = 0; i < static_cast<int64_t>(k) * HW; ++i)
        result.encoded.thermo[static_cast<int64_t>(b) * k * HW + i] =
            enc.thermo[static_cast<int64_t>(b) * k * HW + i];
    }
  }

  if (result.aborted_restarts == cfg.restarts)
    throw NumericError("lspga: all " + std::to_string(cfg.restarts) +
                       " restarts aborted with non-finite loss");
  return result;
}

double attack_accuracy(const ModelSpec& spec, const Parameters& params, const Pipeline& pipeline,
                       const Dataset& data, const AttackConfig& cfg, uint64_t seed,
                       int batch_size) {
  if (data.count() == 0) throw ConfigError("attack_accuracy: empty dataset");
  const std::vector<Batch> batches = make_batches(data, batch_size, 0, /*shuffle=*/false);
  int64_t correct = 0;
  int batch_index = 0;
  for (const Batch& b : batches) {
    LspgaResult r = lspga_attack(spec, params, pipeline, b.images, b.labels, cfg, seed, batch_index++);
    for (uint8_t s : r.success)
      if (!s) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.count());
}

}  // namespace rpnet
