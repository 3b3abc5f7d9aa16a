#ifndef RPNET_ATTACK_HPP
#define RPNET_ATTACK_HPP

#include <cstdint>
#include <memory>
#include <vector>

#include "rpnet/dataio.hpp"
#include "rpnet/model.hpp"
#include "rpnet/pipeline.hpp"

namespace rpnet {

struct AttackConfig {
  float epsilon = 0.3f;  // L-inf bound on raw pixels
  float delta = 1.2f;    // temperature annealing factor
  float xi = 1.0f;       // logit gradient step size
  int steps = 7;
  int levels = 15;
  int restarts = 1;
  float t0 = 1.0f;
  enum class Anneal { Multiply, Divide };
  Anneal anneal = Anneal::Multiply;
};

void validate_attack_config(const AttackConfig& cfg);

/// x' = clip_[0,1](x + epsilon * sign(grad_x L)); untargeted ascent on the
/// true-label loss. Continuous-input models only (channels = 1).
Tensor fgsm(const ModelSpec& spec, const Parameters& params, const Tensor& batch,
            const std::vector<int32_t>& labels, float epsilon);

/// Repeats x <- clip_{eps-ball, [0,1]}(x + alpha_step * sign(grad_x L)).
/// With iters = 1 and alpha_step = epsilon this equals fgsm bitwise.
Tensor iterative_fgsm(const ModelSpec& spec, const Parameters& params, const Tensor& batch,
                      const std::vector<int32_t>& labels, float epsilon, float alpha_step,
                      int iters);

/// Per-pixel reachability of quantization levels within the raw epsilon
/// ball, under the clean batch's frozen BN statistics and quantizer range.
struct LevelMask {
  std::vector<int> shape;  // [B,k,H,W]
  std::shared_ptr<const std::vector<uint8_t>> reachable;

  bool at(int64_t flat_index) const { return (*reachable)[static_cast<size_t>(flat_index)] != 0; }
};

/// Evaluates the k+1 point grid alpha_i = i/k of mixes between
/// clip(x-eps,0,1) and clip(x+eps,0,1) through the frozen pipeline and
/// unions the quantized levels; the clean level is always included.
LevelMask build_level_mask(const Pipeline& pipeline, const Tensor& clean_batch, float epsilon,
                           int k);

/// Differentiable thermometer relaxation: t_i = sum_{l <= i} z_l, so a hard
/// one-hot at level l reproduces thermometer_encode(l).
NodeId soft_thermometer(Tape& tape, NodeId z);

struct LspgaResult {
  EncodedBatch encoded;          // worst case per image across restarts
  std::vector<uint8_t> success;  // 1 where some restart misclassifies
  int aborted_restarts = 0;      // restarts dropped on non-finite loss
};

/// Logit-space projected gradient ascent over reachable levels
/// (relaxation logits u, per-pixel masked softmax at temperature T, soft
/// thermometer input, hard argmax projection after the final step).
/// Restart r of batch b draws from the stream (seed, batch_index, r).
LspgaResult lspga_attack(const ModelSpec& spec, const Parameters& params,
                         const Pipeline& pipeline, const Tensor& batch,
                         const std::vector<int32_t>& labels, const AttackConfig& cfg,
                         uint64_t seed, int batch_index = 0);

/// Percentage of images still classified correctly after lspga_attack,
/// processed in evaluation batches of `batch_size`.
double attack_accuracy(const ModelSpec& spec, const Parameters& params, const Pipeline& pipeline,
                       const Dataset& data, const AttackConfig& cfg, uint64_t seed,
                       int batch_size = 100);

}  // namespace rpnet

#endif  // RPNET_ATTACK_HPP
