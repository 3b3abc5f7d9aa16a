#ifndef RPNET_TRAINER_HPP
#define RPNET_TRAINER_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rpnet/attack.hpp"
#include "rpnet/dataio.hpp"
#include "rpnet/model.hpp"
#include "rpnet/pipeline.hpp"

namespace rpnet {

struct TrainConfig {
  int epochs = 5;
  int batch_size = 100;
  float learning_rate = 1e-3f;
  enum class Optimizer { Adam, Sgd };
  Optimizer optimizer = Optimizer::Adam;
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
  bool adversarial = false;
  float adv_fraction = 0.5f;  // share of each batch replaced by LS-PGA output
  AttackConfig attack;
  uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& cfg);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;  // NaN when no eval set was given
};

struct TrainResult {
  Parameters params;
  std::vector<EpochMetrics> metrics;
};

using GradMap = std::map<std::string, Tensor>;

/// Images per batch replaced by adversarial examples: ceil(fraction * B).
int adversarial_count(float adv_fraction, int batch_size);

void sgd_step(Parameters& params, const GradMap& grads, float learning_rate);

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  int64_t t = 0;
};

/// Bias-corrected Adam update.
void adam_step(Parameters& params, const GradMap& grads, AdamState& state,
               const TrainConfig& cfg);

/// Clean or adversarial training of (pipeline, model). With
/// cfg.adversarial, the first ceil(adv_fraction * B) images of every batch
/// are replaced by LS-PGA encodings generated against the current
/// parameters; labels are kept. Adversarial training requires an encoded
/// model. Per-epoch clean test accuracy is reported when eval_set is given.
/// Deterministic for fixed (config, seed, data) in a single-worker run.
TrainResult train(const Dataset& train_set, const Pipeline& pipeline, bool encoded,
                  const ModelSpec& spec, const TrainConfig& cfg,
                  const Dataset* eval_set = nullptr);

}  // namespace rpnet

#endif  // RPNET_TRAINER_HPP
