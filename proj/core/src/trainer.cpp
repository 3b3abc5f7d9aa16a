#include "rpnet/trainer.hpp"

#include <cmath>
#include <cstring>

#include "rpnet/harness.hpp"
#include "rpnet/rng.hpp"

namespace rpnet {

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (!(cfg.learning_rate > 0.0f)) throw ConfigError("train: learning rate must be > 0");
  if (cfg.adv_fraction < 0.0f || cfg.adv_fraction > 1.0f)
    throw ConfigError("train: adv_fraction must be in [0,1]");
  if (cfg.adversarial) validate_attack_config(cfg.attack);
}

int adversarial_count(float adv_fraction, int batch_size) {
  // guard against float32 fraction drift (0.3f * 10 is 3.0000001)
  const double x = static_cast<double>(adv_fraction) * batch_size;
  return static_cast<int>(std::ceil(x * (1.0 - 1e-7) - 1e-9));
}

void sgd_step(Parameters& params, const GradMap& grads, float learning_rate) {
  for (auto& [name, tensor] : params.tensors) {
    const auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    if (!g.same_shape(tensor))
      throw ShapeError("sgd: gradient " + shape_string(g.shape) + " does not match parameter \"" +
                       name + "\" " + shape_string(tensor.shape));
    for (int64_t i = 0; i < tensor.numel(); ++i) tensor[i] -= learning_rate * g[i];
  }
}

void adam_step(Parameters& params, const GradMap& grads, AdamState& state,
               const TrainConfig& cfg) {
  state.t += 1;
  const float b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const float bias1 = 1.0f - std::pow(b1, static_cast<float>(state.t));
  const float bias2 = 1.0f - std::pow(b2, static_cast<float>(state.t));
  for (auto& [name, tensor] : params.tensors) {
    const auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    if (!g.same_shape(tensor))
      throw ShapeError("adam: gradient " + shape_string(g.shape) + " does not match parameter \"" +
                       name + "\" " + shape_string(tensor.shape));
    Tensor& m = state.m.try_emplace(name, Tensor(tensor.shape)).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(tensor.shape)).first->second;
    for (int64_t i = 0; i < tensor.numel(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      const float mhat = m[i] / bias1;
      const float vhat = v[i] / bias2;
      tensor[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

TrainResult train(const Dataset& train_set, const Pipeline& pipeline, bool encoded,
                  const ModelSpec& spec, const TrainConfig& cfg, const Dataset* eval_set) {
  validate_train_config(cfg);
  if (cfg.adversarial && !encoded)
    throw ConfigError("train: adversarial training needs an encoded (thermometer) model");
  if (encoded && spec.input_channels != pipeline.levels)
    throw ConfigError("train: encoded model channels " + std::to_string(spec.input_channels) +
                      " differ from pipeline levels " + std::to_string(pipeline.levels));

  TrainResult result;
  result.params = init_parameters(spec, cfg.seed);
  AdamState adam;
  int attack_batch_index = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    int64_t seen = 0;
    const std::vector<Batch> batches =
        make_batches(train_set, cfg.batch_size, mix_seed(cfg.seed, static_cast<uint64_t>(epoch)),
                     /*shuffle=*/true);
    int batch_no = 0;
    for (const Batch& batch : batches) {
      const int bsize = batch.images.shape[0];
      Tensor input;
      if (encoded) {
        input = encode_batch(pipeline, batch.images).first.thermo;
        if (cfg.adversarial) {
          const int adv_count = adversarial_count(cfg.adv_fraction, bsize);
          if (adv_count > 0) {
            Tensor sub({adv_count, 1, batch.images.shape[2], batch.images.shape[3]});
            const int64_t row = batch.images.numel() / bsize;
            std::memcpy(sub.data.data(), batch.images.data.data(),
                        static_cast<size_t>(adv_count * row) * sizeof(float));
            const std::vector<int32_t> sub_labels(batch.labels.begin(),
                                                  batch.labels.begin() + adv_count);
            LspgaResult adv = lspga_attack(spec, result.params, pipeline, sub, sub_labels,
                                           cfg.attack, cfg.seed, attack_batch_index);
            const int64_t enc_row = input.numel() / bsize;
            std::memcpy(input.data.data(), adv.encoded.thermo.data.data(),
                        static_cast<size_t>(adv_count * enc_row) * sizeof(float));
          }
        }
      } else {
        input = pipeline.stages.empty() ? batch.images : run_pipeline(pipeline, batch.images).first;
      }
      ++attack_batch_index;

      Tape tape;
      BoundParams bound = bind_parameters(tape, result.params);
      NodeId logits = forward(spec, tape, bound, tape.leaf(input));
      NodeId l = loss(tape, logits, batch.labels);
      const float batch_loss = tape.value(l)[0];
      if (!std::isfinite(batch_loss))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           " batch " + std::to_string(batch_no));
      Grad grads = backward(tape, l);
      GradMap gmap;
      for (const auto& [name, node] : bound.ids) gmap[name] = grads.at(node);
      if (cfg.optimizer == TrainConfig::Optimizer::Adam)
        adam_step(result.params, gmap, adam, cfg);
      else
        sgd_step(result.params, gmap, cfg.learning_rate);

      loss_sum += static_cast<double>(batch_loss) * bsize;
      seen += bsize;
      ++batch_no;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(seen);
    m.test_accuracy =
        eval_set ? clean_accuracy(spec, result.params, pipeline, encoded, *eval_set, 100)
                 : std::nan("");
    result.metrics.push_back(m);
  }
  return result;
}

}  // namespace rpnet
