#include "rpnet/model.hpp"

#include <cmath>

#include "rpnet/rng.hpp"

namespace rpnet {

ModelSpec make_model_spec(const std::string& profile, int input_channels) {
  ModelSpec spec;
  spec.input_channels = input_channels;
  spec.profile_name = profile;
  if (profile == "paper") {
    spec.conv1_filters = 32;
    spec.conv2_filters = 64;
    spec.dense_units = 1024;
  } else if (profile == "fast") {
    spec.conv1_filters = 8;
    spec.conv2_filters = 16;
    spec.dense_units = 128;
  } else {
    throw ConfigError("unknown model profile \"" + profile + "\" (expected paper or fast)");
  }
  return spec;
}

int flattened_features(const ModelSpec& spec) {
  if (spec.conv1_filters == 0)
    return spec.input_channels * spec.input_height * spec.input_width;
  int h = spec.input_height, w = spec.input_width;
  auto shrink = [&](const char* where) {
    h = h - spec.kernel_size + 1;
    w = w - spec.kernel_size + 1;
    if (h <= 0 || w <= 0 || h % 2 != 0 || w % 2 != 0)
      throw ShapeError(std::string("model: spatial dims collapse at ") + where + " (h=" +
                       std::to_string(h) + ", w=" + std::to_string(w) + ")");
    h /= 2;
    w /= 2;
  };
  shrink("conv1");
  shrink("conv2");
  return spec.conv2_filters * h * w;
}

namespace {

Tensor kaiming_uniform(const std::vector<int>& shape, int fan_in, Rng& rng) {
  Tensor t(shape);
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  for (float& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

Parameters init_parameters(const ModelSpec& spec, uint64_t seed) {
  Parameters params;
  int layer = 0;
  auto layer_rng = [&]() { return Rng(mix_seed(seed, static_cast<uint64_t>(layer++))); };
  if (spec.conv1_filters > 0) {
    const int ks = spec.kernel_size;
    {
      Rng rng = layer_rng();
      params.tensors["conv1.kernel"] = kaiming_uniform(
          {spec.conv1_filters, spec.input_channels, ks, ks}, spec.input_channels * ks * ks, rng);
      params.tensors["conv1.bias"] = Tensor({spec.conv1_filters});
    }
    {
      Rng rng = layer_rng();
      params.tensors["conv2.kernel"] = kaiming_uniform(
          {spec.conv2_filters, spec.conv1_filters, ks, ks}, spec.conv1_filters * ks * ks, rng);
      params.tensors["conv2.bias"] = Tensor({spec.conv2_filters});
    }
  }
  const int flat = flattened_features(spec);
  if (spec.dense_units > 0) {
    {
      Rng rng = layer_rng();
      params.tensors["dense1.weight"] = kaiming_uniform({flat, spec.dense_units}, flat, rng);
      params.tensors["dense1.bias"] = Tensor({spec.dense_units});
    }
    Rng rng = layer_rng();
    params.tensors["dense2.weight"] =
        kaiming_uniform({spec.dense_units, spec.num_classes}, spec.dense_units, rng);
    params.tensors["dense2.bias"] = Tensor({spec.num_classes});
  } else {
    Rng rng = layer_rng();
    params.tensors["dense2.weight"] = kaiming_uniform({flat, spec.num_classes}, flat, rng);
    params.tensors["dense2.bias"] = Tensor({spec.num_classes});
  }
  return params;
}

BoundParams bind_parameters(Tape& tape, const Parameters& params) {
  BoundParams bound;
  for (const auto& [name, tensor] : params.tensors) bound.ids[name] = tape.leaf(tensor);
  return bound;
}

NodeId forward(const ModelSpec& spec, Tape& tape, const BoundParams& params, NodeId input) {
  const Tensor& in = tape.value(input);
  if (in.rank() != 4 || in.shape[1] != spec.input_channels)
    throw ShapeError("model: input " + shape_string(in.shape) + " does not match spec channels " +
                     std::to_string(spec.input_channels));
  if (in.shape[2] != spec.input_height || in.shape[3] != spec.input_width)
    throw ShapeError("model: input " + shape_string(in.shape) + " does not match spec " +
                     std::to_string(spec.input_height) + "x" + std::to_string(spec.input_width));
  const int batch = in.shape[0];

  NodeId cur = input;
  if (spec.conv1_filters > 0) {
    cur = conv2d(tape, cur, params.ids.at("conv1.kernel"));
    cur = bias_add(tape, cur, params.ids.at("conv1.bias"));
    cur = relu(tape, cur);
    cur = maxpool2d(tape, cur);
    cur = conv2d(tape, cur, params.ids.at("conv2.kernel"));
    cur = bias_add(tape, cur, params.ids.at("conv2.bias"));
    cur = relu(tape, cur);
    cur = maxpool2d(tape, cur);
  }
  cur = reshape(tape, cur, {batch, flattened_features(spec)});
  if (spec.dense_units > 0) {
    cur = matmul(tape, cur, params.ids.at("dense1.weight"));
    cur = bias_add(tape, cur, params.ids.at("dense1.bias"));
    cur = relu(tape, cur);
  }
  cur = matmul(tape, cur, params.ids.at("dense2.weight"));
  cur = bias_add(tape, cur, params.ids.at("dense2.bias"));
  return cur;
}

NodeId loss(Tape& tape, NodeId logits, const std::vector<int32_t>& labels) {
  return mean(tape, cross_entropy_with_softmax(tape, logits, labels));
}

Tensor predict_logits(const ModelSpec& spec, const Parameters& params, const Tensor& batch) {
  Tape tape;
  BoundParams bound = bind_parameters(tape, params);
  NodeId logits = forward(spec, tape, bound, tape.leaf(batch));
  return tape.value(logits);
}

std::vector<int32_t> argmax_classes(const Tensor& logits) {
  const int B = logits.shape[0], C = logits.shape[1];
  std::vector<int32_t> out(static_cast<size_t>(B));
  for (int i = 0; i < B; ++i) {
    const float* row = logits.data.data() + static_cast<int64_t>(i) * C;
    int best = 0;
    for (int c = 1; c < C; ++c)
      if (row[c] > row[best]) best = c;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

}  // namespace rpnet
