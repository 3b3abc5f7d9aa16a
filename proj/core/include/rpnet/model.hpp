#ifndef RPNET_MODEL_HPP
#define RPNET_MODEL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rpnet/tape.hpp"
#include "rpnet/tensor.hpp"

namespace rpnet {

/// LeNet-class architecture description. conv1_filters == 0 selects a
/// dense-only degenerate network (flatten -> [dense_units -> relu] ->
/// classes), used by toy setups and tests.
struct ModelSpec {
  int input_height = 28;
  int input_width = 28;
  int input_channels = 1;
  int conv1_filters = 32;
  int conv2_filters = 64;
  int kernel_size = 5;
  int dense_units = 1024;
  int num_classes = 10;
  std::string profile_name = "paper";
};

/// "paper": conv 32/64, dense 1024. "fast": conv 8/16, dense 128 (CI scale).
ModelSpec make_model_spec(const std::string& profile, int input_channels);

/// Flattened feature count entering the first dense layer; validates that
/// every intermediate spatial dim is a positive integer.
int flattened_features(const ModelSpec& spec);

struct Parameters {
  std::map<std::string, Tensor> tensors;  // ordered; iteration is deterministic
};

/// Kaiming-uniform fan-in init (bound sqrt(6/fan_in)), zero biases.
/// Bitwise deterministic for a given (spec, seed).
Parameters init_parameters(const ModelSpec& spec, uint64_t seed);

struct BoundParams {
  std::map<std::string, NodeId> ids;
};

BoundParams bind_parameters(Tape& tape, const Parameters& params);

/// Records the network on the tape and returns the logits node [B,10].
/// `input` must already be on the tape with channels = spec.input_channels.
NodeId forward(const ModelSpec& spec, Tape& tape, const BoundParams& params, NodeId input);

/// Mean softmax cross-entropy over the batch (scalar node).
NodeId loss(Tape& tape, NodeId logits, const std::vector<int32_t>& labels);

/// Convenience forward pass on a throwaway tape.
Tensor predict_logits(const ModelSpec& spec, const Parameters& params, const Tensor& batch);

/// Row-wise argmax of logits; first maximal class wins ties.
std::vector<int32_t> argmax_classes(const Tensor& logits);

}  // namespace rpnet

#endif  // RPNET_MODEL_HPP
