#ifndef RPNET_TAPE_HPP
#define RPNET_TAPE_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rpnet/tensor.hpp"

namespace rpnet {

using NodeId = int32_t;

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  ScalarMul,
  BiasAdd,
  MatMul,
  Conv2d,
  MaxPool2d,
  Relu,
  Tanh,
  Sigmoid,
  Softmax,
  CrossEntropyWithSoftmax,
  Sum,
  Mean,
  Reshape,
  CumsumLevels,
  MaskedLevelSoftmax,
};

const char* op_name(Op op);

struct OpAttrs {
  float scalar = 0.0f;                               // ScalarMul factor, softmax temperature
  std::vector<int32_t> ints;                         // labels (CE), target shape (Reshape)
  std::shared_ptr<const std::vector<uint8_t>> mask;  // MaskedLevelSoftmax reachability
};

struct TapeNode {
  Op op = Op::Leaf;
  NodeId a = -1;
  NodeId b = -1;
  Tensor value;
  OpAttrs attrs;
};

/// Append-only record of primitive ops. Node ids are topologically ordered:
/// operands always precede results. A tape is confined to one worker.
class Tape {
 public:
  NodeId leaf(Tensor value);

  /// Validates operand shapes for `op`, computes the forward value, and
  /// appends the node. Throws ShapeError naming the op and shapes on misuse.
  NodeId record(Op op, NodeId a, NodeId b = -1, OpAttrs attrs = {});

  const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
  const TapeNode& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  std::vector<TapeNode> nodes_;
};

// Typed wrappers over Tape::record.
NodeId add(Tape& t, NodeId a, NodeId b);
NodeId sub(Tape& t, NodeId a, NodeId b);
NodeId mul(Tape& t, NodeId a, NodeId b);
NodeId scalar_mul(Tape& t, NodeId a, float c);
NodeId bias_add(Tape& t, NodeId a, NodeId bias);
NodeId matmul(Tape& t, NodeId a, NodeId b);
NodeId conv2d(Tape& t, NodeId input, NodeId kernel);  // stride 1, valid padding
NodeId maxpool2d(Tape& t, NodeId a);                  // 2x2, stride 2
NodeId relu(Tape& t, NodeId a);
NodeId tanh(Tape& t, NodeId a);
NodeId sigmoid(Tape& t, NodeId a);
NodeId softmax(Tape& t, NodeId a);
NodeId cross_entropy_with_softmax(Tape& t, NodeId logits, const std::vector<int32_t>& labels);
NodeId sum(Tape& t, NodeId a);
NodeId mean(Tape& t, NodeId a);
NodeId reshape(Tape& t, NodeId a, const std::vector<int>& new_shape);
NodeId cumsum_levels(Tape& t, NodeId a);  // cumulative sum over dim 1 of [B,K,H,W]
NodeId masked_level_softmax(Tape& t, NodeId u,
                            std::shared_ptr<const std::vector<uint8_t>> mask,
                            float temperature);

/// d(loss)/d(node) for every node reachable backward from the loss node.
/// Unreached nodes are absent.
class Grad {
 public:
  explicit Grad(size_t n) : by_node_(n) {}
  bool contains(NodeId id) const {
    return id >= 0 && static_cast<size_t>(id) < by_node_.size() &&
           by_node_[static_cast<size_t>(id)].has_value();
  }
  const Tensor& at(NodeId id) const;
  Tensor& slot(NodeId id, const std::vector<int>& shape);

 private:
  std::vector<std::optional<Tensor>> by_node_;
};

Grad backward(const Tape& tape, NodeId loss);

/// Max over coordinates of |analytic - central difference| / max(1e-8, |cd|).
/// `build` constructs a scalar-valued graph from the input leaf; it is called
/// on fresh tapes for the analytic pass and for every +-h probe.
double finite_diff_check(const std::function<NodeId(Tape&, NodeId)>& build, const Tensor& x,
                         float h);

}  // namespace rpnet

#endif  // RPNET_TAPE_HPP
