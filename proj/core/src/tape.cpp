#include "rpnet/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace rpnet {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::ScalarMul: return "scalar-mul";
    case Op::BiasAdd: return "bias-add";
    case Op::MatMul: return "matmul";
    case Op::Conv2d: return "conv2d";
    case Op::MaxPool2d: return "maxpool2d";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softmax: return "softmax";
    case Op::CrossEntropyWithSoftmax: return "cross-entropy-with-softmax";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Reshape: return "reshape";
    case Op::CumsumLevels: return "cumsum-levels";
    case Op::MaskedLevelSoftmax: return "masked-level-softmax";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_fail(Op op, const std::string& detail) {
  throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

void require_same_or_scalar(Op op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b) && !a.is_scalar() && !b.is_scalar())
    shape_fail(op, "shapes " + shape_string(a.shape) + " and " + shape_string(b.shape) +
                       " differ (broadcast is scalar-vs-tensor only)");
}

float stable_sigmoid(float x) {
  if (x >= 0.0f) {
    float e = std::exp(-x);
    return 1.0f / (1.0f + e);
  }
  float e = std::exp(x);
  return e / (1.0f + e);
}

// out[b,oc,:,:] += in[b,ic,:,:] (*) ker[oc,ic,:,:]; accumulation order over
// (ic,kh,kw) is fixed, so results do not depend on the thread count.
void conv2d_forward(const Tensor& in, const Tensor& ker, Tensor& out) {
  const int B = in.shape[0], IC = in.shape[1], H = in.shape[2], W = in.shape[3];
  const int OC = ker.shape[0], KH = ker.shape[2], KW = ker.shape[3];
  const int OH = H - KH + 1, OW = W - KW + 1;
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int oc = 0; oc < OC; ++oc) {
      float* outp = out.data.data() + (static_cast<int64_t>(b) * OC + oc) * OH * OW;
      for (int ic = 0; ic < IC; ++ic) {
        const float* inp = in.data.data() + (static_cast<int64_t>(b) * IC + ic) * H * W;
        const float* kp = ker.data.data() + (static_cast<int64_t>(oc) * IC + ic) * KH * KW;
        for (int kh = 0; kh < KH; ++kh) {
          for (int kw = 0; kw < KW; ++kw) {
            const float k = kp[kh * KW + kw];
            for (int oh = 0; oh < OH; ++oh) {
              const float* irow = inp + (oh + kh) * W + kw;
              float* orow = outp + oh * OW;
              for (int ow = 0; ow < OW; ++ow) orow[ow] += k * irow[ow];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const Tensor& g, const Tensor& ker, Tensor& din) {
  const int B = din.shape[0], IC = din.shape[1], H = din.shape[2], W = din.shape[3];
  const int OC = ker.shape[0], KH = ker.shape[2], KW = ker.shape[3];
  const int OH = H - KH + 1, OW = W - KW + 1;
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int oc = 0; oc < OC; ++oc) {
      const float* gp = g.data.data() + (static_cast<int64_t>(b) * OC + oc) * OH * OW;
      for (int ic = 0; ic < IC; ++ic) {
        float* dp = din.data.data() + (static_cast<int64_t>(b) * IC + ic) * H * W;
        const float* kp = ker.data.data() + (static_cast<int64_t>(oc) * IC + ic) * KH * KW;
        for (int kh = 0; kh < KH; ++kh) {
          for (int kw = 0; kw < KW; ++kw) {
            const float k = kp[kh * KW + kw];
            for (int oh = 0; oh < OH; ++oh) {
              float* drow = dp + (oh + kh) * W + kw;
              const float* grow = gp + oh * OW;
              for (int ow = 0; ow < OW; ++ow) drow[ow] += k * grow[ow];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_kernel(const Tensor& g, const Tensor& in, Tensor& dker) {
  const int B = in.shape[0], IC = in.shape[1], H = in.shape[2], W = in.shape[3];
  const int OC = dker.shape[0], KH = dker.shape[2], KW = dker.shape[3];
  const int OH = H - KH + 1, OW = W - KW + 1;
#pragma omp parallel for schedule(static)
  for (int oc = 0; oc < OC; ++oc) {
    for (int ic = 0; ic < IC; ++ic) {
      float* dkp = dker.data.data() + (static_cast<int64_t>(oc) * IC + ic) * KH * KW;
      for (int kh = 0; kh < KH; ++kh) {
        for (int b = 0; b < B; ++b) {
          const float* gp = g.data.data() + (static_cast<int64_t>(b) * OC + oc) * OH * OW;
          const float* inp = in.data.data() + (static_cast<int64_t>(b) * IC + ic) * H * W;
          for (int oh = 0; oh < OH; ++oh) {
            const float* grow = gp + oh * OW;
            const float* irow = inp + (oh + kh) * W;
            for (int kw = 0; kw < KW; ++kw) {
              float acc = 0.0f;
              const float* ir = irow + kw;
              for (int ow = 0; ow < OW; ++ow) acc += grow[ow] * ir[ow];
              dkp[kh * KW + kw] += acc;
            }
          }
        }
      }
    }
  }
}

void matmul_forward(const Tensor& a, const Tensor& b, Tensor& out) {
  const int M = a.shape[0], K = a.shape[1], N = b.shape[1];
#pragma omp parallel for schedule(static)
  for (int m = 0; m < M; ++m) {
    float* orow = out.data.data() + static_cast<int64_t>(m) * N;
    const float* arow = a.data.data() + static_cast<int64_t>(m) * K;
    for (int k = 0; k < K; ++k) {
      const float av = arow[k];
      const float* brow = b.data.data() + static_cast<int64_t>(k) * N;
      for (int n = 0; n < N; ++n) orow[n] += av * brow[n];
    }
  }
}

}  // namespace

NodeId Tape::leaf(Tensor value) {
  TapeNode n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::record(Op op, NodeId a, NodeId b, OpAttrs attrs) {
  auto check_id = [&](NodeId id) {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
      shape_fail(op, "operand id " + std::to_string(id) + " not on tape");
  };
  if (op == Op::Leaf) shape_fail(op, "leaves are created via Tape::leaf");
  check_id(a);
  const Tensor& va = nodes_[static_cast<size_t>(a)].value;
  const Tensor* vb = nullptr;
  if (b >= 0) {
    check_id(b);
    vb = &nodes_[static_cast<size_t>(b)].value;
  }

  TapeNode n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.attrs = std::move(attrs);

  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      if (!vb) shape_fail(op, "needs two operands");
      require_same_or_scalar(op, va, *vb);
      const Tensor& big = va.is_scalar() && !vb->is_scalar() ? *vb : va;
      n.value = Tensor(big.shape);
      const int64_t nel = big.numel();
      const bool as = va.is_scalar() && !vb->is_scalar();
      const bool bs = vb->is_scalar() && !va.is_scalar();
      for (int64_t i = 0; i < nel; ++i) {
        const float x = as ? va[0] : va[i];
        const float y = bs ? (*vb)[0] : (*vb)[i];
        n.value[i] = op == Op::Add ? x + y : op == Op::Sub ? x - y : x * y;
      }
      break;
    }
    case Op::ScalarMul: {
      n.value = Tensor(va.shape);
      for (int64_t i = 0; i < va.numel(); ++i) n.value[i] = n.attrs.scalar * va[i];
      break;
    }
    case Op::BiasAdd: {
      if (!vb) shape_fail(op, "needs two operands");
      if (vb->rank() != 1) shape_fail(op, "bias must be rank 1, got " + shape_string(vb->shape));
      if (va.rank() == 2) {
        if (va.shape[1] != vb->shape[0])
          shape_fail(op, "bias length " + shape_string(vb->shape) + " does not match columns of " +
                             shape_string(va.shape));
        n.value = Tensor(va.shape);
        const int B = va.shape[0], N = va.shape[1];
        for (int i = 0; i < B; ++i)
          for (int j = 0; j < N; ++j)
            n.value[static_cast<int64_t>(i) * N + j] = va[static_cast<int64_t>(i) * N + j] + (*vb)[j];
      } else if (va.rank() == 4) {
        if (va.shape[1] != vb->shape[0])
          shape_fail(op, "bias length " + shape_string(vb->shape) + " does not match channels of " +
                             shape_string(va.shape));
        n.value = Tensor(va.shape);
        const int B = va.shape[0], C = va.shape[1];
        const int64_t HW = static_cast<int64_t>(va.shape[2]) * va.shape[3];
        for (int i = 0; i < B; ++i)
          for (int c = 0; c < C; ++c) {
            const float bv = (*vb)[c];
            const int64_t base = (static_cast<int64_t>(i) * C + c) * HW;
            for (int64_t p = 0; p < HW; ++p) n.value[base + p] = va[base + p] + bv;
          }
      } else {
        shape_fail(op, "input must be rank 2 or 4, got " + shape_string(va.shape));
      }
      break;
    }
    case Op::MatMul: {
      if (!vb) shape_fail(op, "needs two operands");
      if (va.rank() != 2 || vb->rank() != 2)
        shape_fail(op, "expects two matrices, got " + shape_string(va.shape) + " and " +
                           shape_string(vb->shape));
      if (va.shape[1] != vb->shape[0])
        shape_fail(op, "inner dimensions differ: " + shape_string(va.shape) + " vs " +
                           shape_string(vb->shape));
      n.value = Tensor({va.shape[0], vb->shape[1]});
      matmul_forward(va, *vb, n.value);
      break;
    }
    case Op::Conv2d: {
      if (!vb) shape_fail(op, "needs two operands");
      if (va.rank() != 4 || vb->rank() != 4)
        shape_fail(op, "expects input [B,C,H,W] and kernel [OC,IC,KH,KW], got " +
                           shape_string(va.shape) + " and " + shape_string(vb->shape));
      if (va.shape[1] != vb->shape[1])
        shape_fail(op, "input channels of " + shape_string(va.shape) +
                           " do not match kernel " + shape_string(vb->shape));
      if (va.shape[2] < vb->shape[2] || va.shape[3] < vb->shape[3])
        shape_fail(op, "kernel " + shape_string(vb->shape) + " larger than input " +
                           shape_string(va.shape));
      n.value = Tensor({va.shape[0], vb->shape[0], va.shape[2] - vb->shape[2] + 1,
                        va.shape[3] - vb->shape[3] + 1});
      conv2d_forward(va, *vb, n.value);
      break;
    }
    case Op::MaxPool2d: {
      if (va.rank() != 4) shape_fail(op, "expects [B,C,H,W], got " + shape_string(va.shape));
      if (va.shape[2] % 2 != 0 || va.shape[3] % 2 != 0)
        shape_fail(op, "spatial dims of " + shape_string(va.shape) + " must be even");
      const int B = va.shape[0], C = va.shape[1], H = va.shape[2], W = va.shape[3];
      const int OH = H / 2, OW = W / 2;
      n.value = Tensor({B, C, OH, OW});
      for (int bc = 0; bc < B * C; ++bc) {
        const float* inp = va.data.data() + static_cast<int64_t>(bc) * H * W;
        float* outp = n.value.data.data() + static_cast<int64_t>(bc) * OH * OW;
        for (int oh = 0; oh < OH; ++oh)
          for (int ow = 0; ow < OW; ++ow) {
            // first maximal element in scan order wins
            float best = inp[(2 * oh) * W + 2 * ow];
            for (int dh = 0; dh < 2; ++dh)
              for (int dw = 0; dw < 2; ++dw) {
                const float v = inp[(2 * oh + dh) * W + 2 * ow + dw];
                if (v > best) best = v;
              }
            outp[oh * OW + ow] = best;
          }
      }
      break;
    }
    case Op::Relu: {
      n.value = Tensor(va.shape);
      for (int64_t i = 0; i < va.numel(); ++i) n.value[i] = va[i] > 0.0f ? va[i] : 0.0f;
      break;
    }
    case Op::Tanh: {
      n.value = Tensor(va.shape);
      for (int64_t i = 0; i < va.numel(); ++i) n.value[i] = std::tanh(va[i]);
      break;
    }
    case Op::Sigmoid: {
      n.value = Tensor(va.shape);
      for (int64_t i = 0; i < va.numel(); ++i) n.value[i] = stable_sigmoid(va[i]);
      break;
    }
    case Op::Softmax: {
      if (va.rank() != 2) shape_fail(op, "expects [B,C], got " + shape_string(va.shape));
      const int B = va.shape[0], C = va.shape[1];
      n.value = Tensor(va.shape);
      for (int i = 0; i < B; ++i) {
        const float* row = va.data.data() + static_cast<int64_t>(i) * C;
        float* orow = n.value.data.data() + static_cast<int64_t>(i) * C;
        float m = row[0];
        for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
        float s = 0.0f;
        for (int c = 0; c < C; ++c) {
          orow[c] = std::exp(row[c] - m);
          s += orow[c];
        }
        for (int c = 0; c < C; ++c) orow[c] /= s;
      }
      break;
    }
    case Op::CrossEntropyWithSoftmax: {
      if (va.rank() != 2) shape_fail(op, "expects logits [B,C], got " + shape_string(va.shape));
      const int B = va.shape[0], C = va.shape[1];
      if (static_cast<int>(n.attrs.ints.size()) != B)
        shape_fail(op, "got " + std::to_string(n.attrs.ints.size()) + " labels for batch of " +
                           std::to_string(B));
      for (int32_t l : n.attrs.ints)
        if (l < 0 || l >= C)
          shape_fail(op, "label " + std::to_string(l) + " out of range [0," + std::to_string(C) + ")");
      n.value = Tensor({B});
      for (int i = 0; i < B; ++i) {
        const float* row = va.data.data() + static_cast<int64_t>(i) * C;
        float m = row[0];
        for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
        float s = 0.0f;
        for (int c = 0; c < C; ++c) s += std::exp(row[c] - m);
        n.value[i] = m + std::log(s) - row[n.attrs.ints[static_cast<size_t>(i)]];
      }
      break;
    }
    case Op::Sum:
    case Op::Mean: {
      float s = 0.0f;
      for (int64_t i = 0; i < va.numel(); ++i) s += va[i];
      if (op == Op::Mean) s /= static_cast<float>(va.numel());
      n.value = Tensor::scalar(s);
      break;
    }
    case Op::Reshape: {
      std::vector<int> ns(n.attrs.ints.begin(), n.attrs.ints.end());
      if (shape_numel(ns) != va.numel())
        shape_fail(op, "cannot reshape " + shape_string(va.shape) + " to " + shape_string(ns));
      n.value = Tensor(ns, va.data);
      break;
    }
    case Op::CumsumLevels: {
      if (va.rank() != 4) shape_fail(op, "expects [B,K,H,W], got " + shape_string(va.shape));
      const int B = va.shape[0], K = va.shape[1];
      const int64_t HW = static_cast<int64_t>(va.shape[2]) * va.shape[3];
      n.value = Tensor(va.shape);
      for (int i = 0; i < B; ++i)
        for (int k = 0; k < K; ++k) {
          const int64_t cur = (static_cast<int64_t>(i) * K + k) * HW;
          const int64_t prev = cur - HW;
          for (int64_t p = 0; p < HW; ++p)
            n.value[cur + p] = va[cur + p] + (k > 0 ? n.value[prev + p] : 0.0f);
        }
      break;
    }
    case Op::MaskedLevelSoftmax: {
      if (va.rank() != 4) shape_fail(op, "expects [B,K,H,W], got " + shape_string(va.shape));
      if (!(n.attrs.scalar > 0.0f)) shape_fail(op, "temperature must be positive");
      if (!n.attrs.mask || static_cast<int64_t>(n.attrs.mask->size()) != va.numel())
        shape_fail(op, "mask size does not match input " + shape_string(va.shape));
      const int B = va.shape[0], K = va.shape[1];
      const int64_t HW = static_cast<int64_t>(va.shape[2]) * va.shape[3];
      const float invT = 1.0f / n.attrs.scalar;
      const std::vector<uint8_t>& mask = *n.attrs.mask;
      n.value = Tensor(va.shape);
      for (int i = 0; i < B; ++i) {
        const int64_t base = static_cast<int64_t>(i) * K * HW;
        for (int64_t p = 0; p < HW; ++p) {
          float m = -std::numeric_limits<float>::infinity();
          for (int k = 0; k < K; ++k)
            if (mask[static_cast<size_t>(base + k * HW + p)])
              m = std::max(m, va[base + k * HW + p] * invT);
          if (!std::isfinite(m)) shape_fail(op, "pixel with no reachable level");
          float s = 0.0f;
          for (int k = 0; k < K; ++k) {
            const int64_t idx = base + k * HW + p;
            if (mask[static_cast<size_t>(idx)]) {
              n.value[idx] = std::exp(va[idx] * invT - m);
              s += n.value[idx];
            }
          }
          for (int k = 0; k < K; ++k) {
            const int64_t idx = base + k * HW + p;
            if (mask[static_cast<size_t>(idx)]) n.value[idx] /= s;
          }
        }
      }
      break;
    }
    case Op::Leaf:
      break;
  }

  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId add(Tape& t, NodeId a, NodeId b) { return t.record(Op::Add, a, b); }
NodeId sub(Tape& t, NodeId a, NodeId b) { return t.record(Op::Sub, a, b); }
NodeId mul(Tape& t, NodeId a, NodeId b) { return t.record(Op::Mul, a, b); }
NodeId scalar_mul(Tape& t, NodeId a, float c) {
  OpAttrs attrs;
  attrs.scalar = c;
  return t.record(Op::ScalarMul, a, -1, std::move(attrs));
}
NodeId bias_add(Tape& t, NodeId a, NodeId bias) { return t.record(Op::BiasAdd, a, bias); }
NodeId matmul(Tape& t, NodeId a, NodeId b) { return t.record(Op::MatMul, a, b); }
NodeId conv2d(Tape& t, NodeId input, NodeId kernel) { return t.record(Op::Conv2d, input, kernel); }
NodeId maxpool2d(Tape& t, NodeId a) { return t.record(Op::MaxPool2d, a); }
NodeId relu(Tape& t, NodeId a) { return t.record(Op::Relu, a); }
NodeId tanh(Tape& t, NodeId a) { return t.record(Op::Tanh, a); }
NodeId sigmoid(Tape& t, NodeId a) { return t.record(Op::Sigmoid, a); }
NodeId softmax(Tape& t, NodeId a) { return t.record(Op::Softmax, a); }
NodeId cross_entropy_with_softmax(Tape& t, NodeId logits, const std::vector<int32_t>& labels) {
  OpAttrs attrs;
  attrs.ints = labels;
  return t.record(Op::CrossEntropyWithSoftmax, logits, -1, std::move(attrs));
}
NodeId sum(Tape& t, NodeId a) { return t.record(Op::Sum, a); }
NodeId mean(Tape& t, NodeId a) { return t.record(Op::Mean, a); }
NodeId reshape(Tape& t, NodeId a, const std::vector<int>& new_shape) {
  OpAttrs attrs;
  attrs.ints.assign(new_shape.begin(), new_shape.end());
  return t.record(Op::Reshape, a, -1, std::move(attrs));
}
NodeId cumsum_levels(Tape& t, NodeId a) { return t.record(Op::CumsumLevels, a); }
NodeId masked_level_softmax(Tape& t, NodeId u,
                            std::shared_ptr<const std::vector<uint8_t>> mask, float temperature) {
  OpAttrs attrs;
  attrs.scalar = temperature;
  attrs.mask = std::move(mask);
  return t.record(Op::MaskedLevelSoftmax, u, -1, std::move(attrs));
}

const Tensor& Grad::at(NodeId id) const {
  if (!contains(id)) throw ShapeError("grad: node " + std::to_string(id) + " has no gradient");
  return *by_node_[static_cast<size_t>(id)];
}

Tensor& Grad::slot(NodeId id, const std::vector<int>& shape) {
  auto& opt = by_node_[static_cast<size_t>(id)];
  if (!opt) opt.emplace(shape);
  return *opt;
}

namespace {

// db += g, reduced to the bias shape (rank-2 columns or rank-4 channels).
void accumulate_bias_grad(const Tensor& g, Tensor& db) {
  if (g.rank() == 2) {
    const int B = g.shape[0], N = g.shape[1];
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < N; ++j) db[j] += g[static_cast<int64_t>(i) * N + j];
  } else {
    const int B = g.shape[0], C = g.shape[1];
    const int64_t HW = static_cast<int64_t>(g.shape[2]) * g.shape[3];
    for (int i = 0; i < B; ++i)
      for (int c = 0; c < C; ++c) {
        const int64_t base = (static_cast<int64_t>(i) * C + c) * HW;
        float acc = 0.0f;
        for (int64_t p = 0; p < HW; ++p) acc += g[base + p];
        db[c] += acc;
      }
  }
}

void accumulate_scaled(const Tensor& g, float c, Tensor& dst) {
  for (int64_t i = 0; i < g.numel(); ++i) dst[i] += c * g[i];
}

}  // namespace

Grad backward(const Tape& tape, NodeId loss) {
  if (loss < 0 || loss >= tape.size())
    throw ShapeError("backward: loss node " + std::to_string(loss) + " not on tape");
  const Tensor& lv = tape.value(loss);
  if (!lv.is_scalar())
    throw ShapeError("backward: loss node must be scalar, got " + shape_string(lv.shape));

  // Mark nodes reachable backward from the loss; only they receive gradients.
  std::vector<uint8_t> reached(static_cast<size_t>(tape.size()), 0);
  reached[static_cast<size_t>(loss)] = 1;
  for (NodeId id = loss; id >= 0; --id) {
    if (!reached[static_cast<size_t>(id)]) continue;
    const TapeNode& n = tape.node(id);
    if (n.a >= 0) reached[static_cast<size_t>(n.a)] = 1;
    if (n.b >= 0) reached[static_cast<size_t>(n.b)] = 1;
  }

  Grad grad(static_cast<size_t>(tape.size()));
  grad.slot(loss, lv.shape)[0] = 1.0f;

  for (NodeId id = loss; id >= 0; --id) {
    if (!reached[static_cast<size_t>(id)] || !grad.contains(id)) continue;
    const TapeNode& n = tape.node(id);
    if (n.op == Op::Leaf) continue;
    const Tensor& g = grad.at(id);
    const Tensor& va = tape.value(n.a);

    switch (n.op) {
      case Op::Add:
      case Op::Sub: {
        const Tensor& vb = tape.value(n.b);
        const float sign = n.op == Op::Sub ? -1.0f : 1.0f;
        Tensor& da = grad.slot(n.a, va.shape);
        if (va.same_shape(g)) {
          for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
        } else {  // scalar a
          for (int64_t i = 0; i < g.numel(); ++i) da[0] += g[i];
        }
        Tensor& db = grad.slot(n.b, vb.shape);
        if (vb.same_shape(g)) {
          for (int64_t i = 0; i < g.numel(); ++i) db[i] += sign * g[i];
        } else {
          for (int64_t i = 0; i < g.numel(); ++i) db[0] += sign * g[i];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& vb = tape.value(n.b);
        Tensor& da = grad.slot(n.a, va.shape);
        Tensor& db = grad.slot(n.b, vb.shape);
        const bool as = va.is_scalar() && !vb.is_scalar();
        const bool bs = vb.is_scalar() && !va.is_scalar();
        for (int64_t i = 0; i < g.numel(); ++i) {
          const float x = as ? va[0] : va[i];
          const float y = bs ? vb[0] : vb[i];
          if (as)
            da[0] += g[i] * y;
          else
            da[i] += g[i] * y;
          if (bs)
            db[0] += g[i] * x;
          else
            db[i] += g[i] * x;
        }
        break;
      }
      case Op::ScalarMul:
        accumulate_scaled(g, n.attrs.scalar, grad.slot(n.a, va.shape));
        break;
      case Op::BiasAdd: {
        Tensor& da = grad.slot(n.a, va.shape);
        for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
        accumulate_bias_grad(g, grad.slot(n.b, tape.value(n.b).shape));
        break;
      }
      case Op::MatMul: {
        const Tensor& vb = tape.value(n.b);
        const int M = va.shape[0], K = va.shape[1], N = vb.shape[1];
        Tensor& da = grad.slot(n.a, va.shape);
        Tensor& db = grad.slot(n.b, vb.shape);
#pragma omp parallel for schedule(static)
        for (int m = 0; m < M; ++m) {
          const float* grow = g.data.data() + static_cast<int64_t>(m) * N;
          float* darow = da.data.data() + static_cast<int64_t>(m) * K;
          for (int k = 0; k < K; ++k) {
            const float* brow = vb.data.data() + static_cast<int64_t>(k) * N;
            float acc = 0.0f;
            for (int nn = 0; nn < N; ++nn) acc += grow[nn] * brow[nn];
            darow[k] += acc;
          }
        }
#pragma omp parallel for schedule(static)
        for (int k = 0; k < K; ++k) {
          float* dbrow = db.data.data() + static_cast<int64_t>(k) * N;
          for (int m = 0; m < M; ++m) {
            const float av = va[static_cast<int64_t>(m) * K + k];
            const float* grow = g.data.data() + static_cast<int64_t>(m) * N;
            for (int nn = 0; nn < N; ++nn) dbrow[nn] += av * grow[nn];
          }
        }
        break;
      }
      case Op::Conv2d: {
        conv2d_backward_input(g, tape.value(n.b), grad.slot(n.a, va.shape));
        conv2d_backward_kernel(g, va, grad.slot(n.b, tape.value(n.b).shape));
        break;
      }
      case Op::MaxPool2d: {
        // Route to the first maximal element in scan order (recomputed).
        Tensor& da = grad.slot(n.a, va.shape);
        const int B = va.shape[0], C = va.shape[1], H = va.shape[2], W = va.shape[3];
        const int OH = H / 2, OW = W / 2;
        for (int bc = 0; bc < B * C; ++bc) {
          const float* inp = va.data.data() + static_cast<int64_t>(bc) * H * W;
          const float* gp = g.data.data() + static_cast<int64_t>(bc) * OH * OW;
          float* dp = da.data.data() + static_cast<int64_t>(bc) * H * W;
          for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow) {
              int best_h = 2 * oh, best_w = 2 * ow;
              float best = inp[best_h * W + best_w];
              for (int dh = 0; dh < 2; ++dh)
                for (int dw = 0; dw < 2; ++dw) {
                  const float v = inp[(2 * oh + dh) * W + 2 * ow + dw];
                  if (v > best) {
                    best = v;
                    best_h = 2 * oh + dh;
                    best_w = 2 * ow + dw;
                  }
                }
              dp[best_h * W + best_w] += gp[oh * OW + ow];
            }
        }
        break;
      }
      case Op::Relu: {
        Tensor& da = grad.slot(n.a, va.shape);
        for (int64_t i = 0; i < g.numel(); ++i)
          if (va[i] > 0.0f) da[i] += g[i];
        break;
      }
      case Op::Tanh: {
        Tensor& da = grad.slot(n.a, va.shape);
        for (int64_t i = 0; i < g.numel(); ++i) {
          const float y = n.value[i];
          da[i] += g[i] * (1.0f - y * y);
        }
        break;
      }
      case Op::Sigmoid: {
        Tensor& da = grad.slot(n.a, va.shape);
        for (int64_t i = 0; i < g.numel(); ++i) {
          const float y = n.value[i];
          da[i] += g[i] * y * (1.0f - y);
        }
        break;
      }
      case Op::Softmax: {
        const int B = va.shape[0], C = va.shape[1];
        Tensor& da = grad.slot(n.a, va.shape);
        for (int i = 0; i < B; ++i) {
          const float* y = n.value.data.data() + static_cast<int64_t>(i) * C;
          const float* gr = g.data.data() + static_cast<int64_t>(i) * C;
          float dot = 0.0f;
          for (int c = 0; c < C; ++c) dot += gr[c] * y[c];
          float* dr = da.data.data() + static_cast<int64_t>(i) * C;
          for (int c = 0; c < C; ++c) dr[c] += y[c] * (gr[c] - dot);
        }
        break;
      }
      case Op::CrossEntropyWithSoftmax: {
        const int B = va.shape[0], C = va.shape[1];
        Tensor& da = grad.slot(n.a, va.shape);
        for (int i = 0; i < B; ++i) {
          const float* row = va.data.data() + static_cast<int64_t>(i) * C;
          float m = row[0];
          for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
          float s = 0.0f;
          for (int c = 0; c < C; ++c) s += std::exp(row[c] - m);
          const float gi = g[i];
          const int32_t y = n.attrs.ints[static_cast<size_t>(i)];
          float* dr = da.data.data() + static_cast<int64_t>(i) * C;
          for (int c = 0; c < C; ++c) {
            const float p = std::exp(row[c] - m) / s;
            dr[c] += gi * (p - (c == y ? 1.0f : 0.0f));
          }
        }
        break;
      }
      case Op::Sum:
        accumulate_scaled(Tensor::full(va.shape, 1.0f), g[0], grad.slot(n.a, va.shape));
        break;
      case Op::Mean:
        accumulate_scaled(Tensor::full(va.shape, 1.0f), g[0] / static_cast<float>(va.numel()),
                          grad.slot(n.a, va.shape));
        break;
      case Op::Reshape: {
        Tensor& da = grad.slot(n.a, va.shape);
        for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
        break;
      }
      case Op::CumsumLevels: {
        // d/dz_l = sum_{i >= l} g_i (suffix sums over the level axis).
        const int B = va.shape[0], K = va.shape[1];
        const int64_t HW = static_cast<int64_t>(va.shape[2]) * va.shape[3];
        Tensor& da = grad.slot(n.a, va.shape);
        for (int i = 0; i < B; ++i) {
          std::vector<float> suffix(static_cast<size_t>(HW), 0.0f);
          for (int k = K - 1; k >= 0; --k) {
            const int64_t base = (static_cast<int64_t>(i) * K + k) * HW;
            for (int64_t p = 0; p < HW; ++p) {
              suffix[static_cast<size_t>(p)] += g[base + p];
              da[base + p] += suffix[static_cast<size_t>(p)];
            }
          }
        }
        break;
      }
      case Op::MaskedLevelSoftmax: {
        const int B = va.shape[0], K = va.shape[1];
        const int64_t HW = static_cast<int64_t>(va.shape[2]) * va.shape[3];
        const float invT = 1.0f / n.attrs.scalar;
        Tensor& da = grad.slot(n.a, va.shape);
        for (int i = 0; i < B; ++i) {
          const int64_t base = static_cast<int64_t>(i) * K * HW;
          for (int64_t p = 0; p < HW; ++p) {
            float dot = 0.0f;
            for (int k = 0; k < K; ++k) {
              const int64_t idx = base + k * HW + p;
              dot += g[idx] * n.value[idx];
            }
            for (int k = 0; k < K; ++k) {
              const int64_t idx = base + k * HW + p;
              da[idx] += invT * n.value[idx] * (g[idx] - dot);
            }
          }
        }
        break;
      }
      case Op::Leaf:
        break;
    }
  }
  return grad;
}

double finite_diff_check(const std::function<NodeId(Tape&, NodeId)>& build, const Tensor& x,
                         float h) {
  if (!(h > 0.0f)) throw ShapeError("finite_diff_check: step must be positive");

  Tape tape;
  NodeId xid = tape.leaf(x);
  NodeId out = build(tape, xid);
  if (!tape.value(out).is_scalar())
    throw ShapeError("finite_diff_check: function must be scalar-valued, got " +
                     shape_string(tape.value(out).shape));
  Grad grads = backward(tape, out);
  Tensor analytic = grads.contains(xid) ? grads.at(xid) : Tensor(x.shape);

  auto eval = [&](const Tensor& probe) -> double {
    Tape t;
    NodeId id = t.leaf(probe);
    return static_cast<double>(t.value(build(t, id))[0]);
  };

  double worst = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    Tensor plus = x, minus = x;
    plus[i] += h;
    minus[i] -= h;
    const double cd = (eval(plus) - eval(minus)) / (2.0 * static_cast<double>(h));
    const double rel =
        std::abs(static_cast<double>(analytic[i]) - cd) / std::max(1e-8, std::abs(cd));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace rpnet
