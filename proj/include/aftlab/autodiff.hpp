#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "aftlab/tensor.hpp"

namespace aftlab::autodiff {

// Reverse-mode autodiff over an append-only tape. Every op evaluates eagerly
// when it is recorded; backward() emits the vector-Jacobian products as new
// nodes on the same tape, which is what makes gradients of gradients work:
// the first backward pass is itself an ordinary differentiable subgraph.

enum class Op : uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kScaleAdd,  // a*x + b elementwise, a/b scalar attributes
  kMatmul,
  kTranspose2d,
  kConv2d,
  kConvInputGrad,
  kConvKernelGrad,
  kRelu,
  kSoftplus,
  kSigmoid,
  kExp,
  kLog,
  kRecip,
  kSqrt,
  kClampMin,  // max(x, a)
  kSum,
  kSumRows,
  kBroadcastCols,    // [n] -> [n×k], k in attr
  kBroadcastScalar,  // [1] -> attr shape
  kBiasAdd,          // x[n×f×...] + b[f] along axis 1
  kReduceToBias,     // sum over all axes except axis 1
  kBroadcastBias,    // [f] -> attr shape along axis 1
  kReshape,          // attr = new shape
  kSelectLabel,      // logits[n×k] -> [n], attr = labels
  kScatterLabel,     // [n] -> [n×k], attr = {k, labels...}
};

enum class Act : uint8_t { kRelu, kSoftplus };

struct Node {
  Op op = Op::kLeaf;
  int32_t parent0 = -1;
  int32_t parent1 = -1;
  bool requires_grad = false;
  double a = 0.0;
  double b = 0.0;
  std::vector<int64_t> attr;
  TensorValue value;
};

class Tape;

/// Lightweight handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const TensorValue& value() const;
  bool requires_grad() const;
  const std::vector<int64_t>& shape() const;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Appends an input node. Rejects empty shapes and non-finite values.
  Var leaf(TensorValue value, bool requires_grad);

  const Node& node(int32_t id) const { return nodes_[static_cast<size_t>(id)]; }
  int32_t size() const { return static_cast<int32_t>(nodes_.size()); }

  /// Recomputes every non-leaf value from its parents and compares bitwise.
  bool replay_matches() const;

  /// While false, newly emitted nodes never require grad (used by the plain
  /// value-returning backward so its VJP nodes cannot be differentiated).
  bool grad_enabled = true;

 private:
  friend Var emit(Tape& t, Node n);
  std::vector<Node> nodes_;
};

// ---- ops -------------------------------------------------------------------

Var add(Var x, Var y);
Var sub(Var x, Var y);
Var mul(Var x, Var y);
Var scale_add(Var x, double a, double b);
Var matmul(Var x, Var y);
Var transpose2d(Var x);
Var conv2d(Var x, Var kernel);
Var relu(Var x);
Var softplus(Var x);
Var sigmoid(Var x);
Var activation(Var x, Act kind);
Var exp_op(Var x);
Var log_op(Var x);
Var recip(Var x);
Var sqrt_op(Var x);
Var clamp_min(Var x, double bound);
Var sum(Var x);
Var sum_rows(Var x);
Var broadcast_cols(Var x, int64_t cols);
Var bias_add(Var x, Var bias);
Var reshape(Var x, std::vector<int64_t> shape);
Var select_label(Var logits, std::span<const int64_t> labels);

/// Mean over the batch of -log softmax(logits)[label], stabilized by
/// row-max subtraction. Composite of primitive ops, so it is twice
/// differentiable.
Var cross_entropy(Var logits, std::span<const int64_t> labels);

/// <a,b> / max(|a||b|, 1e-12) for flat vectors. Errors when both norms are
/// below 1e-12. Twice differentiable away from the clamp.
Var cos_sim(Var a, Var b);

/// Mean over rows of (1 - cos(a_i, b_i)) for a,b of shape [n×d]. Errors on
/// any row where both norms are below 1e-12 (same contract as cos_sim).
Var mean_row_cos_distance(Var a, Var b);

inline constexpr double kCosNormTolerance = 1e-12;

// ---- backward --------------------------------------------------------------

/// Reverse-mode gradients of a scalar output. The returned gradients are
/// nodes on the same tape and can be differentiated again.
std::unordered_map<int32_t, Var> backward_graph(Var output, std::span<const Var> wrt);

/// Same, but the gradients are returned as plain values and the VJP nodes
/// are recorded as constants (no higher-order differentiation through them).
std::unordered_map<int32_t, TensorValue> backward_values(Var output, std::span<const Var> wrt);

}  // namespace aftlab::autodiff
