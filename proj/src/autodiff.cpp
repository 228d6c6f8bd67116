#include "aftlab/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "aftlab/kernels.hpp"

namespace aftlab::autodiff {

namespace {

constexpr int64_t kElemwiseParCutoff = 1 << 15;

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScaleAdd: return "scale_add";
    case Op::kMatmul: return "matmul";
    case Op::kTranspose2d: return "transpose2d";
    case Op::kConv2d: return "conv2d";
    case Op::kConvInputGrad: return "conv2d_input_grad";
    case Op::kConvKernelGrad: return "conv2d_kernel_grad";
    case Op::kRelu: return "relu";
    case Op::kSoftplus: return "softplus";
    case Op::kSigmoid: return "sigmoid";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kRecip: return "recip";
    case Op::kSqrt: return "sqrt";
    case Op::kClampMin: return "clamp_min";
    case Op::kSum: return "sum";
    case Op::kSumRows: return "sum_rows";
    case Op::kBroadcastCols: return "broadcast_cols";
    case Op::kBroadcastScalar: return "broadcast_scalar";
    case Op::kBiasAdd: return "bias_add";
    case Op::kReduceToBias: return "reduce_to_bias";
    case Op::kBroadcastBias: return "broadcast_bias";
    case Op::kReshape: return "reshape";
    case Op::kSelectLabel: return "select_label";
    case Op::kScatterLabel: return "scatter_label";
  }
  return "?";
}

template <typename F>
TensorValue unary_map(const TensorValue& x, F f) {
  TensorValue y = TensorValue::zeros(x.shape);
  const int64_t n = x.numel();
#pragma omp parallel for if (n > kElemwiseParCutoff) schedule(static)
  for (int64_t i = 0; i < n; ++i) y.data[i] = f(x.data[i]);
  return y;
}

template <typename F>
TensorValue binary_map(const TensorValue& x, const TensorValue& y, F f) {
  TensorValue z = TensorValue::zeros(x.shape);
  const int64_t n = x.numel();
#pragma omp parallel for if (n > kElemwiseParCutoff) schedule(static)
  for (int64_t i = 0; i < n; ++i) z.data[i] = f(x.data[i], y.data[i]);
  return z;
}

double softplus_stable(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v))); }

double sigmoid_stable(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

void axis1_dims(const std::vector<int64_t>& shape, int64_t& d0, int64_t& f, int64_t& rest) {
  d0 = shape[0];
  f = shape[1];
  rest = 1;
  for (size_t i = 2; i < shape.size(); ++i) rest *= shape[i];
}

TensorValue eval_node(const Node& n, const TensorValue* p0, const TensorValue* p1) {
  switch (n.op) {
    case Op::kLeaf:
      return n.value;
    case Op::kAdd:
      return binary_map(*p0, *p1, [](double a, double b) { return a + b; });
    case Op::kSub:
      return binary_map(*p0, *p1, [](double a, double b) { return a - b; });
    case Op::kMul:
      return binary_map(*p0, *p1, [](double a, double b) { return a * b; });
    case Op::kScaleAdd: {
      const double a = n.a, b = n.b;
      return unary_map(*p0, [a, b](double v) { return a * v + b; });
    }
    case Op::kMatmul: {
      const int64_t m = p0->shape[0], k = p0->shape[1], c = p1->shape[1];
      TensorValue y = TensorValue::zeros({m, c});
      kernels::matmul(p0->data.data(), p1->data.data(), y.data.data(), m, k, c);
      return y;
    }
    case Op::kTranspose2d: {
      TensorValue y = TensorValue::zeros({p0->shape[1], p0->shape[0]});
      kernels::transpose2d(p0->data.data(), y.data.data(), p0->shape[0], p0->shape[1]);
      return y;
    }
    case Op::kConv2d: {
      const auto& xs = p0->shape;
      const auto& ks = p1->shape;
      TensorValue y = TensorValue::zeros({xs[0], ks[0], xs[2] - ks[2] + 1, xs[3] - ks[3] + 1});
      kernels::conv2d(p0->data.data(), p1->data.data(), y.data.data(), xs[0], xs[1], xs[2], xs[3],
                      ks[0], ks[2], ks[3]);
      return y;
    }
    case Op::kConvInputGrad: {
      const auto& gs = p0->shape;
      const auto& ks = p1->shape;
      const int64_t h = gs[2] + ks[2] - 1, w = gs[3] + ks[3] - 1;
      TensorValue y = TensorValue::zeros({gs[0], ks[1], h, w});
      kernels::conv2d_input_grad(p0->data.data(), p1->data.data(), y.data.data(), gs[0], ks[1], h,
                                 w, ks[0], ks[2], ks[3]);
      return y;
    }
    case Op::kConvKernelGrad: {
      const auto& xs = p0->shape;
      const auto& gs = p1->shape;
      const int64_t kh = xs[2] - gs[2] + 1, kw = xs[3] - gs[3] + 1;
      TensorValue y = TensorValue::zeros({gs[1], xs[1], kh, kw});
      kernels::conv2d_kernel_grad(p0->data.data(), p1->data.data(), y.data.data(), xs[0], xs[1],
                                  xs[2], xs[3], gs[1], kh, kw);
      return y;
    }
    case Op::kRelu:
      return unary_map(*p0, [](double v) { return v > 0.0 ? v : 0.0; });
    case Op::kSoftplus:
      return unary_map(*p0, softplus_stable);
    case Op::kSigmoid:
      return unary_map(*p0, sigmoid_stable);
    case Op::kExp:
      return unary_map(*p0, [](double v) { return std::exp(v); });
    case Op::kLog:
      return unary_map(*p0, [](double v) { return std::log(v); });
    case Op::kRecip:
      return unary_map(*p0, [](double v) { return 1.0 / v; });
    case Op::kSqrt:
      return unary_map(*p0, [](double v) { return std::sqrt(v); });
    case Op::kClampMin: {
      const double bound = n.a;
      return unary_map(*p0, [bound](double v) { return v > bound ? v : bound; });
    }
    case Op::kSum: {
      double acc = 0.0;
      for (double v : p0->data) acc += v;
      return TensorValue({1}, {acc});
    }
    case Op::kSumRows: {
      TensorValue y = TensorValue::zeros({p0->shape[0]});
      kernels::sum_rows(p0->data.data(), y.data.data(), p0->shape[0], p0->shape[1]);
      return y;
    }
    case Op::kBroadcastCols: {
      const int64_t rows = p0->shape[0], cols = n.attr[0];
      TensorValue y = TensorValue::zeros({rows, cols});
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j) y.data[i * cols + j] = p0->data[i];
      return y;
    }
    case Op::kBroadcastScalar:
      return TensorValue::full(n.attr, p0->data[0]);
    case Op::kBiasAdd: {
      int64_t d0, f, rest;
      axis1_dims(p0->shape, d0, f, rest);
      TensorValue y = TensorValue::zeros(p0->shape);
      const int64_t total = d0 * f;
#pragma omp parallel for if (total * rest > kElemwiseParCutoff) schedule(static)
      for (int64_t t = 0; t < total; ++t) {
        const double b = p1->data[t % f];
        for (int64_t r = 0; r < rest; ++r) y.data[t * rest + r] = p0->data[t * rest + r] + b;
      }
      return y;
    }
    case Op::kReduceToBias: {
      int64_t d0, f, rest;
      axis1_dims(p0->shape, d0, f, rest);
      TensorValue y = TensorValue::zeros({f});
      kernels::reduce_to_axis1(p0->data.data(), y.data.data(), d0, f, rest);
      return y;
    }
    case Op::kBroadcastBias: {
      TensorValue y = TensorValue::zeros(n.attr);
      int64_t d0, f, rest;
      axis1_dims(n.attr, d0, f, rest);
      for (int64_t i = 0; i < d0; ++i)
        for (int64_t j = 0; j < f; ++j)
          for (int64_t r = 0; r < rest; ++r) y.data[(i * f + j) * rest + r] = p0->data[j];
      return y;
    }
    case Op::kReshape: {
      TensorValue y = *p0;
      y.shape = n.attr;
      return y;
    }
    case Op::kSelectLabel: {
      const int64_t rows = p0->shape[0], cols = p0->shape[1];
      TensorValue y = TensorValue::zeros({rows});
      for (int64_t i = 0; i < rows; ++i) y.data[i] = p0->data[i * cols + n.attr[i]];
      return y;
    }
    case Op::kScatterLabel: {
      const int64_t cols = n.attr[0];
      const int64_t rows = p0->shape[0];
      TensorValue y = TensorValue::zeros({rows, cols});
      for (int64_t i = 0; i < rows; ++i) y.data[i * cols + n.attr[i + 1]] = p0->data[i];
      return y;
    }
  }
  throw std::logic_error("unhandled op");
}

}  // namespace

// ---- tape ------------------------------------------------------------------

const TensorValue& Var::value() const { return tape->node(id).value; }
bool Var::requires_grad() const { return tape->node(id).requires_grad; }
const std::vector<int64_t>& Var::shape() const { return tape->node(id).value.shape; }

Var emit(Tape& t, Node n) {
  const TensorValue* p0 = n.parent0 >= 0 ? &t.node(n.parent0).value : nullptr;
  const TensorValue* p1 = n.parent1 >= 0 ? &t.node(n.parent1).value : nullptr;
  if (n.op != Op::kLeaf) {
    n.requires_grad = ((p0 && t.node(n.parent0).requires_grad) ||
                       (p1 && t.node(n.parent1).requires_grad)) &&
                      t.grad_enabled;
    n.value = eval_node(n, p0, p1);
  } else {
    n.requires_grad = n.requires_grad && t.grad_enabled;
  }
  if (!n.value.all_finite())
    throw std::runtime_error(std::string("non-finite result from op ") + op_name(n.op));
  t.nodes_.push_back(std::move(n));
  return Var{&t, static_cast<int32_t>(t.nodes_.size() - 1)};
}

Var Tape::leaf(TensorValue value, bool requires_grad) {
  if (value.numel() == 0 || value.rank() == 0)
    throw std::invalid_argument("leaf: empty tensor of shape " + shape_str(value.shape));
  if (!value.all_finite()) throw std::invalid_argument("leaf: non-finite input");
  Node n;
  n.op = Op::kLeaf;
  n.requires_grad = requires_grad;
  n.value = std::move(value);
  return emit(*this, std::move(n));
}

bool Tape::replay_matches() const {
  for (const Node& n : nodes_) {
    if (n.op == Op::kLeaf) continue;
    const TensorValue* p0 = n.parent0 >= 0 ? &node(n.parent0).value : nullptr;
    const TensorValue* p1 = n.parent1 >= 0 ? &node(n.parent1).value : nullptr;
    if (!eval_node(n, p0, p1).bitwise_equal(n.value)) return false;
  }
  return true;
}

// ---- op builders -----------------------------------------------------------

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void require_same_tape(Var x, Var y) {
  require(x.tape == y.tape, "operands live on different tapes");
}

Var emit2(Op op, Var x, Var y, double a = 0.0, double b = 0.0, std::vector<int64_t> attr = {}) {
  Node n;
  n.op = op;
  n.parent0 = x.id;
  n.parent1 = y.valid() ? y.id : -1;
  n.a = a;
  n.b = b;
  n.attr = std::move(attr);
  return emit(*x.tape, std::move(n));
}

Var emit1(Op op, Var x, double a = 0.0, double b = 0.0, std::vector<int64_t> attr = {}) {
  return emit2(op, x, Var{}, a, b, std::move(attr));
}

Var const_leaf(Tape& t, TensorValue v) { return t.leaf(std::move(v), false); }

Var conv_input_grad_op(Var g, Var kernel) { return emit2(Op::kConvInputGrad, g, kernel); }
Var conv_kernel_grad_op(Var x, Var g) { return emit2(Op::kConvKernelGrad, x, g); }
Var broadcast_scalar_op(Var s, std::vector<int64_t> shape) {
  return emit1(Op::kBroadcastScalar, s, 0, 0, std::move(shape));
}
Var reduce_to_bias_op(Var x) { return emit1(Op::kReduceToBias, x); }
Var broadcast_bias_op(Var b, std::vector<int64_t> shape) {
  return emit1(Op::kBroadcastBias, b, 0, 0, std::move(shape));
}
Var scatter_label_op(Var v, const std::vector<int64_t>& labels, int64_t num_classes) {
  std::vector<int64_t> attr;
  attr.reserve(labels.size() + 1);
  attr.push_back(num_classes);
  attr.insert(attr.end(), labels.begin(), labels.end());
  return emit1(Op::kScatterLabel, v, 0, 0, std::move(attr));
}

}  // namespace

Var add(Var x, Var y) {
  require_same_tape(x, y);
  require(x.shape() == y.shape(), "add: shape mismatch " + shape_str(x.shape()) + " vs " +
                                      shape_str(y.shape()));
  return emit2(Op::kAdd, x, y);
}

Var sub(Var x, Var y) {
  require_same_tape(x, y);
  require(x.shape() == y.shape(), "sub: shape mismatch");
  return emit2(Op::kSub, x, y);
}

Var mul(Var x, Var y) {
  require_same_tape(x, y);
  require(x.shape() == y.shape(), "mul: shape mismatch");
  return emit2(Op::kMul, x, y);
}

Var scale_add(Var x, double a, double b) { return emit1(Op::kScaleAdd, x, a, b); }

Var matmul(Var x, Var y) {
  require_same_tape(x, y);
  require(x.value().rank() == 2 && y.value().rank() == 2, "matmul: operands must be rank 2");
  require(x.shape()[1] == y.shape()[0], "matmul: inner dimensions disagree, " +
                                            shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  return emit2(Op::kMatmul, x, y);
}

Var transpose2d(Var x) {
  require(x.value().rank() == 2, "transpose2d: rank 2 required");
  return emit1(Op::kTranspose2d, x);
}

Var conv2d(Var x, Var kernel) {
  require_same_tape(x, kernel);
  require(x.value().rank() == 4 && kernel.value().rank() == 4,
          "conv2d: input and kernel must be rank 4");
  require(x.shape()[1] == kernel.shape()[1], "conv2d: channel counts disagree");
  require(kernel.shape()[2] <= x.shape()[2] && kernel.shape()[3] <= x.shape()[3],
          "conv2d: kernel larger than input");
  return emit2(Op::kConv2d, x, kernel);
}

Var relu(Var x) { return emit1(Op::kRelu, x); }
Var softplus(Var x) { return emit1(Op::kSoftplus, x); }
Var sigmoid(Var x) { return emit1(Op::kSigmoid, x); }

Var activation(Var x, Act kind) { return kind == Act::kRelu ? relu(x) : softplus(x); }

Var exp_op(Var x) { return emit1(Op::kExp, x); }
Var log_op(Var x) { return emit1(Op::kLog, x); }
Var recip(Var x) { return emit1(Op::kRecip, x); }
Var sqrt_op(Var x) { return emit1(Op::kSqrt, x); }
Var clamp_min(Var x, double bound) { return emit1(Op::kClampMin, x, bound); }

Var sum(Var x) { return emit1(Op::kSum, x); }

Var sum_rows(Var x) {
  require(x.value().rank() == 2, "sum_rows: rank 2 required");
  return emit1(Op::kSumRows, x);
}

Var broadcast_cols(Var x, int64_t cols) {
  require(x.value().rank() == 1, "broadcast_cols: rank 1 required");
  require(cols >= 1, "broadcast_cols: cols must be positive");
  return emit1(Op::kBroadcastCols, x, 0, 0, {cols});
}

Var bias_add(Var x, Var bias) {
  require_same_tape(x, bias);
  require(x.value().rank() >= 2, "bias_add: input must have rank >= 2");
  require(bias.value().rank() == 1 && bias.shape()[0] == x.shape()[1],
          "bias_add: bias length must match axis 1");
  return emit2(Op::kBiasAdd, x, bias);
}

Var reshape(Var x, std::vector<int64_t> shape) {
  require(shape_numel(shape) == x.value().numel(),
          "reshape: element count mismatch for " + shape_str(shape));
  return emit1(Op::kReshape, x, 0, 0, std::move(shape));
}

Var select_label(Var logits, std::span<const int64_t> labels) {
  require(logits.value().rank() == 2, "select_label: logits must be rank 2");
  const int64_t rows = logits.shape()[0], cols = logits.shape()[1];
  require(static_cast<int64_t>(labels.size()) == rows, "select_label: label count mismatch");
  for (int64_t y : labels)
    require(y >= 0 && y < cols, "select_label: label " + std::to_string(y) + " out of range [0," +
                                    std::to_string(cols) + ")");
  return emit1(Op::kSelectLabel, logits, 0, 0, {labels.begin(), labels.end()});
}

Var cross_entropy(Var logits, std::span<const int64_t> labels) {
  require(logits.value().rank() == 2, "cross_entropy: logits must be rank 2");
  const int64_t rows = logits.shape()[0], cols = logits.shape()[1];
  // Row maxima enter as constants; the value is the exact logsumexp and the
  // gradient is unchanged because logsumexp is shift invariant.
  TensorValue m = TensorValue::zeros({rows});
  for (int64_t i = 0; i < rows; ++i) {
    double best = logits.value().data[i * cols];
    for (int64_t j = 1; j < cols; ++j) best = std::max(best, logits.value().data[i * cols + j]);
    m.data[i] = best;
  }
  Var mv = const_leaf(*logits.tape, std::move(m));
  Var shifted = sub(logits, broadcast_cols(mv, cols));
  Var lse = add(log_op(sum_rows(exp_op(shifted))), mv);
  Var picked = select_label(logits, labels);
  return scale_add(sum(sub(lse, picked)), 1.0 / static_cast<double>(rows), 0.0);
}

namespace {

// cos = <a,b> / sqrt(max(|a|^2 |b|^2, tol^2)); clamping under the sqrt keeps
// the backward pass finite when one side is exactly zero.
Var cosine_from_parts(Var dot, Var na2, Var nb2) {
  Var denom = sqrt_op(clamp_min(mul(na2, nb2), kCosNormTolerance * kCosNormTolerance));
  return mul(dot, recip(denom));
}

}  // namespace

Var cos_sim(Var a, Var b) {
  require_same_tape(a, b);
  require(a.value().rank() == 1 && b.value().rank() == 1, "cos_sim: flat vectors required");
  require(a.shape() == b.shape(), "cos_sim: length mismatch");
  Var na2 = sum(mul(a, a));
  Var nb2 = sum(mul(b, b));
  const double tol2 = kCosNormTolerance * kCosNormTolerance;
  require(na2.value().data[0] >= tol2 || nb2.value().data[0] >= tol2,
          "cos_sim: both inputs have vanishing norm");
  return cosine_from_parts(sum(mul(a, b)), na2, nb2);
}

Var mean_row_cos_distance(Var a, Var b) {
  require_same_tape(a, b);
  require(a.value().rank() == 2 && a.shape() == b.shape(),
          "mean_row_cos_distance: matching rank-2 inputs required");
  const int64_t rows = a.shape()[0];
  Var na2 = sum_rows(mul(a, a));
  Var nb2 = sum_rows(mul(b, b));
  const double tol2 = kCosNormTolerance * kCosNormTolerance;
  for (int64_t i = 0; i < rows; ++i)
    require(na2.value().data[i] >= tol2 || nb2.value().data[i] >= tol2,
            "mean_row_cos_distance: row " + std::to_string(i) + " has vanishing norms");
  Var denom = sqrt_op(clamp_min(mul(na2, nb2), tol2));
  Var cos_rows = mul(sum_rows(mul(a, b)), recip(denom));
  // mean of (1 - cos)
  return scale_add(sum(scale_add(cos_rows, -1.0, 1.0)), 1.0 / static_cast<double>(rows), 0.0);
}

// ---- backward --------------------------------------------------------------

namespace {

struct GradGuard {
  Tape& tape;
  bool saved;
  GradGuard(Tape& t, bool enable) : tape(t), saved(t.grad_enabled) { t.grad_enabled = enable; }
  ~GradGuard() { tape.grad_enabled = saved; }
};

TensorValue step_mask(const TensorValue& x, double threshold) {
  TensorValue m = TensorValue::zeros(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) m.data[i] = x.data[i] > threshold ? 1.0 : 0.0;
  return m;
}

std::unordered_map<int32_t, Var> backward_impl(Var output, std::span<const Var> wrt,
                                               bool create_graph) {
  Tape& tape = *output.tape;
  require(output.value().numel() == 1, "backward: output must be scalar, got shape " +
                                           shape_str(output.shape()));
  for (const Var& w : wrt) require(w.tape == &tape, "backward: wrt node on a different tape");

  // Ancestors of the output reachable through grad-requiring parents.
  std::vector<char> need(static_cast<size_t>(output.id) + 1, 0);
  need[static_cast<size_t>(output.id)] = 1;
  for (int32_t id = output.id; id >= 0; --id) {
    if (!need[static_cast<size_t>(id)]) continue;
    const Node& n = tape.node(id);
    for (int32_t p : {n.parent0, n.parent1})
      if (p >= 0 && tape.node(p).requires_grad) need[static_cast<size_t>(p)] = 1;
  }
  for (const Var& w : wrt)
    require(w.id <= output.id && need[static_cast<size_t>(w.id)],
            "backward: wrt node does not influence the output");

  GradGuard guard(tape, create_graph);
  std::vector<Var> adj(static_cast<size_t>(output.id) + 1);
  adj[static_cast<size_t>(output.id)] = tape.leaf(TensorValue({1}, {1.0}), false);

  auto accumulate = [&](int32_t pid, Var contrib) {
    Var& slot = adj[static_cast<size_t>(pid)];
    slot = slot.valid() ? add(slot, contrib) : contrib;
  };

  for (int32_t id = output.id; id >= 0; --id) {
    if (!need[static_cast<size_t>(id)] || !adj[static_cast<size_t>(id)].valid()) continue;
    const Node n = tape.node(id);  // copy: the vector may reallocate as we emit
    Var u = adj[static_cast<size_t>(id)];
    const bool g0 = n.parent0 >= 0 && tape.node(n.parent0).requires_grad;
    const bool g1 = n.parent1 >= 0 && tape.node(n.parent1).requires_grad;
    Var p0{&tape, n.parent0}, p1{&tape, n.parent1};
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd:
        if (g0) accumulate(n.parent0, u);
        if (g1) accumulate(n.parent1, u);
        break;
      case Op::kSub:
        if (g0) accumulate(n.parent0, u);
        if (g1) accumulate(n.parent1, scale_add(u, -1.0, 0.0));
        break;
      case Op::kMul:
        if (g0) accumulate(n.parent0, mul(u, p1));
        if (g1) accumulate(n.parent1, mul(u, p0));
        break;
      case Op::kScaleAdd:
        if (g0) accumulate(n.parent0, scale_add(u, n.a, 0.0));
        break;
      case Op::kMatmul:
        if (g0) accumulate(n.parent0, matmul(u, transpose2d(p1)));
        if (g1) accumulate(n.parent1, matmul(transpose2d(p0), u));
        break;
      case Op::kTranspose2d:
        if (g0) accumulate(n.parent0, transpose2d(u));
        break;
      case Op::kConv2d:
        if (g0) accumulate(n.parent0, conv_input_grad_op(u, p1));
        if (g1) accumulate(n.parent1, conv_kernel_grad_op(p0, u));
        break;
      case Op::kConvInputGrad:
        if (g0) accumulate(n.parent0, conv2d(u, p1));
        if (g1) accumulate(n.parent1, conv_kernel_grad_op(u, p0));
        break;
      case Op::kConvKernelGrad:
        if (g0) accumulate(n.parent0, conv_input_grad_op(p1, u));
        if (g1) accumulate(n.parent1, conv2d(p0, u));
        break;
      case Op::kRelu: {
        // Activation mask is a constant: relu contributes no curvature.
        if (g0) accumulate(n.parent0, mul(u, const_leaf(tape, step_mask(p0.value(), 0.0))));
        break;
      }
      case Op::kSoftplus:
        if (g0) accumulate(n.parent0, mul(u, sigmoid(p0)));
        break;
      case Op::kSigmoid: {
        if (g0) {
          Var self{&tape, id};
          accumulate(n.parent0, mul(u, mul(self, scale_add(self, -1.0, 1.0))));
        }
        break;
      }
      case Op::kExp:
        if (g0) accumulate(n.parent0, mul(u, Var{&tape, id}));
        break;
      case Op::kLog:
        if (g0) accumulate(n.parent0, mul(u, recip(p0)));
        break;
      case Op::kRecip: {
        if (g0) {
          Var self{&tape, id};
          accumulate(n.parent0, scale_add(mul(u, mul(self, self)), -1.0, 0.0));
        }
        break;
      }
      case Op::kSqrt:
        if (g0) accumulate(n.parent0, mul(u, scale_add(recip(Var{&tape, id}), 0.5, 0.0)));
        break;
      case Op::kClampMin:
        if (g0) accumulate(n.parent0, mul(u, const_leaf(tape, step_mask(p0.value(), n.a))));
        break;
      case Op::kSum:
        if (g0) accumulate(n.parent0, broadcast_scalar_op(u, p0.shape()));
        break;
      case Op::kSumRows:
        if (g0) accumulate(n.parent0, broadcast_cols(u, p0.shape()[1]));
        break;
      case Op::kBroadcastCols:
        if (g0) accumulate(n.parent0, sum_rows(u));
        break;
      case Op::kBroadcastScalar:
        if (g0) accumulate(n.parent0, sum(u));
        break;
      case Op::kBiasAdd:
        if (g0) accumulate(n.parent0, u);
        if (g1) accumulate(n.parent1, reduce_to_bias_op(u));
        break;
      case Op::kReduceToBias:
        if (g0) accumulate(n.parent0, broadcast_bias_op(u, p0.shape()));
        break;
      case Op::kBroadcastBias:
        if (g0) accumulate(n.parent0, reduce_to_bias_op(u));
        break;
      case Op::kReshape:
        if (g0) accumulate(n.parent0, reshape(u, p0.shape()));
        break;
      case Op::kSelectLabel:
        if (g0) accumulate(n.parent0, scatter_label_op(u, n.attr, p0.shape()[1]));
        break;
      case Op::kScatterLabel: {
        if (g0) {
          std::vector<int64_t> labels(n.attr.begin() + 1, n.attr.end());
          accumulate(n.parent0, select_label(u, labels));
        }
        break;
      }
    }
  }

  std::unordered_map<int32_t, Var> grads;
  for (const Var& w : wrt) grads[w.id] = adj[static_cast<size_t>(w.id)];
  return grads;
}

}  // namespace

std::unordered_map<int32_t, Var> backward_graph(Var output, std::span<const Var> wrt) {
  return backward_impl(output, wrt, true);
}

std::unordered_map<int32_t, TensorValue> backward_values(Var output, std::span<const Var> wrt) {
  auto graph = backward_impl(output, wrt, false);
  std::unordered_map<int32_t, TensorValue> out;
  for (const auto& [id, v] : graph) out[id] = v.value();
  return out;
}

}  // namespace aftlab::autodiff
