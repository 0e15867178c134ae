#pragma once

// Reverse-mode automatic differentiation over a linear tape.
//
// Ops append nodes to the tape of their first operand, so the node list is
// topologically ordered by construction. `backward` walks it once in reverse.
// A tape is single-writer; build one per training step.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "srg/tensor.hpp"

namespace srg {

template <typename T>
class BasicTape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
struct BasicVar {
  BasicTape<T>* tape = nullptr;
  std::size_t id = 0;

  const Shape& shape() const { return tape->value(*this).shape; }
  const std::vector<T>& data() const { return tape->value(*this).data; }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  T item() const { return data().at(0); }
};

template <typename T>
class BasicTape {
 public:
  using Var = BasicVar<T>;
  using BackwardFn = std::function<void(BasicTape&, std::size_t self)>;

  BasicTape() = default;
  /// A tape built with `track_gradients = false` records values only;
  /// parameters enter as constants and no backward rules are kept.
  explicit BasicTape(bool track_gradients) : track_gradients_(track_gradients) {}
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(BasicTensor<T> value);
  /// Leaf whose gradient is kept on the tape (read back with `grad`).
  Var input(BasicTensor<T> value);
  /// Leaf bound to an external parameter; `backward` accumulates into `param.grad`.
  Var parameter(BasicTensor<T>& param);

  /// Appends an op node. `fn` is dropped when no input needs a gradient.
  Var record(BasicTensor<T> value, std::vector<std::size_t> inputs, BackwardFn fn);

  const BasicTensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  const BasicTensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Gradient buffer of a node, allocated (zeroed) on first access.
  std::vector<T>& grad_buffer(std::size_t id);
  /// Gradient of a node after `backward`; empty if it never received one.
  const std::vector<T>& grad(Var v) const { return nodes_.at(v.id).grad; }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule once in
  /// reverse order. Throws ArgumentError for a non-scalar loss.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    BasicTensor<T> value;
    std::vector<T> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    BasicTensor<T>* param = nullptr;
    bool needs_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  bool track_gradients_ = true;
};

using Tape = BasicTape<float>;
using Var = BasicVar<float>;

enum class PoolKind { kAvg, kMax };
enum class ReduceKind { kMean, kMax };

// Layer-level ops. Shapes are [channels × time] unless stated.

/// input [C_in × T], kernels [C_out × C_in × K] -> [C_out × T'], zero padding.
template <typename T>
BasicVar<T> conv1d(BasicVar<T> input, BasicVar<T> kernels, std::size_t stride, std::size_t padding);
/// Adds bias[c] to every element of row c.
template <typename T>
BasicVar<T> add_bias(BasicVar<T> input, BasicVar<T> bias);
template <typename T>
BasicVar<T> temporal_pool(BasicVar<T> input, PoolKind kind, std::size_t kernel, std::size_t stride);
/// Endpoint-aligned linear interpolation along time. Also used to shrink.
template <typename T>
BasicVar<T> linear_upsample(BasicVar<T> input, std::size_t target_len);
/// Picks time columns by index (repeats allowed).
template <typename T>
BasicVar<T> gather_columns(BasicVar<T> input, std::span<const std::size_t> columns);

/// [C × T] -> [C × 1] (kind over time) or [1 × T] (kind over channels).
template <typename T>
BasicVar<T> reduce_time(BasicVar<T> input, ReduceKind kind);
template <typename T>
BasicVar<T> reduce_channels(BasicVar<T> input, ReduceKind kind);
/// input [C × T] times a [C × 1] column gate, broadcast over time.
template <typename T>
BasicVar<T> scale_rows(BasicVar<T> input, BasicVar<T> gate);
/// input [C × T] times a [1 × T] row gate, broadcast over channels.
template <typename T>
BasicVar<T> scale_cols(BasicVar<T> input, BasicVar<T> gate);
/// Stacks rank-2 tensors along axis 0 (all share axis 1).
template <typename T>
BasicVar<T> concat_rows(std::span<const BasicVar<T>> parts);
/// Stacks rank-2 tensors along axis 1 (all share axis 0).
template <typename T>
BasicVar<T> concat_cols(std::span<const BasicVar<T>> parts);

// Dense algebra.

template <typename T>
BasicVar<T> matmul(BasicVar<T> a, BasicVar<T> b);
template <typename T>
BasicVar<T> transpose(BasicVar<T> a);
template <typename T>
BasicVar<T> softmax_rows(BasicVar<T> a);
template <typename T>
BasicVar<T> sigmoid(BasicVar<T> a);
template <typename T>
BasicVar<T> relu(BasicVar<T> a);
template <typename T>
BasicVar<T> abs(BasicVar<T> a);
template <typename T>
BasicVar<T> add(BasicVar<T> a, BasicVar<T> b);
template <typename T>
BasicVar<T> sub(BasicVar<T> a, BasicVar<T> b);
template <typename T>
BasicVar<T> mul(BasicVar<T> a, BasicVar<T> b);
template <typename T>
BasicVar<T> scale(BasicVar<T> a, T factor);
template <typename T>
BasicVar<T> add_scalar(BasicVar<T> a, T offset);
/// Reductions to a [1] scalar.
template <typename T>
BasicVar<T> sum(BasicVar<T> a);
template <typename T>
BasicVar<T> mean(BasicVar<T> a);

// Losses. Probabilities are clamped to [eps, 1 - eps]; clamped cells pass no gradient.

/// -(1/#mask) Σ mask·(y log p + (1-y) log(1-p)); mask may be all ones.
template <typename T>
BasicVar<T> bce_masked_mean(BasicVar<T> prob, const BasicTensor<T>& target, const BasicTensor<T>& mask, T eps);
/// -(1/rows) Σ_i Σ_j target_ij log p_ij
template <typename T>
BasicVar<T> cross_entropy_rows(BasicVar<T> prob, const BasicTensor<T>& target, T eps);

}  // namespace srg
