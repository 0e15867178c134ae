#pragma once

// Building blocks shared by the interval generation and evaluation networks.

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "srg/autodiff.hpp"
#include "srg/checkpoint.hpp"
#include "srg/rng.hpp"

namespace srg {

/// 1-D convolution with per-channel bias.
struct Conv1dLayer {
  Tensor weight;  // [C_out × C_in × K]
  Tensor bias;    // [C_out]
  std::size_t stride = 1;
  std::size_t padding = 0;

  static Conv1dLayer create(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride,
                            std::size_t padding, Rng& rng);
  Var forward(Tape& tape, Var x);
  void visit(const std::string& prefix, const ParamVisitor& fn);

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
};

/// Fully connected layer on a column vector [in × 1] -> [out × 1].
struct LinearLayer {
  Tensor weight;  // [out × in]
  Tensor bias;    // [out]

  static LinearLayer create(std::size_t in, std::size_t out, Rng& rng);
  Var forward(Tape& tape, Var x);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Channel attention followed by temporal attention over a [C × T] sequence:
/// channel gates come from a shared bottleneck MLP on the time-averaged and
/// time-maxed descriptors, temporal gates from a convolution over the
/// channel-averaged and channel-maxed descriptors.
struct AttentionBlock {
  LinearLayer squeeze;  // C -> max(1, C / reduction)
  LinearLayer excite;   // back to C
  Conv1dLayer temporal;  // 2 -> 1, odd kernel, same padding

  struct Trace {
    Var output;
    Var channel_gate;   // [C × 1]
    Var temporal_gate;  // [1 × T]
  };

  static AttentionBlock create(std::size_t channels, std::size_t reduction, std::size_t kernel, Rng& rng);
  Var forward(Tape& tape, Var x) { return trace(tape, x).output; }
  Trace trace(Tape& tape, Var x);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Embedded-Gaussian non-local operation with a residual connection:
/// z = x + W_z · (g(x) · softmax_rows(θ(x)ᵀ φ(x))ᵀ).
struct NonLocalBlock {
  Tensor theta;  // [C_i × C]
  Tensor phi;    // [C_i × C]
  Tensor g;      // [C_i × C]
  Tensor out;    // [C × C_i]

  struct Trace {
    Var output;
    Var attention;  // [T × T], row-stochastic
  };

  static NonLocalBlock create(std::size_t channels, Rng& rng);
  Var forward(Tape& tape, Var x) { return trace(tape, x).output; }
  Trace trace(Tape& tape, Var x);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct PyramidLevel {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  friend bool operator==(const PyramidLevel&, const PyramidLevel&) = default;
};

/// Pyramid non-local block. A two-layer conv trunk keeps the input length;
/// each level average-pools, applies a non-local op and upsamples back; one
/// more non-local op runs on the full-length trunk output. The branches are
/// stacked channel-wise and fused by a 1×1 convolution.
struct PnBlock {
  Conv1dLayer trunk1;
  Conv1dLayer trunk2;
  std::vector<PyramidLevel> levels;
  std::vector<NonLocalBlock> level_ops;
  NonLocalBlock residual_op;
  Conv1dLayer fuse;
  /// Order in which branches are stacked before `fuse`; branch index
  /// `levels.size()` is the residual branch.
  std::vector<std::size_t> branch_order;

  static PnBlock create(std::size_t in_channels, std::size_t channels, std::size_t out_channels,
                        std::vector<PyramidLevel> levels, Rng& rng);
  Var forward(Tape& tape, Var x);
  void visit(const std::string& prefix, const ParamVisitor& fn);
  std::size_t out_channels() const { return fuse.out_channels(); }
};

/// Two conv(3)+ReLU+max-pool(2) pairs; optionally upsampled back to the input length.
struct CmBlock {
  Conv1dLayer conv1;
  Conv1dLayer conv2;
  bool restore_length = true;

  static CmBlock create(std::size_t in_channels, std::size_t channels, bool restore_length, Rng& rng);
  Var forward(Tape& tape, Var x);
  void visit(const std::string& prefix, const ParamVisitor& fn);
  std::size_t out_channels() const { return conv2.out_channels(); }
};

enum class BlockKind { kPn, kCm };

const char* block_name(BlockKind kind);
BlockKind parse_block_kind(const std::string& text);

/// Either a PN block or its CM ablation replacement.
struct ContextBlock {
  std::variant<PnBlock, CmBlock> impl;

  Var forward(Tape& tape, Var x);
  void visit(const std::string& prefix, const ParamVisitor& fn);
  std::size_t out_channels() const;
  BlockKind kind() const { return impl.index() == 0 ? BlockKind::kPn : BlockKind::kCm; }
};

/// Uniform(-bound, bound) initialisation with bound = sqrt(3 / fan_in) * gain.
void init_uniform(Tensor& t, std::size_t fan_in, Rng& rng, double gain = 1.0);

}  // namespace srg
