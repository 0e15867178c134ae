#include "srg/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace srg {

void init_uniform(Tensor& t, std::size_t fan_in, Rng& rng, double gain) {
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-bound, bound));
  t.requires_grad = true;
}

namespace {
Tensor zeros_param(Shape shape) {
  Tensor t(std::move(shape));
  t.requires_grad = true;
  return t;
}
}  // namespace

// ---- Conv / linear -------------------------------------------------------------

Conv1dLayer Conv1dLayer::create(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride,
                                std::size_t padding, Rng& rng) {
  Conv1dLayer l;
  l.weight = Tensor(Shape{c_out, c_in, kernel});
  init_uniform(l.weight, c_in * kernel, rng);
  l.bias = zeros_param(Shape{c_out});
  l.stride = stride;
  l.padding = padding;
  return l;
}

Var Conv1dLayer::forward(Tape& tape, Var x) {
  return add_bias(conv1d(x, tape.parameter(weight), stride, padding), tape.parameter(bias));
}

void Conv1dLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".weight", weight);
  fn(prefix + ".bias", bias);
}

LinearLayer LinearLayer::create(std::size_t in, std::size_t out, Rng& rng) {
  LinearLayer l;
  l.weight = Tensor(Shape{out, in});
  init_uniform(l.weight, in, rng);
  l.bias = zeros_param(Shape{out});
  return l;
}

Var LinearLayer::forward(Tape& tape, Var x) {
  return add_bias(matmul(tape.parameter(weight), x), tape.parameter(bias));
}

void LinearLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".weight", weight);
  fn(prefix + ".bias", bias);
}

// ---- Attention -------------------------------------------------------------------

AttentionBlock AttentionBlock::create(std::size_t channels, std::size_t reduction, std::size_t kernel, Rng& rng) {
  if (kernel % 2 == 0) throw ArgumentError("attention block: temporal kernel must be odd");
  const std::size_t hidden = std::max<std::size_t>(1, channels / std::max<std::size_t>(reduction, 1));
  AttentionBlock b;
  b.squeeze = LinearLayer::create(channels, hidden, rng);
  b.excite = LinearLayer::create(hidden, channels, rng);
  b.temporal = Conv1dLayer::create(2, 1, kernel, 1, kernel / 2, rng);
  return b;
}

AttentionBlock::Trace AttentionBlock::trace(Tape& tape, Var x) {
  if (x.shape().size() != 2) throw DimensionError("attention_block", "rank", 2, x.shape().size());
  if (x.dim(0) != squeeze.weight.dim(1)) {
    throw DimensionError("attention_block", "channels", squeeze.weight.dim(1), x.dim(0));
  }
  auto mlp = [&](Var v) { return excite.forward(tape, relu(squeeze.forward(tape, v))); };
  const Var channel_gate =
      sigmoid(add(mlp(reduce_time(x, ReduceKind::kMean)), mlp(reduce_time(x, ReduceKind::kMax))));
  const Var gated = scale_rows(x, channel_gate);

  const Var descriptors[] = {reduce_channels(gated, ReduceKind::kMean), reduce_channels(gated, ReduceKind::kMax)};
  const Var temporal_gate = sigmoid(temporal.forward(tape, concat_rows<float>(descriptors)));
  return Trace{scale_cols(gated, temporal_gate), channel_gate, temporal_gate};
}

void AttentionBlock::visit(const std::string& prefix, const ParamVisitor& fn) {
  squeeze.visit(prefix + ".squeeze", fn);
  excite.visit(prefix + ".excite", fn);
  temporal.visit(prefix + ".temporal", fn);
}

// ---- Non-local -------------------------------------------------------------------

NonLocalBlock NonLocalBlock::create(std::size_t channels, Rng& rng) {
  const std::size_t inner = std::max<std::size_t>(1, channels / 2);
  NonLocalBlock b;
  b.theta = Tensor(Shape{inner, channels});
  b.phi = Tensor(Shape{inner, channels});
  b.g = Tensor(Shape{inner, channels});
  b.out = Tensor(Shape{channels, inner});
  init_uniform(b.theta, channels, rng);
  init_uniform(b.phi, channels, rng);
  init_uniform(b.g, channels, rng);
  // Start close to the identity mapping.
  init_uniform(b.out, inner, rng, 0.1);
  return b;
}

NonLocalBlock::Trace NonLocalBlock::trace(Tape& tape, Var x) {
  if (x.shape().size() != 2) throw DimensionError("non_local", "rank", 2, x.shape().size());
  if (x.dim(0) != theta.dim(1)) throw DimensionError("non_local", "channels", theta.dim(1), x.dim(0));
  const Var th = matmul(tape.parameter(theta), x);  // [Ci × T]
  const Var ph = matmul(tape.parameter(phi), x);
  const Var gx = matmul(tape.parameter(g), x);
  const Var attention = softmax_rows(matmul(transpose(th), ph));  // [T × T]
  const Var y = matmul(gx, transpose(attention));                  // [Ci × T]
  return Trace{add(x, matmul(tape.parameter(out), y)), attention};
}

void NonLocalBlock::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".theta", theta);
  fn(prefix + ".phi", phi);
  fn(prefix + ".g", g);
  fn(prefix + ".out", out);
}

// ---- Pyramid non-local -----------------------------------------------------------

PnBlock PnBlock::create(std::size_t in_channels, std::size_t channels, std::size_t out_channels,
                        std::vector<PyramidLevel> levels, Rng& rng) {
  if (levels.empty()) throw ConfigError("PN block needs at least one pyramid level");
  PnBlock b;
  b.trunk1 = Conv1dLayer::create(in_channels, channels, 3, 1, 1, rng);
  b.trunk2 = Conv1dLayer::create(channels, channels, 3, 1, 1, rng);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i].kernel == 0 || levels[i].stride == 0) {
      throw ConfigError("PN level " + std::to_string(i) + ": kernel and stride must be >= 1");
    }
    b.level_ops.push_back(NonLocalBlock::create(channels, rng));
  }
  b.residual_op = NonLocalBlock::create(channels, rng);
  b.fuse = Conv1dLayer::create(channels * (levels.size() + 1), out_channels, 1, 1, 0, rng);
  b.branch_order.resize(levels.size() + 1);
  std::iota(b.branch_order.begin(), b.branch_order.end(), std::size_t{0});
  b.levels = std::move(levels);
  return b;
}

Var PnBlock::forward(Tape& tape, Var x) {
  const Var h = relu(trunk2.forward(tape, relu(trunk1.forward(tape, x))));
  const std::size_t len = h.dim(1);
  std::vector<Var> branches;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i].kernel > len) {
      throw ConfigError("PN level " + std::to_string(i) + ": kernel " + std::to_string(levels[i].kernel) +
                        " exceeds sequence length " + std::to_string(len));
    }
    const Var pooled = temporal_pool(h, PoolKind::kAvg, levels[i].kernel, levels[i].stride);
    branches.push_back(linear_upsample(level_ops[i].forward(tape, pooled), len));
  }
  branches.push_back(residual_op.forward(tape, h));
  std::vector<Var> ordered;
  for (std::size_t idx : branch_order) ordered.push_back(branches.at(idx));
  return relu(fuse.forward(tape, concat_rows<float>(ordered)));
}

void PnBlock::visit(const std::string& prefix, const ParamVisitor& fn) {
  trunk1.visit(prefix + ".trunk1", fn);
  trunk2.visit(prefix + ".trunk2", fn);
  for (std::size_t i = 0; i < level_ops.size(); ++i) level_ops[i].visit(prefix + ".level" + std::to_string(i), fn);
  residual_op.visit(prefix + ".residual", fn);
  fuse.visit(prefix + ".fuse", fn);
}

// ---- Conv + max-pool -------------------------------------------------------------

CmBlock CmBlock::create(std::size_t in_channels, std::size_t channels, bool restore_length, Rng& rng) {
  CmBlock b;
  b.conv1 = Conv1dLayer::create(in_channels, channels, 3, 1, 1, rng);
  b.conv2 = Conv1dLayer::create(channels, channels, 3, 1, 1, rng);
  b.restore_length = restore_length;
  return b;
}

Var CmBlock::forward(Tape& tape, Var x) {
  const std::size_t len = x.dim(1);
  if (len < 4) throw DimensionError("cm_block", "time", "needs at least 4 steps, got " + std::to_string(len));
  Var h = temporal_pool(relu(conv1.forward(tape, x)), PoolKind::kMax, 2, 2);
  h = temporal_pool(relu(conv2.forward(tape, h)), PoolKind::kMax, 2, 2);
  return restore_length ? linear_upsample(h, len) : h;
}

void CmBlock::visit(const std::string& prefix, const ParamVisitor& fn) {
  conv1.visit(prefix + ".conv1", fn);
  conv2.visit(prefix + ".conv2", fn);
}

// ---- Dispatch ----------------------------------------------------------------------

const char* block_name(BlockKind kind) { return kind == BlockKind::kPn ? "PN" : "CM"; }

BlockKind parse_block_kind(const std::string& text) {
  if (text == "PN" || text == "pn") return BlockKind::kPn;
  if (text == "CM" || text == "cm") return BlockKind::kCm;
  throw ConfigError("unknown block kind '" + text + "' (expected PN or CM)");
}

Var ContextBlock::forward(Tape& tape, Var x) {
  return std::visit([&](auto& b) { return b.forward(tape, x); }, impl);
}

void ContextBlock::visit(const std::string& prefix, const ParamVisitor& fn) {
  std::visit([&](auto& b) { b.visit(prefix, fn); }, impl);
}

std::size_t ContextBlock::out_channels() const {
  return std::visit([](const auto& b) { return b.out_channels(); }, impl);
}

}  // namespace srg
