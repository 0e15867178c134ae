#include "srg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "srg/kernels.hpp"

namespace srg {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tape

template <typename T>
typename BasicTape<T>::Var BasicTape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

template <typename T>
typename BasicTape<T>::Var BasicTape<T>::constant(BasicTensor<T> value) {
  Node n;
  value.requires_grad = false;
  value.grad.clear();
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
typename BasicTape<T>::Var BasicTape<T>::input(BasicTensor<T> value) {
  Node n;
  value.grad.clear();
  value.requires_grad = track_gradients_;
  n.value = std::move(value);
  n.needs_grad = track_gradients_;
  return push(std::move(n));
}

template <typename T>
typename BasicTape<T>::Var BasicTape<T>::parameter(BasicTensor<T>& param) {
  Node n;
  n.value.shape = param.shape;
  n.value.data = param.data;
  if (track_gradients_) {
    n.param = &param;
    n.needs_grad = param.requires_grad;
  }
  return push(std::move(n));
}

template <typename T>
typename BasicTape<T>::Var BasicTape<T>::record(BasicTensor<T> value, std::vector<std::size_t> inputs,
                                                BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].needs_grad; });
  if (n.needs_grad) n.backward = std::move(fn);
  n.inputs = std::move(inputs);
  return push(std::move(n));
}

template <typename T>
std::vector<T>& BasicTape<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.numel(), T{0});
  return n.grad;
}

template <typename T>
void BasicTape<T>::backward(Var loss) {
  if (loss.tape != this) throw ArgumentError("backward: loss belongs to another tape");
  if (value(loss).numel() != 1) {
    throw ArgumentError("backward: loss must be scalar, got shape " + shape_to_string(value(loss).shape));
  }
  grad_buffer(loss.id)[0] = T{1};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) {
      auto& pg = n.param->grad;
      if (pg.size() != n.grad.size()) pg.assign(n.grad.size(), T{0});
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

template <typename T>
void require_rank(const char* op, const BasicTensor<T>& t, std::size_t rank) {
  if (t.rank() != rank) throw DimensionError(op, "rank", rank, t.rank());
}

template <typename T>
void require_same_shape(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != b.rank()) throw DimensionError(op, "rank", a.rank(), b.rank());
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (a.shape[i] != b.shape[i]) throw DimensionError(op, "axis " + std::to_string(i), a.shape[i], b.shape[i]);
  }
}

template <typename T>
std::span<const T> cview(const BasicTensor<T>& t) {
  return {t.data.data(), t.data.size()};
}

template <typename T>
std::span<T> view(std::vector<T>& v) {
  return {v.data(), v.size()};
}

template <typename T>
std::span<const T> cview(const std::vector<T>& v) {
  return {v.data(), v.size()};
}

template <typename T>
BasicVar<T> unary(BasicVar<T> a, const std::function<T(T)>& fwd,
                  std::function<T(T /*x*/, T /*y*/)> dydx) {
  const auto& x = a.tape->value(a);
  BasicTensor<T> out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = fwd(x.data[i]);
  const std::size_t in = a.id;
  return a.tape->record(std::move(out), {in}, [in, dydx](BasicTape<T>& tape, std::size_t self) {
    const auto& xv = tape.value(in).data;
    const auto& yv = tape.value(self).data;
    const auto& gy = tape.grad_buffer(self);
    auto& gx = tape.grad_buffer(in);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * dydx(xv[i], yv[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Layer ops

template <typename T>
BasicVar<T> conv1d(BasicVar<T> input, BasicVar<T> weights, std::size_t stride, std::size_t padding) {
  const auto& x = input.tape->value(input);
  const auto& w = input.tape->value(weights);
  require_rank("conv1d", x, 2);
  require_rank("conv1d", w, 3);
  if (w.dim(1) != x.dim(0)) throw DimensionError("conv1d", "input channels", w.dim(1), x.dim(0));
  if (stride == 0) throw ArgumentError("conv1d: stride must be >= 1");
  if (w.dim(2) > x.dim(1) + 2 * padding) {
    throw DimensionError("conv1d", "time", "kernel " + std::to_string(w.dim(2)) + " exceeds padded length " +
                                               std::to_string(x.dim(1) + 2 * padding));
  }
  kernels::Conv1dDims d{x.dim(0), x.dim(1), w.dim(0), w.dim(2), stride, padding};
  BasicTensor<T> out(Shape{d.c_out, d.t_out()});
  kernels::parallel::conv1d_forward<T>(d, cview(x), cview(w), view(out.data));
  const std::size_t xi = input.id, wi = weights.id;
  return input.tape->record(std::move(out), {xi, wi}, [d, xi, wi](BasicTape<T>& tape, std::size_t self) {
    const auto& gy = tape.grad_buffer(self);
    if (tape.needs_grad(xi)) {
      kernels::parallel::conv1d_backward_input<T>(d, cview(tape.value(wi)), cview(gy), view(tape.grad_buffer(xi)));
    }
    if (tape.needs_grad(wi)) {
      kernels::parallel::conv1d_backward_weight<T>(d, cview(tape.value(xi)), cview(gy), view(tape.grad_buffer(wi)));
    }
  });
}

template <typename T>
BasicVar<T> add_bias(BasicVar<T> input, BasicVar<T> bias) {
  const auto& x = input.tape->value(input);
  const auto& b = input.tape->value(bias);
  require_rank("add_bias", x, 2);
  if (b.numel() != x.dim(0)) throw DimensionError("add_bias", "channels", x.dim(0), b.numel());
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  BasicTensor<T> out(x.shape);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] = x.data[r * cols + c] + b.data[r];
  const std::size_t xi = input.id, bi = bias.id;
  return input.tape->record(std::move(out), {xi, bi}, [=](BasicTape<T>& tape, std::size_t self) {
    const auto& gy = tape.grad_buffer(self);
    if (tape.needs_grad(xi)) {
      auto& gx = tape.grad_buffer(xi);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    }
    if (tape.needs_grad(bi)) {
      auto& gb = tape.grad_buffer(bi);
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += gy[r * cols + c];
        gb[r] += static_cast<T>(acc);
      }
    }
  });
}

template <typename T>
BasicVar<T> temporal_pool(BasicVar<T> input, PoolKind kind, std::size_t kernel, std::size_t stride) {
  const auto& x = input.tape->value(input);
  require_rank("temporal_pool", x, 2);
  if (kernel == 0 || stride == 0) throw ArgumentError("temporal_pool: kernel and stride must be >= 1");
  if (kernel > x.dim(1)) {
    throw DimensionError("temporal_pool", "time",
                         "kernel " + std::to_string(kernel) + " exceeds length " + std::to_string(x.dim(1)));
  }
  kernels::PoolDims d{x.dim(0), x.dim(1), kernel, stride};
  BasicTensor<T> out(Shape{d.channels, d.t_out()});
  const std::size_t xi = input.id;
  if (kind == PoolKind::kAvg) {
    kernels::parallel::avg_pool_forward<T>(d, cview(x), view(out.data));
    return input.tape->record(std::move(out), {xi}, [d, xi](BasicTape<T>& tape, std::size_t self) {
      kernels::parallel::avg_pool_backward<T>(d, cview(tape.grad_buffer(self)), view(tape.grad_buffer(xi)));
    });
  }
  std::vector<std::size_t> argmax(out.numel());
  kernels::parallel::max_pool_forward<T>(d, cview(x), view(out.data), std::span<std::size_t>(argmax));
  return input.tape->record(std::move(out), {xi},
                            [xi, argmax = std::move(argmax)](BasicTape<T>& tape, std::size_t self) {
                              const auto& gy = tape.grad_buffer(self);
                              auto& gx = tape.grad_buffer(xi);
                              for (std::size_t i = 0; i < gy.size(); ++i) gx[argmax[i]] += gy[i];
                            });
}

template <typename T>
BasicVar<T> linear_upsample(BasicVar<T> input, std::size_t target_len) {
  const auto& x = input.tape->value(input);
  require_rank("linear_upsample", x, 2);
  if (target_len < 1) throw ArgumentError("linear_upsample: target_len must be >= 1");
  const std::size_t rows = x.dim(0), len = x.dim(1);
  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  std::vector<Tap> taps(target_len);
  for (std::size_t j = 0; j < target_len; ++j) {
    const double pos = target_len == 1 ? 0.0
                                       : static_cast<double>(j) * static_cast<double>(len - 1) /
                                             static_cast<double>(target_len - 1);
    const auto lo = std::min(static_cast<std::size_t>(std::floor(pos)), len - 1);
    taps[j] = Tap{lo, std::min(lo + 1, len - 1), pos - static_cast<double>(lo)};
  }
  BasicTensor<T> out(Shape{rows, target_len});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.data.data() + r * len;
    for (std::size_t j = 0; j < target_len; ++j) {
      const Tap& tp = taps[j];
      out.data[r * target_len + j] =
          static_cast<T>((1.0 - tp.frac) * row[tp.lo] + tp.frac * static_cast<double>(row[tp.hi]));
    }
  }
  const std::size_t xi = input.id;
  return input.tape->record(std::move(out), {xi}, [=, taps = std::move(taps)](BasicTape<T>& tape, std::size_t self) {
    const auto& gy = tape.grad_buffer(self);
    auto& gx = tape.grad_buffer(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < target_len; ++j) {
        const T g = gy[r * target_len + j];
        gx[r * len + taps[j].lo] += static_cast<T>((1.0 - taps[j].frac) * g);
        gx[r * len + taps[j].hi] += static_cast<T>(taps[j].frac * g);
      }
    }
  });
}

template <typename T>
BasicVar<T> gather_columns(BasicVar<T> input, std::span<const std::size_t> columns) {
  const auto& x = input.tape->value(input);
  require_rank("gather_columns", x, 2);
  if (columns.empty()) throw ArgumentError("gather_columns: no columns requested");
  const std::size_t rows = x.dim(0), len = x.dim(1), n = columns.size();
  for (std::size_t c : columns) {
    if (c >= len) throw DimensionError("gather_columns", "time", "column " + std::to_string(c) + " out of range");
  }
  BasicTensor<T> out(Shape{rows, n});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out.data[r * n + j] = x.data[r * len + columns[j]];
  const std::size_t xi = input.id;
  std::vector<std::size_t> cols(columns.begin(), columns.end());
  return input.tape->record(std::move(out), {xi}, [=, cols = std::move(cols)](BasicTape<T>& tape, std::size_t self) {
    const auto& gy = tape.grad_buffer(self);
    auto& gx = tape.grad_buffer(xi);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) gx[r * len + cols[j]] += gy[r * n + j];
  });
}

template <typename T>
BasicVar<T> reduce_time(BasicVar<T> input, ReduceKind kind) {
  const auto& x = input.tape->value(input);
  require_rank("reduce_time", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  BasicTensor<T> out(Shape{rows, 1});
  std::vector<std::size_t> arg(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.data.data() + r * cols;
    if (kind == ReduceKind::kMean) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += row[c];
      out.data[r] = static_cast<T>(acc / static_cast<double>(cols));
    } else {
      arg[r] = static_cast<std::size_t>(std::max_element(row, row + cols) - row);
      out.data[r] = row[arg[r]];
    }
  }
  const std::size_t xi = input.id;
  return input.tape->record(std::move(out), {xi}, [=, arg = std::move(arg)](BasicTape<T>& tape, std::size_t self) {
    const auto& gy = tape.grad_buffer(self);
    auto& gx = tape.grad_buffer(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      if (kind == ReduceKind::kMean) {
        const T share = gy[r] / static_cast<T>(cols);
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += share;
      } else {
        gx[r * cols + arg[r]] += gy[r];
      }
    }
  });
}

template <typename T>
BasicVar<T> reduce_channels(BasicVar<T> input, ReduceKind kind) {
  const auto& x = input.tape->value(input);
  require_rank("reduce_channels", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  BasicTensor<T> out(Shape{1, cols});
  std::vector<std::size_t> arg(cols, 0);
  for (std::size_t c = 0; c < cols; ++c) {
    if (kind == ReduceKind::kMean) {
      double acc = 0.0;
      for (std::size_t r = 0; r < rows; ++r) acc += x.data[r * cols + c];
      out.data[c] = static_cast<T>(acc / static_cast<double>(rows));
    } else {
      std::size_t best = 0;
      for (std::size_t r = 1; r < rows; ++r)
        if (x.data[r * cols + c] > x.data[best * cols + c]) best = r;
      arg[c] = best;
      out.data[c] = x.data[best * cols + c];
    }
  }
  const std::size_t xi = input.id;
  return input.tape->record(std::move(out), {xi}, [=, arg = std::move(arg)](BasicTape<T>& tape, std::size_t self) {
    const auto& gy = tape.grad_buffer(self);
    auto& gx = tape.grad_buffer(xi);
    for (std::size_t c = 0; c < cols; ++c) {
      if (kind == ReduceKind::kMean) {
        const T share = gy[c] / static_cast<T>(rows);
        for (std::size_t r = 0; r < rows; ++r) gx[r * cols + c] += share;
      } else {
        gx[arg[c] * cols + c] += gy[c];
      }
    }
  });
}

template <typename T>
BasicVar<T> scale_rows(BasicVar<T> input, BasicVar<T> gate) {
  const auto& x = input.tape->value(input);
  const auto& g = input.tape->value(gate);
  require_rank("scale_rows", x, 2);
  if (g.numel() != x.dim(0)) throw DimensionError("scale_rows", "channels", x.dim(0), g.numel());
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  BasicTensor<T> out(x.shape);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] = x.data[r * cols + c] * g.data[r];
  const std::size_t xi = input.id, gi = gate.id;
  return input.tape->record(std::move(out), {xi, gi}, [=](BasicTape<T>& tape, std::size_t self) {
    const auto& gy = tape.grad_buffer(self);
    if (tape.needs_grad(xi)) {
      const auto& gv = tape.value(gi).data;
      auto& gx = tape.grad_buffer(xi);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += gy[r * cols + c] * gv[r];
    }
    if (tape.needs_grad(gi)) {
      const auto& xv = tape.value(xi).data;
      auto& gg = tape.grad_buffer(gi);
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += static_cast<double>(gy[r * cols + c]) * xv[r * cols + c];
        gg[r] += static_cast<T>(acc);
      }
    }
  });
}

template <typename T>
BasicVar<T> scale_cols(BasicVar<T> input, BasicVar<T> gate) {
  const auto& x = input.tape->value(input);
  const auto& g = input.tape->value(gate);
  require_rank("scale_cols", x, 2);
  if (g.numel() != x.dim(1)) throw DimensionError("scale_cols", "time", x.dim(1), g.numel());
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  BasicTensor<T> out(x.shape);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] = x.data[r * cols + c] * g.data[c];
  const std::size_t xi = input.id, gi = gate.id;
  return input.tape->record(std::move(out), {xi, gi}, [=](BasicTape<T>& tape, std::size_t self) {
    const auto& gy = tape.grad_buffer(self);
    if (tape.needs_grad(xi)) {
      const auto& gv = tape.value(gi).data;
      auto& gx = tape.grad_buffer(xi);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += gy[r * cols + c] * gv[c];
    }
    if (tape.needs_grad(gi)) {
      const auto& xv = tape.value(xi).data;
      auto& gg = tape.grad_buffer(gi);
      for (std::size_t c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < rows; ++r) acc += static_cast<double>(gy[r * cols + c]) * xv[r * cols + c];
        gg[c] += static_cast<T>(acc);
      }
    }
  });
}

template <typename T>
BasicVar<T> concat_rows(std::span<const BasicVar<T>> parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: nothing to concatenate");
  BasicTape<T>* tape = parts.front().tape;
  const std::size_t cols = tape->value(parts.front()).dim(1);
  std::size_t rows = 0;
  std::vector<std::size_t> ids, offsets;
  for (const auto& p : parts) {
    const auto& v = tape->value(p);
    require_rank("concat_rows", v, 2);
    if (v.dim(1) != cols) throw DimensionError("concat_rows", "time", cols, v.dim(1));
    ids.push_back(p.id);
    offsets.push_back(rows * cols);
    rows += v.dim(0);
  }
  BasicTensor<T> out(Shape{rows, cols});
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto& v = tape->value(ids[k]).data;
    std::copy(v.begin(), v.end(), out.data.begin() + static_cast<std::ptrdiff_t>(offsets[k]));
  }
  auto inputs = ids;
  return tape->record(std::move(out), std::move(inputs),
                      [ids = std::move(ids), offsets = std::move(offsets)](BasicTape<T>& tp, std::size_t self) {
                        const auto& gy = tp.grad_buffer(self);
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                          if (!tp.needs_grad(ids[k])) continue;
                          auto& gx = tp.grad_buffer(ids[k]);
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[offsets[k] + i];
                        }
                      });
}

template <typename T>
BasicVar<T> concat_cols(std::span<const BasicVar<T>> parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: nothing to concatenate");
  BasicTape<T>* tape = parts.front().tape;
  const std::size_t rows = tape->value(parts.front()).dim(0);
  std::size_t cols = 0;
  std::vector<std::size_t> ids, col_offsets, widths;
  for (const auto& p : parts) {
    const auto& v = tape->value(p);
    require_rank("concat_cols", v, 2);
    if (v.dim(0) != rows) throw DimensionError("concat_cols", "channels", rows, v.dim(0));
    ids.push_back(p.id);
    col_offsets.push_back(cols);
    widths.push_back(v.dim(1));
    cols += v.dim(1);
  }
  BasicTensor<T> out(Shape{rows, cols});
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto& v = tape->value(ids[k]).data;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) out.data[r * cols + col_offsets[k] + c] = v[r * widths[k] + c];
  }
  auto inputs = ids;
  return tape->record(std::move(out), std::move(inputs),
                      [=, ids = std::move(ids)](BasicTape<T>& tp, std::size_t self) {
                        const auto& gy = tp.grad_buffer(self);
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                          if (!tp.needs_grad(ids[k])) continue;
                          auto& gx = tp.grad_buffer(ids[k]);
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < widths[k]; ++c)
                              gx[r * widths[k] + c] += gy[r * cols + col_offsets[k] + c];
                        }
                      });
}

// ---------------------------------------------------------------------------
// Dense algebra

template <typename T>
BasicVar<T> matmul(BasicVar<T> a, BasicVar<T> b) {
  const auto& av = a.tape->value(a);
  const auto& bv = a.tape->value(b);
  require_rank("matmul", av, 2);
  require_rank("matmul", bv, 2);
  if (av.dim(1) != bv.dim(0)) throw DimensionError("matmul", "inner", av.dim(1), bv.dim(0));
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  BasicTensor<T> out(Shape{m, n});
  kernels::parallel::matmul<T>(m, k, n, cview(av), cview(bv), view(out.data));
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(out), {ai, bi}, [=](BasicTape<T>& tape, std::size_t self) {
    const auto& gy = tape.grad_buffer(self);
    if (tape.needs_grad(ai)) {
      kernels::parallel::matmul_nt_acc<T>(m, n, k, cview(gy), cview(tape.value(bi)), view(tape.grad_buffer(ai)));
    }
    if (tape.needs_grad(bi)) {
      kernels::parallel::matmul_tn_acc<T>(k, m, n, cview(tape.value(ai)), cview(gy), view(tape.grad_buffer(bi)));
    }
  });
}

template <typename T>
BasicVar<T> transpose(BasicVar<T> a) {
  const auto& x = a.tape->value(a);
  require_rank("transpose", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  BasicTensor<T> out(Shape{cols, rows});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.data[c * rows + r] = x.data[r * cols + c];
  const std::size_t xi = a.id;
  return a.tape->record(std::move(out), {xi}, [=](BasicTape<T>& tape, std::size_t self) {
    const auto& gy = tape.grad_buffer(self);
    auto& gx = tape.grad_buffer(xi);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += gy[c * rows + r];
  });
}

template <typename T>
BasicVar<T> softmax_rows(BasicVar<T> a) {
  const auto& x = a.tape->value(a);
  require_rank("softmax_rows", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  BasicTensor<T> out(x.shape);
  std::vector<double> e(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.data.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (e[c] = std::exp(static_cast<double>(row[c]) - mx));
    for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] = static_cast<T>(e[c] / total);
  }
  const std::size_t xi = a.id;
  return a.tape->record(std::move(out), {xi}, [=](BasicTape<T>& tape, std::size_t self) {
    const auto& y = tape.value(self).data;
    const auto& gy = tape.grad_buffer(self);
    auto& gx = tape.grad_buffer(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += static_cast<double>(gy[r * cols + c]) * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        gx[i] += static_cast<T>(y[i] * (gy[i] - dot));
      }
    }
  });
}

template <typename T>
BasicVar<T> sigmoid(BasicVar<T> a) {
  return unary<T>(
      a,
      [](T x) {
        const double xd = x;
        return static_cast<T>(xd >= 0 ? 1.0 / (1.0 + std::exp(-xd)) : std::exp(xd) / (1.0 + std::exp(xd)));
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
BasicVar<T> relu(BasicVar<T> a) {
  return unary<T>(
      a, [](T x) { return x > T{0} ? x : T{0}; }, [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <typename T>
BasicVar<T> abs(BasicVar<T> a) {
  return unary<T>(
      a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > T{0} ? T{1} : (x < T{0} ? T{-1} : T{0}); });
}

template <typename T>
BasicVar<T> scale(BasicVar<T> a, T factor) {
  return unary<T>(
      a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
BasicVar<T> add_scalar(BasicVar<T> a, T offset) {
  return unary<T>(
      a, [offset](T x) { return x + offset; }, [](T, T) { return T{1}; });
}

namespace {

enum class Binary { kAdd, kSub, kMul };

template <typename T>
BasicVar<T> binary(const char* name, BasicVar<T> a, BasicVar<T> b, Binary op) {
  const auto& av = a.tape->value(a);
  const auto& bv = a.tape->value(b);
  require_same_shape(name, av, bv);
  BasicTensor<T> out(av.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    switch (op) {
      case Binary::kAdd: out.data[i] = av.data[i] + bv.data[i]; break;
      case Binary::kSub: out.data[i] = av.data[i] - bv.data[i]; break;
      case Binary::kMul: out.data[i] = av.data[i] * bv.data[i]; break;
    }
  }
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(out), {ai, bi}, [=](BasicTape<T>& tape, std::size_t self) {
    const auto& gy = tape.grad_buffer(self);
    if (tape.needs_grad(ai)) {
      auto& ga = tape.grad_buffer(ai);
      if (op == Binary::kMul) {
        const auto& bd = tape.value(bi).data;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bd[i];
      } else {
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
      }
    }
    if (tape.needs_grad(bi)) {
      auto& gb = tape.grad_buffer(bi);
      if (op == Binary::kMul) {
        const auto& ad = tape.value(ai).data;
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * ad[i];
      } else {
        const T sign = op == Binary::kSub ? T{-1} : T{1};
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += sign * gy[i];
      }
    }
  });
}

}  // namespace

template <typename T>
BasicVar<T> add(BasicVar<T> a, BasicVar<T> b) {
  return binary("add", a, b, Binary::kAdd);
}

template <typename T>
BasicVar<T> sub(BasicVar<T> a, BasicVar<T> b) {
  return binary("sub", a, b, Binary::kSub);
}

template <typename T>
BasicVar<T> mul(BasicVar<T> a, BasicVar<T> b) {
  return binary("mul", a, b, Binary::kMul);
}

template <typename T>
BasicVar<T> sum(BasicVar<T> a) {
  const auto& x = a.tape->value(a);
  double acc = 0.0;
  for (T v : x.data) acc += v;
  const std::size_t xi = a.id;
  return a.tape->record(BasicTensor<T>(Shape{1}, static_cast<T>(acc)), {xi},
                        [xi](BasicTape<T>& tape, std::size_t self) {
                          const T g = tape.grad_buffer(self)[0];
                          for (auto& v : tape.grad_buffer(xi)) v += g;
                        });
}

template <typename T>
BasicVar<T> mean(BasicVar<T> a) {
  const std::size_t n = a.tape->value(a).numel();
  return scale(sum(a), static_cast<T>(1.0 / static_cast<double>(n)));
}

// ---------------------------------------------------------------------------
// Losses

template <typename T>
BasicVar<T> bce_masked_mean(BasicVar<T> prob, const BasicTensor<T>& target, const BasicTensor<T>& mask, T eps) {
  const auto& p = prob.tape->value(prob);
  require_same_shape("bce_masked_mean", p, target);
  require_same_shape("bce_masked_mean", p, mask);
  double count = 0.0;
  for (T m : mask.data) count += m;
  const double lo = eps, hi = 1.0 - static_cast<double>(eps);
  double acc = 0.0;
  std::vector<T> dp(p.numel(), T{0});
  if (count > 0) {
    for (std::size_t i = 0; i < p.numel(); ++i) {
      if (mask.data[i] == T{0}) continue;
      const double y = target.data[i];
      const double pc = std::clamp(static_cast<double>(p.data[i]), lo, hi);
      acc += mask.data[i] * (y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
      if (p.data[i] > lo && p.data[i] < hi) {
        dp[i] = static_cast<T>(-mask.data[i] * (y / pc - (1.0 - y) / (1.0 - pc)) / count);
      }
    }
  }
  const T loss = count > 0 ? static_cast<T>(-acc / count) : T{0};
  const std::size_t pi = prob.id;
  return prob.tape->record(BasicTensor<T>(Shape{1}, loss), {pi},
                           [pi, dp = std::move(dp)](BasicTape<T>& tape, std::size_t self) {
                             const T g = tape.grad_buffer(self)[0];
                             auto& gp = tape.grad_buffer(pi);
                             for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * dp[i];
                           });
}

template <typename T>
BasicVar<T> cross_entropy_rows(BasicVar<T> prob, const BasicTensor<T>& target, T eps) {
  const auto& p = prob.tape->value(prob);
  require_rank("cross_entropy_rows", p, 2);
  require_same_shape("cross_entropy_rows", p, target);
  const double rows = static_cast<double>(p.dim(0));
  const double lo = eps, hi = 1.0 - static_cast<double>(eps);
  double acc = 0.0;
  std::vector<T> dp(p.numel(), T{0});
  for (std::size_t i = 0; i < p.numel(); ++i) {
    if (target.data[i] == T{0}) continue;
    const double pc = std::clamp(static_cast<double>(p.data[i]), lo, hi);
    acc += target.data[i] * std::log(pc);
    if (p.data[i] > lo && p.data[i] < hi) dp[i] = static_cast<T>(-target.data[i] / pc / rows);
  }
  const std::size_t pi = prob.id;
  return prob.tape->record(BasicTensor<T>(Shape{1}, static_cast<T>(-acc / rows)), {pi},
                           [pi, dp = std::move(dp)](BasicTape<T>& tape, std::size_t self) {
                             const T g = tape.grad_buffer(self)[0];
                             auto& gp = tape.grad_buffer(pi);
                             for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * dp[i];
                           });
}

// ---------------------------------------------------------------------------
// Instantiations

#define SRG_INSTANTIATE(T)                                                                                   \
  template class BasicTape<T>;                                                                               \
  template BasicVar<T> conv1d(BasicVar<T>, BasicVar<T>, std::size_t, std::size_t);                           \
  template BasicVar<T> add_bias(BasicVar<T>, BasicVar<T>);                                                   \
  template BasicVar<T> temporal_pool(BasicVar<T>, PoolKind, std::size_t, std::size_t);                       \
  template BasicVar<T> linear_upsample(BasicVar<T>, std::size_t);                                            \
  template BasicVar<T> gather_columns(BasicVar<T>, std::span<const std::size_t>);                            \
  template BasicVar<T> reduce_time(BasicVar<T>, ReduceKind);                                                 \
  template BasicVar<T> reduce_channels(BasicVar<T>, ReduceKind);                                             \
  template BasicVar<T> scale_rows(BasicVar<T>, BasicVar<T>);                                                 \
  template BasicVar<T> scale_cols(BasicVar<T>, BasicVar<T>);                                                 \
  template BasicVar<T> concat_rows(std::span<const BasicVar<T>>);                                            \
  template BasicVar<T> concat_cols(std::span<const BasicVar<T>>);                                            \
  template BasicVar<T> matmul(BasicVar<T>, BasicVar<T>);                                                     \
  template BasicVar<T> transpose(BasicVar<T>);                                                               \
  template BasicVar<T> softmax_rows(BasicVar<T>);                                                            \
  template BasicVar<T> sigmoid(BasicVar<T>);                                                                 \
  template BasicVar<T> relu(BasicVar<T>);                                                                    \
  template BasicVar<T> abs(BasicVar<T>);                                                                     \
  template BasicVar<T> add(BasicVar<T>, BasicVar<T>);                                                        \
  template BasicVar<T> sub(BasicVar<T>, BasicVar<T>);                                                        \
  template BasicVar<T> mul(BasicVar<T>, BasicVar<T>);                                                        \
  template BasicVar<T> scale(BasicVar<T>, T);                                                                \
  template BasicVar<T> add_scalar(BasicVar<T>, T);                                                           \
  template BasicVar<T> sum(BasicVar<T>);                                                                     \
  template BasicVar<T> mean(BasicVar<T>);                                                                    \
  template BasicVar<T> bce_masked_mean(BasicVar<T>, const BasicTensor<T>&, const BasicTensor<T>&, T);        \
  template BasicVar<T> cross_entropy_rows(BasicVar<T>, const BasicTensor<T>&, T);

SRG_INSTANTIATE(float)
SRG_INSTANTIATE(double)

#undef SRG_INSTANTIATE

}  // namespace srg
