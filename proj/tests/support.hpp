#pragma once

// Shared test helpers: random generators, a finite-difference gradient
// checker and brute-force reference implementations written directly from
// the definitions, independent of the library code paths.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "srg/autodiff.hpp"
#include "srg/eval.hpp"
#include "srg/interval_gen.hpp"
#include "srg/post.hpp"
#include "srg/rng.hpp"
#include "srg/tensor.hpp"
#include "srg/video_data.hpp"

namespace srgtest {

using srg::Rng;
using srg::Shape;
using srg::Tensor;
using TensorD = srg::BasicTensor<double>;
using TapeD = srg::BasicTape<double>;
using VarD = srg::BasicVar<double>;

// ---- Generators ---------------------------------------------------------------------

template <typename T = float>
srg::BasicTensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  srg::BasicTensor<T> t(shape);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Rows that each sum to one.
inline Tensor random_stochastic(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(Shape{rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) total += (t(i, j) = static_cast<float>(rng.uniform(0.01, 1.0)));
    for (std::size_t j = 0; j < cols; ++j) t(i, j) = static_cast<float>(t(i, j) / total);
  }
  return t;
}

/// Sorted, non-overlapping instances inside [0, length).
inline std::vector<srg::GroundTruthInstance> random_instances(std::size_t length, Rng& rng, std::size_t max_count = 4,
                                                              std::size_t max_duration = 0) {
  std::vector<srg::GroundTruthInstance> out;
  const std::size_t count = rng.uniform_int(0, max_count);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < count && pos < length; ++k) {
    const std::size_t start = pos + rng.uniform_int(0, std::min<std::size_t>(length - pos - 1, 6));
    const std::size_t cap = max_duration ? max_duration : length;
    const std::size_t end = std::min(length - 1, start + rng.uniform_int(0, cap - 1));
    out.push_back({start, end, rng.uniform_int(0, 3)});
    pos = end + 1 + rng.uniform_int(0, 3);
  }
  return out;
}

inline srg::Proposal make_proposal(double s, double e, double score) {
  srg::Proposal p;
  p.t_s = static_cast<std::size_t>(std::lround(s));
  p.t_e = static_cast<std::size_t>(std::lround(e));
  p.refined_t_s = s;
  p.refined_t_e = e;
  p.score = score;
  return p;
}

inline std::vector<srg::Proposal> random_proposals(std::size_t n, std::size_t length, Rng& rng, bool integral = false) {
  std::vector<srg::Proposal> out;
  for (std::size_t k = 0; k < n; ++k) {
    double a = rng.uniform(0.0, static_cast<double>(length - 1));
    double b = rng.uniform(0.0, static_cast<double>(length - 1));
    if (integral) {
      a = std::floor(a);
      b = std::floor(b);
    }
    if (a > b) std::swap(a, b);
    // Coarse scores so ties occur.
    out.push_back(make_proposal(a, b, std::round(rng.uniform() * 50.0) / 50.0));
  }
  return out;
}

// ---- Finite differences --------------------------------------------------------------

struct GradReport {
  std::size_t probes = 0;
  std::size_t failures = 0;
  std::size_t kinks = 0;  // probes redrawn because the function is not smooth there
  double worst = 0.0;

  bool ok() const { return probes > 0 && failures == 0; }
};

inline double rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences of f at `slot` compared against `analytic`. The step
/// shrinks by 3x per rung; a rung is smooth when its one-sided slopes agree.
/// The estimate is taken from the first of two consecutive smooth rungs whose
/// central differences also agree. A probe that never settles sits on a kink
/// and is redrawn instead of counted.
template <typename T>
bool probe_once(T& slot, double analytic, const std::function<double()>& f, double eps, double tol, double floor,
                GradReport& report) {
  const T saved = slot;
  auto at = [&](double h) {
    slot = static_cast<T>(saved + h);
    const double v = f();
    slot = saved;
    return v;
  };
  const double f0 = f();
  bool prev_smooth = false;
  double prev_central = 0.0, h = eps;
  for (int rung = 0; rung < 4; ++rung, h /= 3.0) {
    const double fp = at(h), fm = at(-h);
    const double central = (fp - fm) / (2.0 * h);
    const bool smooth = rel_error((fp - f0) / h, (f0 - fm) / h, floor) <= tol;
    if (smooth && prev_smooth && rel_error(central, prev_central, floor) <= tol) {
      const double err = rel_error(analytic, central, floor);
      ++report.probes;
      report.worst = std::max(report.worst, err);
      if (err > tol) ++report.failures;
      return true;
    }
    prev_smooth = smooth;
    prev_central = central;
  }
  ++report.kinks;
  return false;
}

using OpD = std::function<VarD(TapeD&, const std::vector<VarD>&)>;

/// Checks d(sum(w ⊙ op(inputs)))/d(inputs) for random w at random positions of
/// the inputs flagged in `differentiable` (all when empty), in 64-bit.
inline GradReport grad_check_op(const OpD& op, std::vector<TensorD> inputs, Rng& rng, std::size_t probes,
                                std::vector<bool> differentiable = {}, double eps = 1e-6, double tol = 1e-4,
                                double floor = 1e-6) {
  if (differentiable.empty()) differentiable.assign(inputs.size(), true);
  auto build = [&](TapeD& tape, bool track, std::vector<VarD>* leaves) {
    std::vector<VarD> vs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      vs.push_back(track && differentiable[i] ? tape.input(inputs[i]) : tape.constant(inputs[i]));
    }
    if (leaves) *leaves = vs;
    return op(tape, vs);
  };
  TensorD weights;
  {
    TapeD tape(false);
    const VarD out = build(tape, false, nullptr);
    weights = random_tensor<double>(out.shape(), rng);
  }
  auto loss_value = [&]() {
    TapeD tape(false);
    const VarD out = build(tape, false, nullptr);
    return srg::sum(srg::mul(out, tape.constant(weights))).item();
  };
  std::vector<std::vector<double>> grads(inputs.size());
  {
    TapeD tape;
    std::vector<VarD> leaves;
    const VarD out = build(tape, true, &leaves);
    const VarD loss = srg::sum(srg::mul(out, tape.constant(weights)));
    tape.backward(loss);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      grads[i] = tape.grad(leaves[i]);
      grads[i].resize(inputs[i].numel(), 0.0);
    }
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (differentiable[i]) candidates.push_back(i);
  GradReport report;
  std::size_t attempts = 0;
  while (report.probes < probes && attempts++ < probes * 4) {
    const std::size_t i = candidates[rng.uniform_int(0, candidates.size() - 1)];
    const std::size_t k = rng.uniform_int(0, inputs[i].numel() - 1);
    probe_once<double>(inputs[i].data[k], grads[i][k], loss_value, eps, tol, floor, report);
  }
  return report;
}

/// Probes parameter entries of a 32-bit model. `loss` builds the scalar loss
/// on the given tape; parameters' `grad` buffers receive the analytic values.
inline GradReport grad_check_params(const std::vector<Tensor*>& params,
                                    const std::function<srg::Var(srg::Tape&)>& loss, Rng& rng, std::size_t probes,
                                    double eps = 2e-2, double tol = 1e-2, double floor = 3e-2) {
  for (Tensor* p : params) {
    p->grad.assign(p->numel(), 0.0f);
  }
  {
    srg::Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<std::vector<float>> grads;
  for (Tensor* p : params) grads.push_back(p->grad);
  auto value = [&]() {
    srg::Tape tape(false);
    return static_cast<double>(loss(tape).item());
  };
  std::size_t total = 0;
  for (Tensor* p : params) total += p->numel();
  GradReport report;
  std::size_t attempts = 0;
  while (report.probes < probes && attempts++ < probes * 4) {
    // Uniform over all parameter entries.
    std::size_t flat = rng.uniform_int(0, total - 1), which = 0;
    while (flat >= params[which]->numel()) flat -= params[which++]->numel();
    probe_once<float>(params[which]->data[flat], grads[which][flat], value, eps, tol, floor, report);
  }
  return report;
}

// ---- Tensor oracles -----------------------------------------------------------------

inline std::vector<double> conv_oracle(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
  const std::size_t cin = x.dim(0), t = x.dim(1), cout = w.dim(0), k = w.dim(2);
  const std::size_t tout = (t + 2 * pad - k) / stride + 1;
  std::vector<double> y(cout * tout, 0.0);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t j = 0; j < tout; ++j)
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t q = 0; q < k; ++q) {
          const long pos = static_cast<long>(j * stride + q) - static_cast<long>(pad);
          if (pos < 0 || pos >= static_cast<long>(t)) continue;
          y[o * tout + j] += static_cast<double>(w.data[(o * cin + c) * k + q]) * x(c, static_cast<std::size_t>(pos));
        }
  return y;
}

inline std::vector<double> pool_oracle(const Tensor& x, bool is_max, std::size_t k, std::size_t s) {
  const std::size_t c = x.dim(0), t = x.dim(1), tout = (t - k) / s + 1;
  std::vector<double> y(c * tout);
  for (std::size_t r = 0; r < c; ++r)
    for (std::size_t j = 0; j < tout; ++j) {
      double acc = is_max ? -std::numeric_limits<double>::infinity() : 0.0;
      for (std::size_t q = 0; q < k; ++q) {
        const double v = x(r, j * s + q);
        acc = is_max ? std::max(acc, v) : acc + v;
      }
      y[r * tout + j] = is_max ? acc : acc / static_cast<double>(k);
    }
  return y;
}

inline std::vector<double> matmul_oracle(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t q = 0; q < k; ++q) c[i * n + j] += static_cast<double>(a(i, q)) * b(q, j);
  return c;
}

/// Endpoint-aligned linear interpolation of one row at output index j.
inline double lerp_oracle(const std::vector<double>& row, std::size_t j, std::size_t target) {
  if (row.size() == 1 || target == 1) return row[0];
  const double pos = static_cast<double>(j) * static_cast<double>(row.size() - 1) / static_cast<double>(target - 1);
  const double lo = std::floor(pos);
  const auto i = static_cast<std::size_t>(lo);
  if (i + 1 >= row.size()) return row.back();
  return row[i] + (pos - lo) * (row[i + 1] - row[i]);
}

inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

template <typename Vec>
bool all_close(const std::vector<float>& got, const Vec& want, double tol) {
  if (got.size() != want.size()) return false;
  for (std::size_t i = 0; i < got.size(); ++i)
    if (!close_rel(got[i], static_cast<double>(want[i]), tol)) return false;
  return true;
}

// ---- Label-map oracle ---------------------------------------------------------------

/// Per-cell evaluation of the label-map definition.
inline srg::LabelMaps label_map_oracle(const std::vector<srg::GroundTruthInstance>& gts, std::size_t len,
                                       std::size_t n) {
  const srg::NeighborWindow w{n};
  srg::LabelMaps m{w, Tensor(Shape{len, w.relatedness_width()}), Tensor(Shape{len, w.boundary_width()}),
                   Tensor(Shape{len, w.boundary_width()}), Tensor(Shape{len, w.relatedness_width()})};
  auto inside = [](const srg::GroundTruthInstance& g, long t) {
    return t >= static_cast<long>(g.start) && t <= static_cast<long>(g.end);
  };
  for (std::size_t i = 0; i < len; ++i) {
    const long ref = static_cast<long>(i);
    for (std::size_t c = 0; c < w.relatedness_width(); ++c) {
      const long j = ref - static_cast<long>(n) + static_cast<long>(c);
      const bool valid = j >= 0 && j < static_cast<long>(len);
      m.valid(i, c) = valid ? 1.0f : 0.0f;
      bool related = false;
      for (const auto& g : gts) related = related || (valid && inside(g, ref) && inside(g, j));
      m.relatedness(i, c) = related ? 1.0f : 0.0f;
    }
    bool start_found = false, end_found = false;
    for (std::size_t c = 0; c <= n; ++c) {
      for (const auto& g : gts) {
        if (!inside(g, ref)) continue;
        if (static_cast<long>(g.start) == ref - static_cast<long>(n) + static_cast<long>(c)) {
          m.starting(i, c) = 1.0f;
          start_found = true;
        }
        if (static_cast<long>(g.end) == ref + static_cast<long>(c)) {
          m.ending(i, c) = 1.0f;
          end_found = true;
        }
      }
    }
    if (!start_found) m.starting(i, w.none_index()) = 1.0f;
    if (!end_found) m.ending(i, w.none_index()) = 1.0f;
  }
  return m;
}

// ---- Interval oracles ---------------------------------------------------------------

using Span = std::pair<std::size_t, std::size_t>;

/// Enumerates every maximal supra-threshold run of a row, then keeps the one
/// holding the centre column.
inline std::vector<Span> rs_oracle(const Tensor& map, std::size_t n, double tau) {
  const std::size_t len = map.dim(0), width = map.dim(1);
  std::vector<Span> out;
  for (std::size_t i = 0; i < len; ++i) {
    std::vector<Span> runs;
    std::size_t c = 0;
    while (c < width) {
      if (map(i, c) >= tau) {
        std::size_t e = c;
        while (e + 1 < width && map(i, e + 1) >= tau) ++e;
        runs.emplace_back(c, e);
        c = e + 1;
      } else {
        ++c;
      }
    }
    for (const auto& [a, b] : runs) {
      if (a <= n && n <= b) {
        const long lo = static_cast<long>(i) - static_cast<long>(n) + static_cast<long>(a);
        const long hi = static_cast<long>(i) - static_cast<long>(n) + static_cast<long>(b);
        out.emplace_back(static_cast<std::size_t>(std::max(0L, lo)),
                         static_cast<std::size_t>(std::min(hi, static_cast<long>(len) - 1)));
      }
    }
  }
  return out;
}

/// Binary weight map evaluated cell by cell in absolute snippet coordinates.
inline Tensor weight_oracle(const Tensor& os, const Tensor& oe, std::size_t n) {
  const std::size_t len = os.dim(0), wb = os.dim(1);
  Tensor w(Shape{len, 2 * n + 1});
  for (std::size_t i = 0; i < len; ++i) {
    std::size_t js = 0, je = 0;
    for (std::size_t c = 1; c < wb; ++c) {
      if (os(i, c) > os(i, js)) js = c;
      if (oe(i, c) > oe(i, je)) je = c;
    }
    if (js == n + 1 || je == n + 1) continue;
    const long s_abs = static_cast<long>(i) - static_cast<long>(n) + static_cast<long>(js);
    const long e_abs = static_cast<long>(i) + static_cast<long>(je);
    for (std::size_t c = 0; c < 2 * n + 1; ++c) {
      const long abs_pos = static_cast<long>(i) - static_cast<long>(n) + static_cast<long>(c);
      w(i, c) = (s_abs <= abs_pos && abs_pos <= e_abs) ? 1.0f : 0.0f;
    }
  }
  return w;
}

inline std::vector<Span> wrs_oracle(const Tensor& orr, const Tensor& os, const Tensor& oe, std::size_t n, double tau) {
  const Tensor w = weight_oracle(os, oe, n);
  Tensor fused(orr.shape);
  for (std::size_t k = 0; k < fused.numel(); ++k) fused.data[k] = (orr.data[k] + w.data[k]) / 2.0f;
  return rs_oracle(fused, n, tau);
}

inline std::set<Span> spans_of(const std::vector<srg::TemporalInterval>& v) {
  std::set<Span> s;
  for (const auto& p : v) s.emplace(p.t_s, p.t_e);
  return s;
}

// ---- Post-processing oracles --------------------------------------------------------

inline double tiou_oracle(double as, double ae, double bs, double be) {
  // Real intervals [s, e + 1).
  const double lo = std::max(as, bs), hi = std::min(ae + 1.0, be + 1.0);
  const double inter = std::max(0.0, hi - lo);
  const double uni = std::max(ae + 1.0, be + 1.0) - std::min(as, bs) - std::max(0.0, lo - hi);
  return inter / uni;
}

/// Quadratic greedy suppression: repeatedly pick the best remaining proposal.
inline std::vector<srg::Proposal> nms_oracle(const std::vector<srg::Proposal>& in, double thr) {
  auto better = [](const srg::Proposal& a, const srg::Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.refined_t_s != b.refined_t_s) return a.refined_t_s < b.refined_t_s;
    return a.t_e < b.t_e;
  };
  std::vector<bool> alive(in.size(), true);
  std::vector<srg::Proposal> out;
  while (true) {
    long best = -1;
    for (std::size_t i = 0; i < in.size(); ++i)
      if (alive[i] && (best < 0 || better(in[i], in[static_cast<std::size_t>(best)]))) best = static_cast<long>(i);
    if (best < 0) break;
    const srg::Proposal top = in[static_cast<std::size_t>(best)];
    out.push_back(top);
    alive[static_cast<std::size_t>(best)] = false;
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (alive[i] && tiou_oracle(top.refined_t_s, top.refined_t_e, in[i].refined_t_s, in[i].refined_t_e) > thr) {
        alive[i] = false;
      }
    }
  }
  return out;
}

/// Scores after boosting, in input order: double loop over all map cells per location.
inline std::vector<double> boost_oracle(const std::vector<srg::Proposal>& props, const Tensor& orr, std::size_t n) {
  const std::size_t len = orr.dim(0);
  std::vector<double> a(len);
  for (std::size_t t = 0; t < len; ++t) {
    double total = 0.0, count = 0.0;
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t c = 0; c < 2 * n + 1; ++c)
        if (static_cast<long>(i) - static_cast<long>(n) + static_cast<long>(c) == static_cast<long>(t)) {
          total += orr(i, c);
          count += 1.0;
        }
    a[t] = total / count;
  }
  std::vector<double> out;
  for (const auto& p : props) {
    const long s = std::lround(p.refined_t_s), e = std::lround(p.refined_t_e);
    double acc = 0.0;
    for (long t = s; t <= e; ++t) acc += a[static_cast<std::size_t>(t)];
    out.push_back(p.score * acc / static_cast<double>(e - s + 1));
  }
  return out;
}

// ---- Metric oracles -----------------------------------------------------------------

/// Per-video top-AN truncation, direct check of every instance.
inline double recall_oracle(const srg::ProposalMap& props, const srg::AnnotationMap& gt, double thr, std::size_t an) {
  double hit = 0, total = 0;
  for (const auto& [vid, list] : gt) {
    for (const auto& g : list) {
      total += 1;
      const auto it = props.find(vid);
      if (it == props.end()) continue;
      bool found = false;
      for (std::size_t i = 0; i < std::min(an, it->second.size()); ++i) {
        const auto& p = it->second[i];
        found = found || tiou_oracle(p.refined_t_s, p.refined_t_e, static_cast<double>(g.start),
                                     static_cast<double>(g.end)) >= thr;
      }
      hit += found ? 1 : 0;
    }
  }
  return hit / total;
}

inline double ar_oracle(const srg::ProposalMap& props, const srg::AnnotationMap& gt, const std::vector<double>& thrs,
                        std::size_t an) {
  double acc = 0.0;
  for (double t : thrs) acc += recall_oracle(props, gt, t, an);
  return acc / static_cast<double>(thrs.size());
}

inline double auc_oracle(const srg::ProposalMap& props, const srg::AnnotationMap& gt, const std::vector<double>& thrs,
                         std::size_t an_max) {
  double acc = 0.0;
  for (std::size_t an = 1; an <= an_max; ++an) acc += ar_oracle(props, gt, thrs, an);
  return 100.0 * acc / static_cast<double>(an_max);
}

/// A random corpus of proposal lists (sorted by score) with its ground truth.
inline std::pair<srg::ProposalMap, srg::AnnotationMap> random_corpus(Rng& rng, std::size_t videos) {
  srg::ProposalMap props;
  srg::AnnotationMap gt;
  for (std::size_t v = 0; v < videos; ++v) {
    const std::string id = "v" + std::to_string(v);
    const std::size_t len = rng.uniform_int(20, 60);
    auto g = random_instances(len, rng, 4);
    if (g.empty()) g.push_back({2, 9, 0});
    gt[id] = g;
    auto p = random_proposals(rng.uniform_int(0, 30), len, rng, true);
    // Some near-copies of the ground truth so high thresholds are reachable.
    for (const auto& inst : g) {
      if (rng.uniform() < 0.6) {
        p.push_back(make_proposal(static_cast<double>(inst.start), static_cast<double>(inst.end), rng.uniform()));
      }
    }
    srg::sort_by_score(p);
    props[id] = p;
  }
  return {props, gt};
}

}  // namespace srgtest
