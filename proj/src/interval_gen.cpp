#include "srg/interval_gen.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <utility>

namespace srg {

const char* source_name(IntervalSource s) { return s == IntervalSource::kRs ? "RS" : "WRS"; }

IntervalSource parse_source(const std::string& text) {
  if (text == "RS") return IntervalSource::kRs;
  if (text == "WRS") return IntervalSource::kWrs;
  throw ArgumentError("unknown interval source '" + text + "'");
}

bool center_run(std::span<const float> row, std::size_t center, double tau, RunSpan& out) {
  if (row[center] < tau) return false;
  std::size_t first = center, last = center;
  while (first > 0 && row[first - 1] >= tau) --first;
  while (last + 1 < row.size() && row[last + 1] >= tau) ++last;
  out = RunSpan{first, last};
  return true;
}

namespace {

void check_map(const char* op, const Tensor& map, std::size_t width) {
  if (map.rank() != 2) throw DimensionError(op, "rank", 2, map.rank());
  if (map.dim(1) != width) throw DimensionError(op, "neighbour columns", width, map.dim(1));
}

std::vector<TemporalInterval> threshold_rows(const Tensor& map, NeighborWindow window, double tau,
                                             IntervalSource source) {
  const std::size_t len = map.dim(0), width = map.dim(1);
  const auto n = static_cast<long>(window.n_nbr);
  const long last_index = static_cast<long>(len) - 1;
  std::vector<TemporalInterval> out;
  for (std::size_t i = 0; i < len; ++i) {
    RunSpan run;
    if (!center_run(std::span<const float>(map.data.data() + i * width, width), window.center(), tau, run)) continue;
    const long ref = static_cast<long>(i);
    const long lo = std::clamp(ref - n + static_cast<long>(run.first), 0L, last_index);
    const long hi = std::clamp(ref - n + static_cast<long>(run.last), 0L, last_index);
    out.push_back(TemporalInterval{static_cast<std::size_t>(lo), static_cast<std::size_t>(hi), source, tau, i});
  }
  return out;
}

}  // namespace

std::vector<TemporalInterval> gen_intervals_rs(const Tensor& relatedness, NeighborWindow window, double tau) {
  check_map("gen_intervals_rs", relatedness, window.relatedness_width());
  return threshold_rows(relatedness, window, tau, IntervalSource::kRs);
}

Tensor binary_weight_map(const Tensor& starting, const Tensor& ending, NeighborWindow window) {
  check_map("binary_weight_map", starting, window.boundary_width());
  check_map("binary_weight_map", ending, window.boundary_width());
  if (starting.dim(0) != ending.dim(0)) throw DimensionError("binary_weight_map", "rows", starting.dim(0), ending.dim(0));
  const std::size_t len = starting.dim(0), wb = window.boundary_width();
  Tensor w(Shape{len, window.relatedness_width()});
  for (std::size_t i = 0; i < len; ++i) {
    const float* s = starting.data.data() + i * wb;
    const float* e = ending.data.data() + i * wb;
    // max_element keeps the lowest index on ties.
    const auto js = static_cast<std::size_t>(std::max_element(s, s + wb) - s);
    const auto je = static_cast<std::size_t>(std::max_element(e, e + wb) - e);
    if (js == window.none_index() || je == window.none_index()) continue;
    const std::size_t first = js, last = window.n_nbr + je;
    if (first > last) continue;
    for (std::size_t c = first; c <= last; ++c) w(i, c) = 1.0f;
  }
  return w;
}

Tensor weighted_relatedness(const Tensor& relatedness, const Tensor& weight) {
  if (relatedness.shape != weight.shape) {
    throw DimensionError("weighted_relatedness", "shape", shape_to_string(relatedness.shape) + " vs " +
                                                              shape_to_string(weight.shape));
  }
  Tensor out(relatedness.shape);
  for (std::size_t k = 0; k < out.numel(); ++k) out.data[k] = (relatedness.data[k] + weight.data[k]) / 2.0f;
  return out;
}

std::vector<TemporalInterval> gen_intervals_wrs(const Tensor& relatedness, const Tensor& starting,
                                                const Tensor& ending, NeighborWindow window, double tau) {
  check_map("gen_intervals_wrs", relatedness, window.relatedness_width());
  const Tensor fused = weighted_relatedness(relatedness, binary_weight_map(starting, ending, window));
  return threshold_rows(fused, window, tau, IntervalSource::kWrs);
}

std::vector<double> default_tau_schedule() {
  std::vector<double> taus;
  for (int k = 1; k <= 9; ++k) taus.push_back(k / 10.0);
  return taus;
}

std::vector<TemporalInterval> gen_all(const ScoreMaps& maps, const std::vector<double>& tau_values,
                                      IntervalSources sources) {
  if (tau_values.empty()) throw ArgumentError("gen_all: empty tau schedule");
  for (double tau : tau_values) {
    if (!(tau > 0.0 && tau < 1.0)) throw ArgumentError("gen_all: tau must lie in (0,1)");
  }
  Tensor fused;
  if (sources.wrs) {
    fused = weighted_relatedness(maps.relatedness, binary_weight_map(maps.starting, maps.ending, maps.window));
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<TemporalInterval> out;
  auto take = [&](std::vector<TemporalInterval> batch) {
    for (auto& p : batch)
      if (seen.emplace(p.t_s, p.t_e).second) out.push_back(p);
  };
  for (double tau : tau_values) {
    if (sources.rs) take(gen_intervals_rs(maps.relatedness, maps.window, tau));
    if (sources.wrs) take(threshold_rows(fused, maps.window, tau, IntervalSource::kWrs));
  }
  return out;
}

std::string format_interval_line(const std::string& video_id, const TemporalInterval& p) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "\t%zu\t%zu\t%s\t%.2f", p.t_s, p.t_e, source_name(p.source), p.tau);
  return video_id + buf;
}

}  // namespace srg
