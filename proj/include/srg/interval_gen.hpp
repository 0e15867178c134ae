#pragma once

// Temporal interval generation from score maps: thresholded relatedness
// rows (RS) and relatedness rows fused with a start/end binary weight (WRS).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "srg/tign.hpp"

namespace srg {

enum class IntervalSource { kRs, kWrs };

const char* source_name(IntervalSource s);
IntervalSource parse_source(const std::string& text);

/// Inclusive snippet span generated from reference row `ref_index`.
struct TemporalInterval {
  std::size_t t_s = 0;
  std::size_t t_e = 0;
  IntervalSource source = IntervalSource::kRs;
  double tau = 0.0;
  std::size_t ref_index = 0;

  std::size_t length() const { return t_e - t_s + 1; }
};

/// Column span [first, last] of the supra-threshold run containing the
/// centre column of one row, or nothing if the centre is below `tau`.
struct RunSpan {
  std::size_t first = 0;
  std::size_t last = 0;
};
bool center_run(std::span<const float> row, std::size_t center, double tau, RunSpan& out);

std::vector<TemporalInterval> gen_intervals_rs(const Tensor& relatedness, NeighborWindow window, double tau);

/// W [L_S × 2N+1]: row i is 1 on relatedness columns [argmax O_s, N + argmax O_e]
/// and all zero when either argmax is the none index.
Tensor binary_weight_map(const Tensor& starting, const Tensor& ending, NeighborWindow window);

/// (O_r + W) / 2
Tensor weighted_relatedness(const Tensor& relatedness, const Tensor& weight);

std::vector<TemporalInterval> gen_intervals_wrs(const Tensor& relatedness, const Tensor& starting,
                                                const Tensor& ending, NeighborWindow window, double tau);

/// {0.1, 0.2, ..., 0.9}
std::vector<double> default_tau_schedule();

struct IntervalSources {
  bool rs = true;
  bool wrs = true;
};

/// Union over every tau of the enabled sources (RS before WRS per tau);
/// duplicate (t_s, t_e) pairs keep the first occurrence.
std::vector<TemporalInterval> gen_all(const ScoreMaps& maps, const std::vector<double>& tau_values,
                                      IntervalSources sources = {});

/// Interval dump line: video_id \t t_s \t t_e \t source \t tau
std::string format_interval_line(const std::string& video_id, const TemporalInterval& interval);

}  // namespace srg
