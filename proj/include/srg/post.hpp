#pragma once

// Proposal post-processing: greedy temporal NMS and relatedness score boosting.

#include <cstddef>
#include <string>
#include <vector>

#include "srg/proposal.hpp"
#include "srg/video_data.hpp"

namespace srg {

enum class NmsMode { kFixed, kAdaptive };

const char* nms_mode_name(NmsMode mode);
NmsMode parse_nms_mode(const std::string& text);

struct NmsConfig {
  NmsMode mode = NmsMode::kFixed;
  double fixed_threshold = 0.83;
  double adaptive_floor = 0.5;

  /// fixed_threshold, or max(adaptive_floor, 1 - num_proposals * 1e-4).
  double threshold(std::size_t num_proposals) const;
  void validate() const;
};

/// Greedy hard NMS on refined spans. Output is sorted by score and no kept
/// pair overlaps by more than `threshold`.
std::vector<Proposal> nms(std::vector<Proposal> proposals, double threshold);
std::vector<Proposal> nms(std::vector<Proposal> proposals, const NmsConfig& config);

/// a[t]: mean of the relatedness cells (i, j) with i - N + j == t.
std::vector<double> relatedness_sequence(const Tensor& relatedness, NeighborWindow window);

/// Multiplies each score by the mean of a[t] over the proposal's span
/// (refined bounds rounded to the nearest snippet); result re-sorted by score.
std::vector<Proposal> boost_scores(std::vector<Proposal> proposals, const Tensor& relatedness, NeighborWindow window);

}  // namespace srg
