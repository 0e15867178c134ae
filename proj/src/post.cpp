#include "srg/post.hpp"

#include <algorithm>
#include <cmath>

#include "srg/errors.hpp"

namespace srg {

const char* nms_mode_name(NmsMode mode) { return mode == NmsMode::kFixed ? "fixed" : "adaptive"; }

NmsMode parse_nms_mode(const std::string& text) {
  if (text == "fixed") return NmsMode::kFixed;
  if (text == "adaptive") return NmsMode::kAdaptive;
  throw ConfigError("unknown NMS mode '" + text + "' (expected fixed or adaptive)");
}

double NmsConfig::threshold(std::size_t num_proposals) const {
  if (mode == NmsMode::kFixed) return fixed_threshold;
  return std::max(adaptive_floor, 1.0 - static_cast<double>(num_proposals) * 1e-4);
}

void NmsConfig::validate() const {
  if (!(fixed_threshold > 0.0 && fixed_threshold < 1.0)) throw ConfigError("NMS threshold must lie in (0,1)");
  if (!(adaptive_floor > 0.0 && adaptive_floor < 1.0)) throw ConfigError("NMS adaptive floor must lie in (0,1)");
}

std::vector<Proposal> nms(std::vector<Proposal> proposals, double threshold) {
  sort_by_score(proposals);
  std::vector<Proposal> kept;
  std::vector<bool> removed(proposals.size(), false);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (removed[i]) continue;
    const Proposal& top = proposals[i];
    kept.push_back(top);
    for (std::size_t j = i + 1; j < proposals.size(); ++j) {
      if (!removed[j] &&
          tiou(top.refined_t_s, top.refined_t_e, proposals[j].refined_t_s, proposals[j].refined_t_e) > threshold) {
        removed[j] = true;
      }
    }
  }
  return kept;
}

std::vector<Proposal> nms(std::vector<Proposal> proposals, const NmsConfig& config) {
  const double thr = config.threshold(proposals.size());
  return nms(std::move(proposals), thr);
}

std::vector<double> relatedness_sequence(const Tensor& relatedness, NeighborWindow window) {
  if (relatedness.rank() != 2 || relatedness.dim(1) != window.relatedness_width()) {
    throw DimensionError("relatedness_sequence", "neighbour columns", window.relatedness_width(),
                         relatedness.rank() == 2 ? relatedness.dim(1) : 0);
  }
  const std::size_t len = relatedness.dim(0), n = window.n_nbr;
  std::vector<double> total(len, 0.0), count(len, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t c_lo = i >= n ? 0 : n - i;
    const std::size_t c_hi = std::min(2 * n, len - 1 + n - i);
    for (std::size_t c = c_lo; c <= c_hi; ++c) {
      const std::size_t t = i + c - n;
      total[t] += relatedness(i, c);
      count[t] += 1.0;
    }
  }
  for (std::size_t t = 0; t < len; ++t) total[t] /= count[t];
  return total;
}

std::vector<Proposal> boost_scores(std::vector<Proposal> proposals, const Tensor& relatedness, NeighborWindow window) {
  if (relatedness.numel() == 0) throw ArgumentError("boost_scores: missing relatedness score map");
  const std::vector<double> a = relatedness_sequence(relatedness, window);
  const auto last = static_cast<long>(a.size()) - 1;
  for (auto& p : proposals) {
    const long s = std::clamp(std::lround(p.refined_t_s), 0L, last);
    const long e = std::clamp(std::lround(p.refined_t_e), s, last);
    double acc = 0.0;
    for (long t = s; t <= e; ++t) acc += a[static_cast<std::size_t>(t)];
    p.score *= acc / static_cast<double>(e - s + 1);
  }
  sort_by_score(proposals);
  return proposals;
}

}  // namespace srg
