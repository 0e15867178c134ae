#pragma once

// Scored temporal spans shared by interval evaluation, post-processing and
// the metrics, plus their text format.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace srg {

/// Temporal IoU of inclusive snippet spans, measured on the real intervals
/// [s, e + 1). Throws ArgumentError if either span has e < s.
double tiou(double a_start, double a_end, double b_start, double b_end);

struct Proposal {
  std::size_t t_s = 0;  // source interval
  std::size_t t_e = 0;
  double o_s = 0.0;  // offsets, fraction of the source length
  double o_e = 0.0;
  double score = 0.0;  // confidence c
  double refined_t_s = 0.0;
  double refined_t_e = 0.0;
};

/// Proposals per video, each list sorted by score descending.
using ProposalMap = std::map<std::string, std::vector<Proposal>>;

/// Lines: video_id \t refined_t_s \t refined_t_e \t c
std::string format_proposal_line(const std::string& video_id, const Proposal& p);
std::string encode_proposals(const ProposalMap& proposals);
/// Parsed proposals carry t_s/t_e rounded from the refined bounds and zero offsets.
ProposalMap parse_proposals(const std::string& text, const std::string& source = "proposals");

/// Stable sort by score descending; ties keep earlier refined_t_s, then earlier t_e, first.
void sort_by_score(std::vector<Proposal>& proposals);

}  // namespace srg
