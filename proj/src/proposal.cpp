#include "srg/proposal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "srg/errors.hpp"
#include "srg/text_io.hpp"

namespace srg {

double tiou(double a_start, double a_end, double b_start, double b_end) {
  if (a_end < a_start || b_end < b_start) throw ArgumentError("tiou: span end precedes start");
  const double inter = std::min(a_end, b_end) + 1.0 - std::max(a_start, b_start);
  if (inter <= 0.0) return 0.0;
  const double uni = (a_end - a_start + 1.0) + (b_end - b_start + 1.0) - inter;
  return inter / uni;
}

std::string format_proposal_line(const std::string& video_id, const Proposal& p) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "\t%.4f\t%.4f\t%.6f", p.refined_t_s, p.refined_t_e, p.score);
  return video_id + buf;
}

std::string encode_proposals(const ProposalMap& proposals) {
  std::string out = "# video_id\trefined_t_s\trefined_t_e\tc\n";
  for (const auto& [vid, list] : proposals)
    for (const auto& p : list) out += format_proposal_line(vid, p) + '\n';
  return out;
}

ProposalMap parse_proposals(const std::string& text, const std::string& source) {
  ProposalMap out;
  io::for_each_record(text, [&](std::size_t line_no, const std::vector<std::string>& f) {
    if (f.size() != 4) io::fail_line(source, line_no, "expected 4 tab-separated fields, got " + std::to_string(f.size()));
    if (f[0].empty()) io::fail_line(source, line_no, "empty video id");
    Proposal p;
    p.refined_t_s = io::parse_real(f[1], "refined_t_s", source, line_no);
    p.refined_t_e = io::parse_real(f[2], "refined_t_e", source, line_no);
    p.score = io::parse_real(f[3], "confidence", source, line_no);
    if (!(p.refined_t_s >= 0.0) || !(p.refined_t_e >= p.refined_t_s)) io::fail_line(source, line_no, "invalid span");
    if (!(p.score >= 0.0 && p.score <= 1.0)) io::fail_line(source, line_no, "confidence outside [0,1]");
    p.t_s = static_cast<std::size_t>(std::lround(p.refined_t_s));
    p.t_e = static_cast<std::size_t>(std::lround(p.refined_t_e));
    out[f[0]].push_back(p);
  });
  for (auto& [vid, list] : out) sort_by_score(list);
  return out;
}

void sort_by_score(std::vector<Proposal>& proposals) {
  std::stable_sort(proposals.begin(), proposals.end(), [](const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.refined_t_s != b.refined_t_s) return a.refined_t_s < b.refined_t_s;
    return a.t_e < b.t_e;
  });
}

}  // namespace srg
