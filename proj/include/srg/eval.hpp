#pragma once

// Proposal metrics: Recall@tIoU@AN, AR@AN over a threshold set, AUC of AR vs AN.

#include <cstddef>
#include <string>
#include <vector>

#include "srg/proposal.hpp"
#include "srg/video_data.hpp"

namespace srg {

/// How AN limits the proposals: top AN per video, or top AN x (number of
/// videos) from the pooled corpus ranking.
enum class AnMode { kPerVideo, kCorpus };

const char* an_mode_name(AnMode mode);
AnMode parse_an_mode(const std::string& text);

/// {(10 + k) / 20 : k = first..last}, i.e. 0.50, 0.55, ... in exact steps.
std::vector<double> tiou_range(int first, int last);

struct MetricConfig {
  std::vector<double> tiou_thresholds = tiou_range(0, 9);  // 0.50 .. 0.95
  std::vector<std::size_t> an_values = {1, 5, 10, 50, 100};
  std::size_t auc_an_max = 100;  // AUC averages AN = 1 .. auc_an_max
  AnMode an_mode = AnMode::kPerVideo;

  void validate() const;
};

/// Precomputed first-hit ranks: instance g is recalled at threshold k and
/// budget AN iff rank[g][k] < AN (per video) or < AN x videos (corpus).
class RecallTable {
 public:
  RecallTable(const ProposalMap& proposals, const AnnotationMap& ground_truth, std::vector<double> thresholds,
              AnMode mode);

  double recall(std::size_t threshold_index, std::size_t an) const;
  double average_recall(std::size_t an) const;
  /// Mean of AR@AN for AN = 1..an_max, times 100.
  double auc(std::size_t an_max) const;

  const std::vector<double>& thresholds() const { return thresholds_; }
  std::size_t instance_count() const { return ranks_.size(); }

 private:
  std::size_t budget(std::size_t an) const;

  std::vector<double> thresholds_;
  std::vector<std::vector<std::size_t>> ranks_;  // [instance][threshold], npos if never hit
  AnMode mode_;
  std::size_t videos_ = 0;
};

double recall_at(const ProposalMap& proposals, const AnnotationMap& ground_truth, double threshold, std::size_t an,
                 AnMode mode = AnMode::kPerVideo);
double average_recall(const ProposalMap& proposals, const AnnotationMap& ground_truth, const MetricConfig& config,
                      std::size_t an);
double auc_ar_an(const ProposalMap& proposals, const AnnotationMap& ground_truth, const MetricConfig& config);

struct MetricRow {
  std::string metric;  // recall | AR | AUC
  std::string an;
  std::string tiou;
  double value = 0.0;
};

/// recall rows for every (AN, threshold), an AR row per AN and one AUC row.
std::vector<MetricRow> compute_metrics(const ProposalMap& proposals, const AnnotationMap& ground_truth,
                                       const MetricConfig& config);

/// "metric,AN,tIoU,value" header plus one line per row.
std::string encode_metrics_csv(const std::vector<MetricRow>& rows, const std::string& label = "");

}  // namespace srg
