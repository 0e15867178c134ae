#include "srg/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <tuple>

#include "srg/errors.hpp"

namespace srg {

namespace {
constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();

std::string format_real(double v, const char* fmt) {
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}
}  // namespace

const char* an_mode_name(AnMode mode) { return mode == AnMode::kPerVideo ? "per_video" : "corpus"; }

AnMode parse_an_mode(const std::string& text) {
  if (text == "per_video") return AnMode::kPerVideo;
  if (text == "corpus") return AnMode::kCorpus;
  throw ConfigError("unknown AN mode '" + text + "' (expected per_video or corpus)");
}

std::vector<double> tiou_range(int first, int last) {
  std::vector<double> out;
  for (int k = first; k <= last; ++k) out.push_back((10.0 + k) / 20.0);
  return out;
}

void MetricConfig::validate() const {
  if (tiou_thresholds.empty()) throw ConfigError("metric config: no tIoU thresholds");
  for (std::size_t i = 0; i < tiou_thresholds.size(); ++i) {
    const double t = tiou_thresholds[i];
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("metric config: tIoU thresholds must lie in (0,1]");
    if (i > 0 && !(t > tiou_thresholds[i - 1])) throw ConfigError("metric config: tIoU thresholds must increase");
  }
  if (an_values.empty()) throw ConfigError("metric config: no AN values");
  for (std::size_t i = 0; i < an_values.size(); ++i) {
    if (an_values[i] == 0) throw ConfigError("metric config: AN values must be positive");
    if (i > 0 && an_values[i] <= an_values[i - 1]) throw ConfigError("metric config: AN values must increase");
  }
  if (auc_an_max == 0) throw ConfigError("metric config: AUC AN range must be non-empty");
}

RecallTable::RecallTable(const ProposalMap& proposals, const AnnotationMap& ground_truth,
                         std::vector<double> thresholds, AnMode mode)
    : thresholds_(std::move(thresholds)), mode_(mode), videos_(ground_truth.size()) {
  std::size_t total = 0;
  for (const auto& [vid, list] : ground_truth) total += list.size();
  if (total == 0) throw ArgumentError("recall: ground truth has no instances");

  // Rank of each proposal in the ordering that AN truncates.
  std::map<std::string, std::vector<std::size_t>> rank_of;
  if (mode_ == AnMode::kPerVideo) {
    for (const auto& [vid, list] : proposals) {
      auto& r = rank_of[vid];
      for (std::size_t i = 0; i < list.size(); ++i) r.push_back(i);
    }
  } else {
    std::vector<std::tuple<double, std::string, std::size_t>> pooled;
    for (const auto& [vid, list] : proposals) {
      rank_of[vid].assign(list.size(), 0);
      for (std::size_t i = 0; i < list.size(); ++i) pooled.emplace_back(list[i].score, vid, i);
    }
    std::stable_sort(pooled.begin(), pooled.end(),
                     [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
    for (std::size_t r = 0; r < pooled.size(); ++r) rank_of[std::get<1>(pooled[r])][std::get<2>(pooled[r])] = r;
  }

  for (const auto& [vid, list] : ground_truth) {
    const auto it = proposals.find(vid);
    for (const auto& g : list) {
      std::vector<std::size_t> first(thresholds_.size(), kNever);
      if (it != proposals.end()) {
        const auto& ranks = rank_of[vid];
        for (std::size_t i = 0; i < it->second.size(); ++i) {
          const Proposal& p = it->second[i];
          const double v = tiou(p.refined_t_s, p.refined_t_e, static_cast<double>(g.start), static_cast<double>(g.end));
          for (std::size_t k = 0; k < thresholds_.size(); ++k) {
            if (v >= thresholds_[k]) first[k] = std::min(first[k], ranks[i]);
          }
        }
      }
      ranks_.push_back(std::move(first));
    }
  }
}

std::size_t RecallTable::budget(std::size_t an) const { return mode_ == AnMode::kPerVideo ? an : an * videos_; }

double RecallTable::recall(std::size_t threshold_index, std::size_t an) const {
  const std::size_t limit = budget(an);
  std::size_t hit = 0;
  for (const auto& r : ranks_) hit += r.at(threshold_index) < limit ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(ranks_.size());
}

double RecallTable::average_recall(std::size_t an) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < thresholds_.size(); ++k) acc += recall(k, an);
  return acc / static_cast<double>(thresholds_.size());
}

double RecallTable::auc(std::size_t an_max) const {
  if (an_max == 0) throw ArgumentError("auc: empty AN range");
  double acc = 0.0;
  for (std::size_t an = 1; an <= an_max; ++an) acc += average_recall(an);
  return 100.0 * acc / static_cast<double>(an_max);
}

double recall_at(const ProposalMap& proposals, const AnnotationMap& ground_truth, double threshold, std::size_t an,
                 AnMode mode) {
  return RecallTable(proposals, ground_truth, {threshold}, mode).recall(0, an);
}

double average_recall(const ProposalMap& proposals, const AnnotationMap& ground_truth, const MetricConfig& config,
                      std::size_t an) {
  return RecallTable(proposals, ground_truth, config.tiou_thresholds, config.an_mode).average_recall(an);
}

double auc_ar_an(const ProposalMap& proposals, const AnnotationMap& ground_truth, const MetricConfig& config) {
  return RecallTable(proposals, ground_truth, config.tiou_thresholds, config.an_mode).auc(config.auc_an_max);
}

std::vector<MetricRow> compute_metrics(const ProposalMap& proposals, const AnnotationMap& ground_truth,
                                       const MetricConfig& config) {
  config.validate();
  const RecallTable table(proposals, ground_truth, config.tiou_thresholds, config.an_mode);
  std::vector<MetricRow> rows;
  for (std::size_t an : config.an_values) {
    for (std::size_t k = 0; k < config.tiou_thresholds.size(); ++k) {
      rows.push_back({"recall", std::to_string(an), format_real(config.tiou_thresholds[k], "%.2f"), table.recall(k, an)});
    }
    rows.push_back({"AR", std::to_string(an), "mean", table.average_recall(an)});
  }
  rows.push_back({"AUC", "1-" + std::to_string(config.auc_an_max), "mean", table.auc(config.auc_an_max)});
  return rows;
}

std::string encode_metrics_csv(const std::vector<MetricRow>& rows, const std::string& label) {
  std::string out;
  if (!label.empty()) out += "# variant: " + label + "\n";
  out += "metric,AN,tIoU,value\n";
  for (const auto& r : rows) out += r.metric + "," + r.an + "," + r.tiou + "," + format_real(r.value, "%.6f") + "\n";
  return out;
}

}  // namespace srg
