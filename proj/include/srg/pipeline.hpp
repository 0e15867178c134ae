#pragma once

// Run configuration, dataset layout and the end-to-end stages behind the
// `srg` subcommands.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "srg/eval.hpp"
#include "srg/interval_gen.hpp"
#include "srg/post.hpp"
#include "srg/tien.hpp"
#include "srg/tign.hpp"
#include "srg/video_data.hpp"

namespace srg {

struct Variant {
  BlockKind tign = BlockKind::kPn;
  BlockKind tien = BlockKind::kPn;
  bool boost = false;

  /// e.g. "TIGN_PN+TIEN_CM boost=off"
  std::string label() const;
};

struct RunConfig {
  std::string profile = "tiny";
  std::uint64_t seed = 1;
  std::filesystem::path dataset;  // empty: <workspace>/data

  SynthConfig synth;
  std::size_t train_videos = 200;
  std::size_t test_videos = 50;

  TignConfig tign;  // feature dims are taken from the dataset
  std::size_t tign_epochs = 15;
  LrSchedule tign_lr;
  double tign_clip = 0.0;

  TienConfig tien;
  TienSchedule tien_schedule;

  std::vector<double> taus = default_tau_schedule();
  IntervalSources sources;
  NmsConfig nms;
  bool boost = false;
  MetricConfig metrics;
  bool dump_maps = false;

  std::vector<std::pair<BlockKind, BlockKind>> ablate_blocks = {{BlockKind::kPn, BlockKind::kPn},
                                                                 {BlockKind::kPn, BlockKind::kCm},
                                                                 {BlockKind::kCm, BlockKind::kPn},
                                                                 {BlockKind::kCm, BlockKind::kCm}};
  std::vector<bool> ablate_boost = {false};

  /// Built-in profiles: "tiny" (desk scale) and "paperish" (paper-sized widths).
  static RunConfig profile_defaults(const std::string& name);

  /// Applies one key=value assignment; throws ConfigError naming the key.
  void set(const std::string& key, const std::string& value);
  /// key=value lines, '#' comments. Errors carry "source:line".
  void apply_text(const std::string& text, const std::string& source);
  /// Canonical key=value dump, re-parseable by apply_text.
  std::string to_text() const;
  void validate() const;

  static const std::vector<std::string>& keys();
};

/// Reads a config file on top of the profile it names (or `fallback_profile`).
RunConfig load_run_config(const std::filesystem::path& path, const std::string& fallback_profile = "tiny");

// ---- Dataset ----------------------------------------------------------------------
// <dir>/videos.tsv   manifest
// <dir>/split.tsv    video_id \t train|test
// <dir>/features/<video_id>.srgf
// <dir>/train.tsv, <dir>/test.tsv   annotations

struct Dataset {
  std::vector<VideoMeta> videos;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::map<std::string, FeatureSequence> features;
  AnnotationMap train_gt;
  AnnotationMap test_gt;

  const FeatureSequence& features_of(const std::string& id) const;
  const std::vector<GroundTruthInstance>& instances_of(const std::string& id) const;
  std::size_t appearance_dim() const;
  std::size_t motion_dim() const;
};

Dataset synth_dataset(const RunConfig& config);
/// Writes into a sibling temporary directory and renames it into place.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

// ---- Stages -----------------------------------------------------------------------

using IntervalMap = std::map<std::string, std::vector<TemporalInterval>>;
using Logger = std::function<void(const std::string&)>;

Tign make_tign(const RunConfig& config, const Dataset& data, BlockKind block);
Tien make_tien(const RunConfig& config, const Dataset& data, BlockKind block);

TignHistory fit_tign(const RunConfig& config, const Dataset& data, Tign& model, const Logger& log = {});

IntervalMap generate_intervals(const RunConfig& config, const Dataset& data, Tign& model,
                               const std::vector<std::string>& ids, IntervalSources sources);

std::vector<TienExample> tien_pool(const Dataset& data, const IntervalMap& train_intervals);

TienHistory fit_tien(const RunConfig& config, const Dataset& data, Tign& tign, Tien& model, const Logger& log = {});

/// Scores and refines intervals of every test video, optionally boosts, then NMS.
ProposalMap propose(const RunConfig& config, const Dataset& data, Tign& tign, Tien& tien, bool boost,
                    IntervalMap* intervals_out = nullptr, std::map<std::string, ScoreMaps>* maps_out = nullptr);

/// Unscored intervals as proposals (score 1) for recall computations.
ProposalMap intervals_as_proposals(const IntervalMap& intervals);

/// Uniformly random sorted endpoints, same count per video as `like`, random scores.
ProposalMap random_proposals(const ProposalMap& like, const Dataset& data, std::uint64_t seed);

struct PipelineResult {
  TignHistory tign_history;
  TienHistory tien_history;
  IntervalMap test_intervals;
  ProposalMap proposals;
  std::vector<MetricRow> metrics;
};

PipelineResult run_pipeline(const RunConfig& config, const Dataset& data, const Variant& variant,
                            const Logger& log = {});

/// Mean of values[first, first + count).
double window_mean(const std::vector<double>& values, std::size_t first, std::size_t count);

// ---- Commands ---------------------------------------------------------------------
// All commands read and write inside `workspace`; outputs are replaced atomically.

struct Workspace {
  std::filesystem::path root;
  std::filesystem::path dataset_override;

  std::filesystem::path dataset() const { return dataset_override.empty() ? root / "data" : dataset_override; }
  std::filesystem::path tign_checkpoint() const { return root / "tign.srgw"; }
  std::filesystem::path tien_checkpoint() const { return root / "tien.srgw"; }
  std::filesystem::path intervals() const { return root / "intervals.tsv"; }
  std::filesystem::path proposals() const { return root / "proposals.tsv"; }
  std::filesystem::path metrics() const { return root / "metrics.csv"; }
  std::filesystem::path ablation() const { return root / "ablation.csv"; }
  std::filesystem::path maps_dir() const { return root / "maps"; }
};

void cmd_synth(const RunConfig& config, const Workspace& ws, const Logger& log = {});
void cmd_train_tign(const RunConfig& config, const Workspace& ws, const Logger& log = {});
void cmd_train_tien(const RunConfig& config, const Workspace& ws, const Logger& log = {});
void cmd_propose(const RunConfig& config, const Workspace& ws, const Logger& log = {});
void cmd_eval(const RunConfig& config, const Workspace& ws, const Logger& log = {});
void cmd_ablate(const RunConfig& config, const Workspace& ws, const Logger& log = {});

}  // namespace srg
