#pragma once

// Temporal Interval Generation Network: per-stream attention, a context
// block (PN or CM), and three convolutional heads producing the relatedness,
// starting and ending score maps for every reference snippet at once.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "srg/layers.hpp"
#include "srg/optim.hpp"
#include "srg/video_data.hpp"

namespace srg {

inline constexpr float kProbabilityEps = 1e-7f;

struct TignConfig {
  std::size_t appearance_dim = 16;
  std::size_t motion_dim = 16;
  std::size_t n_nbr = 32;
  std::size_t channels = 32;  // trunk / branch width
  std::size_t out_channels = 32;
  std::vector<PyramidLevel> levels = {{3, 1}, {5, 3}, {7, 5}, {15, 7}};
  BlockKind block = BlockKind::kPn;
  std::size_t attention_reduction = 8;
  std::size_t attention_kernel = 7;
  std::size_t head_kernel = 3;
};

/// O_r [L_S × 2N+1] in (0,1); O_s, O_e [L_S × N+2] row-stochastic.
struct ScoreMaps {
  NeighborWindow window;
  Tensor relatedness;
  Tensor starting;
  Tensor ending;

  std::size_t length() const { return relatedness.dim(0); }
};

class Tign {
 public:
  struct Outputs {
    Var relatedness;
    Var starting;
    Var ending;
  };

  static Tign create(const TignConfig& config, std::uint64_t seed);

  Outputs forward(Tape& tape, const FeatureSequence& features);
  /// Forward pass on a value-only tape.
  ScoreMaps infer(const FeatureSequence& features);

  void visit(const ParamVisitor& fn);
  std::vector<Tensor*> parameters();

  const TignConfig& config() const { return config_; }
  NeighborWindow window() const { return NeighborWindow{config_.n_nbr}; }

  AttentionBlock& appearance_attention() { return appearance_attention_; }
  AttentionBlock& motion_attention() { return motion_attention_; }
  ContextBlock& context() { return context_; }
  Conv1dLayer& relatedness_head() { return head_r_; }
  Conv1dLayer& starting_head() { return head_s_; }
  Conv1dLayer& ending_head() { return head_e_; }

 private:
  TignConfig config_;
  AttentionBlock appearance_attention_;
  AttentionBlock motion_attention_;
  ContextBlock context_;
  Conv1dLayer head_r_;
  Conv1dLayer head_s_;
  Conv1dLayer head_e_;
};

/// L = L_r + L_s + L_e with L_r averaged over valid relatedness cells only.
Var tign_loss(const Tign::Outputs& maps, const LabelMaps& labels, float eps = kProbabilityEps);

struct TignSchedule {
  std::size_t epochs = 15;
  LrSchedule lr;
  double clip_norm = 0.0;  // 0 disables clipping
  std::uint64_t seed = 1;  // shuffling
};

struct TrainingVideo {
  const FeatureSequence* features = nullptr;
  const std::vector<GroundTruthInstance>* instances = nullptr;
};

struct TignHistory {
  std::vector<double> step_losses;
  std::vector<double> epoch_means;
};

/// Adam over single-video batches, videos reshuffled each epoch from `seed`.
/// Throws TrainingError if the loss stops being finite.
TignHistory train_tign(const std::vector<TrainingVideo>& videos, Tign& model, const TignSchedule& schedule,
                       const std::function<void(std::size_t epoch, double mean_loss)>& on_epoch = {});

// ---- Score-map dump ("SRGM") ---------------------------------------------------------
// "SRGM" | u32 version | u32 L_S | u32 N_nbr | f32 O_r | f32 O_s | f32 O_e (row-major, LE)

std::string encode_score_maps(const ScoreMaps& maps);
ScoreMaps decode_score_maps(std::string bytes, const std::string& source = "score maps");

}  // namespace srg
