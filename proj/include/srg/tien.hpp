#pragma once

// Temporal Interval Evaluation Network: interval-level features, confidence
// and boundary-offset prediction, training samples, loss and refinement.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "srg/interval_gen.hpp"
#include "srg/layers.hpp"
#include "srg/optim.hpp"
#include "srg/proposal.hpp"
#include "srg/video_data.hpp"

namespace srg {

/// Snippets [t_s - context, t_e + context] (indices clamped to the sequence)
/// resampled along time to `fixed_length`.
struct IntervalFeature {
  FeatureSequence features;  // [d × L_fix] per stream
  std::size_t t_s = 0;
  std::size_t t_e = 0;
};

/// Column indices of the context slice, clamped to [0, length - 1].
std::vector<std::size_t> context_columns(std::size_t length, std::size_t t_s, std::size_t t_e, std::size_t context);

/// Differentiable form over a single [d × L_S] stream.
Var interval_slice(Var sequence, std::size_t t_s, std::size_t t_e, std::size_t context, std::size_t fixed_length);

IntervalFeature interval_feature(const FeatureSequence& sequence, std::size_t t_s, std::size_t t_e,
                                 std::size_t context, std::size_t fixed_length);

struct TienConfig {
  std::size_t appearance_dim = 16;
  std::size_t motion_dim = 16;
  std::size_t channels = 32;
  std::size_t out_channels = 32;
  std::vector<PyramidLevel> levels = {{1, 3}, {3, 3}, {5, 3}, {7, 3}};
  BlockKind block = BlockKind::kPn;
  std::size_t attention_reduction = 8;
  std::size_t attention_kernel = 7;
  std::size_t context = 20;        // L_C
  std::size_t fixed_length = 128;  // L_fix
};

/// c in (0,1); offsets in (-0.5, 0.5) as fractions of the interval length.
struct TienPrediction {
  double c = 0.5;
  double o_s = 0.0;
  double o_e = 0.0;
};

class Tien {
 public:
  static Tien create(const TienConfig& config, std::uint64_t seed);

  /// [3 × 1] sigmoid outputs (c, o_s + 0.5, o_e + 0.5).
  Var forward(Tape& tape, const IntervalFeature& feature);
  TienPrediction predict(const IntervalFeature& feature);
  /// Independent per-interval inference, parallel across intervals.
  std::vector<TienPrediction> predict_all(const std::vector<IntervalFeature>& features);

  void visit(const ParamVisitor& fn);
  std::vector<Tensor*> parameters();

  const TienConfig& config() const { return config_; }
  LinearLayer& output_layer() { return output_; }
  ContextBlock& context() { return context_; }

 private:
  TienConfig config_;
  AttentionBlock appearance_attention_;
  AttentionBlock motion_attention_;
  ContextBlock context_;
  LinearLayer output_;
};

TienPrediction decode_prediction(std::span<const float> sigmoid_outputs);

struct TrainingSample {
  std::size_t t_s = 0;
  std::size_t t_e = 0;
  double c_g = 0.0;        // max tIoU against the ground truth
  bool positive = false;   // c_g >= 0.5
  double o_s_g = 0.0;      // offsets toward the best-matching instance
  double o_e_g = 0.0;
};

inline constexpr double kPositiveIou = 0.5;
inline constexpr double kNegativeIou = 0.1;

/// Keeps intervals with c_g >= 0.5 (positive) or c_g <= 0.1 (negative).
std::vector<TrainingSample> make_training_samples(const std::vector<TemporalInterval>& intervals,
                                                  const std::vector<GroundTruthInstance>& instances);

/// L = mean|c - c_g| + alpha * (mean c_g'·|o_s - o_s_g| + mean c_g'·|o_e - o_e_g|)
/// over `outputs` ([3 × 1] each, from Tien::forward) and matching samples.
Var tien_loss(std::span<const Var> outputs, std::span<const TrainingSample> samples, double alpha = 0.1);

struct RefinedSpan {
  double t_s = 0.0;
  double t_e = 0.0;
};

/// Applies offsets (fractions of t_e - t_s + 1) and clips to [0, length - 1];
/// falls back to the original bounds if the result would cross.
RefinedSpan refine(std::size_t t_s, std::size_t t_e, double o_s, double o_e, std::size_t length);

struct TienSchedule {
  std::size_t steps = 10000;
  std::size_t batch_size = 256;  // half positives, half negatives
  LrSchedule lr;
  double alpha = 0.1;
  double clip_norm = 0.0;
  std::uint64_t seed = 1;
};

/// A training sample bound to the snippet features of its video.
struct TienExample {
  const FeatureSequence* features = nullptr;
  TrainingSample sample;
};

struct TienHistory {
  std::vector<double> step_losses;
};

/// Throws TrainingError when the pool lacks positives or negatives, or the loss diverges.
TienHistory train_tien(const std::vector<TienExample>& pool, Tien& model, const TienSchedule& schedule,
                       const std::function<void(std::size_t step, double loss)>& on_step = {});

/// Scores intervals of one video and refines their bounds; output sorted by score.
std::vector<Proposal> evaluate_intervals(Tien& model, const FeatureSequence& features,
                                         const std::vector<TemporalInterval>& intervals);

}  // namespace srg
