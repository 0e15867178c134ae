#include "srg/tien.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace srg {

std::vector<std::size_t> context_columns(std::size_t length, std::size_t t_s, std::size_t t_e, std::size_t context) {
  if (length == 0) throw ArgumentError("context_columns: empty sequence");
  if (t_e < t_s || t_e >= length) throw ArgumentError("context_columns: interval outside the sequence");
  const long lo = static_cast<long>(t_s) - static_cast<long>(context);
  const long hi = static_cast<long>(t_e) + static_cast<long>(context);
  const long last = static_cast<long>(length) - 1;
  std::vector<std::size_t> cols;
  cols.reserve(static_cast<std::size_t>(hi - lo + 1));
  for (long t = lo; t <= hi; ++t) cols.push_back(static_cast<std::size_t>(std::clamp(t, 0L, last)));
  return cols;
}

Var interval_slice(Var sequence, std::size_t t_s, std::size_t t_e, std::size_t context, std::size_t fixed_length) {
  if (fixed_length < 2) throw ArgumentError("interval_slice: fixed length must be >= 2");
  if (sequence.shape().size() != 2) throw DimensionError("interval_slice", "rank", 2, sequence.shape().size());
  const auto cols = context_columns(sequence.dim(1), t_s, t_e, context);
  return linear_upsample(gather_columns<float>(sequence, cols), fixed_length);
}

IntervalFeature interval_feature(const FeatureSequence& sequence, std::size_t t_s, std::size_t t_e,
                                 std::size_t context, std::size_t fixed_length) {
  Tape tape(/*track_gradients=*/false);
  const Var a = interval_slice(tape.constant(sequence.appearance), t_s, t_e, context, fixed_length);
  const Var m = interval_slice(tape.constant(sequence.motion), t_s, t_e, context, fixed_length);
  return IntervalFeature{FeatureSequence{tape.value(a), tape.value(m)}, t_s, t_e};
}

// ---- Network ---------------------------------------------------------------------

Tien Tien::create(const TienConfig& config, std::uint64_t seed) {
  if (config.fixed_length < 2) throw ConfigError("TIEN fixed length must be >= 2");
  Rng rng(seed, 0x7469656EULL);
  Tien t;
  t.config_ = config;
  const std::size_t in = config.appearance_dim + config.motion_dim;
  t.appearance_attention_ =
      AttentionBlock::create(config.appearance_dim, config.attention_reduction, config.attention_kernel, rng);
  t.motion_attention_ =
      AttentionBlock::create(config.motion_dim, config.attention_reduction, config.attention_kernel, rng);
  if (config.block == BlockKind::kPn) {
    t.context_.impl = PnBlock::create(in, config.channels, config.out_channels, config.levels, rng);
  } else {
    t.context_.impl = CmBlock::create(in, config.out_channels, /*restore_length=*/false, rng);
  }
  t.output_ = LinearLayer::create(t.context_.out_channels(), 3, rng);
  // Start from c = 0.5 and zero offsets so refinement begins as the identity.
  std::fill(t.output_.weight.data.begin(), t.output_.weight.data.end(), 0.0f);
  return t;
}

Var Tien::forward(Tape& tape, const IntervalFeature& feature) {
  const FeatureSequence& f = feature.features;
  f.validate();
  if (f.appearance_dim() != config_.appearance_dim) {
    throw DimensionError("tien_forward", "appearance channels", config_.appearance_dim, f.appearance_dim());
  }
  if (f.motion_dim() != config_.motion_dim) {
    throw DimensionError("tien_forward", "motion channels", config_.motion_dim, f.motion_dim());
  }
  if (f.length() != config_.fixed_length) {
    throw DimensionError("tien_forward", "time", config_.fixed_length, f.length());
  }
  const Var streams[] = {appearance_attention_.forward(tape, tape.constant(f.appearance)),
                         motion_attention_.forward(tape, tape.constant(f.motion))};
  const Var h = context_.forward(tape, concat_rows<float>(streams));
  return sigmoid(output_.forward(tape, reduce_time(h, ReduceKind::kMean)));
}

TienPrediction decode_prediction(std::span<const float> out) {
  if (out.size() != 3) throw DimensionError("decode_prediction", "outputs", 3, out.size());
  return TienPrediction{out[0], out[1] - 0.5, out[2] - 0.5};
}

TienPrediction Tien::predict(const IntervalFeature& feature) {
  Tape tape(/*track_gradients=*/false);
  return decode_prediction(forward(tape, feature).data());
}

std::vector<TienPrediction> Tien::predict_all(const std::vector<IntervalFeature>& features) {
  std::vector<TienPrediction> out(features.size());
  const auto n = static_cast<long>(features.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (long i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = predict(features[static_cast<std::size_t>(i)]);
  return out;
}

void Tien::visit(const ParamVisitor& fn) {
  appearance_attention_.visit("tien.attention_a", fn);
  motion_attention_.visit("tien.attention_m", fn);
  context_.visit(config_.block == BlockKind::kPn ? "tien.pn" : "tien.cm", fn);
  output_.visit("tien.output", fn);
}

std::vector<Tensor*> Tien::parameters() {
  std::vector<Tensor*> out;
  visit([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

// ---- Samples and loss ------------------------------------------------------------

std::vector<TrainingSample> make_training_samples(const std::vector<TemporalInterval>& intervals,
                                                  const std::vector<GroundTruthInstance>& instances) {
  std::vector<TrainingSample> out;
  for (const auto& iv : intervals) {
    TrainingSample s{iv.t_s, iv.t_e, 0.0, false, 0.0, 0.0};
    const GroundTruthInstance* best = nullptr;
    for (const auto& g : instances) {
      const double v = tiou(static_cast<double>(iv.t_s), static_cast<double>(iv.t_e), static_cast<double>(g.start),
                            static_cast<double>(g.end));
      if (best == nullptr || v > s.c_g) {
        s.c_g = v;
        best = &g;
      }
    }
    if (s.c_g > kNegativeIou && s.c_g < kPositiveIou) continue;
    s.positive = s.c_g >= kPositiveIou;
    if (best != nullptr) {
      const double len = static_cast<double>(iv.length());
      s.o_s_g = std::clamp((static_cast<double>(best->start) - static_cast<double>(iv.t_s)) / len, -0.5, 0.5);
      s.o_e_g = std::clamp((static_cast<double>(best->end) - static_cast<double>(iv.t_e)) / len, -0.5, 0.5);
    }
    out.push_back(s);
  }
  return out;
}

Var tien_loss(std::span<const Var> outputs, std::span<const TrainingSample> samples, double alpha) {
  if (outputs.empty()) throw ArgumentError("tien_loss: empty batch");
  if (outputs.size() != samples.size()) throw DimensionError("tien_loss", "batch", samples.size(), outputs.size());
  const std::size_t n = outputs.size();
  Tape& tape = *outputs[0].tape;
  const Var stacked = concat_cols<float>(outputs);  // [3 × B]
  Tensor target(Shape{3, n});
  Tensor weight(Shape{3, n});
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t b = 0; b < n; ++b) {
    const TrainingSample& s = samples[b];
    const double gate = s.positive ? 1.0 : 0.0;
    target(0, b) = static_cast<float>(s.c_g);
    target(1, b) = static_cast<float>(s.o_s_g + 0.5);
    target(2, b) = static_cast<float>(s.o_e_g + 0.5);
    weight(0, b) = static_cast<float>(inv);
    weight(1, b) = static_cast<float>(alpha * gate * inv);
    weight(2, b) = static_cast<float>(alpha * gate * inv);
  }
  return sum(mul(abs(sub(stacked, tape.constant(std::move(target)))), tape.constant(std::move(weight))));
}

RefinedSpan refine(std::size_t t_s, std::size_t t_e, double o_s, double o_e, std::size_t length) {
  if (length == 0 || t_e < t_s || t_e >= length) throw ArgumentError("refine: interval outside the sequence");
  const double len = static_cast<double>(t_e - t_s + 1);
  const double last = static_cast<double>(length - 1);
  const double s = std::clamp(static_cast<double>(t_s) + o_s * len, 0.0, last);
  const double e = std::clamp(static_cast<double>(t_e) + o_e * len, 0.0, last);
  if (s > e) return RefinedSpan{static_cast<double>(t_s), static_cast<double>(t_e)};
  return RefinedSpan{s, e};
}

// ---- Training --------------------------------------------------------------------

namespace {

/// Endless sampling without replacement, reshuffled on every pass.
class Cycler {
 public:
  Cycler(std::vector<std::size_t> items, Rng rng) : items_(std::move(items)), rng_(rng) {}

  std::size_t next() {
    if (pos_ == 0) {
      for (std::size_t i = items_.size(); i > 1; --i) std::swap(items_[i - 1], items_[rng_.uniform_int(0, i - 1)]);
    }
    const std::size_t v = items_[pos_];
    pos_ = (pos_ + 1) % items_.size();
    return v;
  }

 private:
  std::vector<std::size_t> items_;
  Rng rng_;
  std::size_t pos_ = 0;
};

}  // namespace

TienHistory train_tien(const std::vector<TienExample>& pool, Tien& model, const TienSchedule& schedule,
                       const std::function<void(std::size_t, double)>& on_step) {
  if (schedule.batch_size < 2) throw ArgumentError("train_tien: batch size must be >= 2");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < pool.size(); ++i) (pool[i].sample.positive ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) {
    throw TrainingError("TIEN sample pool needs both positives and negatives (got " + std::to_string(pos.size()) +
                            " positive, " + std::to_string(neg.size()) + " negative)",
                        0);
  }
  const Rng root(schedule.seed, 0x7469656EULL);
  Cycler pos_draw(std::move(pos), root.split(0));
  Cycler neg_draw(std::move(neg), root.split(1));
  const std::size_t n_pos = schedule.batch_size / 2;
  const TienConfig& cfg = model.config();

  const std::vector<Tensor*> params = model.parameters();
  zero_grads(params);
  AdamState state;
  TienHistory history;
  std::vector<std::size_t> batch(schedule.batch_size);
  for (std::size_t step = 0; step < schedule.steps; ++step) {
    for (std::size_t b = 0; b < batch.size(); ++b) batch[b] = b < n_pos ? pos_draw.next() : neg_draw.next();
    Tape tape;
    std::vector<Var> outputs;
    std::vector<TrainingSample> samples;
    outputs.reserve(batch.size());
    samples.reserve(batch.size());
    for (std::size_t idx : batch) {
      const TienExample& ex = pool[idx];
      const IntervalFeature f =
          interval_feature(*ex.features, ex.sample.t_s, ex.sample.t_e, cfg.context, cfg.fixed_length);
      outputs.push_back(model.forward(tape, f));
      samples.push_back(ex.sample);
    }
    const Var loss = tien_loss(outputs, samples, schedule.alpha);
    const double value = loss.item();
    if (!std::isfinite(value)) throw TrainingError("TIEN loss diverged", step);
    tape.backward(loss);
    if (schedule.clip_norm > 0) clip_grad_norm(params, schedule.clip_norm);
    adam_step(params, state, schedule.lr.at(step));
    zero_grads(params);
    history.step_losses.push_back(value);
    if (on_step) on_step(step, value);
  }
  return history;
}

std::vector<Proposal> evaluate_intervals(Tien& model, const FeatureSequence& features,
                                         const std::vector<TemporalInterval>& intervals) {
  const TienConfig& cfg = model.config();
  std::vector<IntervalFeature> feats;
  feats.reserve(intervals.size());
  for (const auto& iv : intervals) feats.push_back(interval_feature(features, iv.t_s, iv.t_e, cfg.context, cfg.fixed_length));
  const std::vector<TienPrediction> preds = model.predict_all(feats);
  std::vector<Proposal> out;
  out.reserve(intervals.size());
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const auto& iv = intervals[i];
    const RefinedSpan r = refine(iv.t_s, iv.t_e, preds[i].o_s, preds[i].o_e, features.length());
    out.push_back(Proposal{iv.t_s, iv.t_e, preds[i].o_s, preds[i].o_e, preds[i].c, r.t_s, r.t_e});
  }
  sort_by_score(out);
  return out;
}

}  // namespace srg
