#include "srg/tign.hpp"

#include <cmath>
#include <numeric>

#include "srg/binary_io.hpp"

namespace srg {

Tign Tign::create(const TignConfig& config, std::uint64_t seed) {
  Rng rng(seed, 0x7469676EULL);
  Tign t;
  t.config_ = config;
  const std::size_t in = config.appearance_dim + config.motion_dim;
  t.appearance_attention_ =
      AttentionBlock::create(config.appearance_dim, config.attention_reduction, config.attention_kernel, rng);
  t.motion_attention_ =
      AttentionBlock::create(config.motion_dim, config.attention_reduction, config.attention_kernel, rng);
  if (config.block == BlockKind::kPn) {
    t.context_.impl = PnBlock::create(in, config.channels, config.out_channels, config.levels, rng);
  } else {
    t.context_.impl = CmBlock::create(in, config.out_channels, /*restore_length=*/true, rng);
  }
  const std::size_t c = t.context_.out_channels();
  const NeighborWindow win{config.n_nbr};
  const std::size_t k = config.head_kernel;
  t.head_r_ = Conv1dLayer::create(c, win.relatedness_width(), k, 1, k / 2, rng);
  t.head_s_ = Conv1dLayer::create(c, win.boundary_width(), k, 1, k / 2, rng);
  t.head_e_ = Conv1dLayer::create(c, win.boundary_width(), k, 1, k / 2, rng);
  return t;
}

Tign::Outputs Tign::forward(Tape& tape, const FeatureSequence& features) {
  features.validate();
  if (features.appearance_dim() != config_.appearance_dim) {
    throw DimensionError("tign_forward", "appearance channels", config_.appearance_dim, features.appearance_dim());
  }
  if (features.motion_dim() != config_.motion_dim) {
    throw DimensionError("tign_forward", "motion channels", config_.motion_dim, features.motion_dim());
  }
  const Var streams[] = {appearance_attention_.forward(tape, tape.constant(features.appearance)),
                         motion_attention_.forward(tape, tape.constant(features.motion))};
  const Var h = context_.forward(tape, concat_rows<float>(streams));
  return Outputs{sigmoid(transpose(head_r_.forward(tape, h))),
                 softmax_rows(transpose(head_s_.forward(tape, h))),
                 softmax_rows(transpose(head_e_.forward(tape, h)))};
}

ScoreMaps Tign::infer(const FeatureSequence& features) {
  Tape tape(/*track_gradients=*/false);
  const Outputs out = forward(tape, features);
  return ScoreMaps{window(), tape.value(out.relatedness), tape.value(out.starting), tape.value(out.ending)};
}

void Tign::visit(const ParamVisitor& fn) {
  appearance_attention_.visit("tign.attention_a", fn);
  motion_attention_.visit("tign.attention_m", fn);
  context_.visit(config_.block == BlockKind::kPn ? "tign.pn" : "tign.cm", fn);
  head_r_.visit("tign.head_r", fn);
  head_s_.visit("tign.head_s", fn);
  head_e_.visit("tign.head_e", fn);
}

std::vector<Tensor*> Tign::parameters() {
  std::vector<Tensor*> out;
  visit([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

Var tign_loss(const Tign::Outputs& maps, const LabelMaps& labels, float eps) {
  const Var lr = bce_masked_mean(maps.relatedness, labels.relatedness, labels.valid, eps);
  const Var ls = cross_entropy_rows(maps.starting, labels.starting, eps);
  const Var le = cross_entropy_rows(maps.ending, labels.ending, eps);
  return add(add(lr, ls), le);
}

TignHistory train_tign(const std::vector<TrainingVideo>& videos, Tign& model, const TignSchedule& schedule,
                       const std::function<void(std::size_t, double)>& on_epoch) {
  if (videos.empty()) throw ArgumentError("train_tign: empty dataset");
  std::vector<LabelMaps> labels;
  labels.reserve(videos.size());
  for (const auto& v : videos) {
    labels.push_back(annotate_label_maps(*v.instances, v.features->length(), model.config().n_nbr));
  }
  const std::vector<Tensor*> params = model.parameters();
  zero_grads(params);
  AdamState state;
  TignHistory history;
  std::size_t step = 0;
  const Rng shuffle_root(schedule.seed, 0x73687566ULL);
  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::vector<std::size_t> order(videos.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = shuffle_root.split(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(0, i - 1)]);

    double epoch_total = 0.0;
    for (std::size_t idx : order) {
      Tape tape;
      const Var loss = tign_loss(model.forward(tape, *videos[idx].features), labels[idx]);
      const double value = loss.item();
      if (!std::isfinite(value)) throw TrainingError("TIGN loss diverged", step);
      tape.backward(loss);
      if (schedule.clip_norm > 0) clip_grad_norm(params, schedule.clip_norm);
      adam_step(params, state, schedule.lr.at(step));
      zero_grads(params);
      history.step_losses.push_back(value);
      epoch_total += value;
      ++step;
    }
    history.epoch_means.push_back(epoch_total / static_cast<double>(videos.size()));
    if (on_epoch) on_epoch(epoch, history.epoch_means.back());
  }
  return history;
}

// ---- SRGM -------------------------------------------------------------------------

std::string encode_score_maps(const ScoreMaps& maps) {
  io::ByteWriter w;
  w.bytes("SRGM");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(maps.length()));
  w.u32(static_cast<std::uint32_t>(maps.window.n_nbr));
  w.f32s(maps.relatedness.data);
  w.f32s(maps.starting.data);
  w.f32s(maps.ending.data);
  return w.buffer();
}

ScoreMaps decode_score_maps(std::string bytes, const std::string& source) {
  io::ByteReader r(std::move(bytes), source);
  r.expect_magic("SRGM");
  const std::size_t version_at = r.offset();
  if (const auto version = r.u32("version"); version != 1) {
    r.fail("unsupported version " + std::to_string(version), version_at);
  }
  const std::size_t len_at = r.offset();
  const std::size_t len = r.u32("L_S");
  if (len == 0) r.fail("zero length", len_at);
  const NeighborWindow win{r.u32("N_nbr")};
  ScoreMaps maps{win, Tensor(), Tensor(), Tensor()};
  maps.relatedness = Tensor(Shape{len, win.relatedness_width()}, r.f32s(len * win.relatedness_width(), "O_r"));
  maps.starting = Tensor(Shape{len, win.boundary_width()}, r.f32s(len * win.boundary_width(), "O_s"));
  maps.ending = Tensor(Shape{len, win.boundary_width()}, r.f32s(len * win.boundary_width(), "O_e"));
  r.expect_end();
  return maps;
}

}  // namespace srg
