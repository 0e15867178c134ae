#include "srg/video_data.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <sstream>

#include "srg/binary_io.hpp"
#include "srg/rng.hpp"
#include "srg/text_io.hpp"

namespace srg {

std::size_t VideoMeta::snippet_count() const {
  if (frames_per_snippet == 0) throw ValidationError(video_id + ": frames per snippet must be >= 1");
  const std::size_t n = num_frames / frames_per_snippet;
  if (n == 0) throw ValidationError(video_id + ": fewer frames than one snippet");
  return n;
}

void validate_instances(std::vector<GroundTruthInstance>& instances, std::size_t snippet_count) {
  std::stable_sort(instances.begin(), instances.end(),
                   [](const auto& a, const auto& b) { return a.start < b.start; });
  for (std::size_t k = 0; k < instances.size(); ++k) {
    const auto& g = instances[k];
    if (g.end < g.start) {
      throw ValidationError("instance [" + std::to_string(g.start) + "," + std::to_string(g.end) + "] is empty");
    }
    if (g.end >= snippet_count) {
      throw ValidationError("instance [" + std::to_string(g.start) + "," + std::to_string(g.end) +
                            "] exceeds sequence length " + std::to_string(snippet_count));
    }
    if (k > 0 && g.start <= instances[k - 1].end) {
      throw ValidationError("instances [" + std::to_string(instances[k - 1].start) + "," +
                            std::to_string(instances[k - 1].end) + "] and [" + std::to_string(g.start) + "," +
                            std::to_string(g.end) + "] overlap");
    }
  }
}

void FeatureSequence::validate() const {
  if (appearance.rank() != 2) throw DimensionError("features", "appearance rank", 2, appearance.rank());
  if (motion.rank() != 2) throw DimensionError("features", "motion rank", 2, motion.rank());
  if (appearance.dim(1) != motion.dim(1)) throw DimensionError("features", "time", appearance.dim(1), motion.dim(1));
}

LabelMaps annotate_label_maps(std::vector<GroundTruthInstance> instances, std::size_t snippet_count,
                              std::size_t n_nbr) {
  if (snippet_count == 0) throw ArgumentError("annotate_label_maps: empty sequence");
  validate_instances(instances, snippet_count);
  const NeighborWindow win{n_nbr};
  const std::size_t wr = win.relatedness_width(), wb = win.boundary_width();
  LabelMaps maps{win,
                 Tensor(Shape{snippet_count, wr}),
                 Tensor(Shape{snippet_count, wb}),
                 Tensor(Shape{snippet_count, wb}),
                 Tensor(Shape{snippet_count, wr})};

  // Owner instance of every snippet (or none).
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> owner(snippet_count, kNone);
  for (std::size_t k = 0; k < instances.size(); ++k)
    for (std::size_t t = instances[k].start; t <= instances[k].end; ++t) owner[t] = k;

  const auto n = static_cast<long>(n_nbr);
  const auto len = static_cast<long>(snippet_count);
  for (std::size_t i = 0; i < snippet_count; ++i) {
    const long ref = static_cast<long>(i);
    for (std::size_t c = 0; c < wr; ++c) {
      const long pos = ref - n + static_cast<long>(c);
      maps.valid(i, c) = (pos >= 0 && pos < len) ? 1.0f : 0.0f;
    }
    if (owner[i] == kNone) {
      maps.starting(i, win.none_index()) = 1.0f;
      maps.ending(i, win.none_index()) = 1.0f;
      continue;
    }
    const auto& g = instances[owner[i]];
    const long a = static_cast<long>(g.start), b = static_cast<long>(g.end);
    for (long pos = std::max(a, ref - n); pos <= std::min(b, ref + n); ++pos) {
      maps.relatedness(i, static_cast<std::size_t>(pos - ref + n)) = 1.0f;
    }
    // Boundaries farther than the window are unreachable from this row.
    if (ref - a <= n) {
      maps.starting(i, static_cast<std::size_t>(n - (ref - a))) = 1.0f;
    } else {
      maps.starting(i, win.none_index()) = 1.0f;
    }
    if (b - ref <= n) {
      maps.ending(i, static_cast<std::size_t>(b - ref)) = 1.0f;
    } else {
      maps.ending(i, win.none_index()) = 1.0f;
    }
  }
  return maps;
}

// ---- Synthesis --------------------------------------------------------------

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw GenerationError("synth config: " + msg); };
  if (num_videos == 0) fail("num_videos must be >= 1");
  if (min_length == 0 || min_length > max_length) fail("invalid length range");
  if (min_instances > max_instances) fail("invalid instance count range");
  if (min_duration == 0 || min_duration > max_duration) fail("invalid duration range");
  if (num_classes == 0) fail("num_classes must be >= 1");
  if (appearance_dim == 0 || motion_dim == 0) fail("feature dimensions must be >= 1");
  if (frames_per_snippet == 0) fail("frames_per_snippet must be >= 1");
  if (signature_noise < 0 || background_noise < 0) fail("noise levels must be non-negative");
  const std::size_t need = min_instances * min_duration + (min_instances > 0 ? (min_instances - 1) * min_gap : 0);
  if (need > min_length) {
    throw GenerationError("synth config: " + std::to_string(min_instances) + " instances of length >= " +
                          std::to_string(min_duration) + " cannot fit in " + std::to_string(min_length) +
                          " snippets");
  }
}

ClassSignatures make_signatures(const SynthConfig& config) {
  Rng rng = Rng(config.seed).split(0);
  auto vec = [&](std::size_t d) {
    std::vector<float> v(d);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
  };
  ClassSignatures sig;
  for (std::size_t k = 0; k < config.num_classes; ++k) {
    sig.appearance.push_back(vec(config.appearance_dim));
    sig.motion.push_back(vec(config.motion_dim));
  }
  sig.background_appearance = vec(config.appearance_dim);
  sig.background_motion = vec(config.motion_dim);
  return sig;
}

namespace {

std::vector<GroundTruthInstance> place_instances(const SynthConfig& cfg, std::size_t length, Rng& rng) {
  std::size_t count = rng.uniform_int(cfg.min_instances, cfg.max_instances);
  for (;; --count) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      std::vector<std::size_t> durations(count);
      std::size_t total = count > 0 ? (count - 1) * cfg.min_gap : 0;
      for (auto& d : durations) total += (d = rng.uniform_int(cfg.min_duration, cfg.max_duration));
      if (total > length) continue;
      // Spread the slack over the count+1 gaps.
      const std::size_t slack = length - total;
      std::vector<std::size_t> cuts(count);
      for (auto& c : cuts) c = rng.uniform_int(0, slack);
      std::sort(cuts.begin(), cuts.end());
      std::vector<GroundTruthInstance> out;
      std::size_t pos = 0, prev_cut = 0;
      for (std::size_t k = 0; k < count; ++k) {
        pos += (cuts[k] - prev_cut) + (k > 0 ? cfg.min_gap : 0);
        prev_cut = cuts[k];
        GroundTruthInstance g;
        g.start = pos;
        g.end = pos + durations[k] - 1;
        g.class_id = rng.uniform_int(0, cfg.num_classes - 1);
        out.push_back(g);
        pos = g.end + 1;
      }
      return out;
    }
    if (count <= cfg.min_instances) break;
  }
  throw GenerationError("synth: could not place instances in a sequence of " + std::to_string(length) +
                        " snippets");
}

}  // namespace

std::vector<SyntheticVideo> synth_generate(const SynthConfig& config) {
  config.validate();
  const ClassSignatures sig = make_signatures(config);
  const Rng root(config.seed);
  std::vector<SyntheticVideo> videos;
  videos.reserve(config.num_videos);
  for (std::size_t v = 0; v < config.num_videos; ++v) {
    Rng rng = root.split(v + 1);
    SyntheticVideo video;
    const std::size_t length = rng.uniform_int(config.min_length, config.max_length);
    std::ostringstream id;
    id << config.id_prefix << v;
    video.meta.video_id = id.str();
    video.meta.frames_per_snippet = config.frames_per_snippet;
    video.meta.num_frames = length * config.frames_per_snippet + rng.uniform_int(0, config.frames_per_snippet - 1);
    video.instances = place_instances(config, length, rng);

    std::vector<std::ptrdiff_t> label(length, -1);
    for (const auto& g : video.instances)
      for (std::size_t t = g.start; t <= g.end; ++t) label[t] = static_cast<std::ptrdiff_t>(g.class_id);

    video.features.appearance = Tensor(Shape{config.appearance_dim, length});
    video.features.motion = Tensor(Shape{config.motion_dim, length});
    for (std::size_t t = 0; t < length; ++t) {
      const bool bg = label[t] < 0;
      const auto& a = bg ? sig.background_appearance : sig.appearance[static_cast<std::size_t>(label[t])];
      const auto& m = bg ? sig.background_motion : sig.motion[static_cast<std::size_t>(label[t])];
      const double noise = bg ? config.background_noise : config.signature_noise;
      for (std::size_t c = 0; c < config.appearance_dim; ++c) {
        video.features.appearance(c, t) = static_cast<float>(a[c] + noise * rng.normal());
      }
      for (std::size_t c = 0; c < config.motion_dim; ++c) {
        video.features.motion(c, t) = static_cast<float>(m[c] + noise * rng.normal());
      }
    }
    videos.push_back(std::move(video));
  }
  return videos;
}

// ---- Feature files -----------------------------------------------------------

std::string encode_features(const FeatureSequence& features) {
  features.validate();
  io::ByteWriter w;
  w.bytes("SRGF");
  w.u32(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(features.length()));
  w.u32(static_cast<std::uint32_t>(features.appearance_dim()));
  w.u32(static_cast<std::uint32_t>(features.motion_dim()));
  w.f32s(features.appearance.data);
  w.f32s(features.motion.data);
  return w.buffer();
}

FeatureSequence decode_features(std::string bytes, const std::string& source) {
  io::ByteReader r(std::move(bytes), source);
  r.expect_magic("SRGF");
  const std::size_t version_at = r.offset();
  if (const auto version = r.u32("version"); version != kFeatureVersion) {
    r.fail("unsupported version " + std::to_string(version), version_at);
  }
  const std::size_t dims_at = r.offset();
  const std::uint32_t length = r.u32("L_S");
  const std::uint32_t da = r.u32("d_a");
  const std::uint32_t dm = r.u32("d_m");
  if (length == 0 || da == 0 || dm == 0) r.fail("zero dimension in header", dims_at);
  FeatureSequence f;
  f.appearance = Tensor(Shape{da, length}, r.f32s(static_cast<std::size_t>(da) * length, "appearance"));
  f.motion = Tensor(Shape{dm, length}, r.f32s(static_cast<std::size_t>(dm) * length, "motion"));
  r.expect_end();
  return f;
}

void save_features(const std::filesystem::path& path, const FeatureSequence& features) {
  io::write_file_atomic(path, encode_features(features));
}

FeatureSequence load_features(const std::filesystem::path& path) {
  return decode_features(io::read_file(path), path.string());
}

// ---- Text files --------------------------------------------------------------

using io::for_each_record;
using io::parse_index;

std::string encode_annotations(const AnnotationMap& annotations) {
  std::ostringstream os;
  os << "# video_id\tstart\tend\tclass_id\n";
  for (const auto& [vid, list] : annotations)
    for (const auto& g : list) os << vid << '\t' << g.start << '\t' << g.end << '\t' << g.class_id << '\n';
  return os.str();
}

AnnotationMap parse_annotations(const std::string& text, const std::string& source) {
  AnnotationMap out;
  for_each_record(text, [&](std::size_t line_no, const std::vector<std::string>& f) {
    if (f.size() != 4) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                           std::to_string(f.size()),
                       line_no);
    }
    if (f[0].empty()) throw ParseError(source + ":" + std::to_string(line_no) + ": empty video id", line_no);
    GroundTruthInstance g;
    g.start = parse_index(f[1], "start", source, line_no);
    g.end = parse_index(f[2], "end", source, line_no);
    g.class_id = parse_index(f[3], "class id", source, line_no);
    if (g.end < g.start) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": end precedes start", line_no);
    }
    out[f[0]].push_back(g);
  });
  for (auto& [vid, list] : out) {
    try {
      validate_instances(list, std::numeric_limits<std::size_t>::max());
    } catch (const ValidationError& e) {
      throw ValidationError(source + ": video " + vid + ": " + e.what());
    }
  }
  return out;
}

void save_annotations(const std::filesystem::path& path, const AnnotationMap& annotations) {
  io::write_file_atomic(path, encode_annotations(annotations));
}

AnnotationMap load_annotations(const std::filesystem::path& path) {
  return parse_annotations(io::read_file(path), path.string());
}

std::string encode_manifest(const std::vector<VideoMeta>& videos) {
  std::ostringstream os;
  os << "# video_id\tnum_frames\tframes_per_snippet\n";
  for (const auto& v : videos) os << v.video_id << '\t' << v.num_frames << '\t' << v.frames_per_snippet << '\n';
  return os.str();
}

std::vector<VideoMeta> parse_manifest(const std::string& text, const std::string& source) {
  std::vector<VideoMeta> out;
  for_each_record(text, [&](std::size_t line_no, const std::vector<std::string>& f) {
    if (f.size() != 3) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields", line_no);
    }
    VideoMeta m{f[0], parse_index(f[1], "frame count", source, line_no),
                parse_index(f[2], "frames per snippet", source, line_no)};
    try {
      (void)m.snippet_count();
    } catch (const ValidationError& e) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
    }
    out.push_back(std::move(m));
  });
  return out;
}

}  // namespace srg
