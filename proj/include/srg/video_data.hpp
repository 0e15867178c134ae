#pragma once

// Timeline model, ground-truth label maps, synthetic snippet features and
// the on-disk feature / annotation / manifest formats.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "srg/tensor.hpp"

namespace srg {

struct VideoMeta {
  std::string video_id;
  std::size_t num_frames = 0;          // N_V
  std::size_t frames_per_snippet = 1;  // N_s

  /// L_S = floor(N_V / N_s); throws ValidationError when that is zero.
  std::size_t snippet_count() const;
};

/// One annotated action, inclusive snippet span.
struct GroundTruthInstance {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t class_id = 0;

  std::size_t length() const { return end - start + 1; }
  friend bool operator==(const GroundTruthInstance&, const GroundTruthInstance&) = default;
};

/// Sorts by start and rejects empty, out-of-range or overlapping spans.
void validate_instances(std::vector<GroundTruthInstance>& instances, std::size_t snippet_count);

/// Snippet features: appearance [d_a × L_S] and motion [d_m × L_S], channel-major.
struct FeatureSequence {
  Tensor appearance;
  Tensor motion;

  std::size_t length() const { return appearance.dim(1); }
  std::size_t appearance_dim() const { return appearance.dim(0); }
  std::size_t motion_dim() const { return motion.dim(0); }
  void validate() const;
};

/// Label-map geometry for a neighbourhood of `n_nbr` snippets on each side.
///
/// Relatedness column c covers absolute snippet i - n_nbr + c (c = n_nbr is
/// the reference itself). Starting column c covers i - n_nbr + c and ending
/// column c covers i + c for c in [0, n_nbr]; the last starting/ending column
/// is "none". The starting and ending maps are therefore the left and right
/// halves of the relatedness window plus a none index.
struct NeighborWindow {
  std::size_t n_nbr = 0;

  std::size_t relatedness_width() const { return 2 * n_nbr + 1; }
  std::size_t boundary_width() const { return n_nbr + 2; }
  std::size_t center() const { return n_nbr; }
  std::size_t none_index() const { return n_nbr + 1; }
};

struct LabelMaps {
  NeighborWindow window;
  Tensor relatedness;  // M_r  [L_S × 2N+1], binary
  Tensor starting;     // M_s  [L_S × N+2], one-hot rows
  Tensor ending;       // M_e  [L_S × N+2], one-hot rows
  Tensor valid;        // valid_r [L_S × 2N+1], 0 where the neighbour is off the sequence
};

LabelMaps annotate_label_maps(std::vector<GroundTruthInstance> instances, std::size_t snippet_count,
                              std::size_t n_nbr);

struct SynthConfig {
  std::size_t num_videos = 8;
  std::size_t min_length = 64;  // L_S range
  std::size_t max_length = 128;
  std::size_t min_instances = 1;
  std::size_t max_instances = 4;
  std::size_t min_duration = 4;
  std::size_t max_duration = 24;
  std::size_t min_gap = 2;  // background snippets between consecutive instances
  std::size_t num_classes = 5;
  std::size_t appearance_dim = 16;
  std::size_t motion_dim = 16;
  std::size_t frames_per_snippet = 6;
  double signature_noise = 0.2;
  double background_noise = 0.2;
  std::uint64_t seed = 1;
  std::string id_prefix = "vid";

  void validate() const;
};

struct SyntheticVideo {
  VideoMeta meta;
  FeatureSequence features;
  std::vector<GroundTruthInstance> instances;
};

/// Per-class latent signatures shared by every video of a dataset.
struct ClassSignatures {
  std::vector<std::vector<float>> appearance;  // [class][d_a]
  std::vector<std::vector<float>> motion;
  std::vector<float> background_appearance;
  std::vector<float> background_motion;
};

ClassSignatures make_signatures(const SynthConfig& config);

/// Generates `num_videos` videos. Video k depends only on (seed, k), so the
/// result is reproducible and each video can be regenerated independently.
std::vector<SyntheticVideo> synth_generate(const SynthConfig& config);

// ---- Files ----------------------------------------------------------------

inline constexpr std::uint32_t kFeatureVersion = 1;

/// "SRGF" | u32 version | u32 L_S | u32 d_a | u32 d_m | f32 appearance | f32 motion
std::string encode_features(const FeatureSequence& features);
FeatureSequence decode_features(std::string bytes, const std::string& source = "features");
void save_features(const std::filesystem::path& path, const FeatureSequence& features);
FeatureSequence load_features(const std::filesystem::path& path);

/// Annotation lines: video_id \t start \t end \t class_id; '#' comments and blank lines skipped.
using AnnotationMap = std::map<std::string, std::vector<GroundTruthInstance>>;

std::string encode_annotations(const AnnotationMap& annotations);
AnnotationMap parse_annotations(const std::string& text, const std::string& source = "annotations");
void save_annotations(const std::filesystem::path& path, const AnnotationMap& annotations);
AnnotationMap load_annotations(const std::filesystem::path& path);

/// Manifest lines: video_id \t num_frames \t frames_per_snippet.
std::string encode_manifest(const std::vector<VideoMeta>& videos);
std::vector<VideoMeta> parse_manifest(const std::string& text, const std::string& source = "manifest");

}  // namespace srg
