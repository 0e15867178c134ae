#include "srg/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "srg/binary_io.hpp"
#include "srg/checkpoint.hpp"
#include "srg/rng.hpp"
#include "srg/text_io.hpp"

namespace srg {

namespace fs = std::filesystem;

std::string Variant::label() const {
  return std::string("TIGN_") + block_name(tign) + "+TIEN_" + block_name(tien) + (boost ? " boost=on" : " boost=off");
}

// ---- Value parsing -------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("expected a non-negative integer");
  return out;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

double to_real(const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out)) throw ConfigError("expected a number");
  return out;
}

bool to_flag(const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("expected on or off");
}

std::string real_text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<double> to_reals(const std::string& v) {
  std::vector<double> out;
  for (const auto& part : split(v, ',')) out.push_back(to_real(part));
  if (out.empty()) throw ConfigError("expected a comma-separated list");
  return out;
}

std::string reals_text(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + real_text(v[i]);
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& part : split(v, ',')) out.push_back(to_size(part));
  if (out.empty()) throw ConfigError("expected a comma-separated list");
  return out;
}

std::string sizes_text(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

/// "kernel:stride,kernel:stride,..."
std::vector<PyramidLevel> to_levels(const std::string& v) {
  std::vector<PyramidLevel> out;
  for (const auto& part : split(v, ',')) {
    const auto kv = split(part, ':');
    if (kv.size() != 2) throw ConfigError("expected kernel:stride pairs");
    out.push_back(PyramidLevel{to_size(kv[0]), to_size(kv[1])});
  }
  if (out.empty()) throw ConfigError("expected at least one level");
  return out;
}

std::string levels_text(const std::vector<PyramidLevel>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out += (i ? "," : "") + std::to_string(v[i].kernel) + ":" + std::to_string(v[i].stride);
  }
  return out;
}

IntervalSources to_sources(const std::string& v) {
  if (v == "RS") return {true, false};
  if (v == "WRS") return {false, true};
  if (v == "both") return {true, true};
  throw ConfigError("expected RS, WRS or both");
}

std::string sources_text(IntervalSources s) { return s.rs && s.wrs ? "both" : (s.rs ? "RS" : "WRS"); }

std::vector<std::pair<BlockKind, BlockKind>> to_block_pairs(const std::string& v) {
  std::vector<std::pair<BlockKind, BlockKind>> out;
  for (const auto& part : split(v, ',')) {
    const auto kv = split(part, '+');
    if (kv.size() != 2) throw ConfigError("expected TIGN+TIEN block pairs such as PN+CM");
    out.emplace_back(parse_block_kind(kv[0]), parse_block_kind(kv[1]));
  }
  if (out.empty()) throw ConfigError("expected at least one variant");
  return out;
}

std::vector<bool> to_boost_set(const std::string& v) {
  if (v == "both") return {false, true};
  return {to_flag(v)};
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SRG_SIZE_KEY(name, field) \
  Key { name, [](RunConfig& c, const std::string& v) { c.field = to_size(v); }, [](const RunConfig& c) { return std::to_string(c.field); } }
#define SRG_REAL_KEY(name, field) \
  Key { name, [](RunConfig& c, const std::string& v) { c.field = to_real(v); }, [](const RunConfig& c) { return real_text(c.field); } }

const std::vector<Key>& key_table() {
  static const std::vector<Key> table = {
      Key{"profile", [](RunConfig& c, const std::string& v) { c.profile = v; }, [](const RunConfig& c) { return c.profile; }},
      Key{"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); },
          [](const RunConfig& c) { return std::to_string(c.seed); }},
      Key{"dataset", [](RunConfig& c, const std::string& v) { c.dataset = v; },
          [](const RunConfig& c) { return c.dataset.string(); }},
      SRG_SIZE_KEY("synth.train_videos", train_videos),
      SRG_SIZE_KEY("synth.test_videos", test_videos),
      SRG_SIZE_KEY("synth.min_length", synth.min_length),
      SRG_SIZE_KEY("synth.max_length", synth.max_length),
      SRG_SIZE_KEY("synth.min_instances", synth.min_instances),
      SRG_SIZE_KEY("synth.max_instances", synth.max_instances),
      SRG_SIZE_KEY("synth.min_duration", synth.min_duration),
      SRG_SIZE_KEY("synth.max_duration", synth.max_duration),
      SRG_SIZE_KEY("synth.min_gap", synth.min_gap),
      SRG_SIZE_KEY("synth.num_classes", synth.num_classes),
      SRG_SIZE_KEY("synth.appearance_dim", synth.appearance_dim),
      SRG_SIZE_KEY("synth.motion_dim", synth.motion_dim),
      SRG_SIZE_KEY("synth.frames_per_snippet", synth.frames_per_snippet),
      SRG_REAL_KEY("synth.signature_noise", synth.signature_noise),
      SRG_REAL_KEY("synth.background_noise", synth.background_noise),
      SRG_SIZE_KEY("tign.n_nbr", tign.n_nbr),
      SRG_SIZE_KEY("tign.channels", tign.channels),
      SRG_SIZE_KEY("tign.out_channels", tign.out_channels),
      Key{"tign.levels", [](RunConfig& c, const std::string& v) { c.tign.levels = to_levels(v); },
          [](const RunConfig& c) { return levels_text(c.tign.levels); }},
      Key{"tign.block", [](RunConfig& c, const std::string& v) { c.tign.block = parse_block_kind(v); },
          [](const RunConfig& c) { return std::string(block_name(c.tign.block)); }},
      SRG_SIZE_KEY("tign.head_kernel", tign.head_kernel),
      SRG_SIZE_KEY("tign.epochs", tign_epochs),
      SRG_REAL_KEY("tign.lr", tign_lr.base_lr),
      SRG_REAL_KEY("tign.lr_decay", tign_lr.decay_base),
      SRG_SIZE_KEY("tign.lr_decay_every", tign_lr.decay_every),
      SRG_REAL_KEY("tign.clip_norm", tign_clip),
      Key{"attention.reduction",
          [](RunConfig& c, const std::string& v) { c.tign.attention_reduction = c.tien.attention_reduction = to_size(v); },
          [](const RunConfig& c) { return std::to_string(c.tign.attention_reduction); }},
      Key{"attention.kernel",
          [](RunConfig& c, const std::string& v) { c.tign.attention_kernel = c.tien.attention_kernel = to_size(v); },
          [](const RunConfig& c) { return std::to_string(c.tign.attention_kernel); }},
      SRG_SIZE_KEY("tien.context", tien.context),
      SRG_SIZE_KEY("tien.fixed_length", tien.fixed_length),
      SRG_SIZE_KEY("tien.channels", tien.channels),
      SRG_SIZE_KEY("tien.out_channels", tien.out_channels),
      Key{"tien.levels", [](RunConfig& c, const std::string& v) { c.tien.levels = to_levels(v); },
          [](const RunConfig& c) { return levels_text(c.tien.levels); }},
      Key{"tien.block", [](RunConfig& c, const std::string& v) { c.tien.block = parse_block_kind(v); },
          [](const RunConfig& c) { return std::string(block_name(c.tien.block)); }},
      SRG_SIZE_KEY("tien.steps", tien_schedule.steps),
      SRG_SIZE_KEY("tien.batch_size", tien_schedule.batch_size),
      SRG_REAL_KEY("tien.lr", tien_schedule.lr.base_lr),
      SRG_REAL_KEY("tien.lr_decay", tien_schedule.lr.decay_base),
      SRG_SIZE_KEY("tien.lr_decay_every", tien_schedule.lr.decay_every),
      SRG_REAL_KEY("tien.alpha", tien_schedule.alpha),
      SRG_REAL_KEY("tien.clip_norm", tien_schedule.clip_norm),
      Key{"intervals.taus", [](RunConfig& c, const std::string& v) { c.taus = to_reals(v); },
          [](const RunConfig& c) { return reals_text(c.taus); }},
      Key{"intervals.source", [](RunConfig& c, const std::string& v) { c.sources = to_sources(v); },
          [](const RunConfig& c) { return sources_text(c.sources); }},
      Key{"nms.mode", [](RunConfig& c, const std::string& v) { c.nms.mode = parse_nms_mode(v); },
          [](const RunConfig& c) { return std::string(nms_mode_name(c.nms.mode)); }},
      SRG_REAL_KEY("nms.threshold", nms.fixed_threshold),
      SRG_REAL_KEY("nms.floor", nms.adaptive_floor),
      Key{"boost", [](RunConfig& c, const std::string& v) { c.boost = to_flag(v); },
          [](const RunConfig& c) { return std::string(c.boost ? "on" : "off"); }},
      Key{"eval.tious", [](RunConfig& c, const std::string& v) { c.metrics.tiou_thresholds = to_reals(v); },
          [](const RunConfig& c) { return reals_text(c.metrics.tiou_thresholds); }},
      Key{"eval.an_values", [](RunConfig& c, const std::string& v) { c.metrics.an_values = to_sizes(v); },
          [](const RunConfig& c) { return sizes_text(c.metrics.an_values); }},
      SRG_SIZE_KEY("eval.auc_an_max", metrics.auc_an_max),
      Key{"eval.an_mode", [](RunConfig& c, const std::string& v) { c.metrics.an_mode = parse_an_mode(v); },
          [](const RunConfig& c) { return std::string(an_mode_name(c.metrics.an_mode)); }},
      Key{"propose.dump_maps", [](RunConfig& c, const std::string& v) { c.dump_maps = to_flag(v); },
          [](const RunConfig& c) { return std::string(c.dump_maps ? "on" : "off"); }},
      Key{"ablate.blocks", [](RunConfig& c, const std::string& v) { c.ablate_blocks = to_block_pairs(v); },
          [](const RunConfig& c) {
            std::string out;
            for (std::size_t i = 0; i < c.ablate_blocks.size(); ++i) {
              out += (i ? "," : "") + std::string(block_name(c.ablate_blocks[i].first)) + "+" +
                     block_name(c.ablate_blocks[i].second);
            }
            return out;
          }},
      Key{"ablate.boost", [](RunConfig& c, const std::string& v) { c.ablate_boost = to_boost_set(v); },
          [](const RunConfig& c) {
            return std::string(c.ablate_boost.size() == 2 ? "both" : (c.ablate_boost[0] ? "on" : "off"));
          }},
  };
  return table;
}

#undef SRG_SIZE_KEY
#undef SRG_REAL_KEY

}  // namespace

// ---- RunConfig -----------------------------------------------------------------------

RunConfig RunConfig::profile_defaults(const std::string& name) {
  RunConfig c;
  c.profile = name;
  if (name == "tiny") {
    c.train_videos = 200;
    c.test_videos = 50;
    c.synth.min_length = 64;
    c.synth.max_length = 128;
    c.synth.min_instances = 1;
    c.synth.max_instances = 4;
    c.synth.min_duration = 4;
    c.synth.max_duration = 24;
    c.synth.min_gap = 2;
    c.synth.appearance_dim = 16;
    c.synth.motion_dim = 16;
    c.synth.signature_noise = 1.0;
    c.synth.background_noise = 1.0;
    c.tign.n_nbr = 32;
    c.tign.channels = 16;
    c.tign.out_channels = 16;
    c.tign.levels = {{3, 1}, {5, 3}, {7, 5}, {15, 7}};
    c.tign_epochs = 12;
    c.tign_lr = LrSchedule{1e-3, 0.96, 100};
    c.tien.channels = 16;
    c.tien.out_channels = 16;
    c.tien.context = 4;
    c.tien.fixed_length = 32;
    c.tien_schedule.steps = 1000;
    c.tien_schedule.batch_size = 32;
    c.tien_schedule.lr = LrSchedule{1e-3, 0.96, 100};
    c.metrics.tiou_thresholds = tiou_range(0, 8);  // 0.50 .. 0.90
  } else if (name == "paperish") {
    // Full-size widths and schedules; meant for shape checks, not training.
    c.train_videos = 4;
    c.test_videos = 2;
    c.synth.min_length = 640;
    c.synth.max_length = 800;
    c.synth.max_instances = 6;
    c.synth.max_duration = 120;
    c.synth.appearance_dim = 16;
    c.synth.motion_dim = 16;
    c.tign.n_nbr = 600;
    c.tign.channels = 32;
    c.tign.out_channels = 32;
    c.tign_epochs = 15;
    c.tign_lr = LrSchedule{1e-4, 0.96, 10};
    c.tien.context = 20;
    c.tien.fixed_length = 128;
    c.tien_schedule.steps = 10000;
    c.tien_schedule.batch_size = 256;
    c.tien_schedule.lr = LrSchedule{1e-4, 0.96, 10};
    c.nms = NmsConfig{NmsMode::kFixed, 0.83, 0.5};
    c.metrics.tiou_thresholds = tiou_range(0, 10);  // 0.50 .. 1.00
  } else {
    throw ConfigError("unknown profile '" + name + "' (expected tiny or paperish)");
  }
  return c;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.emplace_back(k.name);
    return out;
  }();
  return names;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& k : key_table()) {
    if (key == k.name) {
      try {
        k.set(*this, value);
      } catch (const std::exception& e) {
        throw ConfigError("key '" + key + "': bad value '" + value + "': " + e.what());
      }
      return;
    }
  }
  throw ConfigError("unknown key '" + key + "'");
}

void RunConfig::apply_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& k : key_table()) out += std::string(k.name) + " = " + k.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  try {
    synth.validate();
  } catch (const GenerationError& e) {
    throw ConfigError(e.what());
  }
  if (train_videos == 0 || test_videos == 0) throw ConfigError("need at least one training and one test video");
  if (tign.n_nbr == 0) throw ConfigError("tign.n_nbr must be >= 1");
  if (tign.channels == 0 || tign.out_channels == 0 || tien.channels == 0 || tien.out_channels == 0) {
    throw ConfigError("channel widths must be >= 1");
  }
  if (tign.head_kernel % 2 == 0) throw ConfigError("tign.head_kernel must be odd");
  if (tign.attention_kernel % 2 == 0) throw ConfigError("attention.kernel must be odd");
  if (tign_epochs == 0) throw ConfigError("tign.epochs must be >= 1");
  if (tien.fixed_length < 4) throw ConfigError("tien.fixed_length must be >= 4");
  if (tien_schedule.steps == 0) throw ConfigError("tien.steps must be >= 1");
  if (tien_schedule.batch_size < 2) throw ConfigError("tien.batch_size must be >= 2");
  for (const LrSchedule* lr : {&tign_lr, &tien_schedule.lr}) {
    if (!(lr->base_lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(lr->decay_base > 0.0 && lr->decay_base <= 1.0)) throw ConfigError("lr decay must lie in (0,1]");
    if (lr->decay_every == 0) throw ConfigError("lr_decay_every must be >= 1");
  }
  for (const auto& lv : tien.levels) {
    if (tien.block == BlockKind::kPn && lv.kernel > tien.fixed_length) {
      throw ConfigError("tien.levels: kernel " + std::to_string(lv.kernel) + " exceeds tien.fixed_length");
    }
  }
  if (taus.empty()) throw ConfigError("intervals.taus must not be empty");
  for (double t : taus) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("intervals.taus values must lie in (0,1)");
  }
  if (!sources.rs && !sources.wrs) throw ConfigError("intervals.source selects nothing");
  nms.validate();
  metrics.validate();
}

RunConfig load_run_config(const fs::path& path, const std::string& fallback_profile) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  const std::string text = io::read_file(path);
  // The profile line selects the defaults the rest of the file overrides.
  std::string profile = fallback_profile;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const std::string body = trim(line.substr(0, line.find('#')));
      const auto eq = body.find('=');
      if (eq != std::string::npos && trim(body.substr(0, eq)) == "profile") profile = trim(body.substr(eq + 1));
    }
  }
  RunConfig c = RunConfig::profile_defaults(profile);
  c.apply_text(text, path.string());
  return c;
}

// ---- Dataset -------------------------------------------------------------------------

const FeatureSequence& Dataset::features_of(const std::string& id) const {
  const auto it = features.find(id);
  if (it == features.end()) throw ValidationError("dataset has no features for video '" + id + "'");
  return it->second;
}

const std::vector<GroundTruthInstance>& Dataset::instances_of(const std::string& id) const {
  static const std::vector<GroundTruthInstance> empty;
  for (const AnnotationMap* m : {&train_gt, &test_gt}) {
    const auto it = m->find(id);
    if (it != m->end()) return it->second;
  }
  return empty;
}

std::size_t Dataset::appearance_dim() const {
  if (features.empty()) throw ValidationError("dataset has no videos");
  return features.begin()->second.appearance_dim();
}

std::size_t Dataset::motion_dim() const {
  if (features.empty()) throw ValidationError("dataset has no videos");
  return features.begin()->second.motion_dim();
}

Dataset synth_dataset(const RunConfig& config) {
  SynthConfig sc = config.synth;
  sc.num_videos = config.train_videos + config.test_videos;
  sc.seed = config.seed;
  std::vector<SyntheticVideo> videos = synth_generate(sc);
  Dataset d;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    auto& v = videos[i];
    const std::string id = v.meta.video_id;
    const bool train = i < config.train_videos;
    (train ? d.train_ids : d.test_ids).push_back(id);
    (train ? d.train_gt : d.test_gt)[id] = std::move(v.instances);
    d.videos.push_back(v.meta);
    d.features.emplace(id, std::move(v.features));
  }
  return d;
}

void save_dataset(const fs::path& dir, const Dataset& data) {
  fs::path tmp = dir;
  tmp += ".partial";
  fs::remove_all(tmp);
  fs::create_directories(tmp / "features");
  io::write_file_atomic(tmp / "videos.tsv", encode_manifest(data.videos));
  std::string split = "# video_id\tsplit\n";
  for (const auto& id : data.train_ids) split += id + "\ttrain\n";
  for (const auto& id : data.test_ids) split += id + "\ttest\n";
  io::write_file_atomic(tmp / "split.tsv", split);
  for (const auto& [id, f] : data.features) save_features(tmp / "features" / (id + ".srgf"), f);
  save_annotations(tmp / "train.tsv", data.train_gt);
  save_annotations(tmp / "test.tsv", data.test_gt);
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw ConfigError("dataset directory not found: " + dir.string() + " (run `srg synth` first)");
  }
  Dataset d;
  d.videos = parse_manifest(io::read_file(dir / "videos.tsv"), (dir / "videos.tsv").string());
  const fs::path split_path = dir / "split.tsv";
  std::map<std::string, bool> known;
  for (const auto& v : d.videos) known[v.video_id] = false;
  io::for_each_record(io::read_file(split_path), [&](std::size_t line_no, const std::vector<std::string>& f) {
    if (f.size() != 2) io::fail_line(split_path.string(), line_no, "expected video_id and split");
    if (!known.count(f[0])) io::fail_line(split_path.string(), line_no, "video '" + f[0] + "' is not in the manifest");
    if (f[1] == "train") {
      d.train_ids.push_back(f[0]);
    } else if (f[1] == "test") {
      d.test_ids.push_back(f[0]);
    } else {
      io::fail_line(split_path.string(), line_no, "split must be train or test");
    }
  });
  d.train_gt = load_annotations(dir / "train.tsv");
  d.test_gt = load_annotations(dir / "test.tsv");
  for (const auto& v : d.videos) {
    FeatureSequence f = load_features(dir / "features" / (v.video_id + ".srgf"));
    if (f.length() != v.snippet_count()) {
      throw ValidationError("video '" + v.video_id + "': feature length " + std::to_string(f.length()) +
                            " does not match manifest snippet count " + std::to_string(v.snippet_count()));
    }
    d.features.emplace(v.video_id, std::move(f));
  }
  for (const AnnotationMap* m : {&d.train_gt, &d.test_gt}) {
    for (const auto& [id, list] : *m) {
      const auto it = d.features.find(id);
      if (it == d.features.end()) throw ValidationError("annotations reference unknown video '" + id + "'");
      auto copy = list;
      validate_instances(copy, it->second.length());
    }
  }
  if (d.train_ids.empty() || d.test_ids.empty()) throw ValidationError("dataset needs both train and test videos");
  return d;
}

// ---- Stages --------------------------------------------------------------------------

Tign make_tign(const RunConfig& config, const Dataset& data, BlockKind block) {
  TignConfig tc = config.tign;
  tc.appearance_dim = data.appearance_dim();
  tc.motion_dim = data.motion_dim();
  tc.block = block;
  return Tign::create(tc, config.seed);
}

Tien make_tien(const RunConfig& config, const Dataset& data, BlockKind block) {
  TienConfig tc = config.tien;
  tc.appearance_dim = data.appearance_dim();
  tc.motion_dim = data.motion_dim();
  tc.block = block;
  return Tien::create(tc, config.seed);
}

TignHistory fit_tign(const RunConfig& config, const Dataset& data, Tign& model, const Logger& log) {
  std::vector<TrainingVideo> videos;
  for (const auto& id : data.train_ids) videos.push_back(TrainingVideo{&data.features_of(id), &data.instances_of(id)});
  TignSchedule schedule;
  schedule.epochs = config.tign_epochs;
  schedule.lr = config.tign_lr;
  schedule.clip_norm = config.tign_clip;
  schedule.seed = config.seed;
  return train_tign(videos, model, schedule, [&](std::size_t epoch, double loss) {
    if (log) log("TIGN epoch " + std::to_string(epoch + 1) + "/" + std::to_string(schedule.epochs) + " loss " + real_text(loss));
  });
}

IntervalMap generate_intervals(const RunConfig& config, const Dataset& data, Tign& model,
                               const std::vector<std::string>& ids, IntervalSources sources) {
  IntervalMap out;
  for (const auto& id : ids) out[id] = gen_all(model.infer(data.features_of(id)), config.taus, sources);
  return out;
}

std::vector<TienExample> tien_pool(const Dataset& data, const IntervalMap& train_intervals) {
  std::vector<TienExample> pool;
  for (const auto& [id, intervals] : train_intervals) {
    const FeatureSequence* f = &data.features_of(id);
    for (const auto& s : make_training_samples(intervals, data.instances_of(id))) pool.push_back(TienExample{f, s});
  }
  return pool;
}

TienHistory fit_tien(const RunConfig& config, const Dataset& data, Tign& tign, Tien& model, const Logger& log) {
  const IntervalMap intervals = generate_intervals(config, data, tign, data.train_ids, config.sources);
  const std::vector<TienExample> pool = tien_pool(data, intervals);
  if (log) {
    const auto pos = std::count_if(pool.begin(), pool.end(), [](const TienExample& e) { return e.sample.positive; });
    log("TIEN pool: " + std::to_string(pos) + " positive, " + std::to_string(pool.size() - static_cast<std::size_t>(pos)) +
        " negative samples");
  }
  TienSchedule schedule = config.tien_schedule;
  schedule.seed = config.seed;
  const std::size_t report = std::max<std::size_t>(1, schedule.steps / 10);
  double acc = 0.0;
  return train_tien(pool, model, schedule, [&](std::size_t step, double loss) {
    acc += loss;
    if ((step + 1) % report == 0) {
      if (log) log("TIEN step " + std::to_string(step + 1) + "/" + std::to_string(schedule.steps) + " loss " + real_text(acc / static_cast<double>(report)));
      acc = 0.0;
    }
  });
}

ProposalMap propose(const RunConfig& config, const Dataset& data, Tign& tign, Tien& tien, bool boost,
                    IntervalMap* intervals_out, std::map<std::string, ScoreMaps>* maps_out) {
  ProposalMap out;
  for (const auto& id : data.test_ids) {
    const FeatureSequence& f = data.features_of(id);
    ScoreMaps maps = tign.infer(f);
    std::vector<TemporalInterval> intervals = gen_all(maps, config.taus, config.sources);
    std::vector<Proposal> proposals = evaluate_intervals(tien, f, intervals);
    if (boost) proposals = boost_scores(std::move(proposals), maps.relatedness, maps.window);
    out[id] = nms(std::move(proposals), config.nms);
    if (intervals_out) (*intervals_out)[id] = std::move(intervals);
    if (maps_out) maps_out->emplace(id, std::move(maps));
  }
  return out;
}

ProposalMap intervals_as_proposals(const IntervalMap& intervals) {
  ProposalMap out;
  for (const auto& [id, list] : intervals) {
    auto& dst = out[id];
    for (const auto& iv : list) {
      dst.push_back(Proposal{iv.t_s, iv.t_e, 0.0, 0.0, 1.0, static_cast<double>(iv.t_s), static_cast<double>(iv.t_e)});
    }
  }
  return out;
}

ProposalMap random_proposals(const ProposalMap& like, const Dataset& data, std::uint64_t seed) {
  const Rng root(seed, 0x72616E64ULL);
  ProposalMap out;
  std::size_t k = 0;
  for (const auto& [id, list] : like) {
    Rng rng = root.split(k++);
    const std::size_t last = data.features_of(id).length() - 1;
    auto& dst = out[id];
    for (std::size_t i = 0; i < list.size(); ++i) {
      std::size_t a = rng.uniform_int(0, last), b = rng.uniform_int(0, last);
      if (a > b) std::swap(a, b);
      dst.push_back(Proposal{a, b, 0.0, 0.0, rng.uniform(), static_cast<double>(a), static_cast<double>(b)});
    }
    sort_by_score(dst);
  }
  return out;
}

PipelineResult run_pipeline(const RunConfig& config, const Dataset& data, const Variant& variant, const Logger& log) {
  PipelineResult r;
  Tign tign = make_tign(config, data, variant.tign);
  r.tign_history = fit_tign(config, data, tign, log);
  Tien tien = make_tien(config, data, variant.tien);
  r.tien_history = fit_tien(config, data, tign, tien, log);
  r.proposals = propose(config, data, tign, tien, variant.boost, &r.test_intervals);
  r.metrics = compute_metrics(r.proposals, data.test_gt, config.metrics);
  return r;
}

double window_mean(const std::vector<double>& values, std::size_t first, std::size_t count) {
  if (count == 0 || first + count > values.size()) throw ArgumentError("window_mean: window outside the series");
  double acc = 0.0;
  for (std::size_t i = first; i < first + count; ++i) acc += values[i];
  return acc / static_cast<double>(count);
}

// ---- Commands ------------------------------------------------------------------------

namespace {

void require_artifact(const fs::path& path, const std::string& what, const std::string& producer) {
  if (!fs::exists(path)) {
    throw ConfigError("missing " + what + " at " + path.string() + " (run `srg " + producer + "` first)");
  }
}

Dataset open_dataset(const RunConfig& config, const Workspace& ws) {
  const fs::path dir = config.dataset.empty() ? ws.dataset() : config.dataset;
  return load_dataset(dir);
}

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::string history_csv(const std::vector<double>& values, const char* index_name) {
  std::string out = std::string(index_name) + ",loss\n";
  for (std::size_t i = 0; i < values.size(); ++i) out += std::to_string(i + 1) + "," + real_text(values[i]) + "\n";
  return out;
}

template <typename Model>
void load_into(Model& model, const fs::path& path) {
  assign_checkpoint(load_checkpoint(path), [&](const ParamVisitor& fn) { model.visit(fn); });
}

template <typename Model>
void save_from(Model& model, const fs::path& path) {
  save_checkpoint(path, collect_named([&](const ParamVisitor& fn) { model.visit(fn); }));
}

}  // namespace

void cmd_synth(const RunConfig& config, const Workspace& ws, const Logger& log) {
  config.validate();
  fs::create_directories(ws.root);
  const fs::path dir = config.dataset.empty() ? ws.dataset() : config.dataset;
  say(log, "synthesizing " + std::to_string(config.train_videos) + " train + " + std::to_string(config.test_videos) +
               " test videos");
  save_dataset(dir, synth_dataset(config));
  io::write_file_atomic(ws.root / "run.conf", config.to_text());
  say(log, "dataset written to " + dir.string());
}

void cmd_train_tign(const RunConfig& config, const Workspace& ws, const Logger& log) {
  config.validate();
  const Dataset data = open_dataset(config, ws);
  fs::create_directories(ws.root);
  Tign model = make_tign(config, data, config.tign.block);
  const TignHistory h = fit_tign(config, data, model, log);
  io::write_file_atomic(ws.root / "tign_loss.csv", history_csv(h.epoch_means, "epoch"));
  save_from(model, ws.tign_checkpoint());
  say(log, "TIGN checkpoint written to " + ws.tign_checkpoint().string());
}

void cmd_train_tien(const RunConfig& config, const Workspace& ws, const Logger& log) {
  config.validate();
  require_artifact(ws.tign_checkpoint(), "TIGN checkpoint", "train-tign");
  const Dataset data = open_dataset(config, ws);
  Tign tign = make_tign(config, data, config.tign.block);
  load_into(tign, ws.tign_checkpoint());
  Tien model = make_tien(config, data, config.tien.block);
  const TienHistory h = fit_tien(config, data, tign, model, log);
  io::write_file_atomic(ws.root / "tien_loss.csv", history_csv(h.step_losses, "step"));
  save_from(model, ws.tien_checkpoint());
  say(log, "TIEN checkpoint written to " + ws.tien_checkpoint().string());
}

void cmd_propose(const RunConfig& config, const Workspace& ws, const Logger& log) {
  config.validate();
  require_artifact(ws.tign_checkpoint(), "TIGN checkpoint", "train-tign");
  require_artifact(ws.tien_checkpoint(), "TIEN checkpoint", "train-tien");
  const Dataset data = open_dataset(config, ws);
  Tign tign = make_tign(config, data, config.tign.block);
  load_into(tign, ws.tign_checkpoint());
  Tien tien = make_tien(config, data, config.tien.block);
  load_into(tien, ws.tien_checkpoint());
  IntervalMap intervals;
  std::map<std::string, ScoreMaps> maps;
  const ProposalMap proposals = propose(config, data, tign, tien, config.boost, &intervals, config.dump_maps ? &maps : nullptr);
  std::string dump = "# video_id\tt_s\tt_e\tsource\ttau\n";
  std::size_t n_intervals = 0, n_proposals = 0;
  for (const auto& [id, list] : intervals) {
    n_intervals += list.size();
    for (const auto& iv : list) dump += format_interval_line(id, iv) + "\n";
  }
  for (const auto& [id, list] : proposals) n_proposals += list.size();
  io::write_file_atomic(ws.intervals(), dump);
  if (config.dump_maps) {
    fs::create_directories(ws.maps_dir());
    for (const auto& [id, m] : maps) io::write_file_atomic(ws.maps_dir() / (id + ".srgm"), encode_score_maps(m));
  }
  io::write_file_atomic(ws.proposals(), encode_proposals(proposals));
  say(log, std::to_string(n_intervals) + " intervals, " + std::to_string(n_proposals) + " proposals after NMS");
}

void cmd_eval(const RunConfig& config, const Workspace& ws, const Logger& log) {
  config.validate();
  require_artifact(ws.proposals(), "proposal file", "propose");
  const Dataset data = open_dataset(config, ws);
  const ProposalMap proposals = parse_proposals(io::read_file(ws.proposals()), ws.proposals().string());
  for (const auto& [id, list] : proposals) {
    if (!data.test_gt.count(id) && !data.features.count(id)) {
      throw ValidationError("proposals reference unknown video '" + id + "'");
    }
  }
  const std::vector<MetricRow> rows = compute_metrics(proposals, data.test_gt, config.metrics);
  io::write_file_atomic(ws.metrics(), encode_metrics_csv(rows));
  for (const auto& r : rows) {
    if (r.metric != "recall") say(log, r.metric + "@" + r.an + " = " + real_text(r.value));
  }
}

void cmd_ablate(const RunConfig& config, const Workspace& ws, const Logger& log) {
  config.validate();
  const Dataset data = open_dataset(config, ws);
  fs::create_directories(ws.root);
  std::map<BlockKind, Tign> tigns;
  std::string out;
  for (const auto& [tign_block, tien_block] : config.ablate_blocks) {
    auto it = tigns.find(tign_block);
    if (it == tigns.end()) {
      say(log, std::string("training TIGN_") + block_name(tign_block));
      Tign t = make_tign(config, data, tign_block);
      fit_tign(config, data, t, log);
      it = tigns.emplace(tign_block, std::move(t)).first;
    }
    say(log, std::string("training TIEN_") + block_name(tien_block) + " on TIGN_" + block_name(tign_block));
    Tien tien = make_tien(config, data, tien_block);
    fit_tien(config, data, it->second, tien, log);
    for (bool boost : config.ablate_boost) {
      const Variant v{tign_block, tien_block, boost};
      const ProposalMap proposals = propose(config, data, it->second, tien, boost);
      const auto rows = compute_metrics(proposals, data.test_gt, config.metrics);
      if (!out.empty()) out += "\n";
      out += encode_metrics_csv(rows, v.label());
      for (const auto& r : rows) {
        if (r.metric == "AUC") say(log, v.label() + ": AUC " + real_text(r.value));
      }
    }
  }
  io::write_file_atomic(ws.ablation(), out);
}

}  // namespace srg
