// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   srg_acceptance --cli <path to srg> [--only N] [--work DIR]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "grad_cases.hpp"
#include "net_grad.hpp"
#include "srg/eval.hpp"
#include "srg/interval_gen.hpp"
#include "srg/kernels.hpp"
#include "srg/pipeline.hpp"
#include "srg/post.hpp"
#include "srg/video_data.hpp"
#include "support.hpp"

using namespace srgtest;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr std::size_t kGradProbes = 200;
constexpr double kGradMaxRel = 1e-2;
constexpr double kGradBudgetSec = 5 * 60;
constexpr std::size_t kTinyGradLength = 48;
constexpr std::size_t kOracleInstances = 60;
constexpr double kOracleBudgetSec = 2 * 60;
constexpr double kOracleRecallTol = 1e-12;
constexpr double kBoostTol = 1e-6;
constexpr std::size_t kUnlimitedAn = std::size_t{1} << 24;
constexpr double kBaselineMargin = 0.25;
constexpr double kLossDrop = 0.5;
constexpr std::size_t kTienLossWindow = 100;
constexpr double kPipelineBudgetSec = 30 * 60;
constexpr std::size_t kNmsProposals = 1000;
constexpr double kNmsThreshold = 0.83;
constexpr std::uint64_t kAblationSeeds[] = {1, 2, 3};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void progress(const std::string& msg) { std::fprintf(stderr, "  .. %s\n", msg.c_str()); }

// ---- 1: gradients ---------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  Outcome out;
  std::size_t checks = 0;
  double worst = 0.0;
  auto take = [&](const std::string& name, const GradReport& r) {
    ++checks;
    worst = std::max(worst, r.worst);
    if (r.probes < kGradProbes || r.failures != 0 || !(r.worst < kGradMaxRel)) {
      out.pass = false;
      out.detail += name + " failed (probes " + std::to_string(r.probes) + ", failures " +
                    std::to_string(r.failures) + ", worst " + fmt("%.3g", r.worst) + "); ";
    }
  };
  Rng rng(21);
  for (auto& c : grad_cases(rng)) take(c.name, grad_check_op(c.op, c.inputs, rng, kGradProbes, c.differentiable));
  const srg::RunConfig tiny = srg::RunConfig::profile_defaults("tiny");
  for (auto block : {srg::BlockKind::kPn, srg::BlockKind::kCm}) {
    const std::string b = srg::block_name(block);
    take("small TIGN_" + b, tign_network_check(block, 31, kGradProbes));
    take("small TIEN_" + b, tien_network_check(block, 32, kGradProbes));
    srg::TignConfig tign = tiny.tign;
    tign.appearance_dim = tiny.synth.appearance_dim;
    tign.motion_dim = tiny.synth.motion_dim;
    tign.block = block;
    take("tiny TIGN_" + b, tign_network_check(tign, kTinyGradLength, 33, kGradProbes));
    srg::TienConfig tien = tiny.tien;
    tien.appearance_dim = tiny.synth.appearance_dim;
    tien.motion_dim = tiny.synth.motion_dim;
    tien.block = block;
    take("tiny TIEN_" + b, tien_network_check(tien, 34, kGradProbes));
  }
  const double secs = seconds_since(t0);
  if (secs >= kGradBudgetSec) out.pass = false;
  out.detail += std::to_string(checks) + " checks x " + std::to_string(kGradProbes) + " probes, worst rel " +
                fmt("%.3g", worst) + ", " + fmt("%.1f", secs) + " s";
  return out;
}

// ---- 2: oracles -----------------------------------------------------------------------

srg::ScoreMaps random_maps(std::size_t len, std::size_t n, Rng& rng) {
  srg::ScoreMaps m{srg::NeighborWindow{n}, Tensor(Shape{len, 2 * n + 1}), random_stochastic(len, n + 2, rng),
                   random_stochastic(len, n + 2, rng)};
  for (std::size_t i = 0; i < len; ++i) {
    const double width = rng.uniform(0.5, static_cast<double>(n) + 2.0);
    const double shift = rng.uniform(-2.0, 2.0);
    for (std::size_t c = 0; c < 2 * n + 1; ++c) {
      const double d = (static_cast<double>(c) - static_cast<double>(n) - shift) / width;
      m.relatedness(i, c) = static_cast<float>(std::exp(-d * d) * rng.uniform(0.7, 1.0));
    }
  }
  for (std::size_t i = 0; i < len; i += 3) m.starting(i, n + 1) = 5.0f;
  return m;
}

std::vector<Span> as_spans(const std::vector<srg::TemporalInterval>& v) {
  std::vector<Span> out;
  for (const auto& p : v) out.emplace_back(p.t_s, p.t_e);
  return out;
}

bool same_proposals(const std::vector<srg::Proposal>& a, const std::vector<srg::Proposal>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].refined_t_s != b[i].refined_t_s || a[i].refined_t_e != b[i].refined_t_e || a[i].score != b[i].score)
      return false;
  }
  return true;
}

Outcome oracle_suite() {
  const auto t0 = Clock::now();
  std::vector<std::pair<std::string, std::size_t>> mismatches;
  auto count = [&](const std::string& name, bool ok) {
    auto it = std::find_if(mismatches.begin(), mismatches.end(), [&](const auto& p) { return p.first == name; });
    if (it == mismatches.end()) {
      mismatches.emplace_back(name, 0);
      it = std::prev(mismatches.end());
    }
    if (!ok) ++it->second;
  };
  Rng rng(101);
  const auto taus = srg::default_tau_schedule();
  for (std::size_t trial = 0; trial < kOracleInstances; ++trial) {
    {
      const std::size_t len = rng.uniform_int(1, 40), n = rng.uniform_int(1, 12);
      const auto gts = random_instances(len, rng, 4);
      const auto got = srg::annotate_label_maps(gts, len, n);
      const auto want = label_map_oracle(gts, len, n);
      count("label maps", got.relatedness.data == want.relatedness.data && got.starting.data == want.starting.data &&
                              got.ending.data == want.ending.data && got.valid.data == want.valid.data);
    }
    {
      const std::size_t len = rng.uniform_int(1, 30), n = rng.uniform_int(1, 8);
      const auto m = random_maps(len, n, rng);
      bool rs = true, wrs = true;
      for (double tau : taus) {
        rs = rs && as_spans(srg::gen_intervals_rs(m.relatedness, m.window, tau)) == rs_oracle(m.relatedness, n, tau);
        wrs = wrs && as_spans(srg::gen_intervals_wrs(m.relatedness, m.starting, m.ending, m.window, tau)) ==
                         wrs_oracle(m.relatedness, m.starting, m.ending, n, tau);
      }
      count("RS", rs);
      count("WRS", wrs);
      count("fusion weights", srg::binary_weight_map(m.starting, m.ending, m.window).data ==
                                  weight_oracle(m.starting, m.ending, n).data);
    }
    {
      const auto props = random_proposals(rng.uniform_int(0, 80), rng.uniform_int(2, 60), rng, trial % 2 == 0);
      const double thr = rng.uniform(0.1, 0.95);
      count("NMS", same_proposals(srg::nms(props, thr), nms_oracle(props, thr)));
    }
    {
      const std::size_t len = rng.uniform_int(2, 40), n = rng.uniform_int(1, 8);
      const Tensor o_r = random_tensor(Shape{len, 2 * n + 1}, rng, 0.0, 1.0);
      const auto props = random_proposals(rng.uniform_int(1, 30), len, rng);
      const auto want = boost_oracle(props, o_r, n);
      const auto boosted = srg::boost_scores(props, o_r, srg::NeighborWindow{n});
      bool ok = boosted.size() == props.size();
      for (std::size_t k = 0; ok && k < props.size(); ++k) {
        ok = std::any_of(boosted.begin(), boosted.end(), [&](const srg::Proposal& b) {
          return b.refined_t_s == props[k].refined_t_s && b.refined_t_e == props[k].refined_t_e &&
                 std::abs(b.score - want[k]) < kBoostTol;
        });
      }
      count("boost", ok);
    }
    {
      bool ok = true;
      for (int k = 0; k < 20; ++k) {
        double a = rng.uniform(0, 50), b = rng.uniform(0, 50), c = rng.uniform(0, 50), d = rng.uniform(0, 50);
        if (a > b) std::swap(a, b);
        if (c > d) std::swap(c, d);
        ok = ok && std::abs(srg::tiou(a, b, c, d) - tiou_oracle(a, b, c, d)) <= kOracleRecallTol;
      }
      count("tIoU", ok);
    }
    {
      const auto [props, gt] = random_corpus(rng, rng.uniform_int(1, 6));
      srg::MetricConfig cfg;
      cfg.tiou_thresholds = srg::tiou_range(0, 8);
      cfg.auc_an_max = 20;
      bool ok = true;
      for (std::size_t an : {1, 3, 10, 50}) {
        for (double t : cfg.tiou_thresholds) {
          ok = ok && std::abs(srg::recall_at(props, gt, t, an) - recall_oracle(props, gt, t, an)) <= kOracleRecallTol;
        }
        ok = ok && std::abs(srg::average_recall(props, gt, cfg, an) - ar_oracle(props, gt, cfg.tiou_thresholds, an)) <=
                       kOracleRecallTol;
      }
      ok = ok && std::abs(srg::auc_ar_an(props, gt, cfg) - auc_oracle(props, gt, cfg.tiou_thresholds, 20)) <=
                     100 * kOracleRecallTol;
      count("recall/AR/AUC", ok);
    }
  }
  Outcome out;
  for (const auto& [name, bad] : mismatches) {
    if (bad != 0) {
      out.pass = false;
      out.detail += name + " " + std::to_string(bad) + " mismatches; ";
    }
  }
  const double secs = seconds_since(t0);
  if (secs >= kOracleBudgetSec) out.pass = false;
  out.detail += std::to_string(mismatches.size()) + " components x " + std::to_string(kOracleInstances) +
                " instances, " + fmt("%.1f", secs) + " s";
  return out;
}

// ---- 3: head widths -------------------------------------------------------------------

Outcome head_widths() {
  Outcome out;
  Rng rng(3);
  const auto feats = random_features(6, 5, 24, rng);
  for (auto [n, wr, wb] : {std::tuple<std::size_t, std::size_t, std::size_t>{600, 1201, 602}, {540, 1081, 542}}) {
    srg::TignConfig cfg;
    cfg.appearance_dim = 6;
    cfg.motion_dim = 5;
    cfg.n_nbr = n;
    cfg.channels = 8;
    cfg.out_channels = 8;
    cfg.levels = {{3, 1}, {5, 3}};
    srg::Tign t = srg::Tign::create(cfg, 1);
    const auto maps = t.infer(feats);
    const bool ok = t.relatedness_head().out_channels() == wr && t.starting_head().out_channels() == wb &&
                    t.ending_head().out_channels() == wb && maps.relatedness.dim(1) == wr &&
                    maps.starting.dim(1) == wb && maps.ending.dim(1) == wb;
    out.pass = out.pass && ok;
    out.detail += "N=" + std::to_string(n) + ": " + std::to_string(maps.relatedness.dim(1)) + "/" +
                  std::to_string(maps.starting.dim(1)) + "/" + std::to_string(maps.ending.dim(1)) + "; ";
  }
  return out;
}

// ---- 4, 5: tiny pipeline --------------------------------------------------------------

double metric(const std::vector<srg::MetricRow>& rows, const std::string& name, const std::string& an) {
  for (const auto& r : rows)
    if (r.metric == name && r.an == an && r.tiou == "mean") return r.value;
  throw std::runtime_error("metric " + name + "@" + an + " missing");
}

struct TinyRun {
  srg::PipelineResult result;
  std::vector<std::vector<double>> recall_by_source;  // RS, WRS, both; per threshold
  double seconds = 0.0;
};

TinyRun tiny_run(const srg::RunConfig& config, const srg::Dataset& data, srg::Variant variant, bool with_sources) {
  const auto t0 = Clock::now();
  TinyRun run;
  srg::Tign tign = srg::make_tign(config, data, variant.tign);
  run.result.tign_history = srg::fit_tign(config, data, tign);
  srg::Tien tien = srg::make_tien(config, data, variant.tien);
  run.result.tien_history = srg::fit_tien(config, data, tign, tien);
  run.result.proposals = srg::propose(config, data, tign, tien, variant.boost, &run.result.test_intervals);
  run.result.metrics = srg::compute_metrics(run.result.proposals, data.test_gt, config.metrics);
  run.seconds = seconds_since(t0);
  if (with_sources) {
    for (srg::IntervalSources s : {srg::IntervalSources{true, false}, srg::IntervalSources{false, true},
                                   srg::IntervalSources{true, true}}) {
      const auto props = srg::intervals_as_proposals(srg::generate_intervals(config, data, tign, data.test_ids, s));
      std::vector<double> rec;
      for (double t : config.metrics.tiou_thresholds)
        rec.push_back(srg::recall_at(props, data.test_gt, t, kUnlimitedAn));
      run.recall_by_source.push_back(rec);
    }
  }
  return run;
}

Outcome superset(const TinyRun& run, const std::vector<double>& thresholds) {
  Outcome out;
  const auto& rs = run.recall_by_source[0];
  const auto& wrs = run.recall_by_source[1];
  const auto& both = run.recall_by_source[2];
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    if (both[k] < std::max(rs[k], wrs[k])) out.pass = false;
  }
  out.detail = "recall@0.50 RS " + fmt("%.3f", rs.front()) + " WRS " + fmt("%.3f", wrs.front()) + " union " +
               fmt("%.3f", both.front()) + "; @0.90 RS " + fmt("%.3f", rs.back()) + " WRS " + fmt("%.3f", wrs.back()) +
               " union " + fmt("%.3f", both.back()) + "; " + std::to_string(thresholds.size()) + " thresholds";
  return out;
}

Outcome learning_signal(const TinyRun& run, const srg::RunConfig& config, const srg::Dataset& data) {
  Outcome out;
  const auto baseline = srg::random_proposals(run.result.proposals, data, config.seed);
  const double ar = metric(run.result.metrics, "AR", "50");
  const double ar_rand = srg::average_recall(baseline, data.test_gt, config.metrics, 50);
  const auto& tign = run.result.tign_history.epoch_means;
  const double tign_drop = 1.0 - tign.back() / tign.front();
  const auto& tien = run.result.tien_history.step_losses;
  const std::size_t w = std::min(kTienLossWindow, tien.size());
  const double tien_first = srg::window_mean(tien, 0, w);
  const double tien_last = srg::window_mean(tien, tien.size() - w, w);
  const double tien_drop = 1.0 - tien_last / tien_first;
  out.pass = ar - ar_rand >= kBaselineMargin && tign_drop >= kLossDrop && tien_drop >= kLossDrop &&
             run.seconds < kPipelineBudgetSec;
  out.detail = "AR@50 " + fmt("%.3f", ar) + " vs random " + fmt("%.3f", ar_rand) + "; TIGN loss " +
               fmt("%.4f", tign.front()) + " -> " + fmt("%.4f", tign.back()) + " (" + fmt("%.0f", 100 * tign_drop) +
               "%); TIEN loss " + fmt("%.4f", tien_first) + " -> " + fmt("%.4f", tien_last) + " (" +
               fmt("%.0f", 100 * tien_drop) + "%); " + fmt("%.0f", run.seconds) + " s";
  return out;
}

// ---- 6: ablation direction ------------------------------------------------------------

Outcome ablation_direction(const TinyRun& seed1_pn) {
  Outcome out;
  std::size_t wins = 0;
  for (std::uint64_t seed : kAblationSeeds) {
    srg::RunConfig config = srg::RunConfig::profile_defaults("tiny");
    config.seed = seed;
    const srg::Dataset data = srg::synth_dataset(config);
    double pn = 0.0;
    if (seed == 1) {
      pn = metric(seed1_pn.result.metrics, "AR", "100");
    } else {
      progress("ablation seed " + std::to_string(seed) + " PN+PN");
      pn = metric(tiny_run(config, data, {srg::BlockKind::kPn, srg::BlockKind::kPn, false}, false).result.metrics,
                  "AR", "100");
    }
    progress("ablation seed " + std::to_string(seed) + " CM+CM");
    const double cm =
        metric(tiny_run(config, data, {srg::BlockKind::kCm, srg::BlockKind::kCm, false}, false).result.metrics, "AR",
               "100");
    wins += pn >= cm ? 1 : 0;
    out.detail += "seed " + std::to_string(seed) + " PN " + fmt("%.4f", pn) + " CM " + fmt("%.4f", cm) + "; ";
  }
  out.pass = 2 * wins > std::size(kAblationSeeds);
  out.detail += std::to_string(wins) + "/" + std::to_string(std::size(kAblationSeeds)) + " seeds favour PN";
  return out;
}

// ---- 7: NMS ---------------------------------------------------------------------------

Outcome nms_behaviour() {
  Outcome out;
  Rng rng(7);
  const auto props = random_proposals(kNmsProposals, 500, rng);
  const srg::NmsConfig thumos = srg::RunConfig::profile_defaults("paperish").nms;
  const double thr = thumos.threshold(props.size());
  const auto kept = srg::nms(props, thumos);
  double worst = 0.0;
  for (std::size_t i = 0; i < kept.size(); ++i)
    for (std::size_t j = i + 1; j < kept.size(); ++j)
      worst = std::max(worst, srg::tiou(kept[i].refined_t_s, kept[i].refined_t_e, kept[j].refined_t_s,
                                        kept[j].refined_t_e));
  const bool idempotent = same_proposals(srg::nms(kept, thumos), kept);
  out.pass = thr == kNmsThreshold && worst <= kNmsThreshold && idempotent;
  out.detail = std::to_string(props.size()) + " -> " + std::to_string(kept.size()) + " kept at " +
               fmt("%.2f", thr) + ", max pairwise tIoU " + fmt("%.4f", worst) +
               (idempotent ? ", idempotent" : ", NOT idempotent");
  return out;
}

// ---- 8: determinism -------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool cli_run(const std::string& cli, const fs::path& dir) {
  fs::remove_all(dir);
  for (const char* cmd : {"synth", "train-tign", "train-tien", "propose", "eval"}) {
    const std::string line = "\"" + cli + "\" " + cmd + " --profile tiny --seed 1 --out \"" + dir.string() +
                             "\" 2>> \"" + (dir.parent_path() / "cli.log").string() + "\"";
    if (std::system(line.c_str()) != 0) return false;
  }
  return true;
}

Outcome determinism(const std::string& cli, const fs::path& work) {
  Outcome out;
  if (cli.empty()) {
    out.pass = false;
    out.detail = "no --cli path given";
    return out;
  }
  fs::create_directories(work);
  const fs::path a = work / "run_a", b = work / "run_b";
  progress("determinism run A");
  const bool ok_a = cli_run(cli, a);
  progress("determinism run B");
  const bool ok_b = cli_run(cli, b);
  if (!ok_a || !ok_b) {
    out.pass = false;
    out.detail = "CLI run failed, see " + (work / "cli.log").string();
    return out;
  }
  const std::string pa = slurp(a / "proposals.tsv"), pb = slurp(b / "proposals.tsv");
  const std::string ma = slurp(a / "metrics.csv"), mb = slurp(b / "metrics.csv");
  out.pass = !pa.empty() && !ma.empty() && pa == pb && ma == mb;
  out.detail = "proposals.tsv " + std::to_string(pa.size()) + " bytes " + (pa == pb ? "identical" : "DIFFER") +
               ", metrics.csv " + std::to_string(ma.size()) + " bytes " + (ma == mb ? "identical" : "DIFFER");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string cli;
  std::string work = (fs::temp_directory_path() / "srg_acceptance").string();
  std::set<int> only;
  app.add_option("--cli", cli, "path to the srg executable");
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);

  srg::kernels::set_max_threads(1);
  const auto want = [&](int k) { return only.empty() || only.count(k) != 0; };
  int failed = 0;
  auto report = [&](int k, const char* name, const std::function<Outcome()>& fn) {
    if (!want(k)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", k, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient suite", gradient_suite);
  report(2, "oracle equivalence", oracle_suite);
  report(3, "head widths", head_widths);

  if (want(4) || want(5) || want(6)) {
    const srg::RunConfig config = srg::RunConfig::profile_defaults("tiny");
    progress("synthesizing tiny corpus");
    const srg::Dataset data = srg::synth_dataset(config);
    progress("tiny pipeline PN+PN seed 1");
    std::optional<TinyRun> run;
    std::string error;
    try {
      run = tiny_run(config, data, {srg::BlockKind::kPn, srg::BlockKind::kPn, false}, true);
    } catch (const std::exception& e) {
      error = e.what();
    }
    auto need_run = [&]() -> const TinyRun& {
      if (!run) throw std::runtime_error("tiny pipeline failed: " + error);
      return *run;
    };
    report(4, "interval source superset", [&] { return superset(need_run(), config.metrics.tiou_thresholds); });
    report(5, "end-to-end learning signal", [&] { return learning_signal(need_run(), config, data); });
    report(6, "ablation direction", [&] { return ablation_direction(need_run()); });
  }

  report(7, "NMS behaviour", nms_behaviour);
  report(8, "determinism", [&] { return determinism(cli, work); });
  return failed == 0 ? 0 : 1;
}
