#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "srg/binary_io.hpp"
#include "srg/pipeline.hpp"
#include "support.hpp"

using namespace srgtest;
namespace fs = std::filesystem;

namespace {

srg::RunConfig mini_config() {
  srg::RunConfig c = srg::RunConfig::profile_defaults("tiny");
  c.apply_text(R"(
synth.train_videos = 6
synth.test_videos = 3
synth.min_length = 40
synth.max_length = 60
synth.max_duration = 12
tign.n_nbr = 8
tign.channels = 8
tign.out_channels = 8
tign.levels = 3:1,5:3
tign.epochs = 2
tien.channels = 8
tien.out_channels = 8
tien.context = 2
tien.fixed_length = 16
tien.steps = 10
tien.batch_size = 8
)",
               "mini");
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("profiles") {
    const auto tiny = srg::RunConfig::profile_defaults("tiny");
    CHECK(tiny.tign.n_nbr == 32);
    const auto big = srg::RunConfig::profile_defaults("paperish");
    CHECK(big.tign.n_nbr == 600);
    CHECK(big.tien.context == 20);
    CHECK(big.tien.fixed_length == 128);
    CHECK(big.tien_schedule.batch_size == 256);
    CHECK(big.tien_schedule.steps == 10000);
    CHECK(big.tien_schedule.alpha == doctest::Approx(0.1));
    CHECK(big.tign_lr.at(0) == doctest::Approx(1e-4));
    CHECK(big.tign_lr.at(10) == doctest::Approx(9.6e-5));
    CHECK(big.tien_schedule.lr.at(10) == doctest::Approx(9.6e-5));
    CHECK(big.nms.threshold(1) == doctest::Approx(0.83));
    CHECK(big.metrics.an_values == std::vector<std::size_t>{1, 5, 10, 50, 100});
    CHECK_THROWS_AS(srg::RunConfig::profile_defaults("huge"), srg::ConfigError);
  }

  TEST_CASE("config text round-trips") {
    for (const char* name : {"tiny", "paperish"}) {
      auto c = srg::RunConfig::profile_defaults(name);
      c.set("boost", "on");
      c.set("ablate.blocks", "PN+CM,CM+CM");
      c.set("eval.an_mode", "corpus");
      srg::RunConfig d = srg::RunConfig::profile_defaults("tiny");
      d.apply_text(c.to_text(), "dump");
      CHECK(d.to_text() == c.to_text());
    }
  }

  TEST_CASE("config errors carry the line number") {
    srg::RunConfig c;
    try {
      c.apply_text("seed = 3\n# comment\n\ntign.bogus = 1\n", "run.conf");
      FAIL("expected ConfigError");
    } catch (const srg::ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("run.conf:4") != std::string::npos);
      CHECK(msg.find("tign.bogus") != std::string::npos);
    }
    CHECK_THROWS_AS(c.apply_text("seed 3\n", "x"), srg::ConfigError);
    CHECK_THROWS_AS(c.set("tign.epochs", "many"), srg::ConfigError);
    CHECK_THROWS_AS(c.set("tign.block", "XX"), srg::ConfigError);
    srg::RunConfig taus = srg::RunConfig::profile_defaults("tiny");
    taus.set("intervals.taus", "0.2,1.3");
    CHECK_THROWS_AS(taus.validate(), srg::ConfigError);
    srg::RunConfig bad = srg::RunConfig::profile_defaults("tiny");
    bad.synth.min_length = 200;
    CHECK_THROWS_AS(bad.validate(), srg::ConfigError);
    CHECK(std::find(srg::RunConfig::keys().begin(), srg::RunConfig::keys().end(), "nms.threshold") !=
          srg::RunConfig::keys().end());
  }

  TEST_CASE("config files name their profile") {
    const fs::path dir = fresh_dir("srg_test_conf");
    fs::create_directories(dir);
    srg::io::write_file_atomic(dir / "a.conf", "tien.steps = 7\nprofile = paperish\n");
    const auto c = srg::load_run_config(dir / "a.conf");
    CHECK(c.profile == "paperish");
    CHECK(c.tign.n_nbr == 600);
    CHECK(c.tien_schedule.steps == 7);
    fs::remove_all(dir);
  }

  TEST_CASE("datasets round-trip through disk") {
    const auto cfg = mini_config();
    const srg::Dataset data = srg::synth_dataset(cfg);
    CHECK(data.train_ids.size() == 6);
    CHECK(data.test_ids.size() == 3);
    const fs::path dir = fresh_dir("srg_test_dataset");
    srg::save_dataset(dir, data);
    const srg::Dataset back = srg::load_dataset(dir);
    CHECK(back.train_ids == data.train_ids);
    CHECK(back.test_gt == data.test_gt);
    CHECK(back.features_of(data.test_ids[0]).motion.data == data.features_of(data.test_ids[0]).motion.data);
    // A feature file whose length disagrees with the manifest is rejected.
    fs::copy_file(dir / "features" / (data.train_ids[0] + ".srgf"), dir / "features" / (data.train_ids[1] + ".srgf"),
                  fs::copy_options::overwrite_existing);
    if (data.features_of(data.train_ids[0]).length() != data.features_of(data.train_ids[1]).length()) {
      CHECK_THROWS(srg::load_dataset(dir));
    }
    fs::remove_all(dir);
    CHECK_THROWS(srg::load_dataset(dir));
  }

  TEST_CASE("random baseline keeps the proposal count") {
    const auto cfg = mini_config();
    const auto data = srg::synth_dataset(cfg);
    srg::ProposalMap like;
    Rng rng(81);
    for (const auto& id : data.test_ids) like[id] = random_proposals(17, data.features_of(id).length(), rng);
    const auto rnd = srg::random_proposals(like, data, 5);
    for (const auto& [id, list] : rnd) {
      CHECK(list.size() == 17);
      for (std::size_t k = 0; k < list.size(); ++k) {
        CHECK(list[k].refined_t_s <= list[k].refined_t_e);
        CHECK(list[k].refined_t_e <= static_cast<double>(data.features_of(id).length() - 1));
        if (k > 0) CHECK(list[k - 1].score >= list[k].score);
      }
    }
    CHECK(srg::encode_proposals(rnd) == srg::encode_proposals(srg::random_proposals(like, data, 5)));
  }

  TEST_CASE("evaluating the ground truth itself gives full recall") {
    const fs::path root = fresh_dir("srg_test_ws_gt");
    const srg::Workspace ws{root, {}};
    const auto cfg = mini_config();
    srg::cmd_synth(cfg, ws);
    const auto data = srg::load_dataset(ws.dataset());
    srg::ProposalMap props;
    for (const auto& [id, list] : data.test_gt)
      for (const auto& g : list)
        props[id].push_back(make_proposal(static_cast<double>(g.start), static_cast<double>(g.end), 1.0));
    srg::io::write_file_atomic(ws.proposals(), srg::encode_proposals(props));
    srg::cmd_eval(cfg, ws);
    const std::string csv = srg::io::read_file(ws.metrics());
    CHECK(csv.find("AR,100,mean,1.000000") != std::string::npos);
    fs::remove_all(root);
  }

  TEST_CASE("commands report missing inputs") {
    const fs::path root = fresh_dir("srg_test_ws_missing");
    const srg::Workspace ws{root, {}};
    const auto cfg = mini_config();
    try {
      srg::cmd_propose(cfg, ws);
      FAIL("expected ConfigError");
    } catch (const srg::ConfigError& e) {
      CHECK(std::string(e.what()).find("train-tign") != std::string::npos);
    }
    CHECK_THROWS_AS(srg::cmd_eval(cfg, ws), srg::ConfigError);
    CHECK_THROWS_AS(srg::cmd_train_tien(cfg, ws), srg::ConfigError);
    fs::remove_all(root);
  }

  TEST_CASE("commands chain end to end") {
    const fs::path root = fresh_dir("srg_test_ws_chain");
    const srg::Workspace ws{root, {}};
    auto cfg = mini_config();
    cfg.dump_maps = true;
    std::vector<std::string> lines;
    const srg::Logger log = [&](const std::string& s) { lines.push_back(s); };
    srg::cmd_synth(cfg, ws, log);
    srg::cmd_train_tign(cfg, ws, log);
    srg::cmd_train_tien(cfg, ws, log);
    srg::cmd_propose(cfg, ws, log);
    srg::cmd_eval(cfg, ws, log);
    for (const auto& p : {ws.tign_checkpoint(), ws.tien_checkpoint(), ws.intervals(), ws.proposals(), ws.metrics(),
                          root / "run.conf", root / "tign_loss.csv", root / "tien_loss.csv"}) {
      CHECK_MESSAGE(fs::exists(p), p.string());
    }
    const auto data = srg::load_dataset(ws.dataset());
    for (const auto& id : data.test_ids) {
      const auto maps = srg::decode_score_maps(srg::io::read_file(ws.maps_dir() / (id + ".srgm")));
      CHECK(maps.length() == data.features_of(id).length());
    }
    const auto props = srg::parse_proposals(srg::io::read_file(ws.proposals()));
    for (const auto& [id, list] : props) {
      for (std::size_t i = 0; i < list.size(); ++i)
        for (std::size_t j = i + 1; j < list.size(); ++j)
          CHECK(srg::tiou(list[i].refined_t_s, list[i].refined_t_e, list[j].refined_t_s, list[j].refined_t_e) <=
                0.83 + 1e-4);
    }
    CHECK_FALSE(lines.empty());
    fs::remove_all(root);
  }

  TEST_CASE("ablation writes one labelled block per variant") {
    const fs::path root = fresh_dir("srg_test_ws_ablate");
    const srg::Workspace ws{root, {}};
    auto cfg = mini_config();
    cfg.set("ablate.blocks", "PN+PN,CM+CM");
    cfg.set("ablate.boost", "both");
    srg::cmd_synth(cfg, ws);
    srg::cmd_ablate(cfg, ws);
    const std::string csv = srg::io::read_file(ws.ablation());
    for (const char* label : {"TIGN_PN+TIEN_PN boost=off", "TIGN_PN+TIEN_PN boost=on", "TIGN_CM+TIEN_CM boost=off",
                              "TIGN_CM+TIEN_CM boost=on"}) {
      CHECK_MESSAGE(csv.find(std::string("# variant: ") + label) != std::string::npos, label);
    }
    fs::remove_all(root);
  }
}
