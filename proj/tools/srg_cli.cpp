#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "srg/kernels.hpp"
#include "srg/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "work";
  std::string profile;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "key=value run configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "seed for every random stream");
  cmd->add_option("--out", o.out, "workspace directory")->capture_default_str();
  cmd->add_option("--profile", o.profile, "built-in profile: tiny or paperish");
  cmd->add_option("--set", o.overrides, "extra key=value overrides, applied last");
}

srg::RunConfig resolve_config(const CommonOptions& o) {
  const std::string profile = o.profile.empty() ? "tiny" : o.profile;
  srg::RunConfig c = o.config.empty() ? srg::RunConfig::profile_defaults(profile)
                                      : srg::load_run_config(o.config, profile);
  if (!o.profile.empty() && !o.config.empty() && c.profile != o.profile) {
    throw srg::ConfigError("--profile " + o.profile + " conflicts with profile " + c.profile + " in " + o.config);
  }
  if (o.seed) c.seed = *o.seed;
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw srg::ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!c.dataset.empty() && !fs::exists(c.dataset)) {
    throw srg::ConfigError("dataset path does not exist: " + c.dataset.string());
  }
  return c;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void apply_thread_cap() {
  if (const char* env = std::getenv("SRG_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) throw srg::ConfigError("SRG_THREADS must be a positive integer");
    srg::kernels::set_max_threads(static_cast<int>(n));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Snippet relatedness-based temporal action proposal generation"};
  app.require_subcommand(1);

  using Command = void (*)(const srg::RunConfig&, const srg::Workspace&, const srg::Logger&);
  struct Entry {
    const char* name;
    const char* help;
    Command run;
  };
  const Entry entries[] = {
      {"synth", "generate a synthetic dataset into <out>/data", srg::cmd_synth},
      {"train-tign", "train the interval generation network", srg::cmd_train_tign},
      {"train-tien", "train the interval evaluation network", srg::cmd_train_tien},
      {"propose", "write <out>/proposals.tsv and <out>/intervals.tsv", srg::cmd_propose},
      {"eval", "write <out>/metrics.csv", srg::cmd_eval},
      {"ablate", "train and evaluate block/boost variants into <out>/ablation.csv", srg::cmd_ablate},
  };
  CommonOptions opts;
  std::vector<std::pair<CLI::App*, const Entry*>> commands;
  for (const auto& e : entries) commands.emplace_back(app.add_subcommand(e.name, e.help), &e);
  for (auto& [cmd, e] : commands) add_common(cmd, opts);

  CLI11_PARSE(app, argc, argv);

  for (auto& [cmd, e] : commands) {
    if (!cmd->parsed()) continue;
    try {
      apply_thread_cap();
      const srg::RunConfig config = resolve_config(opts);
      const srg::Workspace ws{opts.out, config.dataset};
      fs::create_directories(ws.root);
      std::ofstream sidecar(ws.root / (std::string(e->name) + ".log"), std::ios::app);
      const srg::Logger log = [&](const std::string& msg) {
        std::cerr << msg << '\n';
        sidecar << timestamp() << ' ' << msg << '\n' << std::flush;
      };
      log(std::string(e->name) + ": profile " + config.profile + ", seed " + std::to_string(config.seed) +
          ", threads " + std::to_string(srg::kernels::max_threads()));
      const auto t0 = std::chrono::steady_clock::now();
      e->run(config, ws, log);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log(std::string(e->name) + ": done in " + std::to_string(secs) + " s");
      return 0;
    } catch (const srg::ConfigError& ex) {
      std::cerr << "srg " << e->name << ": configuration error: " << ex.what() << '\n';
      return 2;
    } catch (const std::exception& ex) {
      std::cerr << "srg " << e->name << ": error: " << ex.what() << '\n';
      return 1;
    }
  }
  return 1;
}
