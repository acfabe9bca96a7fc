#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "chanmt/checkpoint.hpp"
#include "chanmt/error.hpp"
#include "chanmt/experiment.hpp"
#include "chanmt/hash.hpp"

using namespace chanmt;

namespace {

constexpr int kConfigExit = 2;
constexpr int kStageExit = 3;
constexpr int kIntegrityExit = 4;

struct Common {
  std::string config;
  std::string preset = "desk";
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  int threads = 0;
  bool force = false;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON experiment config")->check(CLI::ExistingFile);
  app->add_option("--preset", c.preset, "Base preset when no config is given (desk, micro, smoke)");
  app->add_option("--seed", c.seeds, "Run only these seeds");
  app->add_option("--output-dir", c.output_dir, "Override the output directory");
  app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
  app->add_flag("--force", c.force, "Rerun stages even when their outputs are current");
  app->add_flag("-q,--quiet", c.quiet, "No progress lines");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig config = c.config.empty() ? preset(c.preset) : load_config(c.config);
  apply_env_overrides(config);
  if (!c.seeds.empty()) config.seeds = c.seeds;
  if (!c.output_dir.empty()) config.output_dir = c.output_dir;
  if (c.threads > 0) config.threads = c.threads;
  config.validate();
  return config;
}

int run(const Common& c, std::vector<Stage> stages) {
  const ExperimentConfig config = resolve(c);
  RunOptions options;
  options.stages = std::move(stages);
  options.force = c.force;
  options.log = c.quiet ? nullptr : &std::cerr;
  const auto outcome = run_experiment(config, options);
  if (!outcome.reports.empty()) {
    for (const auto& s : summarize(outcome.reports)) {
      std::cout << s.system << " total " << median(s.total) << " forward " << median(s.forward) << " reverse "
                << median(s.reverse) << " bleu " << median(s.bleu) << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy-channel translation toolkit"};
  app.require_subcommand(1);
  Common common;

  const std::vector<std::pair<std::string, std::vector<Stage>>> commands = {
      {"train", {Stage::kTrainTeachers}}, {"pseudo", {Stage::kPseudo}}, {"kd", {Stage::kKd}},
      {"il", {Stage::kIl}},               {"q", {Stage::kQ}},           {"decode", {Stage::kDecode}},
      {"eval", {Stage::kEval}},           {"bench", {Stage::kBench}},   {"run", all_stages()},
  };
  const std::map<std::string, std::string> help = {
      {"train", "Train the forward and reverse teachers"},
      {"pseudo", "Build BSR and beam pseudo-corpora"},
      {"kd", "Distil students from the pseudo-corpora"},
      {"il", "Imitation learning from the BSR targets"},
      {"q", "Q-learning on the channel reward"},
      {"decode", "Translate the test set with every available system"},
      {"eval", "Score translations and write the metrics report"},
      {"bench", "Measure decoding throughput"},
      {"run", "Run every stage in order"},
  };
  std::vector<std::pair<CLI::App*, std::vector<Stage>>> stage_apps;
  for (const auto& [name, stages] : commands) {
    auto* sub = app.add_subcommand(name, help.at(name));
    add_common(sub, common);
    stage_apps.emplace_back(sub, stages);
  }

  auto* show = app.add_subcommand("config", "Print the resolved config as JSON");
  add_common(show, common);

  std::string grid;
  std::string sweep_dir;
  auto* sw = app.add_subcommand("sweep", "Write one config per value of a hyperparameter grid");
  add_common(sw, common);
  sw->add_option("--grid", grid, "il_lr, il_p, q_lr, q_sync or q_accumulate")->required();
  sw->add_option("--write", sweep_dir, "Directory for the generated configs")->required();

  std::string ckpt_path;
  auto* inspect = app.add_subcommand("inspect", "Verify a checkpoint and print its header");
  inspect->add_option("path", ckpt_path)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    for (const auto& [sub, stages] : stage_apps) {
      if (sub->parsed()) return run(common, stages);
    }
    if (show->parsed()) {
      std::cout << to_json(resolve(common)).dump(2) << "\n";
      return 0;
    }
    if (sw->parsed()) {
      const auto base = resolve(common);
      std::filesystem::create_directories(sweep_dir);
      for (const auto& c : sweep(base, grid)) {
        const auto path = std::filesystem::path(sweep_dir) / (c.output_dir.filename().string() + ".json");
        save_config(path, c);
        std::cout << path.string() << "\n";
      }
      return 0;
    }
    if (inspect->parsed()) {
      const auto k = load_checkpoint(ckpt_path);
      std::cout << "role " << k.role << "\nconfig_hash " << hex64(k.config_hash) << "\nseed " << k.seed
                << "\nparameters " << k.model.parameter_count() << "\nchecksum " << hex64(k.model.checksum()) << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kIntegrityExit;
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return kStageExit;
  }
  return 0;
}
