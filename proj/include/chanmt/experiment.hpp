#pragma once

// Experiment configuration and the staged pipeline: teachers, pseudo
// corpora, distillation, imitation learning, Q-learning, decoding,
// evaluation and throughput benchmarks.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chanmt/amortize.hpp"
#include "chanmt/corpus.hpp"
#include "chanmt/eval.hpp"
#include "chanmt/qlearn.hpp"

namespace chanmt {

enum class Stage { kTrainTeachers, kPseudo, kKd, kIl, kQ, kDecode, kEval, kBench };

std::string to_string(Stage stage);
/// Accepts the names of to_string plus the subcommand aliases "train".
Stage parse_stage(std::string_view name);
/// Every stage in pipeline order (bench precedes eval).
std::vector<Stage> all_stages();

struct Architecture {
  int embed_dim = 64;
  int hidden_dim = 128;
  int layers = 2;
  int heads = 2;
  int max_positions = 64;

  bool operator==(const Architecture&) const = default;
};

struct ExperimentConfig {
  std::string name = "desk";
  TaskSpec task;
  std::size_t train_size = 4000;
  std::size_t dev_size = 400;
  std::size_t test_size = 400;
  Architecture model;
  TrainOptions teacher;
  /// Reranking beam and reverse weight shared by BSR decoding, the BSR
  /// pseudo corpus and the reward reported for every system.
  int bsr_beam = 16;
  double gamma = 0.9;
  /// Beam of the plain beam-search system and of the beam pseudo corpus.
  int beam = 5;
  TrainOptions kd;
  ILConfig il;
  QConfig q;
  /// "pf" starts Q from the forward translator, "random" from a fresh model.
  std::string q_init = "pf";
  std::size_t q_dev_size = 100;
  /// Decoding cap for every system (0 = the default length cap).
  int max_length = 0;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::filesystem::path output_dir = "runs/desk";
  int threads = 1;
  SpeedOptions speed;
  /// BSR beams timed by the bench stage besides bsr_beam.
  std::vector<int> bench_bsr_beams{4, 8};

  /// Throws ConfigError listing every invalid field.
  void validate() const;
  /// Hash of the serialized config without seeds, output_dir and threads.
  std::uint64_t hash() const;
  bool operator==(const ExperimentConfig& other) const;
};

/// Named presets: "desk" (default), "micro" (enumerable task), "smoke".
ExperimentConfig preset(std::string_view name);

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys keep their preset defaults ("preset" selects the base, desk
/// by default). Unknown keys and type errors throw ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& config);

/// Hyperparameter sweep grids: "il_lr", "il_p", "q_lr", "q_sync", "q_accumulate".
std::vector<std::string> sweep_grids();
/// One config per grid value, each writing under output_dir/<grid>-<value>.
std::vector<ExperimentConfig> sweep(const ExperimentConfig& base, std::string_view grid);

/// Applies CHANMT_SEEDS (comma-separated) and CHANMT_OUTPUT_DIR when set.
void apply_env_overrides(ExperimentConfig& config);

// ---------------------------------------------------------------------------

/// System names in report order.
std::vector<std::string> system_names();

struct RunOptions {
  std::vector<Stage> stages = all_stages();
  bool force = false;
  /// Progress lines; null silences them.
  std::ostream* log = nullptr;
};

struct StageRecord {
  std::uint64_t seed = 0;
  Stage stage = Stage::kTrainTeachers;
  bool skipped = false;
  double seconds = 0.0;
};

struct RunOutcome {
  std::vector<std::uint64_t> seeds;
  /// One report per seed (present when the eval stage ran or was skipped).
  std::vector<MetricsReport> reports;
  std::vector<StageRecord> stages;
};

/// A stage could not run or failed; the manifest records the failure.
class StageError : public Error {
 public:
  using Error::Error;
};

/// Runs the requested stages for every seed. Stages whose recorded inputs
/// and outputs are unchanged are skipped unless forced.
RunOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

struct SeedPaths {
  std::filesystem::path reports;
  std::filesystem::path checkpoints;
  std::filesystem::path translations;
  std::filesystem::path corpora;
};

SeedPaths seed_paths(const ExperimentConfig& config, std::uint64_t seed);

/// Persisted decode output of one system.
struct TranslationFile {
  std::string system;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<std::string> model_checksums;
  nlohmann::json decode;
  std::vector<TokenSeq> sources;
  std::vector<TokenSeq> translations;
};

void save_translations(const std::filesystem::path& path, const TranslationFile& file);
TranslationFile load_translations(const std::filesystem::path& path);

/// Medians across seeds of per-seed system means, with across-seed spread.
struct SeedSummary {
  std::string system;
  std::vector<double> forward;
  std::vector<double> reverse;
  std::vector<double> total;
  std::vector<double> bleu;
};

std::vector<SeedSummary> summarize(std::span<const MetricsReport> reports);
void write_summary(const std::filesystem::path& path, std::span<const SeedSummary> summary);

}  // namespace chanmt
