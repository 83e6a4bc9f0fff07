#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "midgn/data_ingest.hpp"
#include "midgn/eval.hpp"
#include "midgn/model.hpp"
#include "midgn/synth.hpp"

namespace midgn {

enum class Command { train, evaluate, ablate, sweep_layers, sweep_intents, synth_check, stats, synth };

Command parse_command(const std::string& name);
std::string command_name(Command c);

struct ExperimentSpec {
  Command command = Command::train;
  std::optional<std::filesystem::path> dataset;  // directory with the three TSV files
  SynthConfig synth{};                           // used by synth / synth-check, or when no dataset is given
  ModelConfig model{};
  SplitRatios ratios{};
  std::uint64_t split_seed = 2022;
  std::vector<std::size_t> ks{20, 40, 80};
  std::size_t eval_every = 1;        // validation pass every n epochs (0: never)
  std::size_t checkpoint_every = 0;  // periodic checkpoints every n epochs (0: off)
  std::vector<std::uint64_t> seeds;  // ablate / sweeps: one run per seed; empty means {model.seed}
  std::optional<std::filesystem::path> checkpoint;  // evaluate
  std::filesystem::path out_dir = "runs/latest";

  nlohmann::json to_json() const;
  /// Applies a declarative config document (see README for the layout).
  void merge_json(const nlohmann::json& j);
};

struct FitResult {
  ParameterStore store;
  std::vector<EpochMetrics> epochs;
  double best_val_recall20 = -1.0;
  std::size_t best_epoch = 0;
  RankingReport test;
};

/// Loads or generates the dataset named by the spec.
Dataset resolve_dataset(const ExperimentSpec& spec);

/// Trains `cfg` on `split`, logging to `out_dir/train_log.jsonl` and writing
/// checkpoints there; evaluates the best-validation parameters on test.
FitResult fit(const Dataset& ds, const SplitDataset& split, const ModelConfig& cfg, const ExperimentSpec& spec,
              const std::filesystem::path& out_dir);

/// Runs one CLI command. Errors propagate as midgn::Error.
void run_experiment(const ExperimentSpec& spec);

struct AlignmentReport {
  double global = 0.0;    // user-item routing
  double local = 0.0;     // bundle-item routing
  double combined = 0.0;  // edge-weighted over both graphs
  double uniform_baseline = 0.0;
  nlohmann::json to_json() const;
};

/// Alignment of the last routing pass of each view with the planted labels.
AlignmentReport synthetic_alignment(const ParameterStore& store, const Dataset& ds, const SplitDataset& split,
                                    const GroundTruth& truth, const ModelConfig& cfg);

}  // namespace midgn
