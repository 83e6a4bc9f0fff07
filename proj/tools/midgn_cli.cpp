// Command-line entry point: train / evaluate / ablate / sweeps / synthetic checks.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "midgn/error.hpp"
#include "midgn/experiment.hpp"

namespace {

struct Flags {
  std::optional<std::string> dataset, config, ablate, checkpoint, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> intents, layers, routing_iters, epochs, batch_size;
  std::optional<double> lr, lambda, tau;
};

void add_model_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--dataset", f.dataset, "Directory with user_bundle.txt, bundle_item.txt, user_item.txt");
  cmd->add_option("--config", f.config, "JSON config file; flags override its values");
  cmd->add_option("--seed", f.seed, "Model seed");
  cmd->add_option("--intents", f.intents, "Intent count K");
  cmd->add_option("--layers", f.layers, "Disentangle layers L");
  cmd->add_option("--routing-iters", f.routing_iters, "Routing iterations T per layer");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--lambda", f.lambda, "L2 coefficient");
  cmd->add_option("--tau", f.tau, "InfoNCE temperature");
  cmd->add_option("--epochs", f.epochs, "Training epochs");
  cmd->add_option("--batch-size", f.batch_size, "Triples per mini-batch");
  cmd->add_option("--ablate", f.ablate, "Ablate one component")->check(CLI::IsMember({"contrast", "local", "global"}));
  cmd->add_option("--out", f.out, "Output directory");
}

midgn::ExperimentSpec resolve(const std::string& command, const Flags& f, const std::optional<std::string>& ckpt) {
  midgn::ExperimentSpec spec;
  spec.command = midgn::parse_command(command);
  if (f.config) {
    std::ifstream in(*f.config);
    if (!in) throw midgn::IoError("cannot open config " + *f.config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& ex) {
      throw midgn::ConfigError(std::string("config is not valid JSON: ") + ex.what());
    }
    spec.merge_json(j);
  }
  if (f.dataset) spec.dataset = *f.dataset;
  if (f.seed) spec.model.seed = *f.seed;
  if (f.intents) spec.model.intents = *f.intents;
  if (f.layers) spec.model.layers = *f.layers;
  if (f.routing_iters) spec.model.routing_iters = *f.routing_iters;
  if (f.lr) spec.model.optimizer.learning_rate = *f.lr;
  if (f.lambda) spec.model.optimizer.l2 = *f.lambda;
  if (f.tau) spec.model.temperature = *f.tau;
  if (f.epochs) spec.model.epochs = *f.epochs;
  if (f.batch_size) spec.model.batch_size = *f.batch_size;
  if (f.ablate) {
    spec.model.no_contrast = *f.ablate == "contrast";
    spec.model.no_local = *f.ablate == "local";
    spec.model.no_global = *f.ablate == "global";
  }
  if (ckpt) spec.checkpoint = *ckpt;
  if (f.out) spec.out_dir = *f.out;
  if (spec.dataset && !std::filesystem::exists(*spec.dataset)) {
    throw midgn::IoError("dataset path does not exist: " + spec.dataset->string());
  }
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bundle recommender with intent-disentangled graph views"};
  app.require_subcommand(1);
  Flags flags;
  std::optional<std::string> checkpoint;
  for (const char* name : {"train", "evaluate", "ablate", "sweep-layers", "sweep-intents", "synth-check", "stats", "synth"}) {
    auto* cmd = app.add_subcommand(name);
    add_model_flags(cmd, flags);
    if (std::string(name) == "evaluate") cmd->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  }
  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const auto spec = resolve(command, flags, checkpoint);
    midgn::run_experiment(spec);
  } catch (const midgn::Error& ex) {
    std::cerr << nlohmann::json{{"error", ex.kind()}, {"message", ex.what()}}.dump() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << nlohmann::json{{"error", "internal"}, {"message", ex.what()}}.dump() << '\n';
    return 3;
  }
  return 0;
}
