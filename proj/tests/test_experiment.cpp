#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "midgn/error.hpp"
#include "midgn/experiment.hpp"

using namespace midgn;

namespace {

ExperimentSpec tiny(Command c, const std::string& out) {
  ExperimentSpec s;
  s.command = c;
  s.synth.n_users = 40;
  s.synth.n_bundles = 30;
  s.synth.items_per_intent = 15;
  s.synth.bundles_per_user = 4;
  s.synth.items_per_bundle = 6;
  s.synth.items_per_user = 8;
  s.model.dim = 8;
  s.model.intents = 2;
  s.model.layers = 1;
  s.model.epochs = 2;
  s.model.batch_size = 64;
  s.ks = {5, 10};
  s.out_dir = std::filesystem::temp_directory_path() / "midgn_experiment" / out;
  std::filesystem::remove_all(s.out_dir);
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("train writes the run artifacts") {
  auto spec = tiny(Command::train, "train");
  spec.checkpoint_every = 1;
  run_experiment(spec);
  const auto& d = spec.out_dir;
  for (const char* f : {"run.json", "train_log.jsonl", "best.ckpt", "last.ckpt", "epoch_1.ckpt", "report.json",
                        "report.csv"})
    CHECK_MESSAGE(std::filesystem::exists(d / f), f);
  CHECK(line_count(d / "train_log.jsonl") == 2);
  std::ifstream log_in(d / "train_log.jsonl");
  std::string first;
  std::getline(log_in, first);
  const auto log = nlohmann::json::parse(first);
  CHECK(log.contains("bpr_loss"));
  CHECK(log.contains("contrast_loss"));
  CHECK(log.contains("wall_time"));

  const auto run = nlohmann::json::parse(slurp(d / "run.json"));
  ExperimentSpec back;
  back.merge_json(run);
  CHECK(back.to_json() == spec.to_json());
}

TEST_CASE("evaluate is a pure function of the checkpoint") {
  auto train = tiny(Command::train, "eval_src");
  run_experiment(train);
  auto a = tiny(Command::evaluate, "eval_a");
  a.checkpoint = train.out_dir / "best.ckpt";
  a.model = {};  // architecture comes from the checkpoint
  a.synth = {};  // and so does the data
  run_experiment(a);
  auto b = tiny(Command::evaluate, "eval_b");
  b.checkpoint = a.checkpoint;
  run_experiment(b);
  CHECK(slurp(a.out_dir / "report.json") == slurp(b.out_dir / "report.json"));
  const auto ra = nlohmann::json::parse(slurp(a.out_dir / "report.json"));
  const auto rt = nlohmann::json::parse(slurp(train.out_dir / "report.json"));
  CHECK(ra["recall@5"] == rt["recall@5"]);
}

TEST_CASE("evaluate without a checkpoint is a config error") {
  CHECK_THROWS_AS(run_experiment(tiny(Command::evaluate, "eval_none")), ConfigError);
}

TEST_CASE("ablate produces one row per variant") {
  auto spec = tiny(Command::ablate, "ablate");
  spec.model.epochs = 1;
  run_experiment(spec);
  std::ifstream in(spec.out_dir / "ablation.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("dataset,variant,seed,recall@5,ndcg@5", 0) == 0);
  std::vector<std::string> labels;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.at(2) != "mean") labels.push_back(fields[1]);
  }
  CHECK(labels == std::vector<std::string>{"full", "w/o contra.", "w/o local", "w/o global"});
}

TEST_CASE("synth-check writes an alignment report") {
  auto spec = tiny(Command::synth_check, "synth_check");
  run_experiment(spec);
  const auto j = nlohmann::json::parse(slurp(spec.out_dir / "alignment.json"));
  for (const char* k : {"global", "local", "combined", "uniform_baseline"}) {
    CHECK(j[k].get<double>() >= 0.0);
    CHECK(j[k].get<double>() <= 1.0);
  }
  CHECK(std::filesystem::exists(spec.out_dir / "data" / "ground_truth.json"));
}

TEST_CASE("ExperimentSpec: config errors") {
  ExperimentSpec s;
  CHECK_THROWS_AS(s.merge_json({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(s.merge_json({{"ks", "twenty"}}), ConfigError);
  CHECK_THROWS_AS(s.merge_json(nlohmann::json::array()), ConfigError);
  CHECK_THROWS_AS(parse_command("fly"), ConfigError);
  CHECK(command_name(parse_command("sweep-layers")) == "sweep-layers");
}

TEST_CASE("stats on a written dataset") {
  auto gen = tiny(Command::synth, "stats_src");
  run_experiment(gen);
  auto spec = tiny(Command::stats, "stats");
  spec.dataset = gen.out_dir / "data";
  run_experiment(spec);
  const auto j = nlohmann::json::parse(slurp(spec.out_dir / "stats.json"));
  CHECK(j["users"] == 40);
}
