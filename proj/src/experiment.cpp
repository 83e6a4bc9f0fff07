#include "midgn/experiment.hpp"

#include <fstream>
#include <map>

#include <spdlog/spdlog.h>

#include "midgn/error.hpp"
#include "midgn/parallel.hpp"

namespace midgn {

namespace {

const std::map<std::string, Command>& command_table() {
  static const std::map<std::string, Command> t{
      {"train", Command::train},
      {"evaluate", Command::evaluate},
      {"ablate", Command::ablate},
      {"sweep-layers", Command::sweep_layers},
      {"sweep-intents", Command::sweep_intents},
      {"synth-check", Command::synth_check},
      {"stats", Command::stats},
      {"synth", Command::synth},
  };
  return t;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void prepare_out(const ExperimentSpec& spec) {
  std::error_code ec;
  std::filesystem::create_directories(spec.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + spec.out_dir.string() + ": " + ec.message());
  nlohmann::json run = spec.to_json();
  run["threads"] = thread_count();
  write_json(spec.out_dir / "run.json", run);
}

nlohmann::json checkpoint_meta(const ExperimentSpec& spec, const ModelConfig& cfg, std::size_t epoch) {
  return {{"model", cfg.to_json()},
          {"split_seed", spec.split_seed},
          {"ratios", {spec.ratios.train, spec.ratios.val, spec.ratios.test}},
          {"epoch", epoch},
          {"dataset", spec.dataset ? spec.dataset->string() : ""},
          {"synth", spec.synth.to_json()}};
}

std::vector<std::uint64_t> seeds_of(const ExperimentSpec& spec) {
  return spec.seeds.empty() ? std::vector<std::uint64_t>{spec.model.seed} : spec.seeds;
}

std::size_t primary_k(const ExperimentSpec& spec) {
  for (std::size_t k : spec.ks)
    if (k == 20) return 20;
  return spec.ks.front();
}

}  // namespace

Command parse_command(const std::string& name) {
  const auto& t = command_table();
  const auto it = t.find(name);
  if (it == t.end()) throw ConfigError("unknown command '" + name + "'");
  return it->second;
}

std::string command_name(Command c) {
  for (const auto& [name, cmd] : command_table())
    if (cmd == c) return name;
  return "?";
}

nlohmann::json ExperimentSpec::to_json() const {
  nlohmann::json j;
  j["command"] = command_name(command);
  j["dataset"] = dataset ? dataset->string() : "";
  j["synth"] = synth.to_json();
  j["model"] = model.to_json();
  j["split"] = {{"train", ratios.train}, {"val", ratios.val}, {"test", ratios.test}, {"seed", split_seed}};
  j["ks"] = ks;
  j["eval_every"] = eval_every;
  j["checkpoint_every"] = checkpoint_every;
  j["seeds"] = seeds;
  j["checkpoint"] = checkpoint ? checkpoint->string() : "";
  j["out"] = out_dir.string();
  return j;
}

void ExperimentSpec::merge_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, val] : j.items()) {
      if (key == "model") model.merge_json(val);
      else if (key == "synth") synth.merge_json(val);
      else if (key == "split") {
        if (val.contains("train")) ratios.train = val["train"].get<double>();
        if (val.contains("val")) ratios.val = val["val"].get<double>();
        if (val.contains("test")) ratios.test = val["test"].get<double>();
        if (val.contains("seed")) split_seed = val["seed"].get<std::uint64_t>();
      } else if (key == "dataset") {
        const auto s = val.get<std::string>();
        if (!s.empty()) dataset = s;
      } else if (key == "ks") ks = val.get<std::vector<std::size_t>>();
      else if (key == "eval_every") eval_every = val.get<std::size_t>();
      else if (key == "checkpoint_every") checkpoint_every = val.get<std::size_t>();
      else if (key == "seeds") seeds = val.get<std::vector<std::uint64_t>>();
      else if (key == "checkpoint") {
        const auto s = val.get<std::string>();
        if (!s.empty()) checkpoint = s;
      } else if (key == "out") out_dir = val.get<std::string>();
      else if (key == "command" || key == "threads") continue;  // informational in run.json
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("bad config value: ") + ex.what());
  }
}

Dataset resolve_dataset(const ExperimentSpec& spec) {
  if (spec.dataset) return load_dataset(*spec.dataset);
  return generate_synthetic(spec.synth).dataset;
}

FitResult fit(const Dataset& ds, const SplitDataset& split, const ModelConfig& cfg, const ExperimentSpec& spec,
              const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const auto graphs = ModelGraphs::build(ds, split.train);
  FitResult res;
  res.store = init_parameters(ds.n_users(), ds.n_bundles(), ds.n_items(), cfg.dim, cfg.intents, cfg.seed, cfg.init);

  std::ofstream log(out_dir / "train_log.jsonl");
  const auto best_path = out_dir / "best.ckpt";
  const std::size_t k_main = primary_k(spec);
  bool have_best = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto m = train_epoch(res.store, graphs, split, cfg, epoch, out_dir);
    nlohmann::json line{{"epoch", epoch},
                        {"bpr_loss", m.bpr_loss},
                        {"contrast_loss", m.contrast_loss},
                        {"wall_time", m.wall_time}};
    const bool do_eval = spec.eval_every > 0 && split.val.nnz() > 0 &&
                         ((epoch + 1) % spec.eval_every == 0 || epoch + 1 == cfg.epochs);
    if (do_eval) {
      const auto fwd = full_forward(res.store, graphs, cfg);
      const auto val = evaluate(fwd, split, {k_main}, EvalTarget::validation);
      const double r = val.recall.at(k_main);
      line["val_recall@" + std::to_string(k_main)] = r;
      if (r > res.best_val_recall20) {
        res.best_val_recall20 = r;
        res.best_epoch = epoch;
        save_checkpoint(best_path, res.store, checkpoint_meta(spec, cfg, epoch));
        have_best = true;
      }
    }
    log << line.dump() << '\n' << std::flush;
    spdlog::info("[{}] epoch {} bpr {:.5f} contrast {:.5f} ({:.1f}s){}", cfg.variant_name(), epoch, m.bpr_loss,
                 m.contrast_loss, m.wall_time,
                 do_eval ? fmt::format(" val recall@{} {:.4f}", k_main, line["val_recall@" + std::to_string(k_main)].get<double>())
                         : std::string());
    if (spec.checkpoint_every > 0 && (epoch + 1) % spec.checkpoint_every == 0) {
      save_checkpoint(out_dir / ("epoch_" + std::to_string(epoch + 1) + ".ckpt"), res.store,
                      checkpoint_meta(spec, cfg, epoch));
    }
    res.epochs.push_back(m);
  }
  const auto last_meta = checkpoint_meta(spec, cfg, cfg.epochs == 0 ? 0 : cfg.epochs - 1);
  save_checkpoint(out_dir / "last.ckpt", res.store, last_meta);
  // no validation pass ran: the final parameters stand in as best
  if (!have_best) save_checkpoint(best_path, res.store, last_meta);

  const ParameterStore final_params = have_best ? load_checkpoint(best_path) : res.store;
  const auto fwd = full_forward(final_params, graphs, cfg);
  res.test = evaluate(fwd, split, spec.ks, EvalTarget::test);
  write_json(out_dir / "report.json", res.test.to_json());
  write_text(out_dir / "report.csv", res.test.to_csv(ds.name, cfg.variant_name()));
  return res;
}

AlignmentReport synthetic_alignment(const ParameterStore& store, const Dataset& ds, const SplitDataset& split,
                                    const GroundTruth& truth, const ModelConfig& cfg) {
  const auto graphs = ModelGraphs::build(ds, split.train);
  const auto fwd = full_forward(store, graphs, cfg);
  AlignmentReport rep;
  rep.uniform_baseline = 1.0 / static_cast<double>(cfg.intents);
  const std::size_t T = truth.item_intent.empty()
                            ? 1
                            : static_cast<std::size_t>(*std::max_element(truth.item_intent.begin(), truth.item_intent.end()) + 1);
  std::size_t n_global = 0, n_local = 0;
  for (int l : truth.user_item_labels) n_global += l != kNoiseLabel;
  for (int l : truth.bundle_item_labels) n_local += l != kNoiseLabel;
  if (fwd.user_trace) rep.global = intent_alignment(fwd.user_trace->layers.back().weights.back(), truth.user_item_labels, T);
  if (fwd.bundle_trace) rep.local = intent_alignment(fwd.bundle_trace->layers.back().weights.back(), truth.bundle_item_labels, T);
  rep.combined = (rep.global * static_cast<double>(n_global) + rep.local * static_cast<double>(n_local)) /
                 static_cast<double>(n_global + n_local);
  return rep;
}

nlohmann::json AlignmentReport::to_json() const {
  return {{"global", global}, {"local", local}, {"combined", combined}, {"uniform_baseline", uniform_baseline}};
}

namespace {

struct VariantRow {
  std::string label;
  std::uint64_t seed;
  RankingReport report;
};

std::string table_csv(const std::string& dataset, const std::string& column, const std::vector<VariantRow>& rows,
                      const std::vector<std::size_t>& ks) {
  std::ostringstream out;
  out.precision(10);
  out << "dataset," << column << ",seed";
  for (std::size_t k : ks) out << ",recall@" << k << ",ndcg@" << k;
  out << '\n';
  for (const auto& r : rows) {
    out << dataset << ',' << r.label << ',' << r.seed;
    for (std::size_t k : ks) out << ',' << r.report.recall.at(k) << ',' << r.report.ndcg.at(k);
    out << '\n';
  }
  // per-label means over seeds
  std::vector<std::string> labels;
  for (const auto& r : rows)
    if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);
  for (const auto& label : labels) {
    out << dataset << ',' << label << ",mean";
    for (std::size_t k : ks) {
      double rs = 0, ns = 0;
      std::size_t n = 0;
      for (const auto& r : rows) {
        if (r.label != label) continue;
        rs += r.report.recall.at(k);
        ns += r.report.ndcg.at(k);
        ++n;
      }
      out << ',' << rs / static_cast<double>(n) << ',' << ns / static_cast<double>(n);
    }
    out << '\n';
  }
  return out.str();
}

void run_variants(const ExperimentSpec& spec, const std::string& column,
                  const std::vector<std::pair<std::string, ModelConfig>>& variants, const std::string& file) {
  const Dataset ds = resolve_dataset(spec);
  const auto split = split_interactions(ds.user_bundle, spec.ratios, spec.split_seed);
  std::vector<VariantRow> rows;
  for (std::uint64_t seed : seeds_of(spec)) {
    for (const auto& [label, base] : variants) {
      ModelConfig cfg = base;
      cfg.seed = seed;
      std::string dir = label;
      std::replace(dir.begin(), dir.end(), '/', '_');
      std::replace(dir.begin(), dir.end(), ' ', '_');
      const auto sub = spec.out_dir / (dir + "_seed" + std::to_string(seed));
      auto res = fit(ds, split, cfg, spec, sub);
      spdlog::info("{} {} seed {}: recall@{} {:.4f}", column, label, seed, primary_k(spec),
                   res.test.recall.at(primary_k(spec)));
      rows.push_back({label, seed, std::move(res.test)});
    }
  }
  write_text(spec.out_dir / file, table_csv(ds.name, column, rows, spec.ks));
}

}  // namespace

void run_experiment(const ExperimentSpec& spec) {
  spec.model.validate();
  prepare_out(spec);
  switch (spec.command) {
    case Command::stats: {
      if (!spec.dataset) throw ConfigError("stats needs --dataset");
      const auto ds = load_dataset(*spec.dataset);
      const auto rep = validate_stats(ds.user_bundle, ds.bundle_item, ds.user_item, ds.name);
      write_json(spec.out_dir / "stats.json", rep.to_json());
      for (const auto& m : rep.mismatches) spdlog::warn("{}: {}", ds.name, m);
      break;
    }
    case Command::synth: {
      write_synthetic(spec.out_dir / "data", generate_synthetic(spec.synth));
      break;
    }
    case Command::train: {
      const Dataset ds = resolve_dataset(spec);
      const auto split = split_interactions(ds.user_bundle, spec.ratios, spec.split_seed);
      fit(ds, split, spec.model, spec, spec.out_dir);
      break;
    }
    case Command::evaluate: {
      if (!spec.checkpoint) throw ConfigError("evaluate needs a checkpoint");
      nlohmann::json meta;
      const auto store = load_checkpoint(*spec.checkpoint, &meta);
      ModelConfig cfg = spec.model;
      if (meta.contains("model")) cfg.merge_json(meta["model"]);
      ExperimentSpec eff = spec;
      if (meta.contains("split_seed")) eff.split_seed = meta["split_seed"].get<std::uint64_t>();
      if (meta.contains("ratios")) {
        const auto r = meta["ratios"].get<std::vector<double>>();
        eff.ratios = {r.at(0), r.at(1), r.at(2)};
      }
      // without --dataset, evaluate on the data the checkpoint was trained on
      if (!eff.dataset) {
        const auto trained_on = meta.value("dataset", std::string{});
        if (!trained_on.empty()) eff.dataset = trained_on;
        else if (meta.contains("synth")) eff.synth.merge_json(meta["synth"]);
      }
      const Dataset ds = resolve_dataset(eff);
      const auto split = split_interactions(ds.user_bundle, eff.ratios, eff.split_seed);
      const auto graphs = ModelGraphs::build(ds, split.train);
      const auto fwd = full_forward(store, graphs, cfg);
      const auto rep = evaluate(fwd, split, spec.ks, EvalTarget::test, true);
      write_json(spec.out_dir / "report.json", rep.to_json(true));
      write_text(spec.out_dir / "report.csv", rep.to_csv(ds.name, cfg.variant_name()));
      break;
    }
    case Command::ablate: {
      ModelConfig full = spec.model;
      full.no_contrast = full.no_local = full.no_global = false;
      ModelConfig wo_contrast = full, wo_local = full, wo_global = full;
      wo_contrast.no_contrast = true;
      wo_local.no_local = true;
      wo_global.no_global = true;
      run_variants(spec, "variant",
                   {{"full", full}, {"w/o contra.", wo_contrast}, {"w/o local", wo_local}, {"w/o global", wo_global}},
                   "ablation.csv");
      break;
    }
    case Command::sweep_layers: {
      std::vector<std::pair<std::string, ModelConfig>> v;
      for (std::size_t l : {1, 2, 3, 4}) {
        ModelConfig c = spec.model;
        c.layers = l;
        v.emplace_back("L=" + std::to_string(l), c);
      }
      run_variants(spec, "layers", v, "sweep_layers.csv");
      break;
    }
    case Command::sweep_intents: {
      std::vector<std::pair<std::string, ModelConfig>> v;
      for (std::size_t k : {1, 2, 4, 8}) {
        ModelConfig c = spec.model;
        c.intents = k;
        if (c.dim % k != 0) throw ConfigError("embedding size must be divisible by every K in {1,2,4,8}");
        v.emplace_back("K=" + std::to_string(k), c);
      }
      run_variants(spec, "intents", v, "sweep_intents.csv");
      break;
    }
    case Command::synth_check: {
      const auto data = generate_synthetic(spec.synth);
      write_synthetic(spec.out_dir / "data", data);
      const auto split = split_interactions(data.dataset.user_bundle, spec.ratios, spec.split_seed);
      auto res = fit(data.dataset, split, spec.model, spec, spec.out_dir);
      const auto align = synthetic_alignment(res.store, data.dataset, split, data.truth, spec.model);
      auto j = align.to_json();
      j["test"] = res.test.to_json();
      write_json(spec.out_dir / "alignment.json", j);
      spdlog::info("intent alignment: global {:.4f} local {:.4f} combined {:.4f} (uniform {:.4f})", align.global,
                   align.local, align.combined, align.uniform_baseline);
      break;
    }
  }
}

}  // namespace midgn
