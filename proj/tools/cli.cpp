#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eclip/config.hpp"
#include "eclip/experiment.hpp"
#include "json.hpp"
#include "oracles.hpp"

namespace eclip {

namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::vector<std::string> assignments;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Run-config file");
  cmd->add_option("--seed", f.seed, "Seed (overrides config and ECLIP_SEED)");
  cmd->add_flag("--deterministic", f.deterministic, "Serial execution, reproducible logs");
  cmd->add_option("--out", f.out, "Output directory (overrides config and ECLIP_OUT)");
  cmd->add_option("--set", f.assignments, "section.key=value override, repeatable");
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : parse_config_file(f.config);
  apply_environment(cfg);
  for (const auto& a : f.assignments) apply_assignment(cfg, a);
  if (f.seed) cfg.seed = *f.seed;
  if (f.deterministic) cfg.deterministic = true;
  if (!f.out.empty()) cfg.out = f.out;
  if (!f.data.empty()) cfg.data_dir = f.data;
  if (!f.checkpoint.empty()) cfg.checkpoint = f.checkpoint;
  cfg.synth.seed = cfg.seed;
  cfg.eval.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

void copy_if_present(const fs::path& from, const fs::path& to) {
  if (fs::exists(from) && fs::absolute(from) != fs::absolute(to)) {
    fs::copy_file(from, to, fs::copy_options::overwrite_existing);
  }
}

int synth_gen(const RunConfig& cfg, std::ostream& out) {
  const auto data = generate(cfg.synth);
  write_dataset(cfg.out, data);
  out << "wrote " << data.records.size() << " records (" << data.classes.size() << " classes) to " << cfg.out
      << "\n";
  return 0;
}

int preprocess_cmd(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = cfg.data_dir;
  const auto manifest = read_manifest(dir / "manifest.jsonl");
  auto resolve_image = [&](const ProductRecord& r) {
    fs::path p = r.image_path;
    return p.is_relative() ? dir / p : p;
  };
  DedupOptions options;
  options.catalog_dedup = cfg.catalog_dedup;
  const auto result =
      preprocess(manifest, [&](const ProductRecord& r) { return read_ppm(resolve_image(r)); }, cfg.min_side, options);

  std::vector<ProductRecord> kept = result.kept;
  for (auto& r : kept) r.image_path = fs::absolute(resolve_image(r)).lexically_normal().string();
  const fs::path o = cfg.out;
  write_manifest(o / "manifest.jsonl", kept);
  write_text(o / "dedup_report.json", result.report.to_json() + "\n");
  std::string removed;
  for (const auto& r : result.removed) {
    nlohmann::ordered_json j;
    j["product_id"] = r.product_id;
    j["reason"] = to_string(r.reason);
    removed += j.dump() + "\n";
  }
  write_text(o / "removed.jsonl", removed);
  copy_if_present(dir / "text_features.jsonl", o / "text_features.jsonl");
  copy_if_present(dir / "classes.json", o / "classes.json");
  out << result.report.to_json() << "\n";
  return 0;
}

int train_cmd(const RunConfig& cfg, std::ostream& out) {
  const auto data = load_dataset(cfg.data_dir, cfg.image_grid, cfg.title_dim);
  const auto split = holdout_split(data.records, cfg.holdout_fraction);
  const auto set = subset(data.set, split.train);
  const auto tc = cfg.train_config(set.text.cols(), set.image.cols());
  tc.validate(set.size());

  const fs::path o = cfg.out;
  CheckpointHook hook;
  if (tc.checkpoint_every > 0) {
    fs::create_directories(o / "checkpoints");
    hook = [&](const ModelParams& m, std::uint64_t step) {
      save_checkpoint(m, o / "checkpoints" / ("step_" + std::to_string(step) + ".json"), step);
    };
  }
  const auto result = train(tc, set, {}, hook);
  std::string log;
  for (const auto& rec : result.log) log += to_json_line(rec) + "\n";
  write_text(o / "metrics.jsonl", log);
  save_checkpoint(result.model, o / "checkpoint.json", tc.schedule.total_steps);
  nlohmann::ordered_json summary;
  summary["train_items"] = set.size();
  summary["holdout_items"] = split.test.size();
  summary["steps"] = tc.schedule.total_steps;
  summary["final_loss"] = result.final_loss;
  summary["tau"] = result.model.tau();
  write_text(o / "train_summary.json", summary.dump(2) + "\n");
  out << summary.dump(2) << "\n";
  return 0;
}

int eval_cmd(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = cfg.data_dir;
  if (!fs::exists(dir / "classes.json")) {
    throw std::runtime_error("eval needs " + (dir / "classes.json").string() + " with class prompts");
  }
  const auto classes = read_class_table(dir / "classes.json");
  const auto data = load_dataset(dir, cfg.image_grid, cfg.title_dim, &classes);
  const fs::path ckpt = cfg.checkpoint.empty() ? fs::path(cfg.out) / "checkpoint.json" : fs::path(cfg.checkpoint);
  const auto model = load_checkpoint(ckpt);
  if (model.text_spec.input_dim != data.set.text.cols() || model.image_spec.input_dim != data.set.image.cols()) {
    throw DimensionError("checkpoint expects inputs " + std::to_string(model.text_spec.input_dim) + "/" +
                         std::to_string(model.image_spec.input_dim) + ", data has " +
                         std::to_string(data.set.text.cols()) + "/" + std::to_string(data.set.image.cols()));
  }
  const auto split = holdout_split(data.records, cfg.holdout_fraction);
  if (split.test.empty() || split.train.empty()) throw CapacityError("hold-out split left one side empty");
  auto report = evaluate(model, make_eval_inputs(data, classes, split), cfg.eval);
  nlohmann::ordered_json doc;
  doc["checkpoint"] = ckpt.string();
  doc["holdout_fraction"] = cfg.holdout_fraction;
  for (auto& [k, v] : report.items()) doc[k] = v;
  write_text(fs::path(cfg.out) / "eval_report.json", doc.dump(2) + "\n");
  out << doc.dump(2) << "\n";
  return 0;
}

int verify_cmd(const RunConfig& cfg, std::ostream& out) {
  const auto results = oracle::run_all(cfg.seed);
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  bool ok = true;
  for (const auto& r : results) {
    out << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    ok = ok && r.pass;
    doc.push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
  }
  write_text(fs::path(cfg.out) / "verify.json", doc.dump(2) + "\n");
  return ok ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"eclip: multimodal product embedding toolkit", "eclip"};
  app.require_subcommand(1);
  Flags flags;
  auto* synth = app.add_subcommand("synth-gen", "Generate a synthetic catalog dataset into --out");
  auto* prep = app.add_subcommand("preprocess", "Validate and de-duplicate a manifest");
  auto* tr = app.add_subcommand("train", "Train both encoders on a dataset");
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on held-out catalogs");
  auto* ver = app.add_subcommand("verify", "Run the oracle suite");
  for (auto* cmd : {synth, prep, tr, ev, ver}) add_common(cmd, flags);
  for (auto* cmd : {prep, tr, ev}) cmd->add_option("--data", flags.data, "Dataset directory (data.dir)");
  ev->add_option("--checkpoint", flags.checkpoint, "Checkpoint file (eval.checkpoint)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  RunConfig cfg;
  try {
    cfg = resolve(flags);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    fs::create_directories(cfg.out);
    write_text(fs::path(cfg.out) / "config.resolved.toml", to_config_text(cfg));
    if (synth->parsed()) return synth_gen(cfg, out);
    if (prep->parsed()) return preprocess_cmd(cfg, out);
    if (tr->parsed()) return train_cmd(cfg, out);
    if (ev->parsed()) return eval_cmd(cfg, out);
    return verify_cmd(cfg, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace eclip
