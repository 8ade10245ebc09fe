// crforge: compression-robust forgery detection trainer and evaluation CLI.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crforge/config.hpp"
#include "crforge/data.hpp"
#include "crforge/errors.hpp"
#include "crforge/eval.hpp"
#include "crforge/train.hpp"

namespace fs = std::filesystem;
using namespace crforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitDataset = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

struct PendingOverrides {
  std::vector<std::pair<std::string, std::string>> entries;
};

// One CLI option per config key, so `--loss.beta1 0` works for everything.
void register_config_options(CLI::App* cmd, PendingOverrides& pending) {
  Config defaults = default_config();
  for (const auto& [key, value] : flattened_keys(defaults)) {
    const std::string k = key;
    cmd->add_option_function<std::string>(
           "--" + key,
           [&pending, k](const std::string& v) { pending.entries.emplace_back(k, v); },
           "config key (default " + value + ")")
        ->group("Config keys");
  }
}

void add_alias(CLI::App* cmd, PendingOverrides& pending, const std::string& flag,
               const std::string& key, const std::string& help) {
  cmd->add_option_function<std::string>(
         flag, [&pending, key](const std::string& v) { pending.entries.emplace_back(key, v); },
         help);
}

Config resolve_config(const std::string& config_path, const PendingOverrides& pending) {
  Config config = config_path.empty() ? default_config() : load_config(config_path);
  for (const auto& [key, value] : pending.entries) apply_override(config, key, value);
  return config;
}

void print_effective_config(const Config& config) {
  std::cout << "effective config:\n";
  for (const auto& [key, value] : flattened_keys(config)) {
    std::cout << "  " << key << " = " << value << "\n";
  }
}

std::string default_run_dir(const Config& config) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now).count();
  return "runs/" + std::to_string(secs) + "-" + config_hash(config);
}

int cmd_gen_data(const Config& config, const std::string& out, bool force) {
  const std::string root = out.empty() ? config.data.root : out;
  if (root.empty()) {
    std::cerr << "gen-data needs an output directory (--out or --data.root)\n";
    return kExitUsage;
  }
  SynthConfig synth;
  synth.n_clips = config.data.n_clips;
  synth.frames_per_clip = config.data.frames_per_clip;
  synth.frame_size = config.data.frame_size;
  synth.artifact_strength = config.data.artifact_strength;
  synth.train_fraction = config.data.train_fraction;
  synth.val_fraction = config.data.val_fraction;
  Dataset dataset = synth_toy_dataset(root, synth, RngSeed{config.data.seed}, force);
  std::cout << "wrote " << root << ": " << dataset.train.clips.size() << " train / "
            << dataset.val.clips.size() << " val / " << dataset.test.clips.size()
            << " test clips, " << synth.frames_per_clip << " frames each, " << synth.frame_size
            << "x" << synth.frame_size << "\n";
  return kExitOk;
}

int cmd_train(const Config& config, const std::string& out) {
  config.validate();
  Dataset dataset = load_dataset(config.data.root, config.data.frame_size);
  const std::string run_dir = out.empty() ? default_run_dir(config) : out;
  TrainingResult result = run_training(config, dataset, run_dir);
  std::cout << "run dir: " << run_dir << "\n";
  for (const auto& acc : result.val_history) {
    std::cout << "epoch " << acc.epoch << ": val weak " << acc.weak << ", val strong "
              << acc.strong << ", mean " << acc.mean() << "\n";
  }
  std::cout << "best epoch " << result.best_epoch << " (val mean " << result.best_val_mean
            << ")\nbest checkpoint: " << result.best_checkpoint_path
            << "\nfinal checkpoint: " << result.final_checkpoint_path << "\n";
  return kExitOk;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + s + "' (valid: train, val, test)");
}

int cmd_eval(const Config& config, const std::string& checkpoint, const std::string& split_name,
             const std::string& out) {
  if (checkpoint.empty()) {
    std::cerr << "eval needs --checkpoint\n";
    return kExitUsage;
  }
  Dataset dataset = load_dataset(config.data.root, config.data.frame_size);
  auto trainer = Trainer::load_checkpoint(checkpoint, dataset);
  EvalSpec spec = EvalSpec::from_config(config.eval);
  if (!config.eval.use_online_branch && !trainer->uses_momentum_branch()) {
    std::cout << "note: checkpoint strategy keeps no momentum branch; evaluating online branch\n";
    spec.branch = Branch::kOnline;
  }
  EvalReport report =
      evaluate(trainer->bundle(), dataset.split(parse_split(split_name)), spec,
               trainer->frame_store());
  report.checkpoint_id = checkpoint;
  const std::string text = eval_report_to_json(report);
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw IoError("cannot write report to " + out);
    f << text << "\n";
  }
  std::cout << text << "\n";
  for (const auto& [level, acc] : report.accuracy) {
    std::cout << to_string(level) << ": " << acc * 100.0 << "%\n";
  }
  return kExitOk;
}

int cmd_ablate(const Config& config, const std::string& preset, const std::string& out) {
  config.validate();
  Dataset dataset = load_dataset(config.data.root, config.data.frame_size);
  const std::string run_root = out.empty() ? default_run_dir(config) : out;
  auto cells = run_ablation_matrix(config, dataset, preset, run_root);
  std::vector<EvalReport> ok_reports;
  int failures = 0;
  for (const auto& cell : cells) {
    if (cell.ok) {
      ok_reports.push_back(cell.report);
      std::ofstream f(fs::path(run_root) / cell.name / "report.json");
      f << eval_report_to_json(cell.report) << "\n";
    } else {
      ++failures;
      std::cerr << "cell " << cell.name << " failed: " << cell.error << "\n";
    }
  }
  if (!ok_reports.empty()) {
    std::cout << compare_runs(ok_reports).plain_text;
  }
  std::cout << "completed " << ok_reports.size() << "/" << cells.size() << " runs under "
            << run_root << "\n";
  return failures == 0 ? kExitOk : kExitDiverged;
}

int cmd_report(const std::string& runs_csv, const std::string& out) {
  std::vector<EvalReport> reports;
  std::stringstream ss(runs_csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    fs::path p(item);
    if (fs::is_directory(p)) p /= "report.json";
    std::ifstream f(p);
    if (!f) throw IoError("cannot read report: " + p.string());
    std::stringstream buf;
    buf << f.rdbuf();
    EvalReport r = eval_report_from_json(buf.str());
    if (r.run_name.empty()) r.run_name = fs::path(item).filename().string();
    reports.push_back(std::move(r));
  }
  ComparisonTable table = compare_runs(reports);
  std::cout << table.plain_text;
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw IoError("cannot write comparison to " + out);
    f << table.json_text << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compression-robust forgery detection: train, evaluate, ablate"};
  app.require_subcommand(1);

  std::string config_path, out, checkpoint, split_name = "test", preset, runs_csv;
  bool force = false;

  PendingOverrides pending;

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic toy dataset");
  gen->add_option("--config", config_path, "config file (JSON)");
  gen->add_option("--out", out, "output dataset root");
  gen->add_flag("--force", force, "overwrite a non-empty output directory");
  add_alias(gen, pending, "--seed", "data.seed", "alias for data.seed");
  register_config_options(gen, pending);

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "config file (JSON)");
  train->add_option("--out", out, "run directory (default runs/<time>-<hash>)");
  add_alias(train, pending, "--strategy", "train.strategy",
            "alias for train.strategy (proposed|ce_only|ce_l1|ce_triplet|ce_gan)");
  add_alias(train, pending, "--compression-mode", "train.compression_mode",
            "alias for train.compression_mode");
  add_alias(train, pending, "--seed", "train.seed", "alias for train.seed");
  add_alias(train, pending, "--epochs", "train.epochs", "alias for train.epochs");
  register_config_options(train, pending);

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint across levels");
  eval_cmd->add_option("--config", config_path, "config file (JSON)");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  eval_cmd->add_option("--split", split_name, "dataset split (train|val|test)");
  eval_cmd->add_option("--out", out, "write the report JSON here");
  add_alias(eval_cmd, pending, "--levels", "eval.levels",
            "alias for eval.levels (e.g. weak,strong,raw,75,50,20,10)");
  register_config_options(eval_cmd, pending);

  CLI::App* ablate = app.add_subcommand("ablate", "run an ablation preset");
  ablate->add_option("--config", config_path, "config file (JSON)");
  ablate->add_option("--preset", preset, "table4 or table5")->required();
  ablate->add_option("--out", out, "run root directory");
  add_alias(ablate, pending, "--seed", "train.seed", "alias for train.seed");
  add_alias(ablate, pending, "--epochs", "train.epochs", "alias for train.epochs");
  register_config_options(ablate, pending);

  CLI::App* report = app.add_subcommand("report", "render a comparison table");
  report->add_option("--runs", runs_csv, "comma-separated report files or run dirs")->required();
  report->add_option("--out", out, "write the table JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    Config config = resolve_config(config_path, pending);
    print_effective_config(config);
    if (app.got_subcommand("gen-data")) return cmd_gen_data(config, out, force);
    if (app.got_subcommand("train")) return cmd_train(config, out);
    if (app.got_subcommand("eval")) return cmd_eval(config, checkpoint, split_name, out);
    if (app.got_subcommand("ablate")) return cmd_ablate(config, preset, out);
    if (app.got_subcommand("report")) return cmd_report(runs_csv, out);
    return kExitUsage;
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    if (!e.snapshot_path().empty()) std::cerr << "state snapshot: " << e.snapshot_path() << "\n";
    return kExitDiverged;
  } catch (const DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return kExitDataset;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
