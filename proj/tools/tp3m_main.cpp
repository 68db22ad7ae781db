// tp3m command-line entry point: dataset synthesis, training, matching,
// evaluation and edge/attention export, chained through files.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tp3m/config.hpp"
#include "tp3m/pipeline.hpp"

namespace {

std::string config_key_help() {
  std::string out = "Config keys (set via --config FILE or --set key=value):\n";
  for (const auto& k : tp3m::RunConfig::schema()) {
    out += "  ";
    out += k.key;
    out += " (default ";
    out += k.default_value;
    out += "): ";
    out += k.desc;
    out += "\n";
  }
  return out;
}

void apply_config(tp3m::RunConfig& cfg, const std::string& file,
                  const std::vector<std::string>& sets) {
  if (!file.empty()) cfg.load_file(file);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects key=value, got: " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tp3m: pseudo-3D image matching pipeline"};
  app.require_subcommand(1);
  app.footer(config_key_help());

  std::string config_file;
  std::vector<std::string> config_sets;
  app.add_option("--config", config_file, "key=value config file")->expected(1);
  app.add_option("--set", config_sets, "override a config key (key=value), repeatable");

  tp3m::SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->fallthrough();
  synth_cmd->add_option("--out", synth.out_dir, "output dataset directory")->required();
  synth_cmd->add_option("--count", synth.count, "number of scenes")->default_val(1);
  synth_cmd->add_option("--seed", synth.seed, "generator seed")->default_val(0);
  synth_cmd->add_option("--mode", synth.mode, "planar | 3d")->default_val("planar");

  tp3m::TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train on a synthetic dataset");
  train_cmd->fallthrough();
  train_cmd->add_option("--data", train.data_dir, "dataset directory")->required();
  train_cmd->add_option("--ckpt", train.ckpt_out, "output checkpoint path")->required();
  train_cmd->add_option("--losses", train.loss_curve, "loss curve path (default <ckpt>.losses.tsv)");
  train_cmd->add_option("--resume", train.resume, "resume from checkpoint");
  train_cmd->add_option("--epochs", train.epochs, "training epochs")->default_val(1);
  train_cmd->add_option("--seed", train.seed, "training seed")->default_val(0);

  tp3m::MatchArgs match;
  auto* match_cmd = app.add_subcommand("match", "match a source image against a destination");
  match_cmd->fallthrough();
  match_cmd->add_option("--src", match.src, "source image (PGM)")->required();
  match_cmd->add_option("--dst", match.dst, "destination image (PGM)")->required();
  match_cmd->add_option("--ref", match.refs, "reference image(s); omit for the 2D-only path");
  match_cmd->add_option("--ckpt", match.ckpt, "checkpoint path");
  match_cmd->add_option("--out", match.out, "output match file (TSV)")->required();
  match_cmd->add_option("--init-seed", match.init_seed, "parameter seed when no checkpoint")
      ->default_val(0);
  match_cmd->add_option("--export-attention", match.attention_dir,
                        "directory for recorded attention maps");

  tp3m::EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate match files against ground truth");
  eval_cmd->fallthrough();
  eval_cmd->add_option("--data", eval.data_dir, "dataset directory")->required();
  eval_cmd->add_option("--matches-dir", eval.matches_dir, "directory of <id>.tsv match files")
      ->required();
  eval_cmd->add_option("--task", eval.task, "homography | pose")->required();
  eval_cmd->add_option("--report", eval.report_path, "output report path")->required();
  eval_cmd->add_option("--json", eval.json_path, "structured summary path (default <report>.json)");

  tp3m::ExtractArgs extract;
  auto* extract_cmd = app.add_subcommand("extract", "write the edge map of an image");
  extract_cmd->fallthrough();
  extract_cmd->add_option("--image", extract.image, "input image (PGM)")->required();
  extract_cmd->add_option("--ckpt", extract.ckpt, "checkpoint path");
  extract_cmd->add_option("--out", extract.out_edge_pgm, "output edge map (PGM)")->required();
  extract_cmd->add_option("--export-attention", extract.attention_dir,
                          "directory for recorded attention maps");
  extract_cmd->add_option("--init-seed", extract.init_seed, "parameter seed when no checkpoint")
      ->default_val(0);

  CLI11_PARSE(app, argc, argv);

  try {
    tp3m::RunConfig cfg;
    apply_config(cfg, config_file, config_sets);
    if (synth_cmd->parsed()) {
      tp3m::run_synth(synth, cfg);
    } else if (train_cmd->parsed()) {
      tp3m::run_train(train, cfg);
    } else if (match_cmd->parsed()) {
      tp3m::run_match(match, cfg);
    } else if (eval_cmd->parsed()) {
      tp3m::run_eval(eval, cfg);
    } else if (extract_cmd->parsed()) {
      tp3m::run_extract(extract, cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
