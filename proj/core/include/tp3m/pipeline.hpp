#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tp3m/config.hpp"
#include "tp3m/match2d.hpp"
#include "tp3m/match3d.hpp"
#include "tp3m/model.hpp"
#include "tp3m/synthgen.hpp"
#include "tp3m/train.hpp"

namespace tp3m {

// Config-to-struct adapters used by commands and tests.
PerturbationSpec spec_from_config(const RunConfig& cfg);
CascadeConfig cascade_from_config(const RunConfig& cfg);
GuidanceConfig guide_from_config(const RunConfig& cfg);
WindowFilterConfig window_from_config(const RunConfig& cfg);
TrainSettings train_from_config(const RunConfig& cfg);

struct SynthArgs {
  std::string out_dir;
  int count = 1;
  std::uint64_t seed = 0;
  std::string mode = "planar";  // planar | 3d
};
void run_synth(const SynthArgs& args, const RunConfig& cfg);

struct TrainArgs {
  std::string data_dir;
  std::string ckpt_out;
  std::string loss_curve;  // defaults to <ckpt_out>.losses.tsv
  std::string resume;
  int epochs = 1;
  std::uint64_t seed = 0;
};
void run_train(const TrainArgs& args, const RunConfig& cfg);

struct MatchArgs {
  std::string src, dst;
  std::vector<std::string> refs;  // empty: 2D-only path
  std::string ckpt;               // empty: freshly initialized parameters
  std::string out;
  std::uint64_t init_seed = 0;
  std::string attention_dir;  // non-empty: dump recorded attention maps
};
// Returns the merged match set that was written.
MatchSet run_match(const MatchArgs& args, const RunConfig& cfg);

struct EvalArgs {
  std::string data_dir;
  std::string matches_dir;
  std::string task;  // homography | pose
  std::string report_path;
  std::string json_path;  // defaults to <report_path>.json
};
void run_eval(const EvalArgs& args, const RunConfig& cfg);

struct ExtractArgs {
  std::string image;
  std::string ckpt;  // empty: freshly initialized parameters
  std::string out_edge_pgm;
  std::string attention_dir;
  std::uint64_t init_seed = 0;
};
void run_extract(const ExtractArgs& args, const RunConfig& cfg);

// Scene ids listed in a dataset manifest.
std::vector<std::string> manifest_scene_ids(const std::string& data_dir);

// Fraction of ground-truth pairs with a match within tol_px at both ends.
double match_recall(const MatchSet& set, const std::vector<std::array<double, 4>>& gt,
                    double tol_px);

}  // namespace tp3m
