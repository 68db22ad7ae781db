#include "tp3m/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tp3m/geomeval.hpp"
#include "tp3m/rng.hpp"

namespace fs = std::filesystem;

namespace tp3m {

namespace {

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc | std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << content;
    if (!os) throw std::runtime_error("write failed: " + path);
  }
  fs::rename(tmp, path);
}

std::string scene_dir(const std::string& data_dir, const std::string& id) {
  return data_dir + "/scene_" + id;
}

}  // namespace

PerturbationSpec spec_from_config(const RunConfig& cfg) {
  PerturbationSpec s;
  s.rot_deg = cfg.get_d("synth.rot_deg");
  s.trans_frac = cfg.get_d("synth.trans_frac");
  s.ref_scale = cfg.get_d("synth.ref_scale");
  s.brightness = cfg.get_d("synth.brightness");
  s.contrast = cfg.get_d("synth.contrast");
  s.noise_sigma = cfg.get_d("synth.noise_sigma");
  s.texture_octaves = cfg.get_i("synth.octaves");
  s.shape_count = cfg.get_i("synth.shapes");
  return s;
}

CascadeConfig cascade_from_config(const RunConfig& cfg) {
  CascadeConfig c;
  c.theta3 = cfg.get_d("match.theta3");
  c.theta2 = cfg.get_d("match.theta2");
  c.theta1 = cfg.get_d("match.theta1");
  c.n3 = cfg.get_i("match.n3");
  c.n2 = cfg.get_i("match.n2");
  c.fine_radius_px = cfg.get_i("match.fine_radius");
  c.omega = cfg.get_d("match.omega");
  return c;
}

GuidanceConfig guide_from_config(const RunConfig& cfg) {
  GuidanceConfig g;
  g.lambda = cfg.get_d("m3d.lambda");
  g.radius = cfg.get_i("m3d.guide_radius");
  return g;
}

WindowFilterConfig window_from_config(const RunConfig& cfg) {
  WindowFilterConfig w;
  w.window = cfg.get_i("m3d.window");
  w.tau_win = cfg.get_d("m3d.tau_win");
  w.k_min = cfg.get_i("m3d.k_min");
  return w;
}

TrainSettings train_from_config(const RunConfig& cfg) {
  TrainSettings t;
  t.edge_steps = cfg.get_i("train.edge_steps");
  t.lr_edge = cfg.get_d("train.lr_edge");
  t.lr_joint = cfg.get_d("train.lr_joint");
  t.beta1 = cfg.get_d("train.beta1");
  t.beta2 = cfg.get_d("train.beta2");
  t.eps = cfg.get_d("train.eps");
  t.batch = cfg.get_i("train.batch");
  t.theta_loss = cfg.get_d("train.theta_loss");
  t.delta0 = cfg.get_d("train.delta0");
  t.w_min = cfg.get_d("edge.w_min");
  t.canny_low = cfg.get_d("edge.canny_low");
  t.canny_high = cfg.get_d("edge.canny_high");
  t.canny_sigma = cfg.get_d("edge.canny_sigma");
  t.joint_steps_override = cfg.get_i("train.joint_steps");
  t.cascade = cascade_from_config(cfg);
  t.guide = guide_from_config(cfg);
  return t;
}

void run_synth(const SynthArgs& args, const RunConfig& cfg) {
  if (args.mode != "planar" && args.mode != "3d")
    throw std::runtime_error("synth: mode must be 'planar' or '3d'");
  if (args.count < 1) throw std::runtime_error("synth: count must be >= 1");
  const PerturbationSpec spec = spec_from_config(cfg);
  spec.validate();
  const int size = cfg.get_i("synth.size");
  fs::create_directories(args.out_dir);

  nlohmann::json manifest;
  manifest["dataset"] = "tp3m-synth";
  manifest["count"] = args.count;
  manifest["seed"] = args.seed;
  manifest["mode"] = args.mode;
  nlohmann::json cfg_obj = nlohmann::json::object();
  for (const auto& k : RunConfig::schema()) cfg_obj[k.key] = cfg.get(k.key);
  manifest["config"] = cfg_obj;
  nlohmann::json scenes = nlohmann::json::array();

  for (int i = 0; i < args.count; ++i) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "%04d", i);
    const std::string id = idbuf;
    const std::uint64_t scene_seed = Rng::derive(args.seed, "scene_" + id);
    SceneSample sample;
    bool generated = false;
    for (int attempt = 0; attempt < 16 && !generated; ++attempt) {
      const std::uint64_t s = Rng::derive(scene_seed, "try_" + std::to_string(attempt));
      try {
        sample = args.mode == "planar" ? gen_planar(s, spec, size) : gen_3d(s, spec, size);
        generated = true;
      } catch (const SynthRegenerate&) {
        continue;
      }
    }
    if (!generated)
      throw std::runtime_error("synth: scene " + id + " failed covisibility after 16 attempts");
    sample.id = id;
    write_sample(scene_dir(args.out_dir, id), sample);
    scenes.push_back({{"id", id}, {"mode", args.mode}});
  }
  manifest["scenes"] = scenes;
  write_text_atomic(args.out_dir + "/manifest.json", manifest.dump(2) + "\n");
}

std::vector<std::string> manifest_scene_ids(const std::string& data_dir) {
  std::ifstream is(data_dir + "/manifest.json");
  if (!is) throw std::runtime_error("cannot open manifest: " + data_dir + "/manifest.json");
  nlohmann::json manifest;
  is >> manifest;
  std::vector<std::string> ids;
  for (const auto& s : manifest.at("scenes")) ids.push_back(s.at("id").get<std::string>());
  return ids;
}

void run_train(const TrainArgs& args, const RunConfig& cfg) {
  if (!fs::exists(args.data_dir + "/manifest.json"))
    throw std::runtime_error("train: dataset not found: " + args.data_dir);
  const auto ids = manifest_scene_ids(args.data_dir);
  std::vector<SceneSample> samples;
  for (const auto& id : ids) samples.push_back(read_sample(scene_dir(args.data_dir, id)));

  Model model(Rng::derive(args.seed, "init"));
  Trainer trainer(model, train_from_config(cfg));
  const std::string curve =
      args.loss_curve.empty() ? args.ckpt_out + ".losses.tsv" : args.loss_curve;
  trainer.run(samples, args.epochs, args.seed, curve, args.ckpt_out, args.resume,
              cfg.echo_lines());
}

namespace {

struct PipelineRun {
  MatchSet merged;
  MatchStatus coarse_status = MatchStatus::ok;
  bool fallback_2d = false;
};

PipelineRun match_images(Model& model, const Image& src, const Image& dst,
                         const std::vector<Image>& refs, const RunConfig& cfg,
                         AttentionRecorder* rec) {
  NoGradGuard ng;
  const CascadeConfig cascade = cascade_from_config(cfg);
  const GuidanceConfig guide = guide_from_config(cfg);
  const WindowFilterConfig wf = window_from_config(cfg);

  FeaturePyramid pa = model.extractor.extract(src, rec, "a.");
  FeaturePyramid pb = model.extractor.extract(dst, rec, "b.");
  CascadeResult coarse = model.matcher2d.cascade_match(pa, pb, cascade, rec);

  PipelineRun out;
  out.coarse_status = coarse.set.status;
  if (refs.empty()) {
    out.merged = coarse.set;
    return out;
  }

  const int grid = pa.f3.shape[1];
  Tensor a3 = tokens_from_chw(pa.f3);
  Tensor b3 = tokens_from_chw(pb.f3);

  // Position features from each reference; transformed features are averaged
  // when several references are given.
  Tensor pos_sum;
  int pos_count = 0;
  for (const auto& ref : refs) {
    FeaturePyramid pc = model.extractor.extract(ref, rec, "c.");
    CascadeResult ac = model.matcher2d.cascade_match(pa, pc, cascade);
    if (ac.set.status != MatchStatus::ok) continue;
    Tensor pos = build_position_features(ac.set, grid, grid, src.h, src.w);
    Tensor transformed = model.pos_transform.apply(pos);
    pos_sum = pos_count == 0 ? transformed : add(pos_sum, transformed);
    ++pos_count;
  }

  Tensor f3d;
  if (pos_count == 0) {
    out.fallback_2d = true;
    f3d = a3;
  } else {
    f3d = fuse(a3, scale(pos_sum, 1.0 / pos_count));
  }

  Tensor p23 = model.matcher3d.p2d3d(f3d, b3, coarse.set.matches, grid, grid, src.h, src.w,
                                     cascade.omega, guide, rec);
  const auto chains =
      edge_token_chains(pa.edge_map, grid, grid, cfg.get_d("m3d.edge_token_thresh"));
  const auto cands = fine_candidates(p23, chains, grid);
  const auto accepted = sliding_window_filter(cands, wf);
  const MatchSet fine = candidates_to_matches(accepted, grid, src.h / grid);
  out.merged = merge_coarse_fine(coarse.set, fine, src.h / grid);
  return out;
}

}  // namespace

MatchSet run_match(const MatchArgs& args, const RunConfig& cfg) {
  const Image src = load_pgm(args.src);
  const Image dst = load_pgm(args.dst);
  if (src.h % 8 != 0 || src.w % 8 != 0)
    throw std::runtime_error("match: image size not divisible by 8");
  if (src.h != dst.h || src.w != dst.w)
    throw std::runtime_error("match: source and destination sizes differ");
  std::vector<Image> refs;
  for (const auto& r : args.refs) {
    refs.push_back(load_pgm(r));
    if (refs.back().h != src.h || refs.back().w != src.w)
      throw std::runtime_error("match: reference size differs from source");
  }

  Model model(Rng::derive(args.init_seed, "init"));
  if (!args.ckpt.empty()) model.load(args.ckpt);

  AttentionRecorder recorder;
  AttentionRecorder* rec = args.attention_dir.empty() ? nullptr : &recorder;
  PipelineRun run = match_images(model, src, dst, refs, cfg, rec);

  std::vector<std::string> header = cfg.echo_lines();
  if (run.fallback_2d) header.insert(header.begin(), "fallback=2d-only");
  const std::string mode = args.refs.empty() ? "2d-only" : "pseudo3d";
  write_matches(args.out, run.merged, mode, header);

  if (rec) {
    fs::create_directories(args.attention_dir);
    for (const auto& record : recorder.records()) {
      save_attention_map(record, args.attention_dir + "/" + record.tag + ".attn");
    }
  }
  return run.merged;
}

void run_extract(const ExtractArgs& args, const RunConfig& cfg) {
  (void)cfg;
  const Image img = load_pgm(args.image);
  if (img.h % 8 != 0 || img.w % 8 != 0)
    throw std::runtime_error("extract: image size not divisible by 8");
  Model model(Rng::derive(args.init_seed, "init"));
  if (!args.ckpt.empty()) model.load(args.ckpt);
  NoGradGuard ng;
  AttentionRecorder recorder;
  AttentionRecorder* rec = args.attention_dir.empty() ? nullptr : &recorder;
  FeaturePyramid pyr = model.extractor.extract(img, rec, "");
  save_pgm(pyr.edge_map, args.out_edge_pgm);
  if (rec) {
    fs::create_directories(args.attention_dir);
    for (const auto& record : recorder.records()) {
      save_attention_map(record, args.attention_dir + "/" + record.tag + ".attn");
    }
  }
}

namespace {

std::vector<Corr> to_corrs(const MatchSet& set) {
  std::vector<Corr> out;
  for (const auto& m : set.matches) out.push_back({m.xa, m.ya, m.xb, m.yb});
  return out;
}

std::vector<Corr> normalize_corrs(const std::vector<Corr>& corrs, const Mat3& k) {
  const Mat3 kinv = k.inverse();
  std::vector<Corr> out;
  for (const auto& c : corrs) {
    const Vec3 a = kinv * Vec3(c.xa, c.ya, 1.0);
    const Vec3 b = kinv * Vec3(c.xb, c.yb, 1.0);
    out.push_back({a.x() / a.z(), a.y() / a.z(), b.x() / b.z(), b.y() / b.z()});
  }
  return out;
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void run_eval(const EvalArgs& args, const RunConfig& cfg) {
  if (args.task != "homography" && args.task != "pose")
    throw std::runtime_error("eval: task must be 'homography' or 'pose'");
  const auto ids = manifest_scene_ids(args.data_dir);

  std::string missing;
  for (const auto& id : ids) {
    if (!fs::exists(args.matches_dir + "/" + id + ".tsv"))
      missing += missing.empty() ? id : ", " + id;
  }
  if (!missing.empty()) throw std::runtime_error("eval: missing match files for: " + missing);

  RansacConfig rc;
  rc.max_iters = cfg.get_i("eval.ransac_iters");
  rc.confidence = cfg.get_d("eval.confidence");
  const std::uint64_t eval_seed = cfg.get_u64("eval.seed");

  std::ostringstream report;
  for (const auto& line : cfg.echo_lines()) report << "# " << line << "\n";
  nlohmann::json jreport;
  jreport["task"] = args.task;
  nlohmann::json jpairs = nlohmann::json::object();

  std::vector<double> errors;
  std::vector<double> precisions;
  const double inf = std::numeric_limits<double>::infinity();

  for (const auto& id : ids) {
    const SceneSample sample = read_sample(scene_dir(args.data_dir, id));
    const MatchFile mf = read_matches(args.matches_dir + "/" + id + ".tsv");
    const auto corrs = to_corrs(mf.set);
    RansacConfig pair_rc = rc;
    pair_rc.seed = Rng::derive(eval_seed, "pair_" + id);

    if (args.task == "homography") {
      if (!sample.has_homography) {
        report << id << "\tskipped\tnot_homography_evaluable\n";
        continue;
      }
      double err = inf;
      if (corrs.size() >= 4) {
        pair_rc.inlier_thresh = cfg.get_d("eval.h_thresh_px");
        try {
          const auto est = estimate_homography(corrs, pair_rc);
          err = homography_corner_error(est.h, sample.h_ab, sample.size, sample.size);
        } catch (const std::exception&) {
          err = inf;
        }
      }
      errors.push_back(err);
      report << id << "\thomography_corner_px\t" << fmt(err) << "\n";
      jpairs[id] = {{"homography_corner_px", err == inf ? 1e300 : err}};
    } else {
      if (sample.essential_degenerate) {
        report << id << "\tskipped\tpure_rotation\n";
        continue;
      }
      const auto corrs_n = normalize_corrs(corrs, sample.k);
      const Pose rel = relative_pose(sample.pose_a, sample.pose_b);
      double err = inf;
      if (corrs_n.size() >= 8) {
        pair_rc.inlier_thresh = cfg.get_d("eval.f_thresh");
        try {
          const auto est = estimate_fundamental(corrs_n, pair_rc);
          std::vector<Corr> inliers;
          for (std::size_t i = 0; i < corrs_n.size(); ++i)
            if (est.inliers[i]) inliers.push_back(corrs_n[i]);
          const Pose pose = pose_from_fundamental(est.f, Mat3::Identity(), inliers);
          err = pose_error_deg(pose, rel);
        } catch (const std::exception&) {
          err = inf;
        }
      }
      errors.push_back(err);
      report << id << "\tpose_err_deg\t" << fmt(err) << "\n";
      // matching precision against the ground-truth epipolar geometry
      const Mat3 f_gt = essential_from_pose(rel);
      const auto prec = epipolar_precision(corrs_n, f_gt, cfg.get_d("eval.epi_tau"));
      if (prec) {
        precisions.push_back(*prec);
        report << id << "\tepipolar_precision\t" << fmt(*prec) << "\n";
        jpairs[id] = {{"pose_err_deg", err == inf ? 1e300 : err},
                      {"epipolar_precision", *prec}};
      } else {
        report << id << "\tepipolar_precision\tn/a\n";
        jpairs[id] = {{"pose_err_deg", err == inf ? 1e300 : err}};
      }
    }
  }

  report << "# summary\n";
  nlohmann::json jsummary = nlohmann::json::object();
  if (!errors.empty()) {
    const bool homog = args.task == "homography";
    const std::vector<double> thresholds = homog ? std::vector<double>{1, 3, 5}
                                                 : std::vector<double>{5, 10, 20};
    const auto aucs = auc(errors, thresholds);
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      const std::string name = "auc@" + fmt(thresholds[i]) + (homog ? "px" : "deg");
      report << name << "\t" << fmt(aucs[i]) << "\n";
      jsummary[name] = aucs[i];
    }
  }
  if (!precisions.empty()) {
    double mean_p = 0.0;
    for (double p : precisions) mean_p += p;
    mean_p /= static_cast<double>(precisions.size());
    report << "precision_mean\t" << fmt(mean_p) << "\n";
    jsummary["precision_mean"] = mean_p;
  }
  jreport["pairs"] = jpairs;
  jreport["summary"] = jsummary;

  write_text_atomic(args.report_path, report.str());
  const std::string jpath = args.json_path.empty() ? args.report_path + ".json" : args.json_path;
  write_text_atomic(jpath, jreport.dump(2) + "\n");
}

double match_recall(const MatchSet& set, const std::vector<std::array<double, 4>>& gt,
                    double tol_px) {
  if (gt.empty()) return 0.0;
  int hit = 0;
  for (const auto& g : gt) {
    for (const auto& m : set.matches) {
      const double dsa = std::hypot(m.xa - g[0], m.ya - g[1]);
      const double dsb = std::hypot(m.xb - g[2], m.yb - g[3]);
      if (dsa <= tol_px && dsb <= tol_px) {
        ++hit;
        break;
      }
    }
  }
  return static_cast<double>(hit) / static_cast<double>(gt.size());
}

}  // namespace tp3m
