// vsd: synthetic multi-view vehicle-speed pipeline
//   generate -> (record) -> split -> train -> eval -> report

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>

#include "vsd/carla_bridge.hpp"
#include "vsd/errors.hpp"
#include "vsd/evaluation.hpp"
#include "vsd/geometry.hpp"
#include "vsd/ingest.hpp"
#include "vsd/model.hpp"
#include "vsd/synthgen.hpp"
#include "vsd/training.hpp"

namespace fs = std::filesystem;
using namespace vsd;

namespace {

struct Preset {
  std::vector<geometry::CameraRig> grid;
  int n_per_pose = 120;
  ingest::ClipConfig clip{16, 112, 112};
};

Preset make_preset(const std::string& name) {
  Preset p;
  geometry::CameraIntrinsics intr;  // desk default 320x180, hfov 80
  if (name == "desk") {
    const auto full = geometry::default_pose_grid(intr);
    for (const auto& rig : full)
      if (rig.pose_tag == "3m45" || rig.pose_tag == "4m60") p.grid.push_back(rig);
    p.n_per_pose = 120;
  } else if (name == "paper") {
    intr.width_px = 1920;
    intr.height_px = 1080;
    p.grid = geometry::default_pose_grid(intr);
    p.n_per_pose = 610;
  } else {
    throw UsageError("unknown preset '" + name + "' (expected desk or paper)");
  }
  return p;
}

nn::ModelConfig model_for_clip(const ingest::ClipConfig& clip) {
  nn::ModelConfig cfg;
  cfg.in_frames = clip.frames;
  cfg.in_height = clip.height;
  cfg.in_width = clip.width;
  cfg.validate();
  return cfg;
}

void log_config(const std::string& key, const std::string& value) {
  std::cout << "config: " << key << "=" << value << "\n";
}

fs::path default_out_root() {
  if (const char* env = std::getenv("VSD_OUT"); env && *env) return env;
  return "vsd_out";
}

std::vector<geometry::CameraRig> load_grid_or_preset(const std::string& grid_file, const std::string& preset) {
  if (!grid_file.empty()) return geometry::load_pose_grid(grid_file);
  return make_preset(preset).grid;
}

// --- eval plumbing ----------------------------------------------------------

evaluation::ModelEval summarize_model(const std::string& name,
                                      const std::vector<evaluation::SequenceEval>& evals) {
  evaluation::ModelEval m;
  m.model_name = name;
  m.n_test = static_cast<long>(evals.size());
  m.overall_mae_mps = evaluation::mae_mps(evals);
  std::map<std::string, std::pair<double, long>> by_pose;
  for (const auto& e : evals) {
    by_pose[e.pose_tag].first += e.abs_err_mps();
    by_pose[e.pose_tag].second += 1;
  }
  for (const auto& [pose, acc] : by_pose) m.mae_by_pose[pose] = acc.first / acc.second;
  if (by_pose.size() > 1) m.mae_by_pose["all"] = m.overall_mae_mps;
  for (const auto& [cat, g] : evaluation::error_by_car_type(evals))
    m.mae_by_category[synth::to_string(cat)] = g;
  m.mae_by_bin = evaluation::error_by_target_speed(evals, evaluation::default_speed_bins());
  return m;
}

evaluation::EvalReport run_eval(const std::vector<training::Checkpoint>& checkpoints,
                                const ingest::SplitSet& splits, const ingest::ClipStore& store,
                                const std::vector<geometry::CameraRig>& grid) {
  evaluation::EvalReport report;
  std::map<std::string, double> individual_own_pose;
  std::map<std::string, double> holistic_rows;

  for (const auto& ckpt : checkpoints) {
    const bool holistic = ckpt.pose_tags.size() > 1 || ckpt.job_name == "holistic";
    std::vector<std::string> test_ids;
    if (holistic) {
      for (const auto& [pose, split] : splits.per_pose)
        test_ids.insert(test_ids.end(), split.test.begin(), split.test.end());
    } else if (!ckpt.pose_tags.empty()) {
      const auto it = splits.per_pose.find(ckpt.pose_tags.front());
      if (it == splits.per_pose.end())
        throw DataMissing("eval: no split for pose " + ckpt.pose_tags.front());
      test_ids = it->second.test;
    }
    const auto evals = evaluation::evaluate_checkpoint(ckpt, store, test_ids);
    auto m = summarize_model(ckpt.job_name.empty() ? "model" : ckpt.job_name, evals);
    if (holistic)
      for (const auto& [pose, mae] : m.mae_by_pose)
        if (pose != "all") holistic_rows[pose] = mae;
    if (!holistic && !ckpt.pose_tags.empty())
      individual_own_pose[ckpt.pose_tags.front()] = m.overall_mae_mps;
    report.models.push_back(std::move(m));
  }

  const auto& curve_source = individual_own_pose.empty() ? holistic_rows : individual_own_pose;
  report.section = evaluation::section_error_curve(curve_source, grid);
  return report;
}

std::vector<training::Checkpoint> load_checkpoints(const std::string& arg) {
  std::vector<training::Checkpoint> out;
  const fs::path path(arg);
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.path().extension() == ".ckpt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back(training::Checkpoint::load(f));
  } else {
    out.push_back(training::Checkpoint::load(path));
  }
  if (out.empty()) throw DataMissing("eval: no checkpoints found at " + arg);
  return out;
}

// --- subcommand bodies -------------------------------------------------------

int cmd_generate(const std::string& grid_file, const std::string& preset, int n_per_pose,
                 const fs::path& out, std::uint64_t seed, bool no_frames, int jobs) {
  auto grid = load_grid_or_preset(grid_file, preset);
  if (n_per_pose <= 0) n_per_pose = make_preset(grid_file.empty() ? preset : "desk").n_per_pose;
  log_config("generate.preset", grid_file.empty() ? preset : grid_file);
  log_config("generate.n_per_pose", std::to_string(n_per_pose));
  log_config("generate.seed", std::to_string(seed));
  log_config("generate.out", out.string());
  log_config("generate.write_frames", no_frames ? "false" : "true");
  const auto manifest = synth::generate_dataset(grid, n_per_pose, out, seed, {}, !no_frames, jobs);
  std::cout << "generated " << manifest.entries.size() << " sequences under " << out << "\n";
  return 0;
}

int cmd_split(const fs::path& manifest_path, std::uint64_t seed, const fs::path& out) {
  log_config("split.manifest", manifest_path.string());
  log_config("split.seed", std::to_string(seed));
  const auto manifest = ingest::read_manifest(manifest_path);
  const auto splits = ingest::make_splits(manifest, seed);
  ingest::save_splits(out, splits);
  std::cout << "splits: holistic " << splits.holistic.train.size() << "/" << splits.holistic.val.size()
            << "/" << splits.holistic.test.size() << " over " << splits.per_pose.size() << " poses -> "
            << out << "\n";
  return 0;
}

int cmd_train(const fs::path& manifest_path, const fs::path& split_path, const std::string& poses,
              const std::string& train_cfg_file, const std::string& clip_arg, const fs::path& out,
              std::uint64_t seed, int jobs) {
  const auto manifest = ingest::read_manifest(manifest_path);
  auto splits = ingest::load_splits(split_path);

  training::TrainConfig cfg;
  if (!train_cfg_file.empty()) {
    std::ifstream in(train_cfg_file);
    if (!in) throw IoFailure("train: cannot open config " + train_cfg_file);
    nlohmann::json j;
    in >> j;
    cfg = training::TrainConfig::from_json(j);
  }
  if (seed != 0) cfg.seed = seed;

  ingest::ClipConfig clip{16, 112, 112};
  if (!clip_arg.empty() && std::sscanf(clip_arg.c_str(), "%d,%d,%d", &clip.frames, &clip.height,
                                       &clip.width) != 3)
    throw UsageError("train: --clip expects F,H,W");

  log_config("train.learning_rate", std::to_string(cfg.learning_rate));
  log_config("train.batch_size", std::to_string(cfg.batch_size));
  log_config("train.patience", std::to_string(cfg.early_stop_patience));
  log_config("train.max_epochs", std::to_string(cfg.max_epochs));
  log_config("train.seed", std::to_string(cfg.seed));
  log_config("train.clip", std::to_string(clip.frames) + "," + std::to_string(clip.height) + "," +
                               std::to_string(clip.width));
  log_config("train.poses", poses);

  if (poses != "all") {
    std::stringstream ss(poses);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (tok != "holistic" && !splits.per_pose.count(tok))
        throw UsageError("train: pose " + tok + " not present in the split file");
  }

  const auto store = ingest::ClipStore::from_manifest(manifest, clip, 2);
  const auto model_cfg = model_for_clip(clip);

  std::vector<training::TrainJobOutcome> outcomes;
  if (poses == "all") {
    outcomes = training::train_all(splits, store, model_cfg, cfg, jobs);
  } else {
    std::stringstream ss(poses);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      training::TrainJobOutcome o;
      o.name = tok;
      try {
        const auto& split = tok == "holistic" ? splits.holistic : splits.per_pose.at(tok);
        o.result = training::train(model_cfg, split, store, cfg, tok);
        o.ok = true;
      } catch (const std::exception& e) {
        o.error = e.what();
      }
      outcomes.push_back(std::move(o));
    }
  }

  fs::create_directories(out);
  bool any_failed = false;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      any_failed = true;
      std::cerr << "train job " << o.name << " failed: " << o.error << "\n";
      continue;
    }
    o.result.checkpoint.save(out / (o.name + ".ckpt"));
    o.result.history.save_csv(out / (o.name + "_history.csv"));
    std::cout << "trained " << o.name << ": best val loss " << o.result.history.val_loss[o.result.history.best_epoch - 1]
              << " @ epoch " << o.result.history.best_epoch << "/" << o.result.history.stopped_epoch << "\n";
  }
  return any_failed ? 1 : 0;
}

int cmd_eval(const std::string& ckpt_arg, const fs::path& manifest_path, const fs::path& split_path,
             const std::string& grid_file, const std::string& preset, const std::string& clip_arg,
             const fs::path& out) {
  const auto manifest = ingest::read_manifest(manifest_path);
  const auto splits = ingest::load_splits(split_path);
  const auto checkpoints = load_checkpoints(ckpt_arg);
  const auto grid = load_grid_or_preset(grid_file, preset);

  ingest::ClipConfig clip{checkpoints.front().model.in_frames, checkpoints.front().model.in_height,
                          checkpoints.front().model.in_width};
  if (!clip_arg.empty() && std::sscanf(clip_arg.c_str(), "%d,%d,%d", &clip.frames, &clip.height,
                                       &clip.width) != 3)
    throw UsageError("eval: --clip expects F,H,W");
  log_config("eval.checkpoints", std::to_string(checkpoints.size()));
  log_config("eval.split", split_path.string());

  const auto store = ingest::ClipStore::from_manifest(manifest, clip, 2);
  auto report = run_eval(checkpoints, splits, store, grid);
  report.metadata["split_seed"] = std::to_string(splits.seed);
  report.metadata["n_checkpoints"] = std::to_string(checkpoints.size());
  {
    std::string names;
    for (const auto& c : checkpoints) names += (names.empty() ? "" : ";") + c.job_name;
    report.metadata["checkpoints"] = names;
  }
  report.metadata["generated_at"] = std::to_string(
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
          .count());

  fs::create_directories(out);
  report.save(out / "eval.json");
  evaluation::emit_report(report, out);
  for (const auto& m : report.models)
    std::cout << "eval " << m.model_name << ": overall MAE " << m.overall_mae_mps << " m/s over " << m.n_test
              << " sequences\n";
  return 0;
}

int cmd_record(const std::string& host, int port, double delta, double timeout, const std::string& pose_tag,
               const std::string& grid_file, const std::string& preset, double speed_kmh,
               const fs::path& out) {
  carla::SimulatorEndpoint endpoint;
  endpoint.host = host;
  endpoint.port = port;
  endpoint.sync_delta_s = delta;
  endpoint.timeout_s = timeout;
  endpoint = carla::SimulatorEndpoint::from_env(endpoint);
  log_config("record.endpoint", endpoint.host + ":" + std::to_string(endpoint.port));
  log_config("record.delta", std::to_string(endpoint.sync_delta_s));

  const auto grid = load_grid_or_preset(grid_file, preset);
  const geometry::CameraRig* rig = nullptr;
  for (const auto& r : grid)
    if (r.pose_tag == pose_tag) rig = &r;
  if (!rig) throw UsageError("record: pose_tag " + pose_tag + " not in the grid");

  synth::ScenarioSpec scenario = synth::sample_scenario(1, *rig, synth::default_catalog());
  if (speed_kmh > 0) scenario.speed_kmh = speed_kmh;
  fs::create_directories(out);
  const auto entry = carla::record_session(endpoint, scenario, out);
  std::cout << "recorded " << entry.sequence_id << " (" << entry.n_frames << " frames, " << entry.speed_mps
            << " m/s) under " << out << "\n";
  return 0;
}

int cmd_pipeline(const std::string& preset_name, std::uint64_t seed, fs::path out, int n_per_pose, int jobs) {
  const Preset preset = make_preset(preset_name);
  if (n_per_pose <= 0) n_per_pose = preset.n_per_pose;
  log_config("pipeline.preset", preset_name);
  log_config("pipeline.seed", std::to_string(seed));
  log_config("pipeline.out", out.string());
  log_config("pipeline.n_per_pose", std::to_string(n_per_pose));

  // stage seeds fan out from the single pipeline seed
  const std::uint64_t seed_gen = seed, seed_split = seed + 1, seed_train = seed + 2;

  std::cout << "[1/5] generate\n";
  const auto manifest = synth::generate_dataset(preset.grid, n_per_pose, out / "dataset", seed_gen, {}, true, jobs);

  std::cout << "[2/5] split\n";
  const auto splits = ingest::make_splits(manifest, seed_split);
  ingest::save_splits(out / "splits.json", splits);

  std::cout << "[3/5] train\n";
  training::TrainConfig tcfg;
  tcfg.seed = seed_train;
  const auto store = ingest::ClipStore::from_manifest(manifest, preset.clip, jobs);
  const auto model_cfg = model_for_clip(preset.clip);
  const auto outcomes = training::train_all(splits, store, model_cfg, tcfg, jobs);
  fs::create_directories(out / "models");
  std::vector<training::Checkpoint> checkpoints;
  for (const auto& o : outcomes) {
    if (!o.ok) throw Error("pipeline: train job " + o.name + " failed: " + o.error);
    o.result.checkpoint.save(out / "models" / (o.name + ".ckpt"));
    o.result.history.save_csv(out / "models" / (o.name + "_history.csv"));
    checkpoints.push_back(o.result.checkpoint);
    std::cout << "  " << o.name << ": stopped at epoch " << o.result.history.stopped_epoch << ", best "
              << o.result.history.best_epoch << "\n";
  }

  std::cout << "[4/5] eval\n";
  auto report = run_eval(checkpoints, splits, store, preset.grid);
  report.metadata["split_seed"] = std::to_string(splits.seed);
  report.metadata["pipeline_seed"] = std::to_string(seed);
  report.metadata["preset"] = preset_name;
  report.save(out / "eval.json");

  std::cout << "[5/5] report\n";
  evaluation::emit_report(report, out / "report");
  for (const auto& m : report.models)
    std::cout << "  " << m.model_name << ": overall MAE " << m.overall_mae_mps << " m/s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic multi-view vehicle speed pipeline"};
  app.require_subcommand(1);

  const fs::path out_root = default_out_root();

  // generate
  auto* gen = app.add_subcommand("generate", "render a synthetic dataset");
  std::string gen_grid, gen_preset = "desk";
  int gen_n = 0, gen_jobs = 2;
  fs::path gen_out = out_root / "dataset";
  std::uint64_t gen_seed = 1;
  bool gen_no_frames = false;
  gen->add_option("--grid", gen_grid, "pose grid JSON file");
  gen->add_option("--preset", gen_preset, "desk|paper");
  gen->add_option("--n-per-pose", gen_n, "sequences per pose");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--jobs", gen_jobs, "worker threads");
  gen->add_flag("--no-frames", gen_no_frames, "write logs and manifest only");

  // record
  auto* rec = app.add_subcommand("record", "record one sequence from a live simulator");
  std::string rec_host = "127.0.0.1", rec_pose = "3m45", rec_grid, rec_preset = "desk";
  int rec_port = 2000;
  double rec_delta = 0.0125, rec_timeout = 5.0, rec_speed = 0.0;
  fs::path rec_out = out_root / "recorded";
  rec->add_option("--host", rec_host, "simulator host");
  rec->add_option("--port", rec_port, "simulator port");
  rec->add_option("--delta", rec_delta, "fixed simulation step seconds");
  rec->add_option("--timeout", rec_timeout, "connect/read timeout seconds");
  rec->add_option("--pose-tag", rec_pose, "camera pose to record");
  rec->add_option("--grid", rec_grid, "pose grid JSON file");
  rec->add_option("--preset", rec_preset, "desk|paper");
  rec->add_option("--speed-kmh", rec_speed, "commanded speed (default: sampled)");
  rec->add_option("--out", rec_out, "output directory");

  // split
  auto* spl = app.add_subcommand("split", "build train/val/test splits");
  fs::path spl_manifest, spl_out = out_root / "splits.json";
  std::uint64_t spl_seed = 2;
  spl->add_option("--manifest", spl_manifest, "dataset manifest")->required();
  spl->add_option("--seed", spl_seed, "rng seed");
  spl->add_option("--out", spl_out, "output split file");

  // train
  auto* trn = app.add_subcommand("train", "train per-pose and holistic models");
  fs::path trn_manifest, trn_split, trn_out = out_root / "models";
  std::string trn_poses = "all", trn_cfg, trn_clip;
  std::uint64_t trn_seed = 0;
  int trn_jobs = 1;
  trn->add_option("--manifest", trn_manifest, "dataset manifest")->required();
  trn->add_option("--split", trn_split, "split file")->required();
  trn->add_option("--poses", trn_poses, "comma list of pose tags, 'holistic', or 'all'");
  trn->add_option("--config", trn_cfg, "train config JSON");
  trn->add_option("--clip", trn_clip, "clip shape F,H,W");
  trn->add_option("--out", trn_out, "checkpoint directory");
  trn->add_option("--seed", trn_seed, "seed override");
  trn->add_option("--jobs", trn_jobs, "parallel training jobs");

  // eval
  auto* evl = app.add_subcommand("eval", "evaluate checkpoints and emit the report");
  std::string evl_ckpt, evl_grid, evl_preset = "desk", evl_clip;
  fs::path evl_manifest, evl_split, evl_out = out_root / "report";
  evl->add_option("--checkpoint", evl_ckpt, "checkpoint file or directory")->required();
  evl->add_option("--manifest", evl_manifest, "dataset manifest")->required();
  evl->add_option("--split", evl_split, "split file")->required();
  evl->add_option("--grid", evl_grid, "pose grid JSON file");
  evl->add_option("--preset", evl_preset, "desk|paper");
  evl->add_option("--clip", evl_clip, "clip shape F,H,W");
  evl->add_option("--out", evl_out, "report directory");

  // report
  auto* rpt = app.add_subcommand("report", "re-emit tables and figures from a saved eval");
  fs::path rpt_eval, rpt_out = out_root / "report";
  rpt->add_option("--eval", rpt_eval, "eval.json produced by eval")->required();
  rpt->add_option("--out", rpt_out, "report directory");

  // pipeline
  auto* pip = app.add_subcommand("pipeline", "run the full chain with one seed");
  std::string pip_preset = "desk";
  std::uint64_t pip_seed = 1;
  fs::path pip_out = out_root;
  int pip_n = 0, pip_jobs = 2;
  pip->add_option("--preset", pip_preset, "desk|paper");
  pip->add_option("--seed", pip_seed, "pipeline seed");
  pip->add_option("--out", pip_out, "output root");
  pip->add_option("--n-per-pose", pip_n, "override sequences per pose");
  pip->add_option("--jobs", pip_jobs, "worker threads / parallel jobs");

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      return cmd_generate(gen_grid, gen_preset, gen_n, gen_out, gen_seed, gen_no_frames, gen_jobs);
    if (rec->parsed())
      return cmd_record(rec_host, rec_port, rec_delta, rec_timeout, rec_pose, rec_grid, rec_preset,
                        rec_speed, rec_out);
    if (spl->parsed()) return cmd_split(spl_manifest, spl_seed, spl_out);
    if (trn->parsed())
      return cmd_train(trn_manifest, trn_split, trn_poses, trn_cfg, trn_clip, trn_out, trn_seed, trn_jobs);
    if (evl->parsed())
      return cmd_eval(evl_ckpt, evl_manifest, evl_split, evl_grid, evl_preset, evl_clip, evl_out);
    if (rpt->parsed()) {
      const auto report = evaluation::EvalReport::load(rpt_eval);
      evaluation::emit_report(report, rpt_out);
      std::cout << "report re-emitted into " << rpt_out << "\n";
      return 0;
    }
    if (pip->parsed()) return cmd_pipeline(pip_preset, pip_seed, pip_out, pip_n, pip_jobs);
    throw UsageError("no subcommand given");
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // 2: usage error, incl. unknown subcommands
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
