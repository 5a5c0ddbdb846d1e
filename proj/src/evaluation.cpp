#include "vsd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "vsd/errors.hpp"
#include "vsd/model.hpp"
#include "vsd/plot.hpp"

namespace vsd::evaluation {

using nlohmann::json;

std::vector<SpeedBin> default_speed_bins() {
  std::vector<SpeedBin> bins;
  for (double lo = 30.0; lo < 100.0; lo += 10.0) bins.push_back({lo, lo + 10.0});
  return bins;
}

std::vector<SequenceEval> evaluate_checkpoint(const training::Checkpoint& ckpt,
                                              const ingest::ClipStore& store,
                                              std::span<const std::string> ids, int batch_size) {
  if (ids.empty()) throw EmptyTestSet("evaluate_checkpoint: no test sequences");
  {
    const std::set<std::string> trained(ckpt.trained_ids.begin(), ckpt.trained_ids.end());
    for (const auto& id : ids)
      if (trained.count(id))
        throw LeakageDetected("evaluate_checkpoint: sequence " + id +
                              " is in the training provenance of " + ckpt.job_name);
  }

  nn::SpeedNet<float> net(ckpt.model, 0);
  if (net.parameter_count() != ckpt.params.size())
    throw ShapeMismatch("evaluate_checkpoint: parameter count does not match the model config");
  net.parameters() = ckpt.params;
  net.set_train_mode(false);

  auto denorm = [&](double n) { return ckpt.norm_lo_kmh + (n + 1.0) * (ckpt.norm_hi_kmh - ckpt.norm_lo_kmh) / 2.0; };

  std::vector<SequenceEval> out;
  out.reserve(ids.size());
  for (std::size_t pos = 0; pos < ids.size(); pos += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(pos + static_cast<std::size_t>(batch_size), ids.size());
    std::vector<std::string> chunk(ids.begin() + pos, ids.begin() + end);
    const ingest::ClipBatch batch = store.make_batch(chunk);
    const Eigen::VectorXf preds = net.predict(batch);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const ingest::Clip& clip = store.at(chunk[i]);
      SequenceEval e;
      e.sequence_id = clip.sequence_id;
      e.pose_tag = clip.pose_tag;
      e.category = clip.category;
      e.true_kmh = clip.speed_kmh;
      e.pred_kmh = denorm(preds[static_cast<Eigen::Index>(i)]);
      out.push_back(std::move(e));
    }
  }
  return out;
}

double mae_mps(std::span<const SequenceEval> evals) {
  if (evals.empty()) throw EmptyTestSet("mae: no evaluated sequences");
  double sum = 0.0;
  for (const auto& e : evals) sum += e.abs_err_mps();
  return sum / static_cast<double>(evals.size());
}

double mae_mps(const training::Checkpoint& ckpt, const ingest::ClipStore& store,
               std::span<const std::string> ids) {
  const auto evals = evaluate_checkpoint(ckpt, store, ids);
  return mae_mps(evals);
}

std::map<std::string, double> cross_test(const training::Checkpoint& holistic,
                                         const std::map<std::string, std::vector<std::string>>& pose_tests,
                                         const ingest::ClipStore& store) {
  std::vector<std::string> all_ids;
  for (const auto& [pose, ids] : pose_tests) all_ids.insert(all_ids.end(), ids.begin(), ids.end());
  const auto evals = evaluate_checkpoint(holistic, store, all_ids);

  std::map<std::string, double> sums;
  std::map<std::string, long> counts;
  double total = 0.0;
  for (const auto& e : evals) {
    sums[e.pose_tag] += e.abs_err_mps();
    counts[e.pose_tag] += 1;
    total += e.abs_err_mps();
  }
  std::map<std::string, double> out;
  for (const auto& [pose, s] : sums) out[pose] = s / static_cast<double>(counts[pose]);
  out["all"] = total / static_cast<double>(evals.size());
  return out;
}

std::map<synth::VehicleCategory, GroupMae> error_by_car_type(std::span<const SequenceEval> evals) {
  if (evals.empty()) throw EmptyTestSet("error_by_car_type: no evaluated sequences");
  std::map<synth::VehicleCategory, GroupMae> out;
  for (const auto& e : evals) {
    auto& g = out[e.category];
    g.mae += e.abs_err_mps();
    g.count += 1;
  }
  for (auto& [cat, g] : out) g.mae /= static_cast<double>(g.count);
  return out;
}

std::vector<std::pair<SpeedBin, GroupMae>> error_by_target_speed(std::span<const SequenceEval> evals,
                                                                 const std::vector<SpeedBin>& bins) {
  if (evals.empty()) throw EmptyTestSet("error_by_target_speed: no evaluated sequences");
  if (bins.empty()) throw Error("error_by_target_speed: no bins");
  for (const auto& b : bins)
    if (!(b.lo_kmh < b.hi_kmh)) throw Error("error_by_target_speed: degenerate bin");

  std::vector<std::pair<SpeedBin, GroupMae>> out;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    GroupMae g;
    const bool last = i + 1 == bins.size();
    for (const auto& e : evals) {
      const bool in = e.true_kmh >= bins[i].lo_kmh &&
                      (e.true_kmh < bins[i].hi_kmh || (last && e.true_kmh <= bins[i].hi_kmh));
      if (in) {
        g.mae += e.abs_err_mps();
        g.count += 1;
      }
    }
    if (g.count > 0) {
      g.mae /= static_cast<double>(g.count);
      out.emplace_back(bins[i], g);
    }
  }
  return out;
}

std::vector<std::pair<double, double>> theoretical_error_curve(double lo_length_m, double hi_length_m,
                                                               int n_samples, double height_m,
                                                               double pitch_deg,
                                                               const geometry::CameraIntrinsics& intr,
                                                               double speed_kmh, double pixel_noise_px) {
  if (n_samples < 2 || !(hi_length_m > lo_length_m))
    throw Error("theoretical_error_curve: bad sweep range");
  std::vector<std::pair<double, double>> out;
  out.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const double L = lo_length_m + (hi_length_m - lo_length_m) * i / (n_samples - 1);
    const geometry::CameraRig rig = geometry::rig_for_section_length(height_m, pitch_deg, L, intr);
    out.emplace_back(L, geometry::theoretical_speed_error(rig, speed_kmh / 3.6, pixel_noise_px));
  }
  return out;
}

SectionCurve section_error_curve(const std::map<std::string, double>& per_pose_mae,
                                 const std::vector<geometry::CameraRig>& grid, double speed_kmh,
                                 double pixel_noise_px) {
  SectionCurve curve;
  for (const auto& rig : grid) {
    const auto it = per_pose_mae.find(rig.pose_tag);
    if (it == per_pose_mae.end()) continue;
    const auto sec = geometry::visible_road_section(rig);
    curve.empirical.push_back({sec.length_m, it->second, rig.pose_tag});
  }
  std::sort(curve.empirical.begin(), curve.empirical.end(), [](const SectionPoint& a, const SectionPoint& b) {
    return a.length_m != b.length_m ? a.length_m < b.length_m : a.pose_tag < b.pose_tag;
  });
  if (!curve.empirical.empty()) {
    const double lo = std::max(0.5, curve.empirical.front().length_m * 0.8);
    const double hi = curve.empirical.back().length_m * 1.2;
    curve.theoretical = theoretical_error_curve(lo, hi, 100, 3.0, 45.0, {}, speed_kmh, pixel_noise_px);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// report serialization

namespace {

json group_to_json(const GroupMae& g) { return {{"mae_mps", g.mae}, {"count", g.count}}; }
GroupMae group_from_json(const json& j) { return {j.at("mae_mps").get<double>(), j.at("count").get<long>()}; }

}  // namespace

json EvalReport::to_json() const {
  json models_j = json::array();
  for (const auto& m : models) {
    json cat = json::object();
    for (const auto& [c, g] : m.mae_by_category) cat[c] = group_to_json(g);
    json bins = json::array();
    for (const auto& [bin, g] : m.mae_by_bin)
      bins.push_back({{"lo_kmh", bin.lo_kmh}, {"hi_kmh", bin.hi_kmh}, {"mae_mps", g.mae}, {"count", g.count}});
    models_j.push_back({{"model", m.model_name},
                        {"mae_by_pose", m.mae_by_pose},
                        {"mae_by_category", cat},
                        {"mae_by_bin", bins},
                        {"n_test", m.n_test},
                        {"overall_mae_mps", m.overall_mae_mps}});
  }
  json emp = json::array();
  for (const auto& p : section.empirical)
    emp.push_back({{"length_m", p.length_m}, {"mae_mps", p.mae_mps}, {"pose_tag", p.pose_tag}});
  json theo = json::array();
  for (const auto& [l, e] : section.theoretical) theo.push_back({{"length_m", l}, {"error_mps", e}});
  return {{"models", models_j}, {"section_empirical", emp}, {"section_theoretical", theo},
          {"metadata", metadata}};
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  for (const auto& mj : j.at("models")) {
    ModelEval m;
    m.model_name = mj.at("model").get<std::string>();
    m.mae_by_pose = mj.at("mae_by_pose").get<std::map<std::string, double>>();
    for (const auto& [name, gj] : mj.at("mae_by_category").items())
      m.mae_by_category[name] = group_from_json(gj);
    for (const auto& bj : mj.at("mae_by_bin"))
      m.mae_by_bin.emplace_back(SpeedBin{bj.at("lo_kmh").get<double>(), bj.at("hi_kmh").get<double>()},
                                GroupMae{bj.at("mae_mps").get<double>(), bj.at("count").get<long>()});
    m.n_test = mj.at("n_test").get<long>();
    m.overall_mae_mps = mj.at("overall_mae_mps").get<double>();
    r.models.push_back(std::move(m));
  }
  for (const auto& pj : j.at("section_empirical"))
    r.section.empirical.push_back({pj.at("length_m").get<double>(), pj.at("mae_mps").get<double>(),
                                   pj.at("pose_tag").get<std::string>()});
  for (const auto& pj : j.at("section_theoretical"))
    r.section.theoretical.emplace_back(pj.at("length_m").get<double>(), pj.at("error_mps").get<double>());
  r.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
  return r;
}

void EvalReport::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoFailure("EvalReport::save: cannot open " + path.string());
  out << to_json().dump(1) << "\n";
}

EvalReport EvalReport::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("EvalReport::load: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoFailure("EvalReport::load: " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

// ---------------------------------------------------------------------------
// tables

void write_table(const std::filesystem::path& path, const Table& table) {
  std::ofstream out(path);
  if (!out) throw IoFailure("write_table: cannot open " + path.string());
  for (std::size_t i = 0; i < table.header.size(); ++i)
    out << table.header[i] << (i + 1 < table.header.size() ? "," : "\n");
  for (const auto& row : table.rows)
    for (std::size_t i = 0; i < row.size(); ++i) out << row[i] << (i + 1 < row.size() ? "," : "\n");
  if (!out) throw IoFailure("write_table: write failed for " + path.string());
}

Table parse_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("parse_table: cannot open " + path.string());
  Table t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (line.back() == ',') cols.push_back("");
    if (first) {
      t.header = std::move(cols);
      first = false;
    } else {
      t.rows.push_back(std::move(cols));
    }
  }
  return t;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

void emit_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoFailure("emit_report: cannot create " + out_dir.string());

  // 1. per-dataset MAE (Table 1 analog): rows = pose test sets, columns = models
  std::vector<std::string> poses;
  for (const auto& m : report.models)
    for (const auto& [pose, _] : m.mae_by_pose)
      if (pose != "all" && std::find(poses.begin(), poses.end(), pose) == poses.end()) poses.push_back(pose);
  std::sort(poses.begin(), poses.end());
  {
    Table t;
    t.header = {"pose_test_set"};
    for (const auto& m : report.models) t.header.push_back("mae_mps_" + m.model_name);
    for (const auto& pose : poses) {
      std::vector<std::string> row{pose};
      for (const auto& m : report.models) {
        const auto it = m.mae_by_pose.find(pose);
        row.push_back(it == m.mae_by_pose.end() ? "" : fmt(it->second));
      }
      t.rows.push_back(std::move(row));
    }
    std::vector<std::string> all_row{"all"};
    for (const auto& m : report.models) {
      const auto it = m.mae_by_pose.find("all");
      all_row.push_back(it == m.mae_by_pose.end() ? "" : fmt(it->second));
    }
    t.rows.push_back(std::move(all_row));
    write_table(out_dir / "per_dataset_mae.csv", t);

    plot::Figure fig(720, 420, "Error by model type", "pose test set", "MAE m/s");
    std::vector<std::pair<std::string, std::vector<double>>> series;
    for (const auto& m : report.models) {
      std::vector<double> vals;
      for (const auto& pose : poses) {
        const auto it = m.mae_by_pose.find(pose);
        vals.push_back(it == m.mae_by_pose.end() ? 0.0 : it->second);
      }
      series.emplace_back(m.model_name, std::move(vals));
    }
    fig.add_bar_groups(poses, series);
    fig.save(out_dir / "per_dataset_mae.png");
  }

  // 2. per-car-type MAE (Figs 5/7 analog)
  {
    Table t;
    t.header = {"model", "category", "mae_mps", "n_sequences"};
    for (const auto& m : report.models)
      for (const auto& [cat, g] : m.mae_by_category)
        t.rows.push_back({m.model_name, cat, fmt(g.mae), std::to_string(g.count)});
    write_table(out_dir / "per_car_type_mae.csv", t);

    std::vector<std::string> cats;
    for (const auto& m : report.models)
      for (const auto& [cat, g] : m.mae_by_category)
        if (std::find(cats.begin(), cats.end(), cat) == cats.end()) cats.push_back(cat);
    std::sort(cats.begin(), cats.end());
    plot::Figure fig(720, 420, "Error by car type", "category", "MAE m/s");
    std::vector<std::pair<std::string, std::vector<double>>> series;
    for (const auto& m : report.models) {
      std::vector<double> vals;
      for (const auto& name : cats) {
        const auto it = m.mae_by_category.find(name);
        vals.push_back(it == m.mae_by_category.end() ? 0.0 : it->second.mae);
      }
      series.emplace_back(m.model_name, std::move(vals));
    }
    fig.add_bar_groups(cats, series);
    fig.save(out_dir / "per_car_type_mae.png");
  }

  // 3. per-speed-bin MAE (Figs 6/8 analog)
  {
    Table t;
    t.header = {"model", "bin_lo_kmh", "bin_hi_kmh", "mae_mps", "n_sequences"};
    for (const auto& m : report.models)
      for (const auto& [bin, g] : m.mae_by_bin)
        t.rows.push_back({m.model_name, fmt(bin.lo_kmh), fmt(bin.hi_kmh), fmt(g.mae), std::to_string(g.count)});
    write_table(out_dir / "per_speed_bin_mae.csv", t);

    plot::Figure fig(720, 420, "Error by target speed", "target speed km/h", "MAE m/s");
    for (const auto& m : report.models) {
      std::vector<double> xs, ys;
      for (const auto& [bin, g] : m.mae_by_bin) {
        xs.push_back((bin.lo_kmh + bin.hi_kmh) / 2.0);
        ys.push_back(g.mae);
      }
      fig.add_line(xs, ys, m.model_name, true);
    }
    fig.save(out_dir / "per_speed_bin_mae.png");
  }

  // 4. error vs measurement-section length (Fig 4 analog)
  {
    Table t;
    t.header = {"kind", "length_m", "error_mps", "pose_tag"};
    for (const auto& p : report.section.empirical)
      t.rows.push_back({"empirical", fmt(p.length_m), fmt(p.mae_mps), p.pose_tag});
    for (const auto& [l, e] : report.section.theoretical)
      t.rows.push_back({"theoretical", fmt(l), fmt(e), ""});
    write_table(out_dir / "section_error_curve.csv", t);

    plot::Figure fig(720, 420, "Error vs section length", "section length m", "error m/s");
    if (!report.section.theoretical.empty()) {
      std::vector<double> xs, ys;
      for (const auto& [l, e] : report.section.theoretical) {
        xs.push_back(l);
        ys.push_back(e);
      }
      fig.add_line(xs, ys, "theoretical");
    }
    if (!report.section.empirical.empty()) {
      std::vector<double> xs, ys;
      for (const auto& p : report.section.empirical) {
        xs.push_back(p.length_m);
        ys.push_back(p.mae_mps);
      }
      fig.add_line(xs, ys, "empirical", true);
    }
    fig.save(out_dir / "section_error_curve.png");
  }

  // 5. summary
  {
    Table t;
    t.header = {"model", "n_test_sequences", "overall_mae_mps"};
    for (const auto& m : report.models)
      t.rows.push_back({m.model_name, std::to_string(m.n_test), fmt(m.overall_mae_mps)});
    write_table(out_dir / "summary.csv", t);

    plot::Figure fig(720, 420, "Overall MAE by model", "model", "MAE m/s");
    std::vector<std::string> labels;
    std::vector<double> vals;
    for (const auto& m : report.models) {
      labels.push_back(m.model_name);
      vals.push_back(m.overall_mae_mps);
    }
    fig.add_bar_groups(labels, {{"overall", vals}});
    fig.save(out_dir / "summary.png");
  }

  // metadata block (not a table)
  {
    json meta(report.metadata);
    std::ofstream out(out_dir / "metadata.json");
    if (!out) throw IoFailure("emit_report: cannot open metadata.json");
    out << meta.dump(1) << "\n";
  }
}

}  // namespace vsd::evaluation
