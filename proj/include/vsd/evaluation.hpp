#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsd/geometry.hpp"
#include "vsd/ingest.hpp"
#include "vsd/training.hpp"
#include "vsd/vehicle.hpp"

namespace vsd::evaluation {

struct SpeedBin {
  double lo_kmh = 0.0;
  double hi_kmh = 0.0;
};

// 30..100 km/h in 10 km/h steps
std::vector<SpeedBin> default_speed_bins();

struct SequenceEval {
  std::string sequence_id;
  std::string pose_tag;
  synth::VehicleCategory category = synth::VehicleCategory::car;
  double true_kmh = 0.0;
  double pred_kmh = 0.0;
  double abs_err_mps() const { return std::abs(pred_kmh - true_kmh) / 3.6; }
};

// Checkpoint inference over test sequences. Refuses any id present in the
// checkpoint's training provenance (LeakageDetected); EmptyTestSet when ids
// is empty.
std::vector<SequenceEval> evaluate_checkpoint(const training::Checkpoint& ckpt,
                                              const ingest::ClipStore& store,
                                              std::span<const std::string> ids, int batch_size = 16);

double mae_mps(std::span<const SequenceEval> evals);  // EmptyTestSet on empty
double mae_mps(const training::Checkpoint& ckpt, const ingest::ClipStore& store,
               std::span<const std::string> ids);

// Holistic model against each pose's own test set; includes the "all" row
// (sequence-weighted aggregate over the union).
std::map<std::string, double> cross_test(const training::Checkpoint& holistic,
                                         const std::map<std::string, std::vector<std::string>>& pose_tests,
                                         const ingest::ClipStore& store);

struct GroupMae {
  double mae = 0.0;
  long count = 0;
};
std::map<synth::VehicleCategory, GroupMae> error_by_car_type(std::span<const SequenceEval> evals);
std::vector<std::pair<SpeedBin, GroupMae>> error_by_target_speed(std::span<const SequenceEval> evals,
                                                                 const std::vector<SpeedBin>& bins);

// error-vs-section-length analysis
struct SectionPoint {
  double length_m = 0.0;
  double mae_mps = 0.0;
  std::string pose_tag;
};
struct SectionCurve {
  std::vector<SectionPoint> empirical;                  // one point per pose, sorted by length
  std::vector<std::pair<double, double>> theoretical;   // (length_m, error_mps)
};

// Theoretical error over section lengths, realized by lens choice at fixed
// height/pitch (defaults: 3 m, 45 deg, desk intrinsics, 65 km/h).
std::vector<std::pair<double, double>> theoretical_error_curve(
    double lo_length_m, double hi_length_m, int n_samples, double height_m = 3.0, double pitch_deg = 45.0,
    const geometry::CameraIntrinsics& intr = {}, double speed_kmh = 65.0,
    double pixel_noise_px = geometry::kDefaultPixelNoisePx);

SectionCurve section_error_curve(const std::map<std::string, double>& per_pose_mae,
                                 const std::vector<geometry::CameraRig>& grid,
                                 double speed_kmh = 65.0,
                                 double pixel_noise_px = geometry::kDefaultPixelNoisePx);

// ---------------------------------------------------------------------------
// report

struct ModelEval {
  std::string model_name;  // pose tag of the individual model or "holistic"
  std::map<std::string, double> mae_by_pose;  // pose test sets + "all"
  std::map<std::string, GroupMae> mae_by_category;
  std::vector<std::pair<SpeedBin, GroupMae>> mae_by_bin;
  long n_test = 0;
  double overall_mae_mps = 0.0;
};

struct EvalReport {
  std::vector<ModelEval> models;
  SectionCurve section;
  std::map<std::string, std::string> metadata;  // checkpoint ids, split seed, timestamps

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static EvalReport load(const std::filesystem::path& path);
};

// Five table files (CSV, documented units) and five figure analogs.
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);

// delimited-table helpers; emit_report output round-trips through parse_table
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
void write_table(const std::filesystem::path& path, const Table& table);
Table parse_table(const std::filesystem::path& path);

}  // namespace vsd::evaluation
