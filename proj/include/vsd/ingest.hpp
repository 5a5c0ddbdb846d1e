#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vsd/frame_log.hpp"
#include "vsd/image.hpp"
#include "vsd/vehicle.hpp"

namespace vsd::ingest {

// ---------------------------------------------------------------------------
// manifest (shared with the generator and the recorder)

struct ManifestEntry {
  std::string sequence_id;
  std::string pose_tag;
  std::string json_path;   // relative to the manifest's directory
  std::string frame_dir;   // relative; empty when frames were not materialized
  int n_frames = 0;
  double speed_mps = 0.0;
};

struct Manifest {
  std::filesystem::path root;  // directory the relative paths resolve against
  std::vector<ManifestEntry> entries;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// sequences

struct SpeedSequence {
  std::string sequence_id;
  std::string pose_tag;
  std::vector<std::string> frame_paths;  // absolute; may be empty (records-only)
  std::vector<FrameRecord> records;
  double speed_mps = 0.0;  // mean of the record velocities
  long long player_id = 0;
  synth::VehicleCategory category = synth::VehicleCategory::car;
};

// One sequence per contiguous player_id run. Throws InconsistentVelocity when
// velocities inside a run spread more than 0.5 m/s, SchemaViolation for
// degenerate single-record runs.
std::vector<SpeedSequence> segment_sequences(const std::vector<FrameRecord>& records);

// Parses + segments every log in the manifest and attaches frame paths.
std::vector<SpeedSequence> load_sequences(const Manifest& manifest);
SpeedSequence load_sequence(const Manifest& manifest, const ManifestEntry& entry);

// ---------------------------------------------------------------------------
// splits

struct DatasetSplit {
  std::vector<std::string> train, val, test;  // sorted sequence_ids
  std::uint64_t seed = 0;
};

struct SplitSet {
  DatasetSplit holistic;
  std::map<std::string, DatasetSplit> per_pose;
  std::uint64_t seed = 0;
};

// Per-pose 60/20/20 first (seeded shuffle of lexicographically sorted ids),
// holistic as the union, so the holistic test set never intersects any pose's
// training material by construction.
SplitSet make_splits(const Manifest& manifest, std::uint64_t seed);

void save_splits(const std::filesystem::path& path, const SplitSet& splits);
SplitSet load_splits(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// speed normalization (30..100 km/h <-> [-1, 1], exact affine)

inline constexpr double kSpeedMinKmh = 30.0;
inline constexpr double kSpeedMaxKmh = 100.0;

inline double normalize_speed(double v_kmh) {
  return 2.0 * (v_kmh - kSpeedMinKmh) / (kSpeedMaxKmh - kSpeedMinKmh) - 1.0;
}
inline double denormalize_speed(double n) {
  return kSpeedMinKmh + (n + 1.0) * (kSpeedMaxKmh - kSpeedMinKmh) / 2.0;
}

// ---------------------------------------------------------------------------
// clips

struct ClipConfig {
  int frames = 16;
  int height = 112;
  int width = 112;
};

struct Clip {
  int frames = 0, height = 0, width = 0;  // channels always 3, interleaved FHWC
  std::vector<float> data;                // pixel values in [0,1]
  float target_norm = 0.f;                // normalized speed
  double speed_kmh = 0.0;
  std::string sequence_id;
  std::string pose_tag;
  synth::VehicleCategory category = synth::VehicleCategory::car;
};

// Uniform temporal sampling with both endpoints: round(k*(n-1)/(F-1)).
// Indices repeat when the sequence is shorter than F.
std::vector<std::size_t> uniform_sample_indices(std::size_t n_frames, int clip_frames);

Clip build_clip(const SpeedSequence& seq, const ClipConfig& cfg);  // reads PNGs
Clip build_clip(const SpeedSequence& seq, std::span<const ImageU8> frames, const ClipConfig& cfg);

struct ClipBatch {
  int batch = 0, frames = 0, height = 0, width = 0, channels = 3;
  std::vector<float> data;  // B,F,H,W,C
  Eigen::VectorXf targets;  // normalized speeds
  std::vector<std::string> sequence_ids;
  std::vector<std::string> pose_tags;

  std::span<const float> clip(int b) const {
    const std::size_t stride = static_cast<std::size_t>(frames) * height * width * channels;
    return {data.data() + stride * b, stride};
  }
};

// In-memory clip set keyed by sequence_id; loaded once, shared read-only.
class ClipStore {
 public:
  void insert(Clip clip);
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const Clip& at(const std::string& id) const;  // throws DataMissing
  std::vector<std::string> ids() const;
  std::size_t size() const { return clips_.size(); }
  const ClipConfig& config() const { return cfg_; }

  ClipBatch make_batch(std::span<const std::string> ids) const;

  static ClipStore from_manifest(const Manifest& manifest, const ClipConfig& cfg, int n_threads = 1);

 private:
  ClipConfig cfg_{};
  bool have_cfg_ = false;
  std::vector<Clip> clips_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace vsd::ingest
