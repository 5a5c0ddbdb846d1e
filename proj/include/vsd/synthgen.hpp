#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vsd/frame_log.hpp"
#include "vsd/geometry.hpp"
#include "vsd/image.hpp"
#include "vsd/vehicle.hpp"

namespace vsd::ingest {
struct Manifest;  // manifest format shared with ingest
}

namespace vsd::synth {

struct EnvironmentSpec {
  double cloudiness = 30.0;  // percent
  double precipitation = 0.0;
  double wind_intensity = 0.0;
  double fog_density = 0.0;
  double wetness = 0.0;
  double sun_altitude_deg = 45.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::string weather_string() const;  // CARLA-style repr stored in the log
};

struct ScenarioSpec {
  geometry::CameraRig rig;
  VehicleSpec vehicle;
  EnvironmentSpec environment;
  double speed_kmh = 65.0;  // commanded, constant
  long long player_id = 0;

  double speed_mps() const { return speed_kmh / 3.6; }
  void validate() const;
};

// Uniform speed in [30,100] km/h, vehicle/color/weather drawn from the catalog
// and plausible ranges; fully determined by the seed.
ScenarioSpec sample_scenario(std::uint64_t rng_seed, const geometry::CameraRig& rig,
                             std::span<const VehicleSpec> catalog);

struct RenderOptions {
  // exposure window as a fraction of the frame interval; the vehicle is
  // accumulated over it, so streak length scales with speed (0 disables blur)
  double shutter_fraction = 1.0;
  int blur_samples = 8;
  bool antialias = true;
};

// Start/end of a pass: one body length before the visible section to one body
// length after it (clamped away from the camera foot).
struct Traversal {
  double x_start_m = 0.0;  // vehicle center at the first frame
  double x_end_m = 0.0;    // despawn threshold
  double distance_m() const { return x_end_m - x_start_m; }
};
Traversal scenario_traversal(const ScenarioSpec& scenario);

// ceil(distance / (v * dt)); the smallest frame count covering the distance.
int frame_count(double distance_m, double speed_mps, double frame_dt_s);

// One RGB frame at absolute time t (frame k <-> t = k * frame_dt_s). Road-only
// when the vehicle is out of view; never throws for out-of-view times.
ImageU8 render_frame(const ScenarioSpec& scenario, double t_s, const RenderOptions& opts = {});
// Same photometric pipeline without the vehicle (reference for tests).
ImageU8 render_road_only(const ScenarioSpec& scenario, double t_s, const RenderOptions& opts = {});

struct GeneratedSequence {
  std::string sequence_id;
  std::vector<ImageU8> frames;
  std::vector<ingest::FrameRecord> records;
  double speed_mps = 0.0;
};

// Frames plus matching records covering the full traversal. render_frames=false
// keeps only the records (metadata-level runs).
GeneratedSequence generate_sequence(const ScenarioSpec& scenario, const RenderOptions& opts = {},
                                    const std::string& sequence_id = "seq", bool render_frames = true);

// Per-pose directories of sequences, one JSON log per simulation, plus a
// manifest row per sequence. Deterministic under the seed.
ingest::Manifest generate_dataset(const std::vector<geometry::CameraRig>& grid, int n_per_pose,
                                  const std::filesystem::path& out_dir, std::uint64_t seed,
                                  const RenderOptions& opts = {}, bool write_frames = true,
                                  int n_threads = 1);

// --- analytic speed oracle -------------------------------------------------
// Ground-contact point of the vehicle mask in one frame (image coordinates and
// the back-projected road point). The mask is frame-vs-background difference;
// the tracked point is the centroid of the mask's bottom edge, which lies on
// the road plane and is therefore unbiased under image_to_ground.
struct ContactPoint {
  Eigen::Vector2d px;
  Eigen::Vector2d ground;
};
std::optional<ContactPoint> locate_ground_contact(const geometry::CameraRig& rig, const ImageU8& background,
                                                  const ImageU8& frame);

// Least-squares speed over the whole pass from rendered frames alone
// (background = per-pixel temporal median). nullopt when too few frames track.
std::optional<double> estimate_sequence_speed(const geometry::CameraRig& rig,
                                              std::span<const ImageU8> frames, double frame_dt_s);

}  // namespace vsd::synth
