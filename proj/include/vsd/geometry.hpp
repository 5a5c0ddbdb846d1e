#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

namespace vsd::geometry {

// Conventions
//   world frame: right-handed, road plane z = 0, vehicles travel along +x,
//                camera foot at x = 0, y = lateral offset, z = height.
//   image frame: continuous pixel coordinates with origin at the top-left
//                corner; the principal point is (width/2, height/2).
//   angles: degrees in the structs below, radians inside the implementation.

struct CameraIntrinsics {
  int width_px = 320;
  int height_px = 180;
  double horizontal_fov_deg = 80.0;  // calibrated so the 3m/4m x 45/50/60 grid lands in 4..10 m sections

  double focal_px() const;          // square pixels: fx == fy
  double vertical_fov_deg() const;  // derived through the aspect ratio
  void validate() const;
};

struct CameraExtrinsics {
  double height_m = 3.0;
  double pitch_deg = 45.0;  // downward tilt from the horizontal
  double lateral_offset_m = 0.0;
  void validate() const;
};

struct CameraRig {
  std::string pose_tag;
  CameraIntrinsics intrinsics;
  CameraExtrinsics extrinsics;
  double frame_dt_s = 0.0125;  // 80 fps capture
  void validate() const;
};

struct RoadSection {
  double d_near_m = 0.0;
  double d_far_m = 0.0;
  double length_m = 0.0;  // == d_far_m - d_near_m
};

inline constexpr double kDefaultPixelNoisePx = 1.5;

// Ground span visible between the top and bottom image edges.
// Throws FarRayAboveHorizon when pitch <= vfov/2, InvalidPose when the
// bottom-edge ray points behind the camera (pitch + vfov/2 >= 90 deg).
RoadSection visible_road_section(const CameraRig& rig);

// Full pinhole projection of a world point (z up). Throws BehindCamera.
Eigen::Vector2d project_point(const CameraRig& rig, const Eigen::Vector3d& world);

// Road-plane point (x, y) -> continuous pixel coordinates.
Eigen::Vector2d ground_to_image(const CameraRig& rig, const Eigen::Vector2d& ground_xy);

// Pixel -> road-plane point. Throws RayAboveHorizon when the back-projected
// ray never descends to the plane.
Eigen::Vector2d image_to_ground(const CameraRig& rig, const Eigen::Vector2d& px);

// Ground length spanned by one vertical pixel at the given ground distance.
// Strictly increasing in distance. Throws OutOfSection outside [d_near, d_far].
double meters_per_pixel(const CameraRig& rig, double ground_distance_m);

// Deterministic first-order error model for a speed measured over the rig's
// visible section: endpoint localization noise plus frame-timing quantization,
// both propagated to v = L / t.
double theoretical_speed_error(const CameraRig& rig, double speed_mps,
                               double pixel_noise_px = kDefaultPixelNoisePx);

// Rig whose visible section has exactly the requested length, obtained by
// solving for the horizontal FOV at fixed height/pitch (lens choice). Used by
// the error-vs-length sweeps.
CameraRig rig_for_section_length(double height_m, double pitch_deg, double length_m,
                                 const CameraIntrinsics& base = {}, double frame_dt_s = 0.0125);

// The paper-style pose grid {3,4} m x {45,50,60} deg with the given intrinsics.
std::vector<CameraRig> default_pose_grid(const CameraIntrinsics& intr = {}, double frame_dt_s = 0.0125);

// Pose-grid config file: JSON list of
//   {pose_tag, height_m, pitch_deg, hfov_deg, width, height, fps}.
std::vector<CameraRig> load_pose_grid(const std::filesystem::path& path);
void save_pose_grid(const std::filesystem::path& path, const std::vector<CameraRig>& grid);

}  // namespace vsd::geometry
