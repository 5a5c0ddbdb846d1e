#include "vsd/geometry.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vsd/errors.hpp"

namespace vsd::geometry {

namespace {

constexpr double kPi = std::numbers::pi;

double deg2rad(double d) { return d * kPi / 180.0; }

// world -> camera rotation for a camera looking along +x, pitched down.
// rows: camera right, camera down, camera forward (optical axis).
Eigen::Matrix3d world_to_cam(double pitch_rad) {
  const double cp = std::cos(pitch_rad);
  const double sp = std::sin(pitch_rad);
  Eigen::Matrix3d rot;
  rot << 0.0, -1.0, 0.0,      // right = -y
      -sp, 0.0, -cp,          // down
      cp, 0.0, -sp;           // forward
  return rot;
}

Eigen::Vector3d camera_center(const CameraRig& rig) {
  return {0.0, rig.extrinsics.lateral_offset_m, rig.extrinsics.height_m};
}

}  // namespace

double CameraIntrinsics::focal_px() const { return (width_px / 2.0) / std::tan(deg2rad(horizontal_fov_deg) / 2.0); }

double CameraIntrinsics::vertical_fov_deg() const {
  return 2.0 * std::atan((height_px / 2.0) / focal_px()) * 180.0 / kPi;
}

void CameraIntrinsics::validate() const {
  if (width_px <= 0 || height_px <= 0)
    throw InvalidPose("intrinsics: non-positive image dimensions");
  if (!(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0))
    throw InvalidPose("intrinsics: horizontal FOV must be in (0, 180) deg");
}

void CameraExtrinsics::validate() const {
  if (!(height_m > 0.0)) throw InvalidPose("extrinsics: camera height must be positive");
  if (!(pitch_deg > 0.0 && pitch_deg < 90.0)) throw InvalidPose("extrinsics: pitch must be in (0, 90) deg");
}

void CameraRig::validate() const {
  intrinsics.validate();
  extrinsics.validate();
  if (!(frame_dt_s > 0.0)) throw InvalidPose("rig: frame_dt_s must be positive");
}

RoadSection visible_road_section(const CameraRig& rig) {
  rig.validate();
  const double pitch = deg2rad(rig.extrinsics.pitch_deg);
  const double half_vfov = deg2rad(rig.intrinsics.vertical_fov_deg()) / 2.0;
  const double h = rig.extrinsics.height_m;
  if (pitch - half_vfov <= 0.0)
    throw FarRayAboveHorizon("visible_road_section: top-edge ray never meets the road (pitch <= vfov/2) for pose " +
                             rig.pose_tag);
  if (pitch + half_vfov >= kPi / 2.0)
    throw InvalidPose("visible_road_section: bottom-edge ray points behind the camera for pose " + rig.pose_tag);

  RoadSection s;
  s.d_near_m = h / std::tan(pitch + half_vfov);
  s.d_far_m = h / std::tan(pitch - half_vfov);
  s.length_m = s.d_far_m - s.d_near_m;
  return s;
}

Eigen::Vector2d project_point(const CameraRig& rig, const Eigen::Vector3d& world) {
  const Eigen::Matrix3d rot = world_to_cam(deg2rad(rig.extrinsics.pitch_deg));
  const Eigen::Vector3d cam = rot * (world - camera_center(rig));
  if (cam.z() <= 0.0) throw BehindCamera("project_point: point at non-positive depth");
  const double f = rig.intrinsics.focal_px();
  return {rig.intrinsics.width_px / 2.0 + f * cam.x() / cam.z(),
          rig.intrinsics.height_px / 2.0 + f * cam.y() / cam.z()};
}

Eigen::Vector2d ground_to_image(const CameraRig& rig, const Eigen::Vector2d& ground_xy) {
  return project_point(rig, {ground_xy.x(), ground_xy.y(), 0.0});
}

Eigen::Vector2d image_to_ground(const CameraRig& rig, const Eigen::Vector2d& px) {
  const double f = rig.intrinsics.focal_px();
  const Eigen::Vector3d dir_cam((px.x() - rig.intrinsics.width_px / 2.0) / f,
                                (px.y() - rig.intrinsics.height_px / 2.0) / f, 1.0);
  const Eigen::Matrix3d rot = world_to_cam(deg2rad(rig.extrinsics.pitch_deg));
  const Eigen::Vector3d dir = rot.transpose() * dir_cam;
  if (dir.z() >= 0.0)
    throw RayAboveHorizon("image_to_ground: pixel ray never meets the road plane");
  const Eigen::Vector3d c = camera_center(rig);
  const double t = -c.z() / dir.z();
  const Eigen::Vector3d hit = c + t * dir;
  return {hit.x(), hit.y()};
}

double meters_per_pixel(const CameraRig& rig, double ground_distance_m) {
  const RoadSection s = visible_road_section(rig);
  const double tol = 1e-9 * std::max(1.0, s.d_far_m);
  if (ground_distance_m < s.d_near_m - tol || ground_distance_m > s.d_far_m + tol)
    throw OutOfSection("meters_per_pixel: distance " + std::to_string(ground_distance_m) +
                       " outside visible section [" + std::to_string(s.d_near_m) + ", " +
                       std::to_string(s.d_far_m) + "]");
  const double h = rig.extrinsics.height_m;
  const double pitch = deg2rad(rig.extrinsics.pitch_deg);
  const double beta = std::atan2(h, ground_distance_m);  // ray angle below the horizontal
  const double f = rig.intrinsics.focal_px();
  const double c = std::cos(beta - pitch);
  const double sb = std::sin(beta);
  return h * c * c / (f * sb * sb);
}

double theoretical_speed_error(const CameraRig& rig, double speed_mps, double pixel_noise_px) {
  if (!(speed_mps > 0.0)) throw InvalidPose("theoretical_speed_error: speed must be positive");
  const RoadSection s = visible_road_section(rig);
  const double e_near = pixel_noise_px * meters_per_pixel(rig, s.d_near_m);
  const double e_far = pixel_noise_px * meters_per_pixel(rig, s.d_far_m);
  return speed_mps * (e_near + e_far) / s.length_m +
         speed_mps * speed_mps * rig.frame_dt_s / (2.0 * s.length_m);
}

CameraRig rig_for_section_length(double height_m, double pitch_deg, double length_m,
                                 const CameraIntrinsics& base, double frame_dt_s) {
  if (!(length_m > 0.0)) throw InvalidPose("rig_for_section_length: length must be positive");
  const double p = deg2rad(pitch_deg);
  // L(w) = h * sin(2w) / (sin^2 p - sin^2 w) is strictly increasing on (0, p);
  // bisect for the half vertical FOV w.
  const double target = length_m / height_m;
  double lo = 1e-9, hi = std::min(p, kPi / 2.0 - p) - 1e-9;
  auto len = [&](double w) { return std::sin(2.0 * w) / (std::pow(std::sin(p), 2) - std::pow(std::sin(w), 2)); };
  if (len(hi) < target)
    throw InvalidPose("rig_for_section_length: requested length unreachable at this pitch");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (len(mid) < target ? lo : hi) = mid;
  }
  const double w = 0.5 * (lo + hi);
  CameraRig rig;
  rig.intrinsics = base;
  const double aspect = static_cast<double>(base.width_px) / base.height_px;
  rig.intrinsics.horizontal_fov_deg = 2.0 * std::atan(std::tan(w) * aspect) * 180.0 / kPi;
  rig.extrinsics.height_m = height_m;
  rig.extrinsics.pitch_deg = pitch_deg;
  rig.frame_dt_s = frame_dt_s;
  std::ostringstream tag;
  tag << "L" << length_m << "_h" << height_m << "_p" << pitch_deg;
  rig.pose_tag = tag.str();
  return rig;
}

std::vector<CameraRig> default_pose_grid(const CameraIntrinsics& intr, double frame_dt_s) {
  std::vector<CameraRig> grid;
  for (double h : {3.0, 4.0}) {
    for (double p : {45.0, 50.0, 60.0}) {
      CameraRig rig;
      std::ostringstream tag;
      tag << static_cast<int>(h) << "m" << static_cast<int>(p);
      rig.pose_tag = tag.str();
      rig.intrinsics = intr;
      rig.extrinsics.height_m = h;
      rig.extrinsics.pitch_deg = p;
      rig.frame_dt_s = frame_dt_s;
      grid.push_back(std::move(rig));
    }
  }
  return grid;
}

std::vector<CameraRig> load_pose_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("load_pose_grid: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoFailure("load_pose_grid: " + path.string() + ": " + e.what());
  }
  const nlohmann::json& arr = j.is_object() && j.contains("poses") ? j.at("poses") : j;
  if (!arr.is_array()) throw IoFailure("load_pose_grid: expected a JSON array of poses");
  std::vector<CameraRig> grid;
  for (const auto& e : arr) {
    CameraRig rig;
    rig.pose_tag = e.at("pose_tag").get<std::string>();
    rig.extrinsics.height_m = e.at("height_m").get<double>();
    rig.extrinsics.pitch_deg = e.at("pitch_deg").get<double>();
    rig.intrinsics.horizontal_fov_deg = e.value("hfov_deg", CameraIntrinsics{}.horizontal_fov_deg);
    rig.intrinsics.width_px = e.value("width", CameraIntrinsics{}.width_px);
    rig.intrinsics.height_px = e.value("height", CameraIntrinsics{}.height_px);
    const double fps = e.value("fps", 80.0);
    rig.frame_dt_s = 1.0 / fps;
    rig.validate();
    for (const auto& g : grid)
      if (g.pose_tag == rig.pose_tag)
        throw IoFailure("load_pose_grid: duplicate pose_tag " + rig.pose_tag);
    grid.push_back(std::move(rig));
  }
  return grid;
}

void save_pose_grid(const std::filesystem::path& path, const std::vector<CameraRig>& grid) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& rig : grid) {
    arr.push_back({{"pose_tag", rig.pose_tag},
                   {"height_m", rig.extrinsics.height_m},
                   {"pitch_deg", rig.extrinsics.pitch_deg},
                   {"hfov_deg", rig.intrinsics.horizontal_fov_deg},
                   {"width", rig.intrinsics.width_px},
                   {"height", rig.intrinsics.height_px},
                   {"fps", 1.0 / rig.frame_dt_s}});
  }
  std::ofstream out(path);
  if (!out) throw IoFailure("save_pose_grid: cannot open " + path.string());
  out << nlohmann::json{{"poses", arr}}.dump(2) << "\n";
}

}  // namespace vsd::geometry
