#include <doctest.h>

#include <cmath>
#include <numbers>

#include "vsd/errors.hpp"
#include "vsd/geometry.hpp"
#include "vsd/rng.hpp"

using namespace vsd;
using namespace vsd::geometry;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

CameraRig make_rig(double h, double pitch, int w = 1920, int hh = 1080, double hfov = 90.0) {
  CameraRig rig;
  rig.pose_tag = "test";
  rig.intrinsics = {w, hh, hfov};
  rig.extrinsics = {h, pitch, 0.0};
  return rig;
}

// independent ray-plane oracle: intersect the ray through a pixel with z=0
// using direct trigonometry on the viewing angles (no shared code path with
// image_to_ground, which goes through the rotation matrix).
Vector2d raycast_oracle(const CameraRig& rig, double u, double v) {
  const double f = rig.intrinsics.focal_px();
  const double pitch = rig.extrinsics.pitch_deg * std::numbers::pi / 180.0;
  // angle below the horizontal of this pixel's ray, and its azimuth
  const double beta = pitch + std::atan((v - rig.intrinsics.height_px / 2.0) / f);
  const double ground_ahead = rig.extrinsics.height_m / std::tan(beta);
  // lateral displacement scales with the slant range along the camera axis
  const double along_axis = rig.extrinsics.height_m / std::tan(beta) * std::cos(pitch) +
                            rig.extrinsics.height_m * std::sin(pitch);
  const double lateral = -(u - rig.intrinsics.width_px / 2.0) / f * along_axis;
  return {ground_ahead, lateral + rig.extrinsics.lateral_offset_m};
}

}  // namespace

TEST_SUITE_BEGIN("geometry");

TEST_CASE("geometry: visible section matches the closed form and the ray oracle") {
  const CameraRig rig = make_rig(3.0, 45.0, 1920, 1080, 90.0);
  const RoadSection sec = visible_road_section(rig);

  const double vfov2 = rig.intrinsics.vertical_fov_deg() / 2.0 * std::numbers::pi / 180.0;
  CHECK(rig.intrinsics.vertical_fov_deg() == doctest::Approx(58.715507).epsilon(1e-6));
  const double pitch = 45.0 * std::numbers::pi / 180.0;
  CHECK(sec.d_near_m == doctest::Approx(3.0 / std::tan(pitch + vfov2)));
  CHECK(sec.d_far_m == doctest::Approx(3.0 / std::tan(pitch - vfov2)));
  CHECK(sec.length_m == doctest::Approx(sec.d_far_m - sec.d_near_m));

  // oracle: cast rays through the top and bottom image edges
  const Vector2d near_hit = raycast_oracle(rig, rig.intrinsics.width_px / 2.0, rig.intrinsics.height_px);
  const Vector2d far_hit = raycast_oracle(rig, rig.intrinsics.width_px / 2.0, 0.0);
  CHECK(sec.d_near_m == doctest::Approx(near_hit.x()).epsilon(1e-9));
  CHECK(sec.d_far_m == doctest::Approx(far_hit.x()).epsilon(1e-9));
}

TEST_CASE("geometry: straight-down limit shrinks the section") {
  // pitch near 90 with a small fov: section length goes to zero
  CameraRig rig = make_rig(3.0, 80.0, 320, 180, 10.0);
  const RoadSection wide = visible_road_section(rig);
  rig.intrinsics.horizontal_fov_deg = 2.0;
  const RoadSection narrow = visible_road_section(rig);
  CHECK(narrow.length_m < wide.length_m);
  CHECK(narrow.length_m > 0.0);
  rig.intrinsics.horizontal_fov_deg = 0.5;
  CHECK(visible_road_section(rig).length_m < narrow.length_m);
}

TEST_CASE("geometry: paper pose grid stays inside the 4..10 m envelope") {
  const auto grid = default_pose_grid();
  REQUIRE(grid.size() == 6);
  for (const auto& rig : grid) {
    const RoadSection sec = visible_road_section(rig);
    INFO(rig.pose_tag, " -> ", sec.length_m, " m");
    CHECK(sec.length_m >= 4.0);
    CHECK(sec.length_m <= 10.0);
  }
  // calibration hint: the original pose sees roughly seven meters
  const RoadSection base = visible_road_section(grid[0]);
  CHECK(base.length_m == doctest::Approx(7.0).epsilon(0.1));
}

TEST_CASE("geometry: invalid poses are rejected") {
  CHECK_THROWS_AS(visible_road_section(make_rig(3.0, 20.0, 1920, 1080, 90.0)), FarRayAboveHorizon);
  CHECK_THROWS_AS(visible_road_section(make_rig(3.0, 80.0, 1920, 1080, 90.0)), InvalidPose);
  CHECK_THROWS_AS(visible_road_section(make_rig(-3.0, 45.0)), InvalidPose);
}

TEST_CASE("geometry: section length monotone in pitch and height") {
  for (int w : {320, 1920}) {
    const int h = w == 320 ? 180 : 1080;
    for (double height : {3.0, 4.0}) {
      double prev = std::numeric_limits<double>::infinity();
      for (double pitch : {45.0, 50.0, 60.0}) {
        CameraRig rig = make_rig(height, pitch, w, h, 80.0);
        const double len = visible_road_section(rig).length_m;
        CHECK(len < prev);
        prev = len;
      }
    }
    for (double pitch : {45.0, 50.0, 60.0}) {
      const double l3 = visible_road_section(make_rig(3.0, pitch, w, h, 80.0)).length_m;
      const double l4 = visible_road_section(make_rig(4.0, pitch, w, h, 80.0)).length_m;
      CHECK(l4 > l3);
    }
  }
}

TEST_CASE("geometry: optical axis projects to the image center") {
  const CameraRig rig = make_rig(3.0, 45.0);
  const double axis_dist = 3.0 / std::tan(45.0 * std::numbers::pi / 180.0);
  const Vector2d px = ground_to_image(rig, {axis_dist, 0.0});
  CHECK(px.x() == doctest::Approx(960.0).epsilon(1e-12));
  CHECK(px.y() == doctest::Approx(540.0).epsilon(1e-12));

  // and the inverse: image center back to the axis point
  const Vector2d g = image_to_ground(rig, {960.0, 540.0});
  CHECK(g.x() == doctest::Approx(axis_dist).epsilon(1e-12));
  CHECK(g.y() == doctest::Approx(0.0));
}

TEST_CASE("geometry: section boundary pixels") {
  const CameraRig rig = make_rig(3.0, 50.0, 320, 180, 80.0);
  const RoadSection sec = visible_road_section(rig);
  // bottom-center of the image hits the near edge of the section
  const Vector2d g_near = image_to_ground(rig, {160.0, 180.0});
  CHECK(g_near.x() == doctest::Approx(sec.d_near_m).epsilon(1e-12));
  CHECK(g_near.y() == doctest::Approx(0.0));
  const Vector2d px = ground_to_image(rig, {sec.d_near_m, 0.0});
  CHECK(px.x() == doctest::Approx(160.0));
  CHECK(px.y() == doctest::Approx(180.0));
}

TEST_CASE("geometry: projection round-trips") {
  Rng rng(7);
  for (const auto& rig : default_pose_grid()) {
    const RoadSection sec = visible_road_section(rig);
    for (int i = 0; i < 200; ++i) {
      const double u = rng.uniform(0.0, rig.intrinsics.width_px);
      const double v = rng.uniform(0.0, rig.intrinsics.height_px);
      const Vector2d g = image_to_ground(rig, {u, v});
      const Vector2d back = ground_to_image(rig, g);
      CHECK(back.x() == doctest::Approx(u).epsilon(1e-9));
      CHECK(std::abs(back.y() - v) < 1e-6);

      const double gx = rng.uniform(sec.d_near_m, sec.d_far_m);
      const double gy = rng.uniform(-2.0, 2.0);
      const Vector2d px = ground_to_image(rig, {gx, gy});
      const Vector2d gg = image_to_ground(rig, px);
      CHECK(std::abs(gg.x() - gx) < 1e-9);
      CHECK(std::abs(gg.y() - gy) < 1e-9);

      // independent oracle agrees with the matrix path
      const Vector2d oracle = raycast_oracle(rig, u, v);
      CHECK(std::abs(g.x() - oracle.x()) < 1e-6);
      CHECK(std::abs(g.y() - oracle.y()) < 1e-6);
    }
  }
}

TEST_CASE("geometry: projection errors") {
  const CameraRig rig = make_rig(3.0, 45.0);
  CHECK_THROWS_AS(ground_to_image(rig, {-50.0, 0.0}), BehindCamera);
  // a pixel above the horizon row never meets the plane: use a mild pitch so
  // the top of the image looks above the horizontal
  const CameraRig shallow = make_rig(3.0, 20.0, 1920, 1080, 120.0);
  CHECK_THROWS_AS(image_to_ground(shallow, {960.0, 0.0}), RayAboveHorizon);
}

TEST_CASE("geometry: meters_per_pixel behaviour") {
  const CameraRig rig = make_rig(3.0, 50.0, 320, 180, 80.0);
  const RoadSection sec = visible_road_section(rig);

  CHECK(meters_per_pixel(rig, sec.d_near_m) < meters_per_pixel(rig, sec.d_far_m));
  CHECK_THROWS_AS(meters_per_pixel(rig, sec.d_near_m - 0.1), OutOfSection);
  CHECK_THROWS_AS(meters_per_pixel(rig, sec.d_far_m + 0.1), OutOfSection);

  // strictly increasing across the section
  double prev = 0.0;
  for (int i = 0; i <= 50; ++i) {
    const double d = sec.d_near_m + (sec.d_far_m - sec.d_near_m) * i / 50.0;
    const double r = meters_per_pixel(rig, d);
    CHECK(r > prev);
    prev = r;
  }

  // finite-difference oracle: ground distance of adjacent rows
  for (double d : {sec.d_near_m + 0.5, (sec.d_near_m + sec.d_far_m) / 2.0, sec.d_far_m - 0.5}) {
    const Vector2d px = ground_to_image(rig, {d, 0.0});
    const Vector2d a = image_to_ground(rig, {px.x(), px.y() - 0.5});
    const Vector2d b = image_to_ground(rig, {px.x(), px.y() + 0.5});
    const double fd = std::abs(a.x() - b.x());
    CHECK(meters_per_pixel(rig, d) == doctest::Approx(fd).epsilon(0.01));
  }

  // halving the resolution at the same FOV doubles the ground size of a pixel
  const CameraRig half = make_rig(3.0, 50.0, 160, 90, 80.0);
  for (double d : {sec.d_near_m + 0.5, sec.d_far_m - 0.5})
    CHECK(meters_per_pixel(half, d) == doctest::Approx(2.0 * meters_per_pixel(rig, d)).epsilon(1e-9));
}

TEST_CASE("geometry: theoretical error vanishes in the noiseless limit") {
  CameraRig rig = make_rig(3.0, 50.0, 320, 180, 80.0);
  const double with_noise = theoretical_speed_error(rig, 18.0, 1.0);
  CHECK(with_noise > 0.0);
  const double timing_only = theoretical_speed_error(rig, 18.0, 0.0);
  CHECK(timing_only < with_noise);
  rig.frame_dt_s = 1e-12;
  CHECK(theoretical_speed_error(rig, 18.0, 0.0) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("geometry: error-vs-length sweep has a unique interior minimum") {
  // fixed height, speed and noise; length realized by lens choice
  std::vector<double> lengths, errors;
  for (int i = 0; i <= 130; ++i) {
    const double L = 2.0 + 13.0 * i / 130.0;
    const CameraRig rig = rig_for_section_length(3.0, 45.0, L, CameraIntrinsics{});
    lengths.push_back(L);
    errors.push_back(theoretical_speed_error(rig, 65.0 / 3.6));
    // the solved rig really has the requested section length
    CHECK(visible_road_section(rig).length_m == doctest::Approx(L).epsilon(1e-6));
  }
  std::size_t min_at = 0;
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (errors[i] < errors[min_at]) min_at = i;
  CHECK(min_at > 0);
  CHECK(min_at < errors.size() - 1);
  // strictly decreasing before, strictly increasing after (single valley)
  for (std::size_t i = 1; i <= min_at; ++i) CHECK(errors[i] < errors[i - 1]);
  for (std::size_t i = min_at + 1; i < errors.size(); ++i) CHECK(errors[i] > errors[i - 1]);
  // default constants put the minimum near the paper's seven meters
  CHECK(lengths[min_at] > 5.0);
  CHECK(lengths[min_at] < 9.0);
}

TEST_CASE("geometry: error model agrees with Monte-Carlo at term-dominant points") {
  // Monte-Carlo re-estimation: unit-magnitude localization error with random
  // sign at each section endpoint, plus a +-dt/2 timing quantization; each
  // term is validated where it dominates.
  const double v = 18.0;
  Rng rng(99);

  // pixel-noise dominated: make the frame period negligible
  {
    CameraRig rig = make_rig(3.0, 50.0, 320, 180, 80.0);
    rig.frame_dt_s = 1e-9;
    const double noise_px = 2.0;
    const RoadSection sec = visible_road_section(rig);
    const double mpp_near = meters_per_pixel(rig, sec.d_near_m);
    const double mpp_far = meters_per_pixel(rig, sec.d_far_m);
    double sum_abs_err = 0.0;
    const int trials = 20000;
    for (int i = 0; i < trials; ++i) {
      const double s_near = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double s_far = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double d_near_meas = sec.d_near_m + s_near * noise_px * mpp_near;
      const double d_far_meas = sec.d_far_m + s_far * noise_px * mpp_far;
      const double t_true = sec.length_m / v;
      const double v_est = (d_far_meas - d_near_meas) / t_true;
      sum_abs_err += std::abs(v_est - v);
    }
    const double mc = sum_abs_err / trials;
    const double model = theoretical_speed_error(rig, v, noise_px);
    CHECK(model == doctest::Approx(mc).epsilon(0.25));
  }

  // timing dominated: no pixel noise, random frame phase
  {
    CameraRig rig = make_rig(3.0, 50.0, 320, 180, 80.0);
    rig.frame_dt_s = 0.05;
    const RoadSection sec = visible_road_section(rig);
    double sum_abs_err = 0.0;
    const int trials = 20000;
    for (int i = 0; i < trials; ++i) {
      const double t_true = sec.length_m / v;
      const double s = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double t_meas = t_true + s * rig.frame_dt_s / 2.0;
      sum_abs_err += std::abs(sec.length_m / t_meas - v);
    }
    const double mc = sum_abs_err / trials;
    const double model = theoretical_speed_error(rig, v, 0.0);
    CHECK(model == doctest::Approx(mc).epsilon(0.25));
  }
}

TEST_CASE("geometry: pose grid config round-trip") {
  const auto grid = default_pose_grid();
  const auto path = std::filesystem::temp_directory_path() / "vsd_grid_test.json";
  save_pose_grid(path, grid);
  const auto loaded = load_pose_grid(path);
  REQUIRE(loaded.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(loaded[i].pose_tag == grid[i].pose_tag);
    CHECK(loaded[i].extrinsics.height_m == doctest::Approx(grid[i].extrinsics.height_m));
    CHECK(loaded[i].extrinsics.pitch_deg == doctest::Approx(grid[i].extrinsics.pitch_deg));
    CHECK(loaded[i].intrinsics.horizontal_fov_deg == doctest::Approx(grid[i].intrinsics.horizontal_fov_deg));
    CHECK(loaded[i].frame_dt_s == doctest::Approx(grid[i].frame_dt_s));
  }
  std::filesystem::remove(path);

  std::filesystem::path dup = std::filesystem::temp_directory_path() / "vsd_grid_dup.json";
  {
    auto two = grid;
    two.push_back(grid.front());
    save_pose_grid(dup, two);
    CHECK_THROWS_AS((void)load_pose_grid(dup), IoFailure);
  }
  std::filesystem::remove(dup);
}

TEST_SUITE_END();
