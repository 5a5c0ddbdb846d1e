#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "vsd/errors.hpp"
#include "vsd/frame_log.hpp"
#include "vsd/geometry.hpp"
#include "vsd/ingest.hpp"
#include "vsd/rng.hpp"
#include "vsd/synthgen.hpp"

using namespace vsd;
using namespace vsd::synth;
namespace fs = std::filesystem;

namespace {

geometry::CameraRig desk_rig(const std::string& tag = "3m45") {
  for (const auto& rig : geometry::default_pose_grid())
    if (rig.pose_tag == tag) return rig;
  throw std::runtime_error("no such pose");
}

ScenarioSpec simple_scenario(double speed_kmh = 60.0, const std::string& tag = "3m45") {
  ScenarioSpec s;
  s.rig = desk_rig(tag);
  s.vehicle = default_catalog()[0];
  s.environment.seed = 42;
  s.environment.sun_altitude_deg = 60.0;
  s.environment.cloudiness = 10.0;
  s.speed_kmh = speed_kmh;
  s.player_id = 259;
  return s;
}

// area centroid of the convex hull of the projected box corners; the painted
// silhouette of a convex solid is exactly this hull
Eigen::Vector2d hull_centroid_oracle(const geometry::CameraRig& rig, double xc, double l, double w, double h) {
  std::vector<Eigen::Vector2d> pts;
  for (double dx : {-l / 2, l / 2})
    for (double dy : {-w / 2, w / 2})
      for (double dz : {0.0, h}) pts.push_back(geometry::project_point(rig, {xc + dx, dy, dz}));
  // gift wrapping (tiny n)
  std::sort(pts.begin(), pts.end(),
            [](const auto& a, const auto& b) { return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y(); });
  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> hull;
  for (int pass = 0; pass < 2; ++pass) {
    const std::size_t base = hull.size();
    for (const auto& p : pts) {
      while (hull.size() >= base + 2 && cross(hull[hull.size() - 2], hull.back(), p) <= 0) hull.pop_back();
      hull.push_back(p);
    }
    hull.pop_back();
    std::reverse(pts.begin(), pts.end());
  }
  double area2 = 0.0;
  Eigen::Vector2d c{0, 0};
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    const double w2 = a.x() * b.y() - b.x() * a.y();
    area2 += w2;
    c += (a + b) * w2;
  }
  return c / (3.0 * area2);
}

}  // namespace

TEST_SUITE_BEGIN("synthgen");

TEST_CASE("synthgen: scenario sampling is deterministic") {
  const auto rig = desk_rig();
  const auto a = sample_scenario(1234, rig, default_catalog());
  const auto b = sample_scenario(1234, rig, default_catalog());
  CHECK(a.speed_kmh == b.speed_kmh);
  CHECK(a.vehicle.type_id == b.vehicle.type_id);
  CHECK(a.vehicle.color == b.vehicle.color);
  CHECK(a.environment.cloudiness == b.environment.cloudiness);
  CHECK(a.environment.seed == b.environment.seed);
  CHECK(a.player_id == b.player_id);

  const auto c = sample_scenario(1235, rig, default_catalog());
  CHECK(a.speed_kmh != c.speed_kmh);
}

TEST_CASE("synthgen: sampled speeds are uniform over 30..100") {
  const auto rig = desk_rig();
  double sum = 0.0, lo = 1e9, hi = -1e9;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto s = sample_scenario(1000 + i, rig, default_catalog());
    sum += s.speed_kmh;
    lo = std::min(lo, s.speed_kmh);
    hi = std::max(hi, s.speed_kmh);
  }
  CHECK(lo >= 30.0);
  CHECK(hi <= 100.0);
  CHECK(sum / n == doctest::Approx(65.0).epsilon(1.0 / 65.0));
}

TEST_CASE("synthgen: a hundred draws cover every vehicle category") {
  const auto rig = desk_rig();
  std::set<VehicleCategory> seen;
  for (int i = 0; i < 100; ++i) seen.insert(sample_scenario(i, rig, default_catalog()).vehicle.category);
  CHECK(seen.size() == 4);
}

TEST_CASE("synthgen: out-of-view times render road only") {
  const auto scenario = simple_scenario();
  const ImageU8 before_entry = render_frame(scenario, -2.0);
  const ImageU8 road = render_road_only(scenario, -2.0);
  CHECK(before_entry.data == road.data);

  // and a mid-pass frame differs
  const double t_mid = scenario_traversal(scenario).distance_m() / 2.0 / scenario.speed_mps();
  CHECK(render_frame(scenario, t_mid).data != road.data);
}

TEST_CASE("synthgen: rendered blob centroid matches the projected-hull oracle") {
  auto scenario = simple_scenario(50.0);
  scenario.environment.fog_density = 0.0;
  scenario.environment.precipitation = 0.0;
  scenario.environment.wetness = 0.0;
  RenderOptions opts;
  opts.shutter_fraction = 0.0;  // no blur for the geometric check
  const auto sec = geometry::visible_road_section(scenario.rig);
  const double xc = (sec.d_near_m + sec.d_far_m) / 2.0;
  const double t = (xc - scenario_traversal(scenario).x_start_m) / scenario.speed_mps();

  const ImageU8 frame = render_frame(scenario, t, opts);
  const ImageU8 road = render_road_only(scenario, t, opts);
  double sum_r = 0.0, sum_c = 0.0;
  long n = 0;
  for (int r = 0; r < frame.height; ++r)
    for (int c = 0; c < frame.width; ++c) {
      const auto* f = frame.px(r, c);
      const auto* b = road.px(r, c);
      const int diff = std::max({std::abs(f[0] - b[0]), std::abs(f[1] - b[1]), std::abs(f[2] - b[2])});
      if (diff > 14) {
        sum_r += r + 0.5;
        sum_c += c + 0.5;
        ++n;
      }
    }
  REQUIRE(n > 50);
  const Eigen::Vector2d blob{sum_c / n, sum_r / n};
  const Eigen::Vector2d oracle = hull_centroid_oracle(
      scenario.rig, xc, scenario.vehicle.length_m, scenario.vehicle.width_m, scenario.vehicle.height_m);
  CHECK(std::abs(blob.x() - oracle.x()) < 2.0);
  CHECK(std::abs(blob.y() - oracle.y()) < 2.0);
}

TEST_CASE("synthgen: contact-point displacement between consecutive frames is v*dt") {
  auto scenario = simple_scenario(70.0);
  const auto sec = geometry::visible_road_section(scenario.rig);
  const double v = scenario.speed_mps();
  const double dt = scenario.rig.frame_dt_s;
  // pick a frame pair with the vehicle mid-section
  const double xc = (sec.d_near_m + sec.d_far_m) / 2.0;
  const double t0 = (xc - scenario_traversal(scenario).x_start_m) / v;

  const ImageU8 road = render_road_only(scenario, t0);
  const ImageU8 f0 = render_frame(scenario, t0);
  const ImageU8 f1 = render_frame(scenario, t0 + dt);
  const auto c0 = locate_ground_contact(scenario.rig, road, f0);
  // background for the second frame: same scene, matching per-frame noise
  const ImageU8 road1 = render_road_only(scenario, t0 + dt);
  const auto c1 = locate_ground_contact(scenario.rig, road1, f1);
  REQUIRE(c0.has_value());
  REQUIRE(c1.has_value());
  const double displacement = c1->ground.x() - c0->ground.x();
  const double tol = 2.0 * geometry::meters_per_pixel(scenario.rig, c0->ground.x());
  CHECK(std::abs(displacement - v * dt) < tol);
}

TEST_CASE("synthgen: frame counts") {
  // ceil arithmetic on the distance to cover
  CHECK(frame_count(8.0, 80.0 / 3.6, 0.0125) == 29);
  CHECK(frame_count(1.0, 10.0, 0.1) == 1);
  CHECK_THROWS_AS(frame_count(0.0, 10.0, 0.1), Error);

  // slower pass -> more frames, same rig
  const auto slow = generate_sequence(simple_scenario(30.0), {}, "s", false);
  const auto fast = generate_sequence(simple_scenario(100.0), {}, "f", false);
  CHECK(slow.records.size() > fast.records.size());

  // frame-count law: n*dt*v >= distance > (n-1)*dt*v
  for (double kmh : {34.0, 52.3, 77.7, 99.0}) {
    const auto scenario = simple_scenario(kmh);
    const double d = scenario_traversal(scenario).distance_m();
    const auto n = static_cast<double>(generate_sequence(scenario, {}, "x", false).records.size());
    const double v = scenario.speed_mps();
    CHECK(n * 0.0125 * v >= d - 1e-9);
    CHECK((n - 1) * 0.0125 * v < d);
  }
}

TEST_CASE("synthgen: records carry exact constant-speed ground truth") {
  const auto scenario = simple_scenario(83.0);
  const auto seq = generate_sequence(scenario, {}, "gt", false);
  REQUIRE(seq.records.size() >= 2);
  const double v = scenario.speed_mps();
  for (std::size_t i = 0; i + 1 < seq.records.size(); ++i) {
    const auto& a = seq.records[i];
    const auto& b = seq.records[i + 1];
    const double recovered = (b.x - a.x) / (b.elapsed_seconds - a.elapsed_seconds);
    CHECK(std::abs(recovered - a.velocity) < 1e-9);
    CHECK(a.velocity == doctest::Approx(v));
    CHECK(b.elapsed_seconds - a.elapsed_seconds == doctest::Approx(0.0125));
    CHECK(a.player_id == scenario.player_id);
  }
  CHECK(seq.records.front().pose_tag == "3m45");
  CHECK(seq.records.front().player_type == scenario.vehicle.type_id);
}

TEST_CASE("synthgen: oracle recovers the commanded speed from rendered frames") {
  for (double kmh : {40.0, 75.0}) {
    const auto scenario = simple_scenario(kmh);
    const auto seq = generate_sequence(scenario, {}, "oracle");
    const auto est = estimate_sequence_speed(scenario.rig, seq.frames, scenario.rig.frame_dt_s);
    REQUIRE(est.has_value());
    const double budget = geometry::theoretical_speed_error(scenario.rig, scenario.speed_mps(), 2.0);
    CHECK(std::abs(*est - scenario.speed_mps()) < budget);
  }
}

TEST_CASE("synthgen: dataset generation writes logs, frames and the manifest") {
  const fs::path out = fs::temp_directory_path() / "vsd_ds_test";
  fs::remove_all(out);
  std::vector<geometry::CameraRig> grid;
  for (const auto& rig : geometry::default_pose_grid())
    if (rig.pose_tag == "3m45" || rig.pose_tag == "4m60") grid.push_back(rig);

  const auto manifest = generate_dataset(grid, 2, out, 7, {}, true, 2);
  CHECK(manifest.entries.size() == 4);
  std::set<std::string> poses;
  for (const auto& e : manifest.entries) {
    poses.insert(e.pose_tag);
    CHECK(fs::exists(out / e.json_path));
    CHECK(fs::exists(out / e.frame_dir));
    CHECK(carla::validate_log(out / e.json_path).ok());
    // frame files match the record count
    long n_png = 0;
    for (const auto& f : fs::directory_iterator(out / e.frame_dir))
      if (f.path().extension() == ".png") ++n_png;
    CHECK(n_png == e.n_frames);
  }
  CHECK(poses.size() == 2);

  const auto round = ingest::read_manifest(out / "manifest.csv");
  REQUIRE(round.entries.size() == manifest.entries.size());
  for (std::size_t i = 0; i < round.entries.size(); ++i) {
    CHECK(round.entries[i].sequence_id == manifest.entries[i].sequence_id);
    CHECK(round.entries[i].speed_mps == doctest::Approx(manifest.entries[i].speed_mps));
  }
  fs::remove_all(out);
}

TEST_CASE("synthgen: regeneration with the same seed is byte-identical") {
  const fs::path out_a = fs::temp_directory_path() / "vsd_det_a";
  const fs::path out_b = fs::temp_directory_path() / "vsd_det_b";
  fs::remove_all(out_a);
  fs::remove_all(out_b);
  std::vector<geometry::CameraRig> grid{desk_rig("4m60")};

  const auto ma = generate_dataset(grid, 2, out_a, 11, {}, true, 1);
  const auto mb = generate_dataset(grid, 2, out_b, 11, {}, true, 2);
  REQUIRE(ma.entries.size() == mb.entries.size());
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  for (std::size_t i = 0; i < ma.entries.size(); ++i) {
    CHECK(slurp(out_a / ma.entries[i].json_path) == slurp(out_b / mb.entries[i].json_path));
    // seeded renderer: first frame identical too
    CHECK(slurp(out_a / ma.entries[i].frame_dir / "f000000.png") ==
          slurp(out_b / mb.entries[i].frame_dir / "f000000.png"));
  }
  fs::remove_all(out_a);
  fs::remove_all(out_b);
}

TEST_CASE("synthgen: paper-scale frame volume at metadata level") {
  geometry::CameraIntrinsics intr;
  intr.width_px = 1920;
  intr.height_px = 1080;
  const auto grid = geometry::default_pose_grid(intr);
  long long total = 0;
  for (std::size_t p = 0; p < grid.size(); ++p)
    for (int i = 0; i < 610; ++i) {
      const auto scenario =
          sample_scenario(combine_seed(5, p * 1000 + i), grid[p], default_catalog());
      total += frame_count(scenario_traversal(scenario).distance_m(), scenario.speed_mps(),
                           grid[p].frame_dt_s);
    }
  // order of magnitude of the reported corpus (hundreds of thousands)
  CHECK(total > 100000);
  CHECK(total < 1000000);
}

TEST_SUITE_END();
