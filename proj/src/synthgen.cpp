#include "vsd/synthgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "vsd/errors.hpp"
#include "vsd/ingest.hpp"
#include "vsd/rng.hpp"

namespace vsd::synth {

// ---------------------------------------------------------------------------
// vehicle vocabulary

std::string to_string(VehicleCategory c) {
  switch (c) {
    case VehicleCategory::car: return "car";
    case VehicleCategory::truck: return "truck";
    case VehicleCategory::motorbike: return "motorbike";
    case VehicleCategory::bicycle: return "bicycle";
  }
  return "car";
}

VehicleCategory category_from_string(const std::string& s) {
  if (s == "truck") return VehicleCategory::truck;
  if (s == "motorbike") return VehicleCategory::motorbike;
  if (s == "bicycle") return VehicleCategory::bicycle;
  return VehicleCategory::car;
}

const std::vector<VehicleSpec>& default_catalog() {
  static const std::vector<VehicleSpec> catalog = {
      {"vehicle.tesla.model3", VehicleCategory::car, 4.69, 1.85, 1.44, {200, 30, 30}, 4},
      {"vehicle.audi.tt", VehicleCategory::car, 4.18, 1.84, 1.35, {40, 40, 45}, 4},
      {"vehicle.lincoln.mkz2017", VehicleCategory::car, 4.92, 1.86, 1.47, {230, 230, 235}, 4},
      {"vehicle.carlamotors.carlacola", VehicleCategory::truck, 5.20, 2.30, 2.40, {220, 120, 30}, 4},
      {"vehicle.tesla.cybertruck", VehicleCategory::truck, 5.88, 2.10, 1.95, {180, 185, 190}, 4},
      {"vehicle.yamaha.yzf", VehicleCategory::motorbike, 2.19, 0.80, 1.40, {30, 60, 200}, 2},
      {"vehicle.harley-davidson.low_rider", VehicleCategory::motorbike, 2.35, 0.90, 1.35, {20, 20, 25}, 2},
      {"vehicle.bh.crossbike", VehicleCategory::bicycle, 1.80, 0.60, 1.60, {200, 170, 30}, 2},
      {"vehicle.gazelle.omafiets", VehicleCategory::bicycle, 1.85, 0.60, 1.65, {40, 130, 60}, 2},
  };
  return catalog;
}

VehicleCategory category_from_type_id(const std::string& type_id) {
  for (const auto& v : default_catalog())
    if (v.type_id == type_id) return v.category;
  auto has = [&](const char* s) { return type_id.find(s) != std::string::npos; };
  if (has("crossbike") || has("omafiets") || has("century") || has("bh.")) return VehicleCategory::bicycle;
  if (has("yamaha") || has("harley") || has("kawasaki") || has("vespa")) return VehicleCategory::motorbike;
  if (has("carlamotors") || has("cybertruck") || has("truck") || has("van") || has("sprinter"))
    return VehicleCategory::truck;
  return VehicleCategory::car;
}

// ---------------------------------------------------------------------------
// scenario

void EnvironmentSpec::validate() const {
  for (double p : {cloudiness, precipitation, wind_intensity, fog_density, wetness})
    if (p < 0.0 || p > 100.0) throw Error("environment: percent field outside [0,100]");
}

std::string EnvironmentSpec::weather_string() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "WeatherParameters(cloudiness=%.6f, precipitation=%.6f, precipitation_deposits=%.6f, "
                "wind_intensity=%.6f, sun_azimuth_angle=%.6f, sun_altitude_angle=%.6f, fog_density=%.6f, "
                "fog_distance=%.6f, fog_falloff=%.6f, wetness=%.6f)",
                cloudiness, precipitation, precipitation / 2.0, wind_intensity, 250.0, sun_altitude_deg,
                fog_density, 50.0, 0.9, wetness);
  return buf;
}

void ScenarioSpec::validate() const {
  rig.validate();
  environment.validate();
  if (speed_kmh < 30.0 || speed_kmh > 100.0)
    throw Error("scenario: speed_kmh outside [30,100]");
  if (vehicle.length_m <= 0 || vehicle.width_m <= 0 || vehicle.height_m <= 0)
    throw Error("scenario: vehicle dimensions must be positive");
}

namespace {

const std::array<std::array<std::uint8_t, 3>, 10> kPalette = {{{220, 40, 40},
                                                               {160, 20, 25},
                                                               {30, 60, 200},
                                                               {25, 35, 110},
                                                               {240, 240, 245},
                                                               {190, 190, 200},
                                                               {20, 20, 25},
                                                               {230, 150, 30},
                                                               {40, 130, 60},
                                                               {235, 200, 40}}};

}  // namespace

ScenarioSpec sample_scenario(std::uint64_t rng_seed, const geometry::CameraRig& rig,
                             std::span<const VehicleSpec> catalog) {
  if (catalog.empty()) throw Error("sample_scenario: empty vehicle catalog");
  Rng rng(rng_seed);
  ScenarioSpec s;
  s.rig = rig;
  s.speed_kmh = rng.uniform(30.0, 100.0);
  s.vehicle = catalog[rng.uniform_index(catalog.size())];
  s.vehicle.color = kPalette[rng.uniform_index(kPalette.size())];
  s.environment.cloudiness = rng.uniform(0.0, 90.0);
  s.environment.precipitation = rng.uniform(0.0, 80.0);
  s.environment.wind_intensity = rng.uniform(0.0, 60.0);
  s.environment.fog_density = rng.uniform(0.0, 40.0);
  s.environment.wetness = rng.uniform(0.0, 80.0);
  s.environment.sun_altitude_deg = rng.uniform(10.0, 80.0);
  s.environment.seed = rng.next_u64();
  s.player_id = 100 + static_cast<long long>(rng.uniform_index(899900));
  return s;
}

// ---------------------------------------------------------------------------
// traversal

Traversal scenario_traversal(const ScenarioSpec& scenario) {
  const geometry::RoadSection sec = geometry::visible_road_section(scenario.rig);
  Traversal t;
  t.x_start_m = std::max(sec.d_near_m - scenario.vehicle.length_m, 0.05);
  t.x_end_m = sec.d_far_m + scenario.vehicle.length_m;
  return t;
}

int frame_count(double distance_m, double speed_mps, double frame_dt_s) {
  if (distance_m <= 0.0 || speed_mps <= 0.0 || frame_dt_s <= 0.0)
    throw Error("frame_count: arguments must be positive");
  return static_cast<int>(std::ceil(distance_m / (speed_mps * frame_dt_s) - 1e-9));
}

// ---------------------------------------------------------------------------
// renderer

namespace {

constexpr double kRoadHalfWidthM = 2.6;
constexpr double kLaneLineInnerM = 1.62;
constexpr double kLaneLineOuterM = 1.78;
constexpr std::uint64_t kTextureSeed = 0x524f414453594eULL;

struct Rgb {
  float r, g, b;
};

float cell_noise(double x, double y, double cell) {
  const auto ix = static_cast<std::int64_t>(std::floor(x / cell));
  const auto iy = static_cast<std::int64_t>(std::floor(y / cell));
  const std::uint64_t h = hash_seed(kTextureSeed ^ (static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ULL) ^
                                    (static_cast<std::uint64_t>(iy) * 0xC2B2AE3D27D4EB4FULL));
  return static_cast<float>(h >> 40) / static_cast<float>(1 << 24);  // [0,1)
}

Rgb ground_color(double x, double y) {
  if (std::abs(y) <= kRoadHalfWidthM) {
    if (std::abs(y) >= kLaneLineInnerM && std::abs(y) <= kLaneLineOuterM) return {0.82f, 0.82f, 0.80f};
    const float n = (cell_noise(x, y, 0.22) - 0.5f) * 0.10f;
    return {0.31f + n, 0.31f + n, 0.335f + n};
  }
  const float n = (cell_noise(x, y, 0.35) - 0.5f) * 0.08f;
  return {0.26f + n, 0.37f + n, 0.20f + n};
}

// world-space ray through a continuous pixel coordinate
struct RayCaster {
  Eigen::Matrix3d cam_to_world;
  Eigen::Vector3d origin;
  double fx, cx, cy;

  explicit RayCaster(const geometry::CameraRig& rig) {
    const double p = rig.extrinsics.pitch_deg * std::numbers::pi / 180.0;
    const double cp = std::cos(p), sp = std::sin(p);
    Eigen::Matrix3d world_to_cam;
    world_to_cam << 0, -1, 0, -sp, 0, -cp, cp, 0, -sp;
    cam_to_world = world_to_cam.transpose();
    origin = {0.0, rig.extrinsics.lateral_offset_m, rig.extrinsics.height_m};
    fx = rig.intrinsics.focal_px();
    cx = rig.intrinsics.width_px / 2.0;
    cy = rig.intrinsics.height_px / 2.0;
  }

  Eigen::Vector3d dir(double u, double v) const {
    return cam_to_world * Eigen::Vector3d((u - cx) / fx, (v - cy) / fx, 1.0);
  }
};

struct PhotoParams {
  float gain;
  float noise_sigma;  // in [0,1] pixel units
};

PhotoParams photometrics(const EnvironmentSpec& env) {
  const double alt = std::max(env.sun_altitude_deg, 0.0) * std::numbers::pi / 180.0;
  float gain = static_cast<float>(0.62 + 0.38 * std::sin(alt) - 0.0018 * env.cloudiness);
  gain = std::clamp(gain, 0.35f, 1.05f);
  const float sigma =
      static_cast<float>((0.8 + 2.2 * (env.fog_density + env.precipitation + env.wetness) / 300.0) / 255.0);
  return {gain, sigma};
}

class SceneRenderer {
 public:
  SceneRenderer(const ScenarioSpec& scenario, const RenderOptions& opts)
      : sc_(scenario), opts_(opts), caster_(scenario.rig), photo_(photometrics(scenario.environment)) {
    sc_.validate();
    const auto& intr = sc_.rig.intrinsics;
    base_ = ImageF(intr.width_px, intr.height_px);
    for (int r = 0; r < intr.height_px; ++r) {
      for (int c = 0; c < intr.width_px; ++c) {
        const Eigen::Vector3d d = caster_.dir(c + 0.5, r + 0.5);
        Rgb col{0.55f, 0.65f, 0.78f};  // sky fallback; unreachable for valid poses
        if (d.z() < 0.0) {
          const double t = -caster_.origin.z() / d.z();
          const Eigen::Vector3d hit = caster_.origin + t * d;
          col = ground_color(hit.x(), hit.y());
        }
        float* px = base_.px(r, c);
        px[0] = col.r * photo_.gain;
        px[1] = col.g * photo_.gain;
        px[2] = col.b * photo_.gain;
      }
    }
    traversal_ = scenario_traversal(sc_);
    band_period_ = std::clamp(sc_.vehicle.length_m / 7.0, 0.30, 0.70);
  }

  double vehicle_center_x(double t_s) const { return traversal_.x_start_m + sc_.speed_mps() * t_s; }

  ImageU8 frame(double t_s, bool with_vehicle) const {
    ImageF canvas = base_;
    if (with_vehicle) draw_vehicle(canvas, t_s);
    add_noise(canvas, t_s);
    return quantize(canvas);
  }

 private:
  void add_noise(ImageF& canvas, double t_s) const {
    const auto frame_idx = static_cast<std::uint64_t>(std::llround(t_s / sc_.rig.frame_dt_s) + (1 << 20));
    Rng rng(combine_seed(sc_.environment.seed, frame_idx));
    for (float& v : canvas.data) v += photo_.noise_sigma * static_cast<float>(rng.normal());
  }

  void draw_vehicle(ImageF& canvas, double t_s) const {
    const int k = std::max(1, opts_.blur_samples);
    const double exposure = opts_.shutter_fraction * sc_.rig.frame_dt_s;
    const double l = sc_.vehicle.length_m, w = sc_.vehicle.width_m, h = sc_.vehicle.height_m;
    const double v = sc_.speed_mps();

    // pixel bounds from the swept box over the exposure window
    const double x0 = vehicle_center_x(t_s) - l / 2.0;
    const double x1 = vehicle_center_x(t_s + exposure) + l / 2.0;
    int rmin = canvas.height, rmax = -1, cmin = canvas.width, cmax = -1;
    bool unbounded = false;
    for (double bx : {x0, x1})
      for (double by : {-w / 2.0, w / 2.0})
        for (double bz : {0.0, h}) {
          try {
            const Eigen::Vector2d px = geometry::project_point(sc_.rig, {bx, by, bz});
            rmin = std::min(rmin, static_cast<int>(std::floor(px.y())) - 1);
            rmax = std::max(rmax, static_cast<int>(std::ceil(px.y())) + 1);
            cmin = std::min(cmin, static_cast<int>(std::floor(px.x())) - 1);
            cmax = std::max(cmax, static_cast<int>(std::ceil(px.x())) + 1);
          } catch (const BehindCamera&) {
            unbounded = true;
          }
        }
    if (unbounded) {
      rmin = 0, rmax = canvas.height - 1, cmin = 0, cmax = canvas.width - 1;
    } else {
      rmin = std::max(rmin, 0);
      cmin = std::max(cmin, 0);
      rmax = std::min(rmax, canvas.height - 1);
      cmax = std::min(cmax, canvas.width - 1);
      if (rmin > rmax || cmin > cmax) return;  // fully out of view
    }

    const int aa = opts_.antialias ? 2 : 1;
    const float ray_weight = 1.0f / static_cast<float>(k * aa * aa);
    const Rgb base_col{sc_.vehicle.color[0] / 255.f, sc_.vehicle.color[1] / 255.f, sc_.vehicle.color[2] / 255.f};

    std::vector<double> centers_x(k);
    for (int j = 0; j < k; ++j)
      centers_x[j] = vehicle_center_x(t_s + (k == 1 ? 0.0 : exposure * j / (k - 1)));

    const Eigen::Vector3d o = caster_.origin;
    for (int r = rmin; r <= rmax; ++r) {
      for (int c = cmin; c <= cmax; ++c) {
        const float* bg = base_.px(r, c);
        float* out = canvas.px(r, c);
        for (int ar = 0; ar < aa; ++ar) {
          for (int ac = 0; ac < aa; ++ac) {
            const double u = c + (aa == 1 ? 0.5 : 0.25 + 0.5 * ac);
            const double vpx = r + (aa == 1 ? 0.5 : 0.25 + 0.5 * ar);
            const Eigen::Vector3d d = caster_.dir(u, vpx);
            // y and z slabs are shared by all blur subsamples
            double t_en = 0.0, t_ex = std::numeric_limits<double>::infinity();
            int en_axis = -1;
            auto slab = [&](double lo, double hi, double od, double dd, int axis) {
              if (std::abs(dd) < 1e-12) {
                if (od < lo || od > hi) t_en = std::numeric_limits<double>::infinity();
                return;
              }
              double ta = (lo - od) / dd, tb = (hi - od) / dd;
              if (ta > tb) std::swap(ta, tb);
              if (ta > t_en) {
                t_en = ta;
                en_axis = axis;
              }
              t_ex = std::min(t_ex, tb);
            };
            slab(-w / 2.0, w / 2.0, o.y(), d.y(), 1);
            slab(0.0, h, o.z(), d.z(), 2);
            if (t_en > t_ex) continue;
            const double base_en = t_en, base_ex = t_ex;
            const int base_axis = en_axis;
            for (int j = 0; j < k; ++j) {
              double ten = base_en, tex = base_ex;
              int axis = base_axis;
              const double lo = centers_x[j] - l / 2.0, hi = centers_x[j] + l / 2.0;
              if (std::abs(d.x()) < 1e-12) {
                if (o.x() < lo || o.x() > hi) continue;
              } else {
                double ta = (lo - o.x()) / d.x(), tb = (hi - o.x()) / d.x();
                if (ta > tb) std::swap(ta, tb);
                if (ta > ten) {
                  ten = ta;
                  axis = 0;
                }
                tex = std::min(tex, tb);
              }
              if (ten > tex || tex < 1e-6 || ten < 1e-6) continue;  // behind or enclosing
              const Eigen::Vector3d hit = o + ten * d;
              const double x_local = hit.x() - lo;
              float shade = 0.68f;
              float band = 1.0f;
              if (axis == 1) {  // side faces
                shade = 0.82f;
                band = band_factor(x_local);
              } else if (axis == 2) {  // top face
                shade = 1.0f;
                band = band_factor(x_local);
              }
              const float f = shade * band * photo_.gain;
              out[0] += (base_col.r * f - bg[0]) * ray_weight;
              out[1] += (base_col.g * f - bg[1]) * ray_weight;
              out[2] += (base_col.b * f - bg[2]) * ray_weight;
            }
          }
        }
      }
    }
  }

  float band_factor(double x_local) const {
    const auto idx = static_cast<long long>(std::floor(x_local / band_period_));
    return (idx % 2 == 0) ? 1.0f : 0.5f;
  }

  ScenarioSpec sc_;
  RenderOptions opts_;
  RayCaster caster_;
  PhotoParams photo_;
  ImageF base_;
  Traversal traversal_;
  double band_period_ = 0.5;
};

}  // namespace

ImageU8 render_frame(const ScenarioSpec& scenario, double t_s, const RenderOptions& opts) {
  return SceneRenderer(scenario, opts).frame(t_s, true);
}

ImageU8 render_road_only(const ScenarioSpec& scenario, double t_s, const RenderOptions& opts) {
  return SceneRenderer(scenario, opts).frame(t_s, false);
}

// ---------------------------------------------------------------------------
// sequence + dataset generation

GeneratedSequence generate_sequence(const ScenarioSpec& scenario, const RenderOptions& opts,
                                    const std::string& sequence_id, bool render_frames) {
  scenario.validate();
  const Traversal trav = scenario_traversal(scenario);
  const double v = scenario.speed_mps();
  const double dt = scenario.rig.frame_dt_s;
  const int n = std::max(2, frame_count(trav.distance_m(), v, dt));

  GeneratedSequence out;
  out.sequence_id = sequence_id;
  out.speed_mps = v;
  out.records.reserve(n);
  if (render_frames) out.frames.reserve(n);

  std::optional<SceneRenderer> renderer;
  if (render_frames) renderer.emplace(scenario, opts);

  const double ts_base = 590000.0 + static_cast<double>(scenario.environment.seed % 100000) * 0.01;
  for (int i = 0; i < n; ++i) {
    const double t = i * dt;
    if (render_frames) out.frames.push_back(renderer->frame(t, true));
    ingest::FrameRecord rec;
    rec.elapsed_seconds = (i + 1) * dt;
    rec.delta_seconds = dt;
    rec.platform_timestamp = ts_base + rec.elapsed_seconds;
    rec.x = trav.x_start_m + v * t;
    rec.y = 0.0;
    rec.velocity = v;
    rec.player_id = scenario.player_id;
    rec.player_type = scenario.vehicle.type_id;
    rec.attributes.number_of_wheels = std::to_string(scenario.vehicle.wheels);
    rec.attributes.sticky_control = "true";
    rec.attributes.object_type = "";
    {
      std::ostringstream col;
      col << int(scenario.vehicle.color[0]) << "," << int(scenario.vehicle.color[1]) << ","
          << int(scenario.vehicle.color[2]);
      rec.attributes.color = col.str();
    }
    rec.attributes.role_name = "hero";
    rec.weather_type = scenario.environment.weather_string();
    rec.pose_tag = scenario.rig.pose_tag;
    out.records.push_back(std::move(rec));
  }
  return out;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string zero_pad(int value, int width) {
  std::ostringstream os;
  os.width(width);
  os.fill('0');
  os << value;
  return os.str();
}

}  // namespace

ingest::Manifest generate_dataset(const std::vector<geometry::CameraRig>& grid, int n_per_pose,
                                  const std::filesystem::path& out_dir, std::uint64_t seed,
                                  const RenderOptions& opts, bool write_frames, int n_threads) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoFailure("generate_dataset: cannot create " + out_dir.string());

  struct Job {
    const geometry::CameraRig* rig;
    int index_in_pose;
    int global_index;
  };
  std::vector<Job> jobs;
  for (const auto& rig : grid)
    for (int i = 0; i < n_per_pose; ++i)
      jobs.push_back({&rig, i, static_cast<int>(jobs.size())});

  std::vector<ingest::ManifestEntry> entries(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job& job = jobs[j];
      try {
        const auto& rig = *job.rig;
        ScenarioSpec scenario =
            sample_scenario(combine_seed(combine_seed(seed, fnv1a(rig.pose_tag)), job.index_in_pose), rig,
                            default_catalog());
        scenario.player_id = 100 + job.global_index;
        const std::string seq_id = rig.pose_tag + "_" + zero_pad(job.index_in_pose, 5);
        GeneratedSequence seq = generate_sequence(scenario, opts, seq_id, write_frames);

        const fs::path seq_dir = out_dir / rig.pose_tag / seq_id;
        fs::create_directories(seq_dir, ec);
        if (ec) throw IoFailure("generate_dataset: cannot create " + seq_dir.string());
        const fs::path log_path = seq_dir / "log.json";
        ingest::write_log(log_path, seq.records);

        std::string frame_dir_rel;
        if (write_frames) {
          const fs::path frame_dir = seq_dir / "frames";
          fs::create_directories(frame_dir, ec);
          if (ec) throw IoFailure("generate_dataset: cannot create " + frame_dir.string());
          for (std::size_t f = 0; f < seq.frames.size(); ++f)
            write_png(frame_dir / ("f" + zero_pad(static_cast<int>(f), 6) + ".png"), seq.frames[f]);
          frame_dir_rel = (fs::path(rig.pose_tag) / seq_id / "frames").string();
        }

        entries[j] = {seq_id,
                      rig.pose_tag,
                      (fs::path(rig.pose_tag) / seq_id / "log.json").string(),
                      frame_dir_rel,
                      static_cast<int>(seq.records.size()),
                      seq.speed_mps};
      } catch (const std::exception& e) {
        errors[j] = e.what();
      }
    }
  };

  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& err : errors)
    if (!err.empty()) throw IoFailure("generate_dataset: " + err);

  ingest::Manifest manifest;
  manifest.root = out_dir;
  manifest.entries = std::move(entries);
  ingest::write_manifest(out_dir / "manifest.csv", manifest);
  return manifest;
}

// ---------------------------------------------------------------------------
// analytic speed oracle

std::optional<ContactPoint> locate_ground_contact(const geometry::CameraRig& rig, const ImageU8& background,
                                                  const ImageU8& frame) {
  if (!background.same_size(frame)) return std::nullopt;
  const int h = frame.height, w = frame.width;
  constexpr int kDiffThreshold = 14;
  constexpr int kMinRowCount = 2;

  int bottom_row = -1;
  for (int r = h - 1; r >= 0 && bottom_row < 0; --r) {
    int count = 0;
    for (int c = 0; c < w; ++c) {
      const std::uint8_t* f = frame.px(r, c);
      const std::uint8_t* b = background.px(r, c);
      const int diff = std::max({std::abs(f[0] - b[0]), std::abs(f[1] - b[1]), std::abs(f[2] - b[2])});
      if (diff > kDiffThreshold && ++count >= kMinRowCount) {
        bottom_row = r;
        break;
      }
    }
  }
  if (bottom_row < 2 || bottom_row >= h - 1) return std::nullopt;  // absent or clipped

  double sum_c = 0.0;
  int n = 0;
  for (int r = std::max(0, bottom_row - 1); r <= bottom_row; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::uint8_t* f = frame.px(r, c);
      const std::uint8_t* b = background.px(r, c);
      const int diff = std::max({std::abs(f[0] - b[0]), std::abs(f[1] - b[1]), std::abs(f[2] - b[2])});
      if (diff > kDiffThreshold) {
        sum_c += c + 0.5;
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;

  ContactPoint cp;
  cp.px = {sum_c / n, bottom_row + 0.5};
  try {
    cp.ground = geometry::image_to_ground(rig, cp.px);
  } catch (const RayAboveHorizon&) {
    return std::nullopt;
  }
  return cp;
}

std::optional<double> estimate_sequence_speed(const geometry::CameraRig& rig,
                                              std::span<const ImageU8> frames, double frame_dt_s) {
  if (frames.size() < 4) return std::nullopt;
  const int w = frames.front().width, h = frames.front().height;

  // background = per-pixel temporal median over a bounded frame subset
  const std::size_t n_med = std::min<std::size_t>(frames.size(), 31);
  std::vector<const ImageU8*> subset;
  for (std::size_t k = 0; k < n_med; ++k)
    subset.push_back(&frames[k * (frames.size() - 1) / std::max<std::size_t>(n_med - 1, 1)]);
  ImageU8 background(w, h);
  std::vector<std::uint8_t> vals(n_med);
  for (std::size_t i = 0; i < background.data.size(); ++i) {
    for (std::size_t k = 0; k < n_med; ++k) vals[k] = subset[k]->data[i];
    std::nth_element(vals.begin(), vals.begin() + n_med / 2, vals.end());
    background.data[i] = vals[n_med / 2];
  }

  const geometry::RoadSection sec = geometry::visible_road_section(rig);
  std::vector<double> ts, xs;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto cp = locate_ground_contact(rig, background, frames[i]);
    if (!cp) continue;
    if (cp->ground.x() < sec.d_near_m + 0.25 || cp->ground.x() > sec.d_far_m - 0.25) continue;
    ts.push_back(i * frame_dt_s);
    xs.push_back(cp->ground.x());
  }
  if (ts.size() < 4) return std::nullopt;

  // least-squares slope of x(t)
  const auto n = static_cast<double>(ts.size());
  double st = 0, sx = 0, stt = 0, stx = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sx += xs[i];
    stt += ts[i] * ts[i];
    stx += ts[i] * xs[i];
  }
  const double denom = n * stt - st * st;
  if (std::abs(denom) < 1e-12) return std::nullopt;
  return (n * stx - st * sx) / denom;
}

}  // namespace vsd::synth
