#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vsd/frame_log.hpp"
#include "vsd/ingest.hpp"
#include "vsd/synthgen.hpp"

namespace vsd::carla {

struct SimulatorEndpoint {
  std::string host = "127.0.0.1";
  int port = 2000;
  double timeout_s = 5.0;
  double sync_delta_s = 0.0125;  // synchronous fixed-step recording

  void validate() const;
  // VSD_CARLA_HOST / VSD_CARLA_PORT override the base values when set
  static SimulatorEndpoint from_env(SimulatorEndpoint base);
  static SimulatorEndpoint from_env() { return from_env(SimulatorEndpoint{}); }
};

// Recorder wire protocol (newline-delimited JSON over TCP, served by a thin
// sidecar next to the simulator):
//   client -> {"cmd":"record", "pose_tag":..., "delta_seconds":..., "speed_kmh":...,
//              "vehicle_type":..., "height_m":..., "pitch_deg":..., "hfov_deg":...,
//              "width":..., "height":...}
//   server -> {"type":"meta", "n_frames":N}
//             N x {"type":"frame", "record":{...log record...}, "png_b64":"..."}
//             {"type":"end"}
// The client writes the same artifacts as the procedural generator (frames +
// log + manifest row) and validates the log with the shared schema validator.
// Failures leave no partial files behind.
ingest::ManifestEntry record_session(const SimulatorEndpoint& endpoint, const synth::ScenarioSpec& scenario,
                                     const std::filesystem::path& out_dir);

std::string base64_encode(const std::vector<std::uint8_t>& data);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace vsd::carla
