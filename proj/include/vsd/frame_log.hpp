#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace vsd::ingest {

struct VehicleAttributes {
  std::string number_of_wheels;  // CARLA keeps attribute values as strings
  std::string sticky_control;
  std::string object_type;
  std::string color;  // "r,g,b"
  std::string role_name;

  bool operator==(const VehicleAttributes&) const = default;
};

// One labeled frame of one vehicle, as written by the simulation log.
struct FrameRecord {
  double elapsed_seconds = 0.0;
  double delta_seconds = 0.0;
  double platform_timestamp = 0.0;
  double x = 0.0;  // vehicle ground position, travel axis
  double y = 0.0;  // vehicle ground position, lateral
  double velocity = 0.0;  // m/s
  long long player_id = 0;
  std::string player_type;
  VehicleAttributes attributes;
  std::string weather_type;
  std::string pose_tag;  // merge key; absent in raw single-camera logs

  bool operator==(const FrameRecord&) const = default;
};

nlohmann::json record_to_json(const FrameRecord& rec);
FrameRecord record_from_json(const nlohmann::json& j, long long record_index);

// One JSON file per simulation: an array of records in capture order.
void write_log(const std::filesystem::path& path, const std::vector<FrameRecord>& records);

// Parses a validated log; pose_tag argument fills/overrides the merge key.
// Throws SchemaViolation naming the offending record index.
std::vector<FrameRecord> parse_log(const std::filesystem::path& path, const std::string& pose_tag);

}  // namespace vsd::ingest

namespace vsd::carla {

struct Violation {
  long long record_index = -1;  // -1: file-level problem
  std::string field;
  std::string message;
};

struct ValidationReport {
  std::filesystem::path path;
  long long n_records = 0;
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

// Structural check of a log file: every schema field present with the right
// type, strictly increasing elapsed_seconds and constant delta_seconds within
// each contiguous player_id run. Content problems are reported, never thrown.
ValidationReport validate_log(const std::filesystem::path& path);

}  // namespace vsd::carla
