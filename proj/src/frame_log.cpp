#include "vsd/frame_log.hpp"

#include <fstream>
#include <sstream>

#include "vsd/errors.hpp"

namespace vsd::ingest {

using nlohmann::json;

json record_to_json(const FrameRecord& rec) {
  json j{{"elapsed_seconds", rec.elapsed_seconds},
         {"delta_seconds", rec.delta_seconds},
         {"platform_timestamp", rec.platform_timestamp},
         {"x", rec.x},
         {"y", rec.y},
         {"velocity", rec.velocity},
         {"player_id", rec.player_id},
         {"player_type", rec.player_type},
         {"attributes",
          {{"number_of_wheels", rec.attributes.number_of_wheels},
           {"sticky_control", rec.attributes.sticky_control},
           {"object_type", rec.attributes.object_type},
           {"color", rec.attributes.color},
           {"role_name", rec.attributes.role_name}}},
         {"weather_type", rec.weather_type}};
  if (!rec.pose_tag.empty()) j["pose_tag"] = rec.pose_tag;
  return j;
}

FrameRecord record_from_json(const json& j, long long record_index) {
  auto fail = [record_index](const std::string& what) {
    std::ostringstream os;
    os << "record " << record_index << ": " << what;
    throw SchemaViolation(os.str());
  };
  FrameRecord rec;
  try {
    rec.elapsed_seconds = j.at("elapsed_seconds").get<double>();
    rec.delta_seconds = j.at("delta_seconds").get<double>();
    rec.platform_timestamp = j.at("platform_timestamp").get<double>();
    rec.x = j.at("x").get<double>();
    rec.y = j.at("y").get<double>();
    rec.velocity = j.at("velocity").get<double>();
    rec.player_id = j.at("player_id").get<long long>();
    rec.player_type = j.at("player_type").get<std::string>();
    const json& a = j.at("attributes");
    rec.attributes.number_of_wheels = a.at("number_of_wheels").get<std::string>();
    rec.attributes.sticky_control = a.at("sticky_control").get<std::string>();
    rec.attributes.object_type = a.at("object_type").get<std::string>();
    rec.attributes.color = a.at("color").get<std::string>();
    rec.attributes.role_name = a.at("role_name").get<std::string>();
    rec.weather_type = j.at("weather_type").get<std::string>();
    rec.pose_tag = j.value("pose_tag", std::string{});
  } catch (const json::exception& e) {
    fail(e.what());
  }
  return rec;
}

void write_log(const std::filesystem::path& path, const std::vector<FrameRecord>& records) {
  json arr = json::array();
  for (const auto& rec : records) arr.push_back(record_to_json(rec));
  std::ofstream out(path);
  if (!out) throw IoFailure("write_log: cannot open " + path.string());
  out << arr.dump(1) << "\n";
  if (!out) throw IoFailure("write_log: write failed for " + path.string());
}

std::vector<FrameRecord> parse_log(const std::filesystem::path& path, const std::string& pose_tag) {
  std::ifstream in(path);
  if (!in) throw IoFailure("parse_log: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaViolation("parse_log: " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_array()) throw SchemaViolation("parse_log: " + path.string() + ": top level must be an array");
  std::vector<FrameRecord> records;
  records.reserve(j.size());
  long long idx = 0;
  for (const auto& e : j) {
    FrameRecord rec = record_from_json(e, idx++);
    if (!pose_tag.empty()) rec.pose_tag = pose_tag;
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace vsd::ingest

namespace vsd::carla {

using nlohmann::json;

namespace {

void check_number(const json& j, const char* field, long long idx, std::vector<Violation>& out) {
  if (!j.contains(field))
    out.push_back({idx, field, "missing"});
  else if (!j.at(field).is_number())
    out.push_back({idx, field, "not a number"});
}

void check_string(const json& j, const char* field, long long idx, std::vector<Violation>& out) {
  if (!j.contains(field))
    out.push_back({idx, field, "missing"});
  else if (!j.at(field).is_string())
    out.push_back({idx, field, "not a string"});
}

}  // namespace

std::string ValidationReport::summary() const {
  std::ostringstream os;
  os << path.string() << ": " << n_records << " records, " << violations.size() << " violations";
  for (const auto& v : violations)
    os << "\n  [" << v.record_index << "] " << v.field << ": " << v.message;
  return os.str();
}

ValidationReport validate_log(const std::filesystem::path& path) {
  ValidationReport report;
  report.path = path;
  std::ifstream in(path);
  if (!in) throw IoFailure("validate_log: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    report.violations.push_back({-1, "<file>", std::string("invalid JSON: ") + e.what()});
    return report;
  }
  if (!j.is_array()) {
    report.violations.push_back({-1, "<file>", "top level must be an array of records"});
    return report;
  }
  report.n_records = static_cast<long long>(j.size());

  long long idx = 0;
  bool have_prev = false;
  long long prev_player = 0;
  double prev_elapsed = 0.0;
  double run_delta = 0.0;
  for (const auto& rec : j) {
    if (!rec.is_object()) {
      report.violations.push_back({idx, "<record>", "not an object"});
      ++idx;
      have_prev = false;
      continue;
    }
    check_number(rec, "elapsed_seconds", idx, report.violations);
    check_number(rec, "delta_seconds", idx, report.violations);
    check_number(rec, "platform_timestamp", idx, report.violations);
    check_number(rec, "x", idx, report.violations);
    check_number(rec, "y", idx, report.violations);
    check_number(rec, "velocity", idx, report.violations);
    if (!rec.contains("player_id"))
      report.violations.push_back({idx, "player_id", "missing"});
    else if (!rec.at("player_id").is_number_integer())
      report.violations.push_back({idx, "player_id", "not an integer"});
    check_string(rec, "player_type", idx, report.violations);
    check_string(rec, "weather_type", idx, report.violations);
    if (!rec.contains("attributes") || !rec.at("attributes").is_object()) {
      report.violations.push_back({idx, "attributes", "missing or not an object"});
    } else {
      const json& a = rec.at("attributes");
      for (const char* f : {"number_of_wheels", "sticky_control", "object_type", "color", "role_name"}) {
        if (!a.contains(f))
          report.violations.push_back({idx, std::string("attributes.") + f, "missing"});
        else if (!a.at(f).is_string())
          report.violations.push_back({idx, std::string("attributes.") + f, "not a string"});
      }
    }

    // per-run ordering checks, only when the needed fields are well-formed
    if (rec.contains("player_id") && rec.at("player_id").is_number_integer() &&
        rec.contains("elapsed_seconds") && rec.at("elapsed_seconds").is_number() &&
        rec.contains("delta_seconds") && rec.at("delta_seconds").is_number()) {
      const long long player = rec.at("player_id").get<long long>();
      const double elapsed = rec.at("elapsed_seconds").get<double>();
      const double delta = rec.at("delta_seconds").get<double>();
      if (have_prev && player == prev_player) {
        if (elapsed <= prev_elapsed)
          report.violations.push_back({idx, "elapsed_seconds", "not strictly increasing within run"});
        if (delta != run_delta)
          report.violations.push_back({idx, "delta_seconds", "not constant within run"});
      } else {
        run_delta = delta;
      }
      prev_player = player;
      prev_elapsed = elapsed;
      have_prev = true;
    } else {
      have_prev = false;
    }
    ++idx;
  }
  return report;
}

}  // namespace vsd::carla
