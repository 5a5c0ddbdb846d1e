#include <doctest.h>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "vsd/carla_bridge.hpp"
#include "vsd/errors.hpp"
#include "vsd/frame_log.hpp"
#include "vsd/synthgen.hpp"

using namespace vsd;
using namespace vsd::carla;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

synth::ScenarioSpec test_scenario() {
  auto rig = geometry::default_pose_grid()[0];
  auto s = synth::sample_scenario(3, rig, synth::default_catalog());
  s.speed_kmh = 60.0;
  return s;
}

// in-process fake recorder speaking the bridge protocol
class FakeServer {
 public:
  explicit FakeServer(std::vector<std::string> reply_lines) : lines_(std::move(reply_lines)) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    REQUIRE(fd_ >= 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    REQUIRE(::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
    socklen_t len = sizeof(addr);
    REQUIRE(::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) == 0);
    port_ = ntohs(addr.sin_port);
    REQUIRE(::listen(fd_, 1) == 0);
    thread_ = std::thread([this] { serve(); });
  }

  ~FakeServer() {
    if (thread_.joinable()) thread_.join();
    if (fd_ >= 0) ::close(fd_);
  }

  int port() const { return port_; }
  std::string request() const { return request_; }

 private:
  void serve() {
    const int client = ::accept(fd_, nullptr, nullptr);
    if (client < 0) return;
    char buf[4096];
    std::string req;
    while (req.find('\n') == std::string::npos) {
      const ssize_t n = ::recv(client, buf, sizeof(buf), 0);
      if (n <= 0) break;
      req.append(buf, static_cast<std::size_t>(n));
    }
    request_ = req;
    for (const auto& line : lines_) {
      const std::string payload = line + "\n";
      (void)!::send(client, payload.data(), payload.size(), MSG_NOSIGNAL);
    }
    ::close(client);
  }

  int fd_ = -1;
  int port_ = 0;
  std::vector<std::string> lines_;
  std::string request_;
  std::thread thread_;
};

std::vector<std::string> canned_session(int n_frames, bool with_frames, bool break_velocity = false) {
  // reuse the procedural generator for realistic records
  auto scenario = test_scenario();
  auto seq = synth::generate_sequence(scenario, {}, "fake", false);
  REQUIRE(static_cast<int>(seq.records.size()) >= n_frames);

  std::string png_b64;
  if (with_frames) {
    const fs::path tmp = fs::temp_directory_path() / "vsd_fake_frame.png";
    write_png(tmp, ImageU8(16, 9, {100, 110, 120}));
    std::ifstream in(tmp, std::ios::binary);
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                          std::istreambuf_iterator<char>());
    png_b64 = base64_encode(bytes);
    fs::remove(tmp);
  }

  std::vector<std::string> lines;
  lines.push_back(json{{"type", "meta"}, {"n_frames", n_frames}}.dump());
  for (int i = 0; i < n_frames; ++i) {
    json rec = ingest::record_to_json(seq.records[i]);
    if (break_velocity && i == 1) rec.erase("velocity");
    json line{{"type", "frame"}, {"record", rec}};
    if (with_frames) line["png_b64"] = png_b64;
    lines.push_back(line.dump());
  }
  lines.push_back(json{{"type", "end"}}.dump());
  return lines;
}

}  // namespace

TEST_SUITE_BEGIN("carla");

TEST_CASE("carla: endpoint validation and environment override") {
  SimulatorEndpoint ep;
  CHECK_NOTHROW(ep.validate());
  ep.port = 0;
  CHECK_THROWS_AS(ep.validate(), Error);

  ::setenv("VSD_CARLA_HOST", "198.51.100.7", 1);
  ::setenv("VSD_CARLA_PORT", "4321", 1);
  const auto from_env = SimulatorEndpoint::from_env();
  CHECK(from_env.host == "198.51.100.7");
  CHECK(from_env.port == 4321);
  ::unsetenv("VSD_CARLA_HOST");
  ::unsetenv("VSD_CARLA_PORT");
  CHECK(SimulatorEndpoint::from_env().port == 2000);
}

TEST_CASE("carla: absent server fails fast and leaves no partial files") {
  SimulatorEndpoint ep;
  ep.host = "127.0.0.1";
  ep.port = 1;  // closed
  ep.timeout_s = 2.0;
  const fs::path out = fs::temp_directory_path() / "vsd_carla_absent";
  fs::remove_all(out);
  fs::create_directories(out);

  const auto t0 = std::chrono::steady_clock::now();
  CHECK_THROWS_AS((void)record_session(ep, test_scenario(), out), ConnectionFailed);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(elapsed < ep.timeout_s + 2.0);

  // nothing left behind
  long n_entries = 0;
  for (auto it = fs::recursive_directory_iterator(out); it != fs::recursive_directory_iterator(); ++it)
    ++n_entries;
  CHECK(n_entries == 0);
  fs::remove_all(out);
}

TEST_CASE("carla: recorded session passes the shared schema validator") {
  FakeServer server(canned_session(12, true));
  SimulatorEndpoint ep;
  ep.port = server.port();
  ep.timeout_s = 10.0;
  const fs::path out = fs::temp_directory_path() / "vsd_carla_session";
  fs::remove_all(out);

  const auto entry = record_session(ep, test_scenario(), out);
  CHECK(entry.n_frames == 12);
  CHECK(entry.pose_tag == "3m45");
  CHECK(fs::exists(out / entry.json_path));
  CHECK(fs::exists(out / entry.frame_dir));

  const auto report = validate_log(out / entry.json_path);
  CHECK(report.ok());
  CHECK(report.n_records == 12);

  // the request carried the synchronous step and the pose
  CAPTURE(server.request());
  const json req = json::parse(server.request());
  CHECK(req.at("cmd") == "record");
  CHECK(req.at("delta_seconds").get<double>() == doctest::Approx(0.0125));
  CHECK(req.at("pose_tag") == "3m45");
  fs::remove_all(out);
}

TEST_CASE("carla: malformed session is rejected and cleaned up") {
  FakeServer server(canned_session(6, false, /*break_velocity=*/true));
  SimulatorEndpoint ep;
  ep.port = server.port();
  ep.timeout_s = 10.0;
  const fs::path out = fs::temp_directory_path() / "vsd_carla_bad";
  fs::remove_all(out);

  CHECK_THROWS_AS((void)record_session(ep, test_scenario(), out), SchemaViolation);
  long n_files = 0;
  if (fs::exists(out))
    for (auto it = fs::recursive_directory_iterator(out); it != fs::recursive_directory_iterator(); ++it)
      if (it->is_regular_file()) ++n_files;
  CHECK(n_files == 0);
  fs::remove_all(out);
}

TEST_CASE("carla: validator pinpoints a single missing field") {
  auto scenario = test_scenario();
  auto seq = synth::generate_sequence(scenario, {}, "val", false);
  json arr = json::array();
  for (const auto& r : seq.records) arr.push_back(ingest::record_to_json(r));
  arr[3].erase("velocity");

  const fs::path path = fs::temp_directory_path() / "vsd_validator.json";
  {
    std::ofstream out(path);
    out << arr.dump();
  }
  const auto report = validate_log(path);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].record_index == 3);
  CHECK(report.violations[0].field == "velocity");
  fs::remove(path);
}

TEST_CASE("carla: validator flags ordering violations") {
  auto scenario = test_scenario();
  auto seq = synth::generate_sequence(scenario, {}, "val", false);
  json arr = json::array();
  for (const auto& r : seq.records) arr.push_back(ingest::record_to_json(r));
  std::swap(arr[2], arr[3]);  // breaks monotone elapsed_seconds twice

  const fs::path path = fs::temp_directory_path() / "vsd_validator_order.json";
  {
    std::ofstream out(path);
    out << arr.dump();
  }
  const auto report = validate_log(path);
  CHECK(!report.ok());
  bool found = false;
  for (const auto& v : report.violations)
    if (v.field == "elapsed_seconds" && v.message.find("increasing") != std::string::npos) found = true;
  CHECK(found);
  fs::remove(path);
}

TEST_CASE("carla: base64 round-trip") {
  std::vector<std::uint8_t> data;
  for (int i = 0; i < 999; ++i) data.push_back(static_cast<std::uint8_t>(i * 31 + 7));
  CHECK(base64_decode(base64_encode(data)) == data);
  CHECK(base64_encode({}) == "");
  CHECK(base64_encode({'a'}) == "YQ==");
}

TEST_CASE("carla: live server check (auto-skipped without a simulator)") {
  if (const char* live = std::getenv("VSD_CARLA_LIVE"); !live || std::string(live) != "1") {
    MESSAGE("VSD_CARLA_LIVE != 1; skipping the live-server recording check");
    return;
  }
  const auto ep = SimulatorEndpoint::from_env();
  auto scenario = test_scenario();
  scenario.speed_kmh = 60.0;
  const fs::path out = fs::temp_directory_path() / "vsd_carla_live";
  const auto entry = record_session(ep, scenario, out);
  CHECK(std::abs(entry.speed_mps - 60.0 / 3.6) < 0.5);
}

TEST_SUITE_END();
