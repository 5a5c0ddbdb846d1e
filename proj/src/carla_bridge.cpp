#include "vsd/carla_bridge.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vsd/errors.hpp"

namespace vsd::carla {

using nlohmann::json;

void SimulatorEndpoint::validate() const {
  if (port < 1 || port > 65535) throw Error("endpoint: port outside [1, 65535]");
  if (!(sync_delta_s > 0.0)) throw Error("endpoint: sync_delta_s must be positive");
  if (!(timeout_s > 0.0)) throw Error("endpoint: timeout_s must be positive");
}

SimulatorEndpoint SimulatorEndpoint::from_env(SimulatorEndpoint base) {
  if (const char* host = std::getenv("VSD_CARLA_HOST"); host && *host) base.host = host;
  if (const char* port = std::getenv("VSD_CARLA_PORT"); port && *port) base.port = std::atoi(port);
  base.validate();
  return base;
}

// ---------------------------------------------------------------------------
// base64

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::vector<std::uint8_t>& data) {
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < data.size(); i += 3) {
    const std::uint32_t b0 = data[i];
    const std::uint32_t b1 = i + 1 < data.size() ? data[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < data.size() ? data[i + 2] : 0;
    const std::uint32_t triple = (b0 << 16) | (b1 << 8) | b2;
    out.push_back(kB64[(triple >> 18) & 0x3F]);
    out.push_back(kB64[(triple >> 12) & 0x3F]);
    out.push_back(i + 1 < data.size() ? kB64[(triple >> 6) & 0x3F] : '=');
    out.push_back(i + 2 < data.size() ? kB64[triple & 0x3F] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  int buffer = 0, bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = value(c);
    if (v < 0) throw Error("base64_decode: invalid character");
    buffer = (buffer << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((buffer >> bits) & 0xFF));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// socket plumbing

namespace {

struct Socket {
  int fd = -1;
  ~Socket() {
    if (fd >= 0) ::close(fd);
  }
};

void connect_with_timeout(Socket& sock, const std::string& host, int port, double timeout_s) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  const std::string port_str = std::to_string(port);
  if (::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &result) != 0 || !result)
    throw ConnectionFailed("carla bridge: cannot resolve " + host);

  int last_err = 0;
  for (addrinfo* ai = result; ai; ai = ai->ai_next) {
    sock.fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_NONBLOCK, ai->ai_protocol);
    if (sock.fd < 0) continue;
    if (::connect(sock.fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    if (errno == EINPROGRESS) {
      pollfd pfd{sock.fd, POLLOUT, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(timeout_s * 1000));
      int so_err = 0;
      socklen_t len = sizeof(so_err);
      if (rc > 0 && ::getsockopt(sock.fd, SOL_SOCKET, SO_ERROR, &so_err, &len) == 0 && so_err == 0) break;
      last_err = so_err ? so_err : ETIMEDOUT;
    } else {
      last_err = errno;
    }
    ::close(sock.fd);
    sock.fd = -1;
  }
  ::freeaddrinfo(result);
  if (sock.fd < 0)
    throw ConnectionFailed("carla bridge: cannot connect to " + host + ":" + port_str + " (" +
                           std::strerror(last_err ? last_err : ECONNREFUSED) + ")");
  // back to blocking with receive timeout
  const int flags = ::fcntl(sock.fd, F_GETFL, 0);
  ::fcntl(sock.fd, F_SETFL, flags & ~O_NONBLOCK);
  timeval tv;
  tv.tv_sec = static_cast<long>(timeout_s);
  tv.tv_usec = static_cast<long>((timeout_s - tv.tv_sec) * 1e6);
  ::setsockopt(sock.fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  ::setsockopt(sock.fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

void send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) throw ConnectionFailed("carla bridge: send failed");
    sent += static_cast<std::size_t>(n);
  }
}

class LineReader {
 public:
  explicit LineReader(int fd) : fd_(fd) {}
  std::string read_line() {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      char chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n <= 0) throw ConnectionFailed("carla bridge: connection closed or timed out mid-session");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buffer_;
};

}  // namespace

ingest::ManifestEntry record_session(const SimulatorEndpoint& endpoint, const synth::ScenarioSpec& scenario,
                                     const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  endpoint.validate();
  scenario.rig.validate();

  Socket sock;
  connect_with_timeout(sock, endpoint.host, endpoint.port, endpoint.timeout_s);

  const json request{{"cmd", "record"},
                     {"pose_tag", scenario.rig.pose_tag},
                     {"delta_seconds", endpoint.sync_delta_s},
                     {"speed_kmh", scenario.speed_kmh},
                     {"vehicle_type", scenario.vehicle.type_id},
                     {"height_m", scenario.rig.extrinsics.height_m},
                     {"pitch_deg", scenario.rig.extrinsics.pitch_deg},
                     {"hfov_deg", scenario.rig.intrinsics.horizontal_fov_deg},
                     {"width", scenario.rig.intrinsics.width_px},
                     {"height", scenario.rig.intrinsics.height_px}};
  send_all(sock.fd, request.dump() + "\n");

  LineReader reader(sock.fd);
  json meta;
  try {
    meta = json::parse(reader.read_line());
  } catch (const json::exception& e) {
    throw SchemaViolation(std::string("carla bridge: bad meta line: ") + e.what());
  }
  if (meta.value("type", "") != "meta" || !meta.contains("n_frames"))
    throw SchemaViolation("carla bridge: expected a meta line first");
  const long long n_frames = meta.at("n_frames").get<long long>();
  if (n_frames < 2) throw SchemaViolation("carla bridge: session too short");

  // stage everything in a temp dir; rename only after validation
  static std::atomic<unsigned> counter{0};
  const std::string seq_id = scenario.rig.pose_tag + "_live_" + std::to_string(::getpid()) + "_" +
                             std::to_string(counter.fetch_add(1));
  const fs::path final_dir = out_dir / scenario.rig.pose_tag / seq_id;
  const fs::path tmp_dir = out_dir / scenario.rig.pose_tag / ("." + seq_id + ".partial");
  std::error_code ec;
  fs::create_directories(tmp_dir / "frames", ec);
  if (ec) throw IoFailure("carla bridge: cannot create " + tmp_dir.string());

  auto cleanup = [&]() {
    std::error_code ignore;
    fs::remove_all(tmp_dir, ignore);
  };

  std::vector<ingest::FrameRecord> records;
  try {
    for (long long i = 0; i < n_frames; ++i) {
      json line = json::parse(reader.read_line());
      if (line.value("type", "") != "frame") throw SchemaViolation("carla bridge: expected a frame line");
      ingest::FrameRecord rec = ingest::record_from_json(line.at("record"), i);
      rec.pose_tag = scenario.rig.pose_tag;
      records.push_back(rec);
      if (line.contains("png_b64")) {
        const auto bytes = base64_decode(line.at("png_b64").get<std::string>());
        char name[32];
        std::snprintf(name, sizeof(name), "f%06lld.png", i);
        std::ofstream png(tmp_dir / "frames" / name, std::ios::binary);
        if (!png) throw IoFailure("carla bridge: cannot write frame " + std::string(name));
        png.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      }
    }
    const json end = json::parse(reader.read_line());
    if (end.value("type", "") != "end") throw SchemaViolation("carla bridge: missing end line");

    ingest::write_log(tmp_dir / "log.json", records);
    const ValidationReport validation = validate_log(tmp_dir / "log.json");
    if (!validation.ok())
      throw SchemaViolation("carla bridge: recorded log failed validation:\n" + validation.summary());

    fs::create_directories(final_dir.parent_path(), ec);
    fs::rename(tmp_dir, final_dir, ec);
    if (ec) throw IoFailure("carla bridge: cannot move session into " + final_dir.string());
  } catch (...) {
    cleanup();
    throw;
  }

  ingest::ManifestEntry entry;
  entry.sequence_id = seq_id;
  entry.pose_tag = scenario.rig.pose_tag;
  entry.json_path = (fs::path(scenario.rig.pose_tag) / seq_id / "log.json").string();
  entry.frame_dir = (fs::path(scenario.rig.pose_tag) / seq_id / "frames").string();
  entry.n_frames = static_cast<int>(records.size());
  double sum = 0.0;
  for (const auto& r : records) sum += r.velocity;
  entry.speed_mps = records.empty() ? 0.0 : sum / static_cast<double>(records.size());
  return entry;
}

}  // namespace vsd::carla
