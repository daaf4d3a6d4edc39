#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "leakedweb/core.hpp"
#include "leakedweb/learners/model.hpp"

namespace leakedweb {

// Wire format: 4-byte magic "LWEB", 1-byte version (=1), 1-byte message
// type, 4-byte big-endian payload length, then a UTF-8 JSON payload.

enum class MsgType : std::uint8_t {
  trace_upload = 1,
  prediction = 2,
  error = 3,
  heartbeat = 4,
};

inline constexpr std::size_t kFrameHeaderSize = 10;
inline constexpr std::size_t kDefaultMaxPayload = 16 * 1024 * 1024;

struct Frame {
  MsgType msg_type = MsgType::heartbeat;
  std::string payload;

  bool operator==(const Frame&) const = default;
};

std::string encode_frame(MsgType msg_type, std::string_view payload,
                         std::size_t max_payload = kDefaultMaxPayload);

/// Incremental decode outcome: a frame, or how many more bytes are needed.
struct DecodeResult {
  std::optional<Frame> frame;
  std::size_t consumed = 0;     // bytes consumed from the input when complete
  std::size_t need_more = 0;    // minimum extra bytes required when incomplete
};

/// Validates magic/version/length before touching the payload; a bad header
/// throws ProtocolError without allocating for the payload.
DecodeResult decode_frame(std::string_view bytes, std::size_t max_payload = kDefaultMaxPayload);

// ---- Client ----

struct RetryPolicy {
  std::size_t max_attempts = 5;
  double base_delay_s = 1.0;  // exponential backoff, factor 2
  double factor = 2.0;
};

struct SendResult {
  std::string predicted_label;
  std::vector<std::pair<std::string, double>> scores;
};

/// Uploads one whole trace and blocks for the prediction reply. On exhausted
/// retries the trace is spooled to spool_dir and IoError is thrown; a server
/// Error frame surfaces as ProtocolError with the server's message.
SendResult client_send_trace(const std::string& host, std::uint16_t port, const Trace& trace,
                             const std::string& client_id, const RetryPolicy& retry = {},
                             const std::filesystem::path& spool_dir = "spool",
                             std::size_t max_payload = kDefaultMaxPayload);

// ---- Server ----

struct ServerConfig {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 0;  // 0 = ephemeral
  std::filesystem::path store_root;
  std::size_t max_payload = kDefaultMaxPayload;
};

/// Accepts concurrent connections; per upload: persist the CSV bit-exactly
/// (write-to-temp, atomic rename), run predict, append one JSON line to
/// predictions.log, reply with a Prediction frame. Malformed frames kill
/// only their connection.
class TraceServer {
 public:
  TraceServer(ServerConfig config, TrainedModel model);
  ~TraceServer();

  TraceServer(const TraceServer&) = delete;
  TraceServer& operator=(const TraceServer&) = delete;

  /// Binds and starts the accept loop; returns the bound port.
  std::uint16_t start();
  void stop();

  /// Blocks until stop() (CLI serve mode).
  void wait();

 private:
  void accept_loop();
  void handle_connection(int fd);

  ServerConfig config_;
  TrainedModel model_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::vector<std::thread> handlers_;
  std::mutex handlers_mutex_;
  std::mutex log_mutex_;
  std::mutex store_mutex_;
};

}  // namespace leakedweb
