#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmloc {

class NetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// "HOST:PORT"; throws std::invalid_argument.
  static Endpoint parse(const std::string &text);
  std::string str() const;
};

/// Owning TCP socket.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket &&o) noexcept : fd_(o.release()) {}
  Socket &operator=(Socket &&o) noexcept;
  Socket(const Socket &) = delete;
  Socket &operator=(const Socket &) = delete;
  ~Socket() { close(); }

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  int release();
  void close();
  void shutdown();

  /// True if the peer has closed its side (non-blocking check).
  bool peer_closed() const;

  void send_all(std::span<const std::uint8_t> bytes);
  /// Reads exactly out.size() bytes. Returns false on clean EOF before the
  /// first byte; throws NetError on timeout or mid-read EOF.
  bool recv_exact(std::span<std::uint8_t> out, std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
};

Socket connect_to(const Endpoint &ep);

class Listener {
 public:
  /// Binds and listens. Port 0 picks an ephemeral port.
  explicit Listener(const Endpoint &ep);
  std::uint16_t port() const { return port_; }
  /// Waits up to `timeout` for a connection.
  std::optional<Socket> accept(std::chrono::milliseconds timeout);
  void close() { sock_.close(); }

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

inline constexpr std::size_t kMaxFrameBytes = 64u << 20;

/// u32 little-endian length prefix followed by the payload.
void send_frame(Socket &s, std::span<const std::uint8_t> payload);
/// nullopt on clean EOF.
std::optional<std::vector<std::uint8_t>> recv_frame(Socket &s, std::chrono::milliseconds timeout);

}  // namespace dmloc
