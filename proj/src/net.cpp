#include "dmloc/net.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace dmloc {

namespace {

std::string errno_text(const char *what) { return std::string(what) + ": " + std::strerror(errno); }

sockaddr_in resolve(const Endpoint &ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  const std::string host = ep.host == "localhost" ? "127.0.0.1" : ep.host;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo *res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr)
    throw NetError("cannot resolve host " + ep.host);
  addr.sin_addr = reinterpret_cast<sockaddr_in *>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

}  // namespace

Endpoint Endpoint::parse(const std::string &text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
    throw std::invalid_argument("endpoint must be HOST:PORT, got '" + text + "'");
  Endpoint ep;
  ep.host = text.substr(0, colon);
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception &) {
    throw std::invalid_argument("bad port in '" + text + "'");
  }
  if (port < 0 || port > 65535) throw std::invalid_argument("port out of range in '" + text + "'");
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

std::string Endpoint::str() const { return host + ":" + std::to_string(port); }

Socket &Socket::operator=(Socket &&o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.release();
  }
  return *this;
}

int Socket::release() {
  const int fd = fd_;
  fd_ = -1;
  return fd;
}

void Socket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

bool Socket::peer_closed() const {
  if (fd_ < 0) return true;
  pollfd p{fd_, POLLIN, 0};
  if (::poll(&p, 1, 0) <= 0) return false;
  if (p.revents & (POLLHUP | POLLERR)) return true;
  std::uint8_t probe;
  const ssize_t n = ::recv(fd_, &probe, 1, MSG_PEEK | MSG_DONTWAIT);
  return n == 0 || (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK);
}

void Socket::send_all(std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw NetError(errno_text("send"));
    }
    sent += static_cast<std::size_t>(n);
  }
}

bool Socket::recv_exact(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) {
  std::size_t got = 0;
  while (got < out.size()) {
    pollfd p{fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw NetError(errno_text("poll"));
    }
    if (ready == 0) throw NetError("receive timed out");
    const ssize_t n = ::recv(fd_, out.data() + got, out.size() - got, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw NetError(errno_text("recv"));
    }
    if (n == 0) {
      if (got == 0) return false;
      throw NetError("connection closed mid-frame");
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

Socket connect_to(const Endpoint &ep) {
  const sockaddr_in addr = resolve(ep);
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw NetError(errno_text("socket"));
  if (::connect(s.fd(), reinterpret_cast<const sockaddr *>(&addr), sizeof addr) != 0)
    throw NetError(errno_text(("connect " + ep.str()).c_str()));
  const int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

Listener::Listener(const Endpoint &ep) {
  const sockaddr_in addr = resolve(ep);
  sock_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
  if (!sock_.valid()) throw NetError(errno_text("socket"));
  const int one = 1;
  ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(sock_.fd(), reinterpret_cast<const sockaddr *>(&addr), sizeof addr) != 0)
    throw NetError(errno_text(("bind " + ep.str()).c_str()));
  if (::listen(sock_.fd(), 8) != 0) throw NetError(errno_text("listen"));
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(sock_.fd(), reinterpret_cast<sockaddr *>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

std::optional<Socket> Listener::accept(std::chrono::milliseconds timeout) {
  if (!sock_.valid()) return std::nullopt;
  pollfd p{sock_.fd(), POLLIN, 0};
  const int ready = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (ready <= 0) return std::nullopt;
  const int fd = ::accept(sock_.fd(), nullptr, nullptr);
  if (fd < 0) return std::nullopt;
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return Socket(fd);
}

void send_frame(Socket &s, std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> buf(4 + payload.size());
  const auto len = static_cast<std::uint32_t>(payload.size());
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<std::uint8_t>(len >> (8 * i));
  std::copy(payload.begin(), payload.end(), buf.begin() + 4);
  s.send_all(buf);
}

std::optional<std::vector<std::uint8_t>> recv_frame(Socket &s, std::chrono::milliseconds timeout) {
  std::uint8_t hdr[4];
  if (!s.recv_exact(hdr, timeout)) return std::nullopt;
  const std::uint32_t len = static_cast<std::uint32_t>(hdr[0]) | hdr[1] << 8 | hdr[2] << 16 |
                            static_cast<std::uint32_t>(hdr[3]) << 24;
  if (len > kMaxFrameBytes) throw NetError("frame of " + std::to_string(len) + " bytes too large");
  std::vector<std::uint8_t> payload(len);
  if (len > 0 && !s.recv_exact(payload, timeout)) throw NetError("connection closed mid-frame");
  return payload;
}

}  // namespace dmloc
