#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

#include "fedorch/transport/session.hpp"

namespace fedorch::wire {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  // "host:port"
  static Endpoint parse(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon + 1 == text.size()) {
      throw std::invalid_argument("address '" + text + "' is not host:port");
    }
    Endpoint ep;
    ep.host = text.substr(0, colon);
    if (ep.host.empty()) ep.host = "0.0.0.0";
    const long port = std::stol(text.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::invalid_argument("port out of range in '" + text + "'");
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
  }

  std::string str() const { return host + ":" + std::to_string(port); }
};

// Owning file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) noexcept : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { reset(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void shutdown() noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline std::string errno_text() { return std::strerror(errno); }

inline sockaddr_in resolve(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res); rc != 0) {
    throw TransportError("cannot resolve " + ep.host + ": " + ::gai_strerror(rc));
  }
  sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(ep.port);
  return addr;
}

class TcpSession final : public Session {
 public:
  explicit TcpSession(Socket sock) : sock_(std::move(sock)) {
    int one = 1;
    ::setsockopt(sock_.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~TcpSession() override { close(); }

  void send_frame(std::span<const std::uint8_t> frame) override {
    std::lock_guard lock(send_mu_);
    std::size_t sent = 0;
    while (sent < frame.size()) {
      const ssize_t n = ::send(sock_.fd(), frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw TransportError("send failed: " + errno_text());
      sent += static_cast<std::size_t>(n);
    }
  }

  std::vector<std::uint8_t> recv_frame() override {
    std::lock_guard lock(recv_mu_);
    std::vector<std::uint8_t> frame(kHeaderSize);
    read_exact(frame.data(), kHeaderSize);
    const std::size_t total = frame_size_from_header(frame, max_payload());
    frame.resize(total);
    read_exact(frame.data() + kHeaderSize, total - kHeaderSize);
    return frame;
  }

  void close() override { sock_.shutdown(); }

 private:
  void read_exact(std::uint8_t* dst, std::size_t len) {
    std::size_t got = 0;
    while (got < len) {
      const ssize_t n = ::recv(sock_.fd(), dst + got, len - got, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n == 0) throw TransportError("peer disconnected");
      if (n < 0) throw TransportError("recv failed: " + errno_text());
      got += static_cast<std::size_t>(n);
    }
  }

  Socket sock_;
  std::mutex send_mu_;
  std::mutex recv_mu_;
};

class TcpListener {
 public:
  explicit TcpListener(const Endpoint& ep) {
    sock_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock_.valid()) throw TransportError("socket: " + errno_text());
    int one = 1;
    ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    auto addr = resolve(ep);
    if (::bind(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      throw TransportError("bind " + ep.str() + ": " + errno_text());
    }
    if (::listen(sock_.fd(), 64) != 0) throw TransportError("listen: " + errno_text());
    socklen_t len = sizeof(addr);
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }

  // Actual bound port (useful when constructed with port 0).
  std::uint16_t port() const noexcept { return port_; }

  std::unique_ptr<Session> accept() {
    while (true) {
      const int fd = ::accept(sock_.fd(), nullptr, nullptr);
      if (fd >= 0) return std::make_unique<TcpSession>(Socket(fd));
      if (errno != EINTR) throw TransportError("accept: " + errno_text());
    }
  }

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

// Retries while the controller is not yet listening.
inline std::unique_ptr<Session> tcp_connect(const Endpoint& ep,
                                            std::chrono::milliseconds timeout = std::chrono::seconds(10)) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  const auto addr = resolve(ep);
  while (true) {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) throw TransportError("socket: " + errno_text());
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) {
      return std::make_unique<TcpSession>(std::move(s));
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      throw TransportError("connect " + ep.str() + ": " + errno_text());
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

}  // namespace fedorch::wire
