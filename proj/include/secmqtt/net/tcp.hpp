#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <string>
#include <utility>

#include "../bytes.hpp"
#include "../errors.hpp"

// Thin RAII layer over blocking POSIX TCP sockets.
namespace secmqtt::net {

inline std::string errno_message(const char* what)
{
  return std::string(what) + ": " + std::strerror(errno);
}

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { reset(); }
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept
  {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  void reset()
  {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  // Wakes up any thread blocked in recv/poll on this socket without
  // releasing the descriptor.
  void shutdown() const
  {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  void send_all(ByteView data) const
  {
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ConnectionLost(errno_message("send"));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  // Waits up to `timeout` for data. Returns bytes read (0 on orderly
  // shutdown) or -1 when the wait timed out.
  long recv_some(std::uint8_t* buf, std::size_t len, std::chrono::milliseconds timeout) const
  {
    pollfd p{fd_, POLLIN, 0};
    for (;;) {
      const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw ConnectionLost(errno_message("poll"));
      }
      if (rc == 0) return -1;
      break;
    }
    for (;;) {
      const ssize_t n = ::recv(fd_, buf, len, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == ECONNRESET || errno == ENOTCONN) return 0;
        throw ConnectionLost(errno_message("recv"));
      }
      return static_cast<long>(n);
    }
  }

  void set_nodelay() const
  {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }

 private:
  int fd_ = -1;
};

inline sockaddr_in resolve_ipv4(const std::string& host, std::uint16_t port)
{
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (host.empty() || host == "0.0.0.0") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    return addr;
  }
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
    throw ConnectionRefused("cannot resolve host '" + host + "'");
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

inline Socket connect_tcp(const std::string& host, std::uint16_t port,
                          std::chrono::milliseconds timeout)
{
  const sockaddr_in addr = resolve_ipv4(host, port);
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw ConnectionRefused(errno_message("socket"));

  const int flags = ::fcntl(s.fd(), F_GETFL, 0);
  ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
  if (rc < 0 && errno != EINPROGRESS)
    throw ConnectionRefused(errno_message(("connect to " + host + ":" + std::to_string(port)).c_str()));
  if (rc < 0) {
    pollfd p{s.fd(), POLLOUT, 0};
    rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc == 0) throw Timeout("connect to " + host + ":" + std::to_string(port) + " timed out");
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      errno = err;
      throw ConnectionRefused(
          errno_message(("connect to " + host + ":" + std::to_string(port)).c_str()));
    }
  }
  ::fcntl(s.fd(), F_SETFL, flags);
  s.set_nodelay();
  return s;
}

class Listener {
 public:
  Listener(const std::string& host, std::uint16_t port)
  {
    const sockaddr_in addr = resolve_ipv4(host, port);
    sock_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock_.valid()) throw Error(errno_message("socket"));
    int one = 1;
    ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(sock_.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) < 0)
      throw Error(errno_message(("bind " + host + ":" + std::to_string(port)).c_str()));
    if (::listen(sock_.fd(), 64) < 0) throw Error(errno_message("listen"));
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
  }

  std::uint16_t port() const { return port_; }

  // Returns an invalid socket if nothing arrived within `timeout`.
  Socket accept(std::chrono::milliseconds timeout, std::string* peer = nullptr) const
  {
    pollfd p{sock_.fd(), POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0) return Socket{};
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    Socket s(::accept(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), &len));
    if (s.valid()) {
      s.set_nodelay();
      if (peer) {
        char buf[INET_ADDRSTRLEN] = {};
        ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof(buf));
        *peer = std::string(buf) + ":" + std::to_string(ntohs(addr.sin_port));
      }
    }
    return s;
  }

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

} // namespace secmqtt::net
