#include "socket.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "slv/error.hpp"

namespace slv::net {
namespace {

struct SockAddr {
  sockaddr_storage storage{};
  socklen_t len{0};
  int family{AF_INET};
};

std::optional<SockAddr> to_sockaddr(const std::string &host, std::uint16_t port) {
  const auto addr = ip::parse_address(host);
  if (!addr) {
    return std::nullopt;
  }
  SockAddr out;
  if (addr->family == ip::Family::V4) {
    auto *sin = reinterpret_cast<sockaddr_in *>(&out.storage);
    sin->sin_family = AF_INET;
    sin->sin_port = htons(port);
    std::memcpy(&sin->sin_addr, addr->bytes.data(), 4);
    out.len = sizeof(sockaddr_in);
    out.family = AF_INET;
  } else {
    auto *sin6 = reinterpret_cast<sockaddr_in6 *>(&out.storage);
    sin6->sin6_family = AF_INET6;
    sin6->sin6_port = htons(port);
    std::memcpy(&sin6->sin6_addr, addr->bytes.data(), 16);
    out.len = sizeof(sockaddr_in6);
    out.family = AF_INET6;
  }
  return out;
}

int remaining_ms(std::chrono::steady_clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
      deadline - std::chrono::steady_clock::now());
  return left.count() < 0 ? 0 : static_cast<int>(left.count());
}

void set_blocking(int fd, bool blocking) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, blocking ? (flags & ~O_NONBLOCK) : (flags | O_NONBLOCK));
}

} // namespace

Socket &Socket::operator=(Socket &&other) noexcept {
  if (this != &other) {
    reset();
    fd_ = other.release();
  }
  return *this;
}

int Socket::release() noexcept {
  const int fd = fd_;
  fd_ = -1;
  return fd;
}

void Socket::reset() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown() noexcept {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
  }
}

ConnectOutcome connect_tcp(const ip::HostPort &addr, std::chrono::milliseconds timeout) {
  ConnectOutcome out;
  const auto sa = to_sockaddr(addr.host, addr.port);
  if (!sa) {
    return out;
  }
  Socket sock(::socket(sa->family, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
  if (!sock.valid()) {
    return out;
  }
  int rc = ::connect(sock.fd(), reinterpret_cast<const sockaddr *>(&sa->storage), sa->len);
  if (rc != 0 && errno != EINPROGRESS) {
    out.status = errno == ECONNREFUSED ? ConnectStatus::Refused : ConnectStatus::Error;
    return out;
  }
  if (rc != 0) {
    pollfd pfd{sock.fd(), POLLOUT, 0};
    rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc == 0) {
      out.status = ConnectStatus::TimedOut;
      return out;
    }
    if (rc < 0) {
      return out;
    }
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(sock.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      out.status = err == ECONNREFUSED ? ConnectStatus::Refused : ConnectStatus::Error;
      return out;
    }
  }
  set_blocking(sock.fd(), true);
  out.status = ConnectStatus::Connected;
  out.socket = std::move(sock);
  return out;
}

Listener::Listener(const std::string &host, std::uint16_t port, int backlog) {
  const auto sa = to_sockaddr(host, port);
  if (!sa) {
    throw InvalidArgument("cannot listen on '" + host + "': not an IP address");
  }
  socket_ = Socket(::socket(sa->family, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!socket_.valid()) {
    throw Error(std::string("socket: ") + std::strerror(errno));
  }
  const int one = 1;
  ::setsockopt(socket_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(socket_.fd(), reinterpret_cast<const sockaddr *>(&sa->storage), sa->len) != 0) {
    throw Error("bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  }
  if (::listen(socket_.fd(), backlog) != 0) {
    throw Error(std::string("listen: ") + std::strerror(errno));
  }
  sockaddr_storage bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(socket_.fd(), reinterpret_cast<sockaddr *>(&bound), &len);
  port_ = ntohs(bound.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6 *>(&bound)->sin6_port
                                            : reinterpret_cast<sockaddr_in *>(&bound)->sin_port);
}

Socket Listener::accept(std::chrono::milliseconds timeout) {
  if (!socket_.valid()) {
    return {};
  }
  pollfd pfd{socket_.fd(), POLLIN, 0};
  if (::poll(&pfd, 1, static_cast<int>(timeout.count())) <= 0) {
    return {};
  }
  Socket conn(::accept4(socket_.fd(), nullptr, nullptr, SOCK_CLOEXEC));
  if (conn.valid()) {
    const int one = 1;
    ::setsockopt(conn.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  return conn;
}

std::optional<std::string> LineChannel::read_line(std::chrono::steady_clock::time_point deadline) {
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') {
        line.pop_back();
      }
      return line;
    }
    if (buffer_.size() > max_line_) {
      throw ProtocolError("message exceeds " + std::to_string(max_line_) + " bytes");
    }
    pollfd pfd{socket_.fd(), POLLIN, 0};
    const int rc = ::poll(&pfd, 1, remaining_ms(deadline));
    if (rc <= 0) {
      return std::nullopt;
    }
    char chunk[4096];
    const ssize_t n = ::recv(socket_.fd(), chunk, sizeof(chunk), 0);
    if (n <= 0) {
      return std::nullopt;
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

bool LineChannel::write_line(std::string_view line) {
  std::string data(line);
  data.push_back('\n');
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(socket_.fd(), data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) {
        continue;
      }
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

} // namespace slv::net
