#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "slv/ip.hpp"

namespace slv::net {

// Owning file descriptor for a socket.
class Socket {
public:
  Socket() = default;
  explicit Socket(int fd) noexcept : fd_(fd) {}
  Socket(Socket &&other) noexcept : fd_(other.release()) {}
  Socket &operator=(Socket &&other) noexcept;
  Socket(const Socket &) = delete;
  Socket &operator=(const Socket &) = delete;
  ~Socket() { reset(); }

  [[nodiscard]] int fd() const noexcept { return fd_; }
  [[nodiscard]] bool valid() const noexcept { return fd_ >= 0; }
  int release() noexcept;
  void reset() noexcept;
  // Wakes any thread blocked on this socket.
  void shutdown() noexcept;

private:
  int fd_{-1};
};

enum class ConnectStatus { Connected, Refused, TimedOut, Error };

struct ConnectOutcome {
  ConnectStatus status{ConnectStatus::Error};
  Socket socket;
};

// Non-blocking connect bounded by `timeout`. The returned socket is
// blocking again on success.
ConnectOutcome connect_tcp(const ip::HostPort &addr, std::chrono::milliseconds timeout);

class Listener {
public:
  // Binds and listens; port 0 picks an ephemeral port. Throws slv::Error.
  Listener(const std::string &host, std::uint16_t port, int backlog = 128);

  [[nodiscard]] std::uint16_t port() const noexcept { return port_; }
  [[nodiscard]] int fd() const noexcept { return socket_.fd(); }
  // Returns an invalid socket if nothing arrived within `timeout`.
  Socket accept(std::chrono::milliseconds timeout);
  void close() noexcept { socket_.reset(); }

private:
  Socket socket_;
  std::uint16_t port_{0};
};

// Newline-delimited messages over a stream socket.
class LineChannel {
public:
  explicit LineChannel(Socket socket, std::size_t max_line = 1 << 20)
      : socket_(std::move(socket)), max_line_(max_line) {}

  // nullopt on EOF, error, or deadline. Throws ProtocolError if a line
  // exceeds the size limit.
  std::optional<std::string> read_line(std::chrono::steady_clock::time_point deadline);
  // Appends '\n'. Returns false on a write error.
  bool write_line(std::string_view line);

  [[nodiscard]] Socket &socket() noexcept { return socket_; }

private:
  Socket socket_;
  std::string buffer_;
  std::size_t max_line_;
};

} // namespace slv::net
