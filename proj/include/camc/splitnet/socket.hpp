// SPDX-License-Identifier: Apache-2.0
#pragma once

// Blocking TCP streams with poll-based timeouts, and frame I/O on top.

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "camc/splitnet/wire.hpp"

namespace camc::splitnet {

class SocketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class TimeoutError : public SocketError {
 public:
  using SocketError::SocketError;
};
/// Orderly shutdown by the peer.
class PeerClosed : public SocketError {
 public:
  using SocketError::SocketError;
};

using Millis = std::chrono::milliseconds;

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release();
  void close();
  /// Wakes any thread blocked on this socket.
  void shutdown();

  void send_all(std::span<const std::uint8_t> bytes);
  /// Reads exactly out.size() bytes. A zero timeout waits forever.
  void recv_exact(std::span<std::uint8_t> out, Millis timeout);
  /// True when data is readable within `timeout`.
  bool wait_readable(Millis timeout);

 private:
  int fd_ = -1;
};

Socket connect_tcp(const std::string& host, std::uint16_t port, Millis timeout);

class Listener {
 public:
  /// Port 0 binds an ephemeral port; see port().
  Listener(const std::string& host, std::uint16_t port);
  std::uint16_t port() const { return port_; }
  /// Returns nullopt when nothing arrives within `timeout`.
  std::optional<Socket> accept(Millis timeout);
  void close() { sock_.close(); }

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

void write_frame(Socket& s, const Message& m);
/// Reads one whole frame. Header problems surface before the payload is read.
Message read_frame(Socket& s, Millis timeout);

}  // namespace camc::splitnet
