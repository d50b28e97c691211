// SPDX-License-Identifier: Apache-2.0
#include "camc/splitnet/socket.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace camc::splitnet {

namespace {

[[noreturn]] void fail(const std::string& what) { throw SocketError(what + ": " + std::strerror(errno)); }

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0 || res == nullptr)
    throw SocketError("cannot resolve " + host + ": " + gai_strerror(rc));
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

int poll_one(int fd, short events, Millis timeout) {
  pollfd p{fd, events, 0};
  const int ms = timeout.count() <= 0 ? -1 : static_cast<int>(timeout.count());
  for (;;) {
    const int rc = ::poll(&p, 1, ms);
    if (rc >= 0) return rc;
    if (errno != EINTR) fail("poll");
  }
}

}  // namespace

Socket& Socket::operator=(Socket&& o) noexcept {
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

void Socket::send_all(std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("send");
    }
    sent += static_cast<std::size_t>(n);
  }
}

bool Socket::wait_readable(Millis timeout) { return poll_one(fd_, POLLIN, timeout) > 0; }

void Socket::recv_exact(std::span<std::uint8_t> out, Millis timeout) {
  std::size_t got = 0;
  while (got < out.size()) {
    if (poll_one(fd_, POLLIN, timeout) == 0) throw TimeoutError("receive timed out");
    const ssize_t n = ::recv(fd_, out.data() + got, out.size() - got, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("recv");
    }
    if (n == 0) {
      if (got == 0) throw PeerClosed("connection closed by peer");
      throw TruncationError("connection closed mid-frame after " + std::to_string(got) + " bytes");
    }
    got += static_cast<std::size_t>(n);
  }
}

Socket connect_tcp(const std::string& host, std::uint16_t port, Millis timeout) {
  const sockaddr_in addr = resolve(host, port);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) fail("socket");
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) {
      int one = 1;
      ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return s;
    }
    if (errno != ECONNREFUSED || std::chrono::steady_clock::now() >= deadline)
      fail("connect to " + host + ":" + std::to_string(port));
    ::usleep(50'000);
  }
}

Listener::Listener(const std::string& host, std::uint16_t port) : sock_(::socket(AF_INET, SOCK_STREAM, 0)) {
  if (!sock_.valid()) fail("socket");
  int one = 1;
  ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  const sockaddr_in addr = resolve(host, port);
  if (::bind(sock_.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0)
    fail("bind " + host + ":" + std::to_string(port));
  if (::listen(sock_.fd(), 64) != 0) fail("listen");
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

std::optional<Socket> Listener::accept(Millis timeout) {
  if (!sock_.valid() || poll_one(sock_.fd(), POLLIN, timeout) == 0) return std::nullopt;
  const int fd = ::accept(sock_.fd(), nullptr, nullptr);
  if (fd < 0) {
    if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) return std::nullopt;
    fail("accept");
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return Socket(fd);
}

void write_frame(Socket& s, const Message& m) { s.send_all(encode_frame(m)); }

Message read_frame(Socket& s, Millis timeout) {
  std::vector<std::uint8_t> buf(kHeaderSize);
  s.recv_exact(buf, timeout);
  const std::size_t total = frame_size(buf);
  buf.resize(total);
  s.recv_exact(std::span(buf).subspan(kHeaderSize), timeout);
  return decode_frame(buf);
}

}  // namespace camc::splitnet
