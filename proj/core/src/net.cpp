#include "streamsim/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/uio.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <utility>

#include <fmt/format.h>

#include "streamsim/error.hpp"

namespace streamsim {
namespace {

[[noreturn]] void io_fail(std::string_view what) {
  throw Error(Errc::io_error, fmt::format("{}: {}", what, std::strerror(errno)));
}

sockaddr_in loopback_addr(std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  return addr;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

Socket::~Socket() { close(); }

Socket::Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

Socket Socket::connect_loopback(std::uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) io_fail("socket");
  Socket s(fd);
  auto addr = loopback_addr(port);
  int rc;
  do {
    rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
  } while (rc < 0 && errno == EINTR);
  if (rc < 0) io_fail(fmt::format("connect 127.0.0.1:{}", port));
  set_nodelay(fd);
  return s;
}

void Socket::close() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::shutdown_write() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

void Socket::write_all(std::initializer_list<std::span<const std::byte>> parts) {
  std::vector<iovec> iov;
  iov.reserve(parts.size());
  for (auto p : parts) {
    if (!p.empty()) {
      iov.push_back({const_cast<std::byte*>(p.data()), p.size()});
    }
  }
  std::size_t first = 0;
  while (first < iov.size()) {
    msghdr msg{};
    msg.msg_iov = iov.data() + first;
    msg.msg_iovlen = iov.size() - first;
    ssize_t n = ::sendmsg(fd_, &msg, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_fail("send");
    }
    auto left = static_cast<std::size_t>(n);
    while (first < iov.size() && left >= iov[first].iov_len) {
      left -= iov[first].iov_len;
      ++first;
    }
    if (first < iov.size()) {
      iov[first].iov_base = static_cast<char*>(iov[first].iov_base) + left;
      iov[first].iov_len -= left;
    }
  }
}

bool Socket::read_exact(std::span<std::byte> out) {
  std::size_t got = 0;
  while (got < out.size()) {
    ssize_t n = ::recv(fd_, out.data() + got, out.size() - got, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (got == 0 && (errno == ECONNRESET || errno == EBADF)) return false;
      io_fail("recv");
    }
    if (n == 0) {
      if (got == 0) return false;
      throw Error(Errc::io_error, "peer closed mid-frame");
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

bool Socket::wait_readable(std::chrono::milliseconds timeout) const {
  pollfd p{fd_, POLLIN, 0};
  int rc;
  do {
    rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
  } while (rc < 0 && errno == EINTR);
  if (rc < 0) io_fail("poll");
  return rc > 0;
}

Listener Listener::bind_loopback(std::uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) io_fail("socket");
  Listener l;
  l.sock_ = Socket(fd);
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  auto addr = loopback_addr(port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    io_fail("bind");
  }
  if (::listen(fd, 256) < 0) io_fail("listen");
  socklen_t len = sizeof(addr);
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) < 0) {
    io_fail("getsockname");
  }
  l.port_ = ntohs(addr.sin_port);
  return l;
}

Socket Listener::accept() {
  for (;;) {
    int fd = ::accept4(sock_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) {
      set_nodelay(fd);
      return Socket(fd);
    }
    if (errno == EINTR || errno == ECONNABORTED) continue;
    return Socket{};
  }
}

bool Listener::wait_pending(std::chrono::milliseconds timeout) const {
  return sock_.wait_readable(timeout);
}

void Listener::shutdown() noexcept { sock_.shutdown(); }

void write_frame(Socket& sock,
                 std::initializer_list<std::span<const std::byte>> parts) {
  std::size_t total = 0;
  for (auto p : parts) total += p.size();
  if (total > kMaxFrameBytes) {
    throw Error(Errc::protocol_error,
                fmt::format("frame of {} bytes exceeds the limit", total));
  }
  std::byte len[4];
  auto n = static_cast<std::uint32_t>(total);
  for (int i = 0; i < 4; ++i) {
    len[i] = static_cast<std::byte>((n >> (24 - 8 * i)) & 0xff);
  }
  if (parts.size() == 1) {
    sock.write_all({std::span<const std::byte>(len), *parts.begin()});
  } else if (parts.size() == 2) {
    auto it = parts.begin();
    sock.write_all({std::span<const std::byte>(len), it[0], it[1]});
  } else {
    sock.write_all({std::span<const std::byte>(len)});
    for (auto p : parts) sock.write_all({p});
  }
}

std::optional<std::vector<std::byte>> read_frame(Socket& sock) {
  std::byte len[4];
  if (!sock.read_exact(len)) return std::nullopt;
  std::uint32_t n = 0;
  for (auto b : len) n = (n << 8) | std::to_integer<std::uint32_t>(b);
  if (n > kMaxFrameBytes) {
    throw Error(Errc::protocol_error,
                fmt::format("peer sent a {} byte frame", n));
  }
  std::vector<std::byte> out(n);
  if (n > 0 && !sock.read_exact(out)) {
    throw Error(Errc::io_error, "peer closed mid-frame");
  }
  return out;
}

void ByteWriter::u8(std::uint8_t v) { buf_.push_back(static_cast<std::byte>(v)); }

void ByteWriter::u16(std::uint16_t v) {
  u8(static_cast<std::uint8_t>(v >> 8));
  u8(static_cast<std::uint8_t>(v));
}

void ByteWriter::u32(std::uint32_t v) {
  u16(static_cast<std::uint16_t>(v >> 16));
  u16(static_cast<std::uint16_t>(v));
}

void ByteWriter::u64(std::uint64_t v) {
  u32(static_cast<std::uint32_t>(v >> 32));
  u32(static_cast<std::uint32_t>(v));
}

void ByteWriter::str(std::string_view s) {
  if (s.size() > 0xffff) {
    throw Error(Errc::invalid_argument, "string field longer than 65535 bytes");
  }
  u16(static_cast<std::uint16_t>(s.size()));
  for (char c : s) u8(static_cast<std::uint8_t>(c));
}

void ByteWriter::raw(std::span<const std::byte> bytes) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) {
    throw Error(Errc::protocol_error, "truncated frame");
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return std::to_integer<std::uint8_t>(in_[pos_++]);
}

std::uint16_t ByteReader::u16() {
  std::uint16_t hi = u8();
  return static_cast<std::uint16_t>(hi << 8 | u8());
}

std::uint32_t ByteReader::u32() {
  std::uint32_t hi = u16();
  return hi << 16 | u16();
}

std::uint64_t ByteReader::u64() {
  std::uint64_t hi = u32();
  return hi << 32 | u32();
}

std::string ByteReader::str() {
  auto n = u16();
  need(n);
  std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::span<const std::byte> ByteReader::rest() noexcept {
  auto r = in_.subspan(pos_);
  pos_ = in_.size();
  return r;
}

}  // namespace streamsim
