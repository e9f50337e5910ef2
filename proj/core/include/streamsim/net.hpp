#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace streamsim {

/// Owning TCP socket (IPv4 loopback only).
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) noexcept : fd_(fd) {}
  ~Socket();

  Socket(Socket&& other) noexcept;
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  /// Connects to 127.0.0.1:port. Throws Error(io_error).
  static Socket connect_loopback(std::uint16_t port);

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void close() noexcept;
  /// Wakes up any thread blocked on this socket without releasing the fd.
  void shutdown() noexcept;
  void shutdown_write() noexcept;

  /// Writes every byte of every part (gathered). Throws Error(io_error).
  void write_all(std::initializer_list<std::span<const std::byte>> parts);
  /// Returns false on a clean EOF before the first byte. Throws on a short
  /// read or socket error.
  bool read_exact(std::span<std::byte> out);
  /// True if readable (or closed) within `timeout`.
  bool wait_readable(std::chrono::milliseconds timeout) const;

 private:
  int fd_ = -1;
};

class Listener {
 public:
  /// Binds 127.0.0.1:port (0 = ephemeral) and listens.
  static Listener bind_loopback(std::uint16_t port = 0);

  std::uint16_t port() const noexcept { return port_; }
  /// Returns an invalid socket once the listener has been shut down.
  Socket accept();
  /// Waits up to `timeout` for a pending connection.
  bool wait_pending(std::chrono::milliseconds timeout) const;
  void shutdown() noexcept;

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

/// Largest frame accepted from a peer.
inline constexpr std::uint32_t kMaxFrameBytes = 256u * 1024u * 1024u;

/// Length-prefixed frame: u32 big-endian length, then the payload. The
/// payload may be given in several parts that are sent back to back.
void write_frame(Socket& sock,
                 std::initializer_list<std::span<const std::byte>> parts);
/// Empty optional on clean EOF. Throws Error(protocol_error) on an oversized
/// frame.
std::optional<std::vector<std::byte>> read_frame(Socket& sock);

/// Big-endian field writer/reader for structured frame payloads.
class ByteWriter {
 public:
  void u8(std::uint8_t v);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void str(std::string_view s);  // u16 length + bytes
  void raw(std::span<const std::byte> bytes);

  const std::vector<std::byte>& bytes() const noexcept { return buf_; }
  std::vector<std::byte> take() noexcept { return std::move(buf_); }

 private:
  std::vector<std::byte> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> in) : in_(in) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  std::string str();
  std::span<const std::byte> rest() noexcept;
  std::size_t remaining() const noexcept { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

}  // namespace streamsim
