#pragma once

#include "fedirr/framing.hpp"

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

namespace fedirr::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string to_string() const { return host + ":" + std::to_string(port); }
};

/// Parses "host:port". Throws Error(invalid_input).
Endpoint parse_endpoint(const std::string& text);

class TcpStream final : public ByteStream {
public:
  TcpStream() = default;
  explicit TcpStream(int fd) : fd_(fd) {}
  TcpStream(TcpStream&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  TcpStream& operator=(TcpStream&& other) noexcept;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;
  ~TcpStream() override;

  /// Throws Error(io_error) when the peer refuses or cannot be resolved.
  static TcpStream connect(const Endpoint& endpoint);

  std::size_t read_some(std::span<char> buf) override;
  void write_all(std::span<const char> data) override;

  /// Unblocks any reader on this socket; safe to call from another thread.
  void shutdown() noexcept;
  bool valid() const noexcept { return fd_ >= 0; }

private:
  int fd_ = -1;
};

class TcpListener {
public:
  /// Port 0 binds an ephemeral port. Throws Error(bind_error).
  explicit TcpListener(const Endpoint& endpoint);
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  ~TcpListener();

  std::uint16_t port() const noexcept { return port_; }

  /// Waits up to timeout for a connection.
  std::optional<TcpStream> accept(std::chrono::milliseconds timeout);
  void close() noexcept;

private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

} // namespace fedirr::net
