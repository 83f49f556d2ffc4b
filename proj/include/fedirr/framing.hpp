#pragma once

#include "fedirr/protocol.hpp"

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace fedirr::net {

/// Blocking byte stream. One logical task owns a stream at a time.
class ByteStream {
public:
  virtual ~ByteStream() = default;

  /// Reads at least one byte, blocking as needed. Returns 0 at end of stream.
  virtual std::size_t read_some(std::span<char> buf) = 0;
  virtual void write_all(std::span<const char> data) = 0;
};

inline constexpr std::uint32_t kMaxFrameBytes = 1u << 20;

/// 4-byte big-endian length prefix followed by the payload.
void frame_write(ByteStream& stream, std::string_view payload);

/// Throws Error(clean_close) on end of stream at a frame boundary,
/// Error(connection_closed) mid-frame and Error(frame_too_large) before
/// touching the body of an oversized frame.
std::string frame_read(ByteStream& stream);

void send_message(ByteStream& stream, const proto::Message& msg);
proto::Message recv_message(ByteStream& stream);

/// In-process duplex pipe; each end reads what the other writes.
class MemoryPipeEnd final : public ByteStream {
public:
  std::size_t read_some(std::span<char> buf) override;
  void write_all(std::span<const char> data) override;

  /// Signals end of stream to the peer.
  void close();
  ~MemoryPipeEnd() override;

  struct Channel {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<char> bytes;
    bool closed = false;
  };

  MemoryPipeEnd(std::shared_ptr<Channel> in, std::shared_ptr<Channel> out)
      : in_(std::move(in)), out_(std::move(out)) {}

private:
  std::shared_ptr<Channel> in_;
  std::shared_ptr<Channel> out_;
};

std::pair<std::unique_ptr<MemoryPipeEnd>, std::unique_ptr<MemoryPipeEnd>> make_memory_pipe();

} // namespace fedirr::net
