#include "fedirr/framing.hpp"

#include "fedirr/error.hpp"

#include <algorithm>
#include <array>

namespace fedirr::net {

namespace {

// Fills buf completely. Returns the number of bytes read before end of stream.
std::size_t read_full(ByteStream& stream, std::span<char> buf) {
  std::size_t got = 0;
  while (got < buf.size()) {
    const std::size_t n = stream.read_some(buf.subspan(got));
    if (n == 0) break;
    got += n;
  }
  return got;
}

} // namespace

void frame_write(ByteStream& stream, std::string_view payload) {
  if (payload.size() > kMaxFrameBytes) {
    throw Error(Errc::frame_too_large,
                "payload of " + std::to_string(payload.size()) + " bytes exceeds frame cap");
  }
  const auto len = static_cast<std::uint32_t>(payload.size());
  std::string frame;
  frame.reserve(4 + payload.size());
  frame.push_back(static_cast<char>((len >> 24) & 0xff));
  frame.push_back(static_cast<char>((len >> 16) & 0xff));
  frame.push_back(static_cast<char>((len >> 8) & 0xff));
  frame.push_back(static_cast<char>(len & 0xff));
  frame.append(payload);
  stream.write_all(frame);
}

std::string frame_read(ByteStream& stream) {
  std::array<char, 4> header{};
  const std::size_t got = read_full(stream, header);
  if (got == 0) throw Error(Errc::clean_close, "stream closed at frame boundary");
  if (got < header.size()) throw Error(Errc::connection_closed, "stream closed inside frame header");

  std::uint32_t len = 0;
  for (char c : header) len = (len << 8) | static_cast<unsigned char>(c);
  if (len > kMaxFrameBytes) {
    throw Error(Errc::frame_too_large,
                "declared frame length " + std::to_string(len) + " exceeds cap");
  }
  std::string payload(len, '\0');
  if (read_full(stream, payload) < len) {
    throw Error(Errc::connection_closed, "stream closed inside frame body");
  }
  return payload;
}

void send_message(ByteStream& stream, const proto::Message& msg) {
  frame_write(stream, proto::encode(msg));
}

proto::Message recv_message(ByteStream& stream) { return proto::decode(frame_read(stream)); }

std::size_t MemoryPipeEnd::read_some(std::span<char> buf) {
  if (buf.empty()) return 0;
  std::unique_lock lock(in_->mu);
  in_->cv.wait(lock, [&] { return !in_->bytes.empty() || in_->closed; });
  const std::size_t n = std::min(buf.size(), in_->bytes.size());
  std::copy_n(in_->bytes.begin(), n, buf.begin());
  in_->bytes.erase(in_->bytes.begin(), in_->bytes.begin() + static_cast<std::ptrdiff_t>(n));
  return n;
}

void MemoryPipeEnd::write_all(std::span<const char> data) {
  {
    std::lock_guard lock(out_->mu);
    if (out_->closed) throw Error(Errc::io_error, "write to closed pipe");
    out_->bytes.insert(out_->bytes.end(), data.begin(), data.end());
  }
  out_->cv.notify_all();
}

void MemoryPipeEnd::close() {
  {
    std::lock_guard lock(out_->mu);
    out_->closed = true;
  }
  out_->cv.notify_all();
}

MemoryPipeEnd::~MemoryPipeEnd() { close(); }

std::pair<std::unique_ptr<MemoryPipeEnd>, std::unique_ptr<MemoryPipeEnd>> make_memory_pipe() {
  auto a_to_b = std::make_shared<MemoryPipeEnd::Channel>();
  auto b_to_a = std::make_shared<MemoryPipeEnd::Channel>();
  return {std::make_unique<MemoryPipeEnd>(b_to_a, a_to_b),
          std::make_unique<MemoryPipeEnd>(a_to_b, b_to_a)};
}

} // namespace fedirr::net
