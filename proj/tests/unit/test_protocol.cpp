#include "fedirr/error.hpp"
#include "fedirr/framing.hpp"
#include "fedirr/protocol.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <thread>

using namespace fedirr;
using namespace fedirr::proto;

namespace {

Errc decode_error(std::string_view payload) {
  try {
    decode(payload);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("decode accepted " << payload);
  return Errc::invalid_input;
}

Errc read_error(net::ByteStream& s) {
  try {
    net::frame_read(s);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("frame_read succeeded");
  return Errc::invalid_input;
}

} // namespace

TEST_CASE("smallest message encodes exactly") {
  CHECK(encode(Heartbeat{"n1"}) == R"({"type":"heartbeat","client_id":"n1"})");
}

TEST_CASE("every variant has its tag first and documented key order") {
  CHECK(encode(Register{"n1", 4}) == R"({"type":"register","client_id":"n1","feature_dim":4})");
  CHECK(encode(RegisterAck{true, 3}) == R"({"type":"register_ack","accepted":true,"round":3})");
  CHECK(encode(RoundStart{2, {0.5, -1.0}, {5, 0.1}}) ==
        R"({"type":"round_start","round":2,"global_weights":[0.5,-1.0],"cfg_echo":{"local_epochs":5,"learning_rate":0.1}})");
  CHECK(encode(ClientUpdateMsg{"n2", 2, {0.1}, 64, 0.25}) ==
        R"({"type":"client_update","client_id":"n2","round":2,"weights":[0.1],"sample_count":64,"local_loss":0.25})");
  CHECK(encode(GlobalModelMsg{3, {1.5}, false}) ==
        R"({"type":"global_model","round":3,"weights":[1.5],"converged":false})");
  CHECK(encode(ErrorMsg{"SchemaViolation", "x"}) == R"({"type":"error","code":"SchemaViolation","detail":"x"})");
}

TEST_CASE("0.1 survives the round trip bit-exactly") {
  const Message m = ClientUpdateMsg{"n1", 0, {0.1, 1.0 / 3.0, 1e-300, -2.5e300}, 1, 0.1};
  const auto back = std::get<ClientUpdateMsg>(decode(encode(m)));
  CHECK(back.weights[0] == 0.1);
  CHECK(Message(back) == m);
}

TEST_CASE("random messages round trip") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 1000; ++i) {
    const auto m = oracle::random_message(rng);
    REQUIRE(decode(encode(m)) == m);
  }
}

TEST_CASE("encode rejects non-finite numbers") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(encode(GlobalModelMsg{0, {nan}, false}), Error);
  CHECK_THROWS_AS(encode(ClientUpdateMsg{"a", 0, {std::numeric_limits<double>::infinity()}, 1, 0}),
                  Error);
}

TEST_CASE("decode errors") {
  CHECK(decode_error(R"({"type":"bogus"})") == Errc::unknown_type);
  CHECK(decode_error(R"({"type":"heartbeat","client_id":)") == Errc::malformed_payload);
  CHECK(decode_error("[1,2]") == Errc::schema_violation);
  CHECK(decode_error(R"({"client_id":"n1"})") == Errc::schema_violation);
  CHECK(decode_error(R"({"type":"heartbeat"})") == Errc::schema_violation);
  CHECK(decode_error(R"({"type":"register","client_id":"a","feature_dim":-1})") ==
        Errc::schema_violation);
  CHECK(decode_error(R"({"type":"global_model","round":1,"weights":"x","converged":true})") ==
        Errc::schema_violation);
  CHECK(decode_error("\xff\xfe") == Errc::malformed_payload);
}

TEST_CASE("decode ignores unknown fields") {
  CHECK(decode(R"({"type":"heartbeat","client_id":"n1","extra":[1,2,{"a":null}]})") ==
        Message(Heartbeat{"n1"}));
}

TEST_CASE("frames over an in-memory pipe") {
  auto [a, b] = net::make_memory_pipe();
  net::frame_write(*a, "hello");
  net::frame_write(*a, "");
  net::frame_write(*a, "world");
  CHECK(net::frame_read(*b) == "hello");
  CHECK(net::frame_read(*b) == "");
  CHECK(net::frame_read(*b) == "world");
  a->close();
  CHECK(read_error(*b) == Errc::clean_close);
}

TEST_CASE("messages over a pipe across threads") {
  auto [a, b] = net::make_memory_pipe();
  std::thread writer([&, &a = a] {
    for (int i = 0; i < 100; ++i) net::send_message(*a, Heartbeat{"n" + std::to_string(i)});
    a->close();
  });
  for (int i = 0; i < 100; ++i)
    REQUIRE(net::recv_message(*b) == Message(Heartbeat{"n" + std::to_string(i)}));
  writer.join();
}

TEST_CASE("frame header is big-endian") {
  const auto bytes = oracle::frames_of({"abc"});
  CHECK(bytes == std::string("\x00\x00\x00\x03" "abc", 7));
}

TEST_CASE("oversized frames are rejected before the body") {
  // Only the header is available: reading a body would hit end of stream.
  oracle::ChunkedStream s(std::string("\x00\x20\x00\x00", 4), {});
  CHECK(read_error(s) == Errc::frame_too_large);
  oracle::ChunkedStream w("", {});
  CHECK_THROWS_AS(net::frame_write(w, std::string(net::kMaxFrameBytes + 1, 'x')), Error);
  const auto at_cap = oracle::frames_of({std::string(net::kMaxFrameBytes, 'y')});
  oracle::ChunkedStream r(at_cap, {});
  CHECK(net::frame_read(r).size() == net::kMaxFrameBytes);
}

TEST_CASE("close in the middle of a frame") {
  const auto bytes = oracle::frames_of({"payload"});
  for (std::size_t cut = 1; cut < bytes.size(); ++cut) {
    oracle::ChunkedStream s(bytes.substr(0, cut), {});
    REQUIRE(read_error(s) == Errc::connection_closed);
  }
}

TEST_CASE("framing is segmentation invariant") {
  const std::vector<std::string> payloads{encode(Heartbeat{"n1"}), "",
                                          encode(RoundStart{7, {0.1, 0.2, 0.3}, {5, 0.1}})};
  const auto bytes = oracle::frames_of(payloads);
  for (std::size_t cut = 0; cut <= bytes.size(); ++cut) {
    for (std::size_t cut2 : {cut, cut + 1, cut + 5}) {
      oracle::ChunkedStream s(bytes, {cut, cut2});
      for (const auto& p : payloads) REQUIRE(net::frame_read(s) == p);
      REQUIRE(read_error(s) == Errc::clean_close);
    }
  }
  std::vector<std::size_t> every;
  for (std::size_t i = 1; i < bytes.size(); ++i) every.push_back(i);
  oracle::ChunkedStream bytewise(bytes, every);
  for (const auto& p : payloads) CHECK(net::frame_read(bytewise) == p);
}
