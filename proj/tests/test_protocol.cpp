#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "hosl/protocol.hpp"
#include "hosl/prng.hpp"

using namespace hosl;

namespace {

Matrix random_matrix(PrngStream& s, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = s.next_normal();
  return m;
}

Message random_message(PrngStream& s) {
  switch (s.next_u64() % 4) {
    case 0: {
      const std::size_t b = 1 + s.next_u64() % 64;
      const std::size_t w = 1 + s.next_u64() % 128;
      const std::size_t ly = 1 + s.next_u64() % 8;
      const Phase phase =
          s.next_u64() % 2 ? Phase::kComputeGrad : Phase::kInference;
      return ForwardMsg{phase, random_matrix(s, b, w), random_matrix(s, b, ly)};
    }
    case 1:
      return LossReplyMsg{s.next_normal()};
    case 2:
      return AckMsg{};
    default: {
      const std::size_t b = 1 + s.next_u64() % 64;
      const std::size_t w = 1 + s.next_u64() % 128;
      return GradReplyMsg{random_matrix(s, b, w)};
    }
  }
}

}  // namespace

TEST_CASE("fixed frame layouts") {
  const auto ack = encode(AckMsg{});
  REQUIRE(ack.size() == 10);
  CHECK(ack[0] == 'H');
  CHECK(ack[1] == 'O');
  CHECK(ack[2] == 'S');
  CHECK(ack[3] == 'L');
  CHECK(ack[4] == 0x01);
  CHECK(ack[5] == 0x02);
  CHECK(ack[6] == 0x00);
  CHECK(ack[7] == 0x00);
  CHECK(ack[8] == 0x00);
  CHECK(ack[9] == 0x00);

  const auto loss = encode(LossReplyMsg{0.0});
  REQUIRE(loss.size() == 18);
  for (std::size_t i = 10; i < 18; ++i) CHECK(loss[i] == 0x00);

  // B=2, h 2x3, y 2x1: payload 1+4+4+4+48+4+4+16 = 85 bytes.
  ForwardMsg fwd;
  fwd.phase = Phase::kInference;
  fwd.activations = Matrix(2, 3, {1, 2, 3, 4, 5, 6});
  fwd.labels = Matrix(2, 1, {7, 8});
  const auto bytes = encode(fwd);
  CHECK(bytes.size() == 10 + 85);
  CHECK(bytes[5] == 0x00);                         // Forward tag
  CHECK(get_u32_le(bytes.data() + 6) == 85);       // payload_len
  CHECK(bytes[10] == 0x00);                        // inference phase
  CHECK(get_u32_le(bytes.data() + 11) == 2);       // B
  CHECK(get_u32_le(bytes.data() + 15) == 2);       // rows
  CHECK(get_u32_le(bytes.data() + 19) == 3);       // cols
  CHECK(get_f64_le(bytes.data() + 23) == 1.0);     // first activation
}

TEST_CASE("decode is the inverse of encode on random messages") {
  PrngStream s(404);
  for (int i = 0; i < 500; ++i) {
    const Message m = random_message(s);
    const Message back = decode(encode(m));
    CHECK(m == back);
  }
}

TEST_CASE("bad magic, version, and tag are protocol errors") {
  auto frame = encode(AckMsg{});
  frame[0] = 'X';
  CHECK_THROWS_AS(decode(frame), ProtocolError);
  frame = encode(AckMsg{});
  frame[4] = 0x02;
  CHECK_THROWS_AS(decode(frame), ProtocolError);
  frame = encode(AckMsg{});
  frame[5] = 0x07;
  CHECK_THROWS_AS(decode(frame), ProtocolError);
}

TEST_CASE("length inconsistencies are framing errors") {
  auto frame = encode(LossReplyMsg{1.5});
  // Declare 100 payload bytes but provide 8.
  frame[6] = 100;
  CHECK_THROWS_AS(decode(frame), FramingError);
  // Truncated frame.
  auto fwd = encode(ForwardMsg{Phase::kInference, Matrix(1, 2, {1, 2}),
                               Matrix(1, 1, {3})});
  fwd.resize(fwd.size() - 4);
  CHECK_THROWS_AS(decode(fwd), FramingError);
  // Trailing garbage.
  auto ack = encode(AckMsg{});
  ack.push_back(0x00);
  CHECK_THROWS_AS(decode(ack), FramingError);
  // Header too short.
  std::vector<std::uint8_t> tiny{'H', 'O', 'S', 'L'};
  CHECK_THROWS_AS(decode(tiny), FramingError);
  // Tensor dims overflowing the payload.
  auto grad = encode(GradReplyMsg{Matrix(1, 1, {1.0})});
  grad[10] = 0xFF;  // rows = huge
  grad[11] = 0xFF;
  CHECK_THROWS_AS(decode(grad), FramingError);
}

TEST_CASE("non-finite payloads are rejected at encode time") {
  ForwardMsg fwd;
  fwd.activations = Matrix(1, 1, {std::numeric_limits<double>::infinity()});
  fwd.labels = Matrix(1, 1, {0.0});
  CHECK_THROWS_AS(encode(fwd), NumericError);
  CHECK_THROWS_AS(encode(LossReplyMsg{std::nan("")}), NumericError);
}

TEST_CASE("mismatched batch rows are rejected") {
  ForwardMsg fwd;
  fwd.activations = Matrix(2, 1, {1, 2});
  fwd.labels = Matrix(3, 1, {1, 2, 3});
  CHECK_THROWS_AS(encode(fwd), ShapeError);
}
