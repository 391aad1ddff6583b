#include "hosl/protocol.hpp"

#include <cmath>
#include <cstring>
#include <string>

namespace hosl {

namespace {

constexpr std::uint8_t kMagic[4] = {'H', 'O', 'S', 'L'};
constexpr std::uint8_t kVersion = 1;

void put_matrix(std::vector<std::uint8_t>& out, const Matrix& m) {
  put_u32_le(out, static_cast<std::uint32_t>(m.rows));
  put_u32_le(out, static_cast<std::uint32_t>(m.cols));
  for (double v : m.data) put_f64_le(out, v);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> buf) : buf_(buf) {}

  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = get_u32_le(buf_.data() + pos_);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    const double v = get_f64_le(buf_.data() + pos_);
    pos_ += 8;
    return v;
  }
  Matrix matrix() {
    const std::uint32_t rows = u32();
    const std::uint32_t cols = u32();
    const std::uint64_t n =
        static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols);
    if (n * 8 > remaining()) throw FramingError("tensor larger than payload");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = f64();
    return m;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  void expect_done() const {
    if (pos_ != buf_.size()) throw FramingError("trailing payload bytes");
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw FramingError("truncated payload");
  }
  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint8_t message_tag(const Message& m) {
  return static_cast<std::uint8_t>(m.index());
}

std::vector<std::uint8_t> encode(const Message& m) {
  std::vector<std::uint8_t> payload;
  if (const auto* fwd = std::get_if<ForwardMsg>(&m)) {
    if (!all_finite(fwd->activations)) {
      throw NumericError("encode: non-finite activation values");
    }
    if (!all_finite(fwd->labels)) {
      throw NumericError("encode: non-finite label values");
    }
    if (fwd->activations.rows != fwd->labels.rows) {
      throw ShapeError("encode: activation/label row counts differ");
    }
    payload.push_back(static_cast<std::uint8_t>(fwd->phase));
    put_u32_le(payload, static_cast<std::uint32_t>(fwd->activations.rows));
    put_matrix(payload, fwd->activations);
    put_matrix(payload, fwd->labels);
  } else if (const auto* loss = std::get_if<LossReplyMsg>(&m)) {
    if (!std::isfinite(loss->value)) {
      throw NumericError("encode: non-finite loss");
    }
    put_f64_le(payload, loss->value);
  } else if (std::holds_alternative<AckMsg>(m)) {
    // empty payload
  } else {
    const auto& grad = std::get<GradReplyMsg>(m);
    if (!all_finite(grad.activation_grad)) {
      throw NumericError("encode: non-finite gradient values");
    }
    put_matrix(payload, grad.activation_grad);
  }

  std::vector<std::uint8_t> frame;
  frame.reserve(kFrameHeaderBytes + payload.size());
  frame.insert(frame.end(), kMagic, kMagic + 4);
  frame.push_back(kVersion);
  frame.push_back(message_tag(m));
  put_u32_le(frame, static_cast<std::uint32_t>(payload.size()));
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

std::uint32_t parse_header(std::span<const std::uint8_t> header) {
  if (header.size() < kFrameHeaderBytes) throw FramingError("short header");
  if (std::memcmp(header.data(), kMagic, 4) != 0) {
    throw ProtocolError("bad magic");
  }
  if (header[4] != kVersion) {
    throw ProtocolError("unsupported version " + std::to_string(header[4]));
  }
  if (header[5] > 3) {
    throw ProtocolError("unknown message tag " + std::to_string(header[5]));
  }
  return get_u32_le(header.data() + 6);
}

Message decode(std::span<const std::uint8_t> frame) {
  const std::uint32_t payload_len = parse_header(frame);
  if (frame.size() != kFrameHeaderBytes + payload_len) {
    throw FramingError("declared payload length " +
                       std::to_string(payload_len) + ", got " +
                       std::to_string(frame.size() - kFrameHeaderBytes));
  }
  const std::uint8_t tag = frame[5];
  Reader r(frame.subspan(kFrameHeaderBytes));
  switch (tag) {
    case 0: {
      ForwardMsg fwd;
      const std::uint8_t phase = r.u8();
      if (phase > 1) throw ProtocolError("unknown phase byte");
      fwd.phase = static_cast<Phase>(phase);
      const std::uint32_t batch = r.u32();
      fwd.activations = r.matrix();
      fwd.labels = r.matrix();
      if (fwd.activations.rows != batch || fwd.labels.rows != batch) {
        throw FramingError("batch size does not match tensor rows");
      }
      r.expect_done();
      return fwd;
    }
    case 1: {
      LossReplyMsg loss{r.f64()};
      r.expect_done();
      if (!std::isfinite(loss.value)) {
        throw ProtocolError("non-finite loss value");
      }
      return loss;
    }
    case 2: {
      r.expect_done();
      return AckMsg{};
    }
    default: {
      GradReplyMsg grad{r.matrix()};
      r.expect_done();
      return grad;
    }
  }
}

}  // namespace hosl
