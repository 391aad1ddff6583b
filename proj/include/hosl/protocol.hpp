#ifndef HOSL_PROTOCOL_HPP
#define HOSL_PROTOCOL_HPP

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "hosl/linalg.hpp"

namespace hosl {

// Wire contract, bit-exact:
//
//   frame   := magic "HOSL" | version 0x01 | variant tag (1 byte)
//              | payload_len (u32 LE) | payload
//   tags    := 0 Forward, 1 LossReply, 2 Ack, 3 GradReply
//   Forward := phase (1 byte: 0 inference, 1 compute_grad)
//              | B u32 | rows u32 | cols u32 | activations f64 LE row-major
//              | label_rows u32 | label_cols u32 | labels f64 LE row-major
//   LossReply := one f64 LE
//   Ack       := empty
//   GradReply := rows u32 | cols u32 | f64 LE row-major
//                (the Forward tensor encoding, carrying dL/dh)

enum class Phase : std::uint8_t { kInference = 0, kComputeGrad = 1 };

struct ForwardMsg {
  Phase phase = Phase::kInference;
  Matrix activations;  // B x w
  Matrix labels;       // B x n_label

  bool operator==(const ForwardMsg&) const = default;
};

struct LossReplyMsg {
  double value = 0.0;
  bool operator==(const LossReplyMsg&) const = default;
};

struct AckMsg {
  bool operator==(const AckMsg&) const = default;
};

struct GradReplyMsg {
  Matrix activation_grad;  // same shape as the Forward activations
  bool operator==(const GradReplyMsg&) const = default;
};

using Message = std::variant<ForwardMsg, LossReplyMsg, AckMsg, GradReplyMsg>;

inline constexpr std::size_t kFrameHeaderBytes = 10;

std::uint8_t message_tag(const Message& m);

std::vector<std::uint8_t> encode(const Message& m);

// Inverse of encode over one complete frame. Bad magic/version/tag is a
// ProtocolError; any length inconsistency is a FramingError.
Message decode(std::span<const std::uint8_t> frame);

// Payload length declared by a header; throws FramingError if the prefix is
// too short or the magic/version is wrong (ProtocolError).
std::uint32_t parse_header(std::span<const std::uint8_t> header);

}  // namespace hosl

#endif  // HOSL_PROTOCOL_HPP
