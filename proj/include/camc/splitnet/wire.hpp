// SPDX-License-Identifier: Apache-2.0
#pragma once

// Framed device/server protocol. Every frame is
//
//   "CAMC" | version u8 (=1) | type u8 | payload_len u32 | payload | crc32 u32
//
// with the CRC taken over header and payload. Little-endian throughout.
//
//   HELLO      N u16 | M u16 | model_hash u32
//   EMBEDDING  seq u32 | n u16 | n x f32
//   RESULT     seq u32 | argmax u16 | M x f32
//   ERROR      code u16 | UTF-8 reason (rest of payload)

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace camc::splitnet {

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kHeaderSize = 10;
inline constexpr std::size_t kTrailerSize = 4;
inline constexpr std::size_t kMaxPayload = 1u << 20;

enum class MsgType : std::uint8_t { Hello = 1, Embedding = 2, Result = 3, Error = 4 };

enum class ErrorCode : std::uint16_t {
  Malformed = 1,
  Protocol = 2,
  Handshake = 3,
  Dimension = 4,
  Internal = 5,
};

struct Hello {
  std::uint16_t n = 0;
  std::uint16_t m = 0;
  std::uint32_t model_hash = 0;
  bool operator==(const Hello&) const = default;
};

struct EmbeddingMsg {
  std::uint32_t seq = 0;
  std::vector<float> values;
  bool operator==(const EmbeddingMsg&) const = default;
};

struct ResultMsg {
  std::uint32_t seq = 0;
  std::uint16_t argmax = 0;
  std::vector<float> probs;
  bool operator==(const ResultMsg&) const = default;
};

struct ErrorMsg {
  ErrorCode code = ErrorCode::Internal;
  std::string reason;
  bool operator==(const ErrorMsg&) const = default;
};

using Message = std::variant<Hello, EmbeddingMsg, ResultMsg, ErrorMsg>;

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// CRC mismatch.
class CorruptionError : public WireError {
 public:
  using WireError::WireError;
};
/// Bad magic or version, unknown type, oversized or ill-formed payload.
class ProtocolError : public WireError {
 public:
  using WireError::WireError;
};
/// Fewer bytes than the frame declares.
class TruncationError : public WireError {
 public:
  using WireError::WireError;
};

MsgType type_of(const Message& m);
std::string to_string(MsgType t);

std::vector<std::uint8_t> encode_frame(const Message& m);

/// Decodes exactly one frame occupying all of `bytes`.
Message decode_frame(std::span<const std::uint8_t> bytes);

/// Validates a frame header and returns the full frame size.
std::size_t frame_size(std::span<const std::uint8_t> header);

}  // namespace camc::splitnet
