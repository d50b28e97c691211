// SPDX-License-Identifier: Apache-2.0
#include "camc/splitnet/wire.hpp"

#include <limits>

#include "camc/bytes.hpp"
#include "camc/crc32.hpp"

namespace camc::splitnet {

namespace {

constexpr char kMagic[4] = {'C', 'A', 'M', 'C'};

std::uint16_t checked_u16(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint16_t>::max()) throw ProtocolError(std::string(what) + " exceeds 65535");
  return static_cast<std::uint16_t>(v);
}

void encode_payload(ByteWriter& w, const Message& m) {
  std::visit(
      [&w](const auto& msg) {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, Hello>) {
          w.u16(msg.n);
          w.u16(msg.m);
          w.u32(msg.model_hash);
        } else if constexpr (std::is_same_v<T, EmbeddingMsg>) {
          w.u32(msg.seq);
          w.u16(checked_u16(msg.values.size(), "embedding length"));
          for (float v : msg.values) w.f32(v);
        } else if constexpr (std::is_same_v<T, ResultMsg>) {
          w.u32(msg.seq);
          w.u16(msg.argmax);
          for (float v : msg.probs) w.f32(v);
        } else {
          w.u16(static_cast<std::uint16_t>(msg.code));
          w.text(msg.reason);
        }
      },
      m);
}

Message decode_payload(MsgType type, std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  auto done = [&r](const char* what) {
    if (r.remaining() != 0) throw ProtocolError(std::string(what) + ": " + std::to_string(r.remaining()) +
                                                " trailing payload bytes");
  };
  try {
    switch (type) {
      case MsgType::Hello: {
        Hello h;
        h.n = r.u16();
        h.m = r.u16();
        h.model_hash = r.u32();
        done("HELLO");
        return h;
      }
      case MsgType::Embedding: {
        EmbeddingMsg e;
        e.seq = r.u32();
        const std::size_t n = r.u16();
        if (r.remaining() != 4 * n)
          throw ProtocolError("EMBEDDING: n=" + std::to_string(n) + " but " + std::to_string(r.remaining()) +
                              " value bytes");
        e.values.resize(n);
        for (auto& v : e.values) v = r.f32();
        return e;
      }
      case MsgType::Result: {
        ResultMsg res;
        res.seq = r.u32();
        res.argmax = r.u16();
        if (r.remaining() % 4 != 0) throw ProtocolError("RESULT: probability bytes not a multiple of 4");
        res.probs.resize(r.remaining() / 4);
        for (auto& v : res.probs) v = r.f32();
        return res;
      }
      case MsgType::Error: {
        ErrorMsg e;
        e.code = static_cast<ErrorCode>(r.u16());
        e.reason = r.text(r.remaining());
        return e;
      }
    }
  } catch (const ShortRead&) {
    throw ProtocolError(to_string(type) + ": payload too short");
  }
  throw ProtocolError("unknown message type " + std::to_string(static_cast<int>(type)));
}

}  // namespace

MsgType type_of(const Message& m) { return static_cast<MsgType>(m.index() + 1); }

std::string to_string(MsgType t) {
  switch (t) {
    case MsgType::Hello: return "HELLO";
    case MsgType::Embedding: return "EMBEDDING";
    case MsgType::Result: return "RESULT";
    case MsgType::Error: return "ERROR";
  }
  return "type " + std::to_string(static_cast<int>(t));
}

std::vector<std::uint8_t> encode_frame(const Message& m) {
  ByteWriter payload;
  encode_payload(payload, m);
  if (payload.size() > kMaxPayload) throw ProtocolError("payload of " + std::to_string(payload.size()) + " bytes exceeds 1 MiB");
  ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u8(kWireVersion);
  w.u8(static_cast<std::uint8_t>(type_of(m)));
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.bytes(payload.data());
  w.u32(crc32(w.data()));
  return w.take();
}

std::size_t frame_size(std::span<const std::uint8_t> header) {
  if (header.size() < kHeaderSize) throw TruncationError("frame header needs 10 bytes, got " + std::to_string(header.size()));
  for (int i = 0; i < 4; ++i)
    if (header[i] != static_cast<std::uint8_t>(kMagic[i])) throw ProtocolError("bad magic");
  if (header[4] != kWireVersion) throw ProtocolError("unsupported version " + std::to_string(header[4]));
  const std::uint8_t type = header[5];
  if (type < 1 || type > 4) throw ProtocolError("unknown message type " + std::to_string(type));
  ByteReader r(header.subspan(6, 4));
  const std::size_t len = r.u32();
  if (len > kMaxPayload) throw ProtocolError("payload_len " + std::to_string(len) + " exceeds 1 MiB");
  return kHeaderSize + len + kTrailerSize;
}

Message decode_frame(std::span<const std::uint8_t> bytes) {
  const std::size_t total = frame_size(bytes);
  if (bytes.size() < total)
    throw TruncationError("frame declares " + std::to_string(total) + " bytes, got " + std::to_string(bytes.size()));
  if (bytes.size() > total) throw ProtocolError(std::to_string(bytes.size() - total) + " bytes after frame end");
  const auto body = bytes.first(total - kTrailerSize);
  ByteReader tail(bytes.subspan(total - kTrailerSize));
  if (tail.u32() != crc32(body)) throw CorruptionError("frame CRC mismatch");
  return decode_payload(static_cast<MsgType>(bytes[5]), body.subspan(kHeaderSize));
}

}  // namespace camc::splitnet
