// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "camc/channel.hpp"
#include "camc/models.hpp"
#include "camc/splitnet/socket.hpp"

namespace camc::splitnet {

struct DeviceConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  /// Device-side channel noise added before sending; +inf sends clean embeddings.
  double transmission_snr_db = channel::kInfiniteSnr;
  std::uint64_t seed = 1;
  std::size_t window = 32;
  Millis timeout{5000};
};

class HandshakeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Server replied with an ERROR frame.
class RemoteError : public std::runtime_error {
 public:
  RemoteError(ErrorCode code, const std::string& reason)
      : std::runtime_error("server error " + std::to_string(static_cast<int>(code)) + ": " + reason), code(code) {}
  ErrorCode code;
};

struct DeviceResult {
  std::uint32_t seq = 0;
  bool ok = false;
  std::uint16_t argmax = 0;
  std::vector<float> probs;
};

struct DeviceReport {
  std::vector<DeviceResult> results;  // indexed by seq
  std::size_t failed = 0;
  std::size_t retransmits = 0;
  std::uint64_t bytes_sent = 0;      // EMBEDDING frames only
  std::uint64_t bytes_received = 0;  // RESULT frames only
  std::size_t embedding_frame_bytes = 0;
};

/// Client half of the split. Connects and performs the HELLO handshake on
/// construction.
class Device {
 public:
  Device(std::size_t n, std::size_t m, std::uint32_t model_hash, DeviceConfig cfg);

  /// Sends each embedding row as one EMBEDDING (seq = row index) with up to
  /// `window` outstanding, retransmitting a timed-out seq once.
  DeviceReport run_embeddings(const models::Tensor& z);

  /// Encodes each frame of `ap` [frames, L, 2] with the encoder, then streams.
  DeviceReport run(models::Model& sscnet, const models::Tensor& ap);

 private:
  std::size_t n_, m_;
  DeviceConfig cfg_;
  Socket sock_;
};

/// Encoder output for every frame, one forward pass per frame.
models::Tensor encode_frames(models::Model& sscnet, const models::Tensor& ap);

/// Raw complex I/Q bytes per frame divided by EMBEDDING frame bytes.
double transmission_ratio(std::size_t frame_length, std::size_t embedding_frame_bytes);

}  // namespace camc::splitnet
