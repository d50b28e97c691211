// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace camc {

/// Incremental CRC-32 (IEEE 802.3 polynomial, as used by zlib/PNG).
class Crc32 {
 public:
  void update(std::span<const std::uint8_t> bytes);
  std::uint32_t value() const { return crc_; }

 private:
  std::uint32_t crc_ = 0;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace camc
