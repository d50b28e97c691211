// SPDX-License-Identifier: Apache-2.0
#include "camc/crc32.hpp"

#include <zlib.h>

#include <algorithm>
#include <limits>

namespace camc {

void Crc32::update(std::span<const std::uint8_t> bytes) {
  const std::uint8_t* p = bytes.data();
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(
        std::min<std::size_t>(left, std::numeric_limits<uInt>::max()));
    crc_ = static_cast<std::uint32_t>(::crc32(crc_, p, chunk));
    p += chunk;
    left -= chunk;
  }
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  Crc32 c;
  c.update(bytes);
  return c.value();
}

}  // namespace camc
