// SPDX-License-Identifier: Apache-2.0
#pragma once

// Portable single-file dataset container.
//
//   magic "CAMCDS01" | frame_count u32 | frame_length u32 | class_count u16
//   | class_count x (u16 byte length, UTF-8 name) | flags u16
//   | frame_count x (label_id u16, snr_db i16, 2L x f32 interleaved I,Q)
//   | CRC32 of all preceding bytes (u32)
//
// All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "camc/crc32.hpp"

namespace camc::datasetio {

inline constexpr char kMagic[8] = {'C', 'A', 'M', 'C', 'D', 'S', '0', '1'};
inline constexpr std::uint16_t kFlagNormalizedAp = 1u << 0;

enum class ErrorKind { Io, Format, Truncated, Corrupt, InvalidArgument };

class DatasetError : public std::runtime_error {
 public:
  DatasetError(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct DatasetHeader {
  std::uint32_t frame_count = 0;
  std::uint32_t frame_length = 0;
  std::vector<std::string> class_names;
  std::uint16_t flags = 0;

  std::size_t encoded_size() const;
  std::size_t record_size() const { return 4 + 8 * static_cast<std::size_t>(frame_length); }
  bool operator==(const DatasetHeader&) const = default;
};

struct FrameRecord {
  std::uint16_t label_id = 0;
  std::int16_t sensing_snr_db = 0;
  std::vector<float> iq;  // 2L values, I then Q per sample

  bool operator==(const FrameRecord&) const = default;
};

/// Streaming writer; the record count must match header.frame_count at finish().
class DatasetWriter {
 public:
  DatasetWriter(const std::filesystem::path& path, DatasetHeader header);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void append(const FrameRecord& r);
  void finish();

 private:
  void put(std::span<const std::uint8_t> bytes);

  std::filesystem::path path_;
  DatasetHeader header_;
  std::ofstream out_;
  Crc32 crc_;
  std::uint32_t written_ = 0;
  bool finished_ = false;
};

void write_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                   std::span<const FrameRecord> frames);

/// Streaming reader. Frames are decoded one at a time; the CRC is checked once
/// the last record has been consumed.
class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& path);

  const DatasetHeader& header() const { return header_; }
  /// Next record, or nullopt after the final record and a verified CRC.
  std::optional<FrameRecord> next();
  std::uint32_t frames_read() const { return read_; }
  /// Records that fit in the unread part of the file, at most the declared count.
  std::uint32_t frames_available() const;

 private:
  void read_exact(std::uint8_t* dst, std::size_t n, const char* what);

  std::filesystem::path path_;
  std::ifstream in_;
  DatasetHeader header_;
  Crc32 crc_;
  std::uint32_t read_ = 0;
  std::uint64_t remaining_ = 0;  // unread bytes in the file
  bool done_ = false;
};

struct Dataset {
  DatasetHeader header;
  std::vector<FrameRecord> frames;
};

Dataset read_dataset(const std::filesystem::path& path);

struct DatasetStats {
  std::uint32_t frame_count = 0;
  std::uint32_t frame_length = 0;
  std::vector<std::string> class_names;
  std::vector<std::uint32_t> per_class;                // indexed by label id
  std::map<int, std::uint32_t> per_snr;                // snr dB -> count
  std::map<std::pair<int, int>, std::uint32_t> cells;  // (label, snr) -> count
  double power_mean = 0.0;
  double power_variance = 0.0;
};

DatasetStats dataset_stats(const std::filesystem::path& path);

}  // namespace camc::datasetio
