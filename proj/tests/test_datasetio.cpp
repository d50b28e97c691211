// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "camc/datasetio.hpp"
#include "camc/numcore/checkpoint.hpp"

using namespace camc;
using namespace camc::datasetio;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "camc_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

DatasetHeader header(std::uint32_t frames, std::uint32_t len = 4) {
  DatasetHeader h;
  h.frame_count = frames;
  h.frame_length = len;
  h.class_names = {"BPSK", "QPSK", "GFSK"};
  h.flags = kFlagNormalizedAp;
  return h;
}

std::vector<FrameRecord> frames(std::size_t n, std::uint32_t len = 4) {
  std::vector<FrameRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].label_id = static_cast<std::uint16_t>(i % 3);
    out[i].sensing_snr_db = static_cast<std::int16_t>(static_cast<int>(i % 2) * 20 - 10);
    out[i].iq.resize(2 * len);
    for (std::size_t j = 0; j < out[i].iq.size(); ++j) out[i].iq[j] = static_cast<float>(i) + 0.25f * static_cast<float>(j);
  }
  return out;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

ErrorKind read_error(const std::filesystem::path& p) {
  try {
    read_dataset(p);
  } catch (const DatasetError& e) {
    return e.kind();
  }
  FAIL("expected a DatasetError");
  return ErrorKind::Io;
}

}  // namespace

TEST_SUITE("datasetio") {
  TEST_CASE("round trip") {
    const auto p = scratch("rt.camcds");
    const auto f = frames(12);
    write_dataset(p, header(12), f);
    const auto ds = read_dataset(p);
    CHECK(ds.header == header(12));
    CHECK(ds.frames == f);
    CHECK(header(12).record_size() == 4 + 8 * 4);
    CHECK(std::filesystem::file_size(p) == header(12).encoded_size() + 12 * header(12).record_size() + 4);
  }

  TEST_CASE("empty dataset") {
    const auto p = scratch("empty.camcds");
    write_dataset(p, header(0), {});
    CHECK(std::filesystem::file_size(p) == header(0).encoded_size() + 4);
    CHECK(read_dataset(p).frames.empty());
    const auto st = dataset_stats(p);
    CHECK(st.frame_count == 0);
    CHECK(st.per_snr.empty());
    CHECK(st.cells.empty());
    for (auto c : st.per_class) CHECK(c == 0);
    CHECK(st.power_mean == 0.0);
  }

  TEST_CASE("every flipped byte is detected") {
    const auto p = scratch("flip.camcds"), q = scratch("flip_bad.camcds");
    write_dataset(p, header(3), frames(3));
    const auto good = nc::read_file(p);
    for (std::size_t i = 0; i < good.size(); ++i) {
      auto bad = good;
      bad[i] ^= 0x40;
      write_bytes(q, bad);
      CAPTURE(i);
      CHECK_THROWS_AS(read_dataset(q), DatasetError);
    }
    // payload bytes specifically report a checksum failure
    auto bad = good;
    bad[header(3).encoded_size() + 6] ^= 0x01;
    write_bytes(q, bad);
    CHECK(read_error(q) == ErrorKind::Corrupt);
  }

  TEST_CASE("bad magic names the expected magic") {
    const auto p = scratch("magic.camcds");
    write_dataset(p, header(1), frames(1));
    auto b = nc::read_file(p);
    for (int i = 0; i < 8; ++i) b[i] = 'X';
    write_bytes(p, b);
    try {
      read_dataset(p);
      FAIL("expected a format error");
    } catch (const DatasetError& e) {
      CHECK(e.kind() == ErrorKind::Format);
      CHECK(std::string(e.what()).find("CAMCDS01") != std::string::npos);
    }
  }

  TEST_CASE("streaming reader and truncation") {
    const auto p = scratch("stream.camcds");
    write_dataset(p, header(220), frames(220));
    DatasetReader r(p);
    std::size_t n = 0;
    while (r.next()) ++n;
    CHECK(n == 220);

    auto b = nc::read_file(p);
    b.resize(header(220).encoded_size() + 5 * header(220).record_size() + 7);
    write_bytes(p, b);
    DatasetReader t(p);
    std::size_t got = 0;
    try {
      while (t.next()) ++got;
      FAIL("expected truncation");
    } catch (const DatasetError& e) {
      CHECK(e.kind() == ErrorKind::Truncated);
    }
    CHECK(got == 5);
  }

  TEST_CASE("header and frame mismatches") {
    const auto p = scratch("mismatch.camcds");
    CHECK_THROWS_AS(write_dataset(p, header(3), frames(2)), DatasetError);
    auto f = frames(1);
    f[0].label_id = 7;
    CHECK_THROWS_AS(write_dataset(p, header(1), f), DatasetError);
    auto g = frames(1, 5);
    CHECK_THROWS_AS(write_dataset(p, header(1), g), DatasetError);
  }

  TEST_CASE("balanced stats") {
    const auto p = scratch("stats.camcds");
    write_dataset(p, header(12), frames(12));
    const auto st = dataset_stats(p);
    CHECK(st.frame_count == 12);
    CHECK(st.per_class == std::vector<std::uint32_t>{4, 4, 4});
    CHECK(st.per_snr.at(-10) == 6);
    CHECK(st.per_snr.at(10) == 6);
    for (const auto& [cell, n] : st.cells) CHECK(n == 2);
    CHECK(st.cells.size() == 6);
  }

  TEST_CASE("byte layout") {
    const auto p = scratch("layout.camcds");
    auto f = frames(1, 1);
    f[0].iq = {1.0f, -2.0f};
    write_dataset(p, header(1, 1), f);
    const auto b = nc::read_file(p);
    CHECK(std::string(b.begin(), b.begin() + 8) == "CAMCDS01");
    CHECK(b[8] == 1);   // frame_count
    CHECK(b[12] == 1);  // frame_length
    CHECK(b[16] == 3);  // class_count
    const std::size_t rec = header(1, 1).encoded_size();
    CHECK(b[rec] == 0);     // label
    CHECK(b[rec + 2] == 0xf6);  // -10 dB little-endian
    CHECK(b[rec + 3] == 0xff);
    CHECK(b[rec + 7] == 0x3f);  // 1.0f high byte
  }
}
