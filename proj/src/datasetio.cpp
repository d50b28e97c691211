// SPDX-License-Identifier: Apache-2.0
#include "camc/datasetio.hpp"

#include <algorithm>

#include <cstring>

#include "camc/bytes.hpp"

namespace camc::datasetio {

namespace {

std::string ctx(const std::filesystem::path& p, const std::string& msg) {
  return p.string() + ": " + msg;
}

void check_header(const DatasetHeader& h) {
  if (h.class_names.size() > 0xFFFF)
    throw DatasetError(ErrorKind::InvalidArgument, "too many class names");
  for (const auto& n : h.class_names)
    if (n.size() > 0xFFFF) throw DatasetError(ErrorKind::InvalidArgument, "class name too long");
}

std::vector<std::uint8_t> encode_header(const DatasetHeader& h) {
  ByteWriter w;
  w.text(std::string_view(kMagic, sizeof(kMagic)));
  w.u32(h.frame_count);
  w.u32(h.frame_length);
  w.u16(static_cast<std::uint16_t>(h.class_names.size()));
  for (const auto& n : h.class_names) {
    w.u16(static_cast<std::uint16_t>(n.size()));
    w.text(n);
  }
  w.u16(h.flags);
  return w.take();
}

}  // namespace

std::size_t DatasetHeader::encoded_size() const {
  std::size_t n = sizeof(kMagic) + 4 + 4 + 2 + 2;
  for (const auto& c : class_names) n += 2 + c.size();
  return n;
}

DatasetWriter::DatasetWriter(const std::filesystem::path& path, DatasetHeader header)
    : path_(path), header_(std::move(header)) {
  check_header(header_);
  out_.open(path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw DatasetError(ErrorKind::Io, ctx(path_, "cannot open for writing"));
  put(encode_header(header_));
}

DatasetWriter::~DatasetWriter() = default;

void DatasetWriter::put(std::span<const std::uint8_t> bytes) {
  crc_.update(bytes);
  out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out_) throw DatasetError(ErrorKind::Io, ctx(path_, "write failed"));
}

void DatasetWriter::append(const FrameRecord& r) {
  if (finished_) throw DatasetError(ErrorKind::InvalidArgument, "append after finish");
  if (written_ >= header_.frame_count)
    throw DatasetError(ErrorKind::InvalidArgument,
                       ctx(path_, "more frames than header frame_count " + std::to_string(header_.frame_count)));
  if (r.iq.size() != 2 * static_cast<std::size_t>(header_.frame_length))
    throw DatasetError(ErrorKind::InvalidArgument,
                       ctx(path_, "frame has " + std::to_string(r.iq.size()) + " values, expected " +
                                      std::to_string(2 * header_.frame_length)));
  if (r.label_id >= header_.class_names.size())
    throw DatasetError(ErrorKind::InvalidArgument,
                       ctx(path_, "label id " + std::to_string(r.label_id) + " out of range"));
  ByteWriter w;
  w.u16(r.label_id);
  w.i16(r.sensing_snr_db);
  for (float v : r.iq) w.f32(v);
  put(w.data());
  ++written_;
}

void DatasetWriter::finish() {
  if (finished_) return;
  if (written_ != header_.frame_count)
    throw DatasetError(ErrorKind::InvalidArgument,
                       ctx(path_, "wrote " + std::to_string(written_) + " frames but header declares " +
                                      std::to_string(header_.frame_count)));
  ByteWriter w;
  w.u32(crc_.value());
  out_.write(reinterpret_cast<const char*>(w.data().data()), 4);
  out_.close();
  if (!out_) throw DatasetError(ErrorKind::Io, ctx(path_, "close failed"));
  finished_ = true;
}

void write_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                   std::span<const FrameRecord> frames) {
  if (frames.size() != header.frame_count)
    throw DatasetError(ErrorKind::InvalidArgument,
                       "header declares " + std::to_string(header.frame_count) + " frames, got " +
                           std::to_string(frames.size()));
  DatasetWriter w(path, header);
  for (const auto& f : frames) w.append(f);
  w.finish();
}

DatasetReader::DatasetReader(const std::filesystem::path& path) : path_(path) {
  in_.open(path_, std::ios::binary);
  if (!in_) throw DatasetError(ErrorKind::Io, ctx(path_, "cannot open for reading"));
  std::error_code ec;
  remaining_ = std::filesystem::file_size(path_, ec);
  if (ec) throw DatasetError(ErrorKind::Io, ctx(path_, "cannot stat: " + ec.message()));

  char magic[sizeof(kMagic)];
  read_exact(reinterpret_cast<std::uint8_t*>(magic), sizeof(magic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DatasetError(ErrorKind::Format,
                       ctx(path_, "bad magic '" + std::string(magic, sizeof(magic)) + "', expected 'CAMCDS01'"));

  std::uint8_t fixed[10];
  read_exact(fixed, sizeof(fixed), "header");
  ByteReader r(fixed);
  header_.frame_count = r.u32();
  header_.frame_length = r.u32();
  const std::uint16_t class_count = r.u16();
  for (std::uint16_t i = 0; i < class_count; ++i) {
    std::uint8_t len_bytes[2];
    read_exact(len_bytes, 2, "class name length");
    const std::size_t len = static_cast<std::size_t>(len_bytes[0] | (len_bytes[1] << 8));
    std::string name(len, '\0');
    read_exact(reinterpret_cast<std::uint8_t*>(name.data()), len, "class name");
    header_.class_names.push_back(std::move(name));
  }
  std::uint8_t flags[2];
  read_exact(flags, 2, "flags");
  header_.flags = static_cast<std::uint16_t>(flags[0] | (flags[1] << 8));
}

std::uint32_t DatasetReader::frames_available() const {
  const std::uint64_t fit = remaining_ / header_.record_size();
  return static_cast<std::uint32_t>(std::min<std::uint64_t>(fit, header_.frame_count - read_));
}

void DatasetReader::read_exact(std::uint8_t* dst, std::size_t n, const char* what) {
  // Checked before reading so a corrupted length never drives a huge allocation.
  if (n > remaining_)
    throw DatasetError(ErrorKind::Truncated, ctx(path_, std::string("truncated file while reading ") + what));
  in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n)
    throw DatasetError(ErrorKind::Truncated, ctx(path_, std::string("truncated file while reading ") + what));
  remaining_ -= n;
  crc_.update({dst, n});
}

std::optional<FrameRecord> DatasetReader::next() {
  if (done_) return std::nullopt;
  if (read_ == header_.frame_count) {
    std::uint8_t tail[4];
    in_.read(reinterpret_cast<char*>(tail), 4);
    if (in_.gcount() != 4) throw DatasetError(ErrorKind::Truncated, ctx(path_, "truncated file: missing CRC"));
    const std::uint32_t stored = ByteReader(tail).u32();
    if (stored != crc_.value())
      throw DatasetError(ErrorKind::Corrupt, ctx(path_, "checksum mismatch (file corrupted)"));
    if (in_.peek() != std::char_traits<char>::eof())
      throw DatasetError(ErrorKind::Format, ctx(path_, "trailing bytes after CRC"));
    done_ = true;
    return std::nullopt;
  }

  if (header_.record_size() > remaining_)
    throw DatasetError(ErrorKind::Truncated, ctx(path_, "truncated file: frame " + std::to_string(read_) +
                                                            " needs " + std::to_string(header_.record_size()) +
                                                            " bytes, " + std::to_string(remaining_) + " left"));
  std::vector<std::uint8_t> buf(header_.record_size());
  read_exact(buf.data(), buf.size(), "frame record");
  ByteReader r(buf);
  FrameRecord rec;
  rec.label_id = r.u16();
  rec.sensing_snr_db = r.i16();
  if (rec.label_id >= header_.class_names.size())
    throw DatasetError(ErrorKind::Format, ctx(path_, "frame " + std::to_string(read_) + " has label id " +
                                                         std::to_string(rec.label_id) + " >= class_count"));
  rec.iq.resize(2 * static_cast<std::size_t>(header_.frame_length));
  for (auto& v : rec.iq) v = r.f32();
  ++read_;
  return rec;
}

Dataset read_dataset(const std::filesystem::path& path) {
  DatasetReader reader(path);
  Dataset d;
  d.header = reader.header();
  d.frames.reserve(reader.frames_available());
  while (auto f = reader.next()) d.frames.push_back(std::move(*f));
  return d;
}

DatasetStats dataset_stats(const std::filesystem::path& path) {
  DatasetReader reader(path);
  DatasetStats s;
  s.frame_count = reader.header().frame_count;
  s.frame_length = reader.header().frame_length;
  s.class_names = reader.header().class_names;
  s.per_class.assign(s.class_names.size(), 0);

  // Welford over per-frame mean power.
  double mean = 0.0, m2 = 0.0;
  std::uint64_t n = 0;
  while (auto f = reader.next()) {
    s.per_class[f->label_id]++;
    s.per_snr[f->sensing_snr_db]++;
    s.cells[{f->label_id, f->sensing_snr_db}]++;
    double p = 0.0;
    for (float v : f->iq) p += static_cast<double>(v) * v;
    if (!f->iq.empty()) p /= static_cast<double>(f->iq.size() / 2);
    ++n;
    const double d = p - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (p - mean);
  }
  s.power_mean = n ? mean : 0.0;
  s.power_variance = n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
  return s;
}

}  // namespace camc::datasetio
