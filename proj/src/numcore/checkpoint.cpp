// SPDX-License-Identifier: Apache-2.0
#include "camc/numcore/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "camc/bytes.hpp"
#include "camc/crc32.hpp"

namespace camc::nc {

namespace {
constexpr char kMagic[8] = {'C', 'A', 'M', 'C', 'P', 'T', '0', '1'};
}

std::vector<std::uint8_t> encode_checkpoint(const std::vector<const Param<float>*>& params) {
  ByteWriter w;
  w.text(std::string_view(kMagic, sizeof(kMagic)));
  for (const auto* p : params) {
    w.u32(static_cast<std::uint32_t>(p->name().size()));
    w.text(p->name());
    const auto& shape = p->value().shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : p->value().span()) w.f32(v);
  }
  w.u32(crc32(w.data()));
  return w.take();
}

std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + 4) throw CheckpointError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("bad checkpoint magic, expected 'CAMCPT01'");
  const std::size_t body = bytes.size() - 4;
  const std::uint32_t stored = ByteReader(std::span<const std::uint8_t>(bytes).subspan(body)).u32();
  if (stored != crc32(std::span<const std::uint8_t>(bytes).first(body))) throw CheckpointError("checkpoint checksum mismatch");

  ByteReader r(std::span<const std::uint8_t>(bytes).first(body));
  r.bytes(sizeof(kMagic));
  std::vector<NamedTensor> out;
  try {
    while (r.remaining() > 0) {
      NamedTensor t;
      t.name = r.text(r.u32());
      const std::uint32_t rank = r.u32();
      Shape shape;
      for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32());
      std::vector<float> data(numel(shape));
      for (auto& v : data) v = r.f32();
      t.value = Tensor<float>(std::move(shape), std::move(data));
      out.push_back(std::move(t));
    }
  } catch (const ShortRead&) {
    throw CheckpointError("checkpoint record truncated");
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path.string() + ": cannot open");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<const Param<float>*>& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(path.string() + ": write failed");
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void assign_checkpoint(const std::vector<NamedTensor>& tensors, const std::vector<Param<float>*>& params) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  for (auto* p : params) {
    auto it = by_name.find(p->name());
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks parameter '" + p->name() + "'");
    if (it->second->value.shape() != p->value().shape())
      throw CheckpointError("parameter '" + p->name() + "' has shape " + shape_str(it->second->value.shape()) +
                            " in checkpoint, model expects " + shape_str(p->value().shape()));
    p->value() = it->second->value;
  }
}

}  // namespace camc::nc
