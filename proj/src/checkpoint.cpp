#include "ntc/checkpoint.hpp"

#include <cstring>
#include <limits>

#include "ntc/serialize.hpp"

namespace ntc {

namespace {
constexpr char kMagic[4] = {'N', 'T', 'C', 'K'};
constexpr uint8_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const NamedTensors& entries) {
  io::ByteWriter w;
  w.raw(kMagic, 4);
  w.u8(kVersion);
  w.u32(uint32_t(entries.size()));
  for (const auto& [name, t] : entries) {
    if (name.size() > std::numeric_limits<uint16_t>::max())
      throw FormatError("checkpoint: tensor name too long: " + name);
    w.u16(uint16_t(name.size()));
    w.str(name);
    const Shape& s = t.shape();
    w.u8(4);
    w.u32(uint32_t(s.n));
    w.u32(uint32_t(s.c));
    w.u32(uint32_t(s.h));
    w.u32(uint32_t(s.w));
    for (float v : t.values()) w.f32(v);
  }
  io::write_file_atomic(path, w.bytes());
}

NamedTensors load_checkpoint(const std::string& path) {
  const io::Bytes data = io::read_file(path);
  io::ByteReader r(data);
  const auto magic = r.raw(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic in " + path);
  const uint8_t version = r.u8();
  if (version != kVersion)
    throw FormatError("checkpoint: unsupported version " +
                      std::to_string(version) + " in " + path);
  const uint32_t count = r.u32();
  NamedTensors entries;
  entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = r.u16();
    const auto name_bytes = r.raw(name_len);
    std::string name(reinterpret_cast<const char*>(name_bytes.data()),
                     name_len);
    const uint8_t rank = r.u8();
    if (rank != 4)
      throw FormatError("checkpoint: tensor " + name + " has rank " +
                        std::to_string(rank) + ", expected 4");
    Shape s;
    s.n = int(r.u32());
    s.c = int(r.u32());
    s.h = int(r.u32());
    s.w = int(r.u32());
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1 ||
        s.numel() > (int64_t(1) << 30))
      throw FormatError("checkpoint: tensor " + name +
                        " has implausible shape " + s.str());
    std::vector<float> vals(size_t(s.numel()));
    for (auto& v : vals) v = r.f32();
    entries.emplace_back(std::move(name), Tensor(s, std::move(vals)));
  }
  if (!r.done())
    throw FormatError("checkpoint: " + std::to_string(r.remaining()) +
                      " trailing bytes in " + path);
  return entries;
}

}  // namespace ntc
