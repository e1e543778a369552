#include "flashcg/binary_io.hpp"

#include <bit>
#include <numeric>

#include "flashcg/types.hpp"

namespace flashcg {

namespace {
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxNameLength = 4096;
}  // namespace

BinaryWriter::BinaryWriter(const std::string& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw ConfigError("cannot open '" + path + "' for writing");
}

void BinaryWriter::u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void BinaryWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
void BinaryWriter::bytes(const std::string& s) {
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryWriter::close() {
  out_.flush();
  if (!out_) throw ConfigError("write to '" + path_ + "' failed");
  out_.close();
}

BinaryReader::BinaryReader(const std::string& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw ConfigError("cannot open '" + path + "' for reading");
}

void BinaryReader::read_raw(unsigned char* dst, std::size_t n) {
  in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n)
    throw ConfigError("'" + path_ + "' is truncated");
}

std::uint8_t BinaryReader::u8() {
  unsigned char b;
  read_raw(&b, 1);
  return b;
}

std::uint32_t BinaryReader::u32() {
  unsigned char b[4];
  read_raw(b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t BinaryReader::u64() {
  unsigned char b[8];
  read_raw(b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

float BinaryReader::f32() { return std::bit_cast<float>(u32()); }
double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinaryReader::bytes(std::size_t n) {
  std::string s(n, '\0');
  if (n > 0) read_raw(reinterpret_cast<unsigned char*>(s.data()), n);
  return s;
}

bool BinaryReader::at_end() { return in_.peek() == std::char_traits<char>::eof(); }

std::size_t TensorRecord::element_count() const {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         [](std::size_t a, std::uint32_t b) { return a * b; });
}

void write_tensor(BinaryWriter& w, const TensorRecord& t) {
  w.u32(static_cast<std::uint32_t>(t.name.size()));
  w.bytes(t.name);
  w.u8(static_cast<std::uint8_t>(t.tag));
  w.u32(static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) w.u32(d);
  const std::size_t n = t.element_count();
  switch (t.tag) {
    case TensorTag::fp32:
      if (t.f32.size() != n) throw ConfigError("tensor '" + t.name + "' payload size");
      for (float v : t.f32) w.f32(v);
      break;
    case TensorTag::fp16_scaled:
      if (t.f16.size() != n || t.dims.empty() || t.scale.size() != t.dims[0])
        throw ConfigError("tensor '" + t.name + "' payload size");
      for (auto v : t.f16) {
        w.u8(static_cast<std::uint8_t>(v & 0xffu));
        w.u8(static_cast<std::uint8_t>(v >> 8));
      }
      for (float s : t.scale) w.f32(s);
      break;
    case TensorTag::fp64:
      if (t.f64.size() != n) throw ConfigError("tensor '" + t.name + "' payload size");
      for (double v : t.f64) w.f64(v);
      break;
  }
}

TensorRecord read_tensor(BinaryReader& r) {
  TensorRecord t;
  const auto name_len = r.u32();
  if (name_len > kMaxNameLength) throw ConfigError("'" + r.path() + "': bad tensor name");
  t.name = r.bytes(name_len);
  const auto tag = r.u8();
  if (tag > 2) throw ConfigError("tensor '" + t.name + "': unknown precision tag");
  t.tag = static_cast<TensorTag>(tag);
  const auto rank = r.u32();
  if (rank > kMaxRank) throw ConfigError("tensor '" + t.name + "': bad rank");
  t.dims.resize(rank);
  for (auto& d : t.dims) d = r.u32();
  const std::size_t n = t.element_count();
  if (n > (std::size_t{1} << 34)) throw ConfigError("tensor '" + t.name + "': too large");
  switch (t.tag) {
    case TensorTag::fp32:
      t.f32.resize(n);
      for (auto& v : t.f32) v = r.f32();
      break;
    case TensorTag::fp16_scaled: {
      if (rank == 0) throw ConfigError("tensor '" + t.name + "': fp16 tensor needs rank >= 1");
      t.f16.resize(n);
      for (auto& v : t.f16) {
        const std::uint16_t lo = r.u8();
        const std::uint16_t hi = r.u8();
        v = static_cast<std::uint16_t>(lo | (hi << 8));
      }
      t.scale.resize(t.dims[0]);
      for (auto& s : t.scale) s = r.f32();
      break;
    }
    case TensorTag::fp64:
      t.f64.resize(n);
      for (auto& v : t.f64) v = r.f64();
      break;
  }
  return t;
}

}  // namespace flashcg
