#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace flashcg {

// Little-endian primitive writer/reader over a binary file. Readers throw
// ConfigError on truncation so callers can report the file as malformed.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path);

  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(const std::string& s);
  void close();

 private:
  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path);

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string bytes(std::size_t n);
  bool at_end();
  const std::string& path() const { return path_; }

 private:
  void read_raw(unsigned char* dst, std::size_t n);

  std::string path_;
  std::ifstream in_;
};

enum class TensorTag : std::uint8_t { fp32 = 0, fp16_scaled = 1, fp64 = 2 };

// One named tensor of the FLCG container. Exactly one payload is populated,
// matching `tag`; fp16_scaled also carries one scale per leading-dim row.
struct TensorRecord {
  std::string name;
  TensorTag tag = TensorTag::fp32;
  std::vector<std::uint32_t> dims;
  std::vector<float> f32;
  std::vector<std::uint16_t> f16;
  std::vector<float> scale;
  std::vector<double> f64;

  std::size_t element_count() const;
};

void write_tensor(BinaryWriter& w, const TensorRecord& t);
TensorRecord read_tensor(BinaryReader& r);

}  // namespace flashcg
