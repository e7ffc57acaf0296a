#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tritex {

// Little-endian primitive IO. The build targets little-endian hosts; the
// helpers keep the on-disk contract explicit either way.

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("unexpected end of file");
}

inline void write_u32(std::ostream& os, uint32_t v) { write_bytes(os, &v, 4); }
inline void write_u64(std::ostream& os, uint64_t v) { write_bytes(os, &v, 8); }
inline void write_f32(std::ostream& os, float v) { write_bytes(os, &v, 4); }
inline void write_f64(std::ostream& os, double v) { write_bytes(os, &v, 8); }

inline uint32_t read_u32(std::istream& is) {
  uint32_t v;
  read_bytes(is, &v, 4);
  return v;
}
inline uint64_t read_u64(std::istream& is) {
  uint64_t v;
  read_bytes(is, &v, 8);
  return v;
}
inline float read_f32(std::istream& is) {
  float v;
  read_bytes(is, &v, 4);
  return v;
}
inline double read_f64(std::istream& is) {
  double v;
  read_bytes(is, &v, 8);
  return v;
}

inline void write_magic(std::ostream& os, const char magic[5]) { write_bytes(os, magic, 4); }

inline void expect_magic(std::istream& is, const char magic[5], const std::string& what) {
  char buf[4];
  read_bytes(is, buf, 4);
  if (std::string(buf, 4) != std::string(magic, 4))
    throw std::runtime_error(what + ": bad magic, expected " + std::string(magic, 4));
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<uint32_t>(s.size()));
  write_bytes(os, s.data(), s.size());
}

inline std::string read_string(std::istream& is) {
  const uint32_t n = read_u32(is);
  std::string s(n, '\0');
  if (n) read_bytes(is, s.data(), n);
  return s;
}

std::ofstream open_out_binary(const std::string& path);
std::ifstream open_in_binary(const std::string& path);

// Writes to <path>.tmp then renames, so readers never see partial files.
class AtomicFileWriter {
 public:
  explicit AtomicFileWriter(const std::string& path);
  ~AtomicFileWriter();
  std::ofstream& stream() { return os_; }
  void commit();

 private:
  std::string path_, tmp_path_;
  std::ofstream os_;
  bool committed_ = false;
};

}  // namespace tritex
