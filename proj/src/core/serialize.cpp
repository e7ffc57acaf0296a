#include "core/serialize.h"

#include <cstdio>
#include <filesystem>

namespace tritex {

std::ofstream open_out_binary(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return is;
}

AtomicFileWriter::AtomicFileWriter(const std::string& path)
    : path_(path), tmp_path_(path + ".tmp"), os_(tmp_path_, std::ios::binary | std::ios::trunc) {
  if (!os_) throw std::runtime_error("cannot open for writing: " + tmp_path_);
}

AtomicFileWriter::~AtomicFileWriter() {
  if (!committed_) {
    os_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_path_, ec);
  }
}

void AtomicFileWriter::commit() {
  os_.flush();
  if (!os_) throw std::runtime_error("write failed: " + tmp_path_);
  os_.close();
  std::filesystem::rename(tmp_path_, path_);
  committed_ = true;
}

}  // namespace tritex
