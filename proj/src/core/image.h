#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.h"

namespace tritex {

struct ImageU8 {
  int64_t height = 0, width = 0, channels = 0;  // channels: 1 or 3
  std::vector<uint8_t> px;                      // row-major, interleaved
};

void save_png(const std::string& path, const ImageU8& img);
ImageU8 load_png(const std::string& path);

// [H,W,3] or [H,W] tensor in [0,1] -> 8-bit image (values clamped).
ImageU8 tensor_to_u8(const Tensor& img);
// 8-bit image -> [H,W,3] or [H,W] tensor with values k/255.
Tensor u8_to_tensor(const ImageU8& img);

}  // namespace tritex
