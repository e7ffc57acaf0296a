#pragma once

#include <array>
#include <functional>

#include "core/tensor.h"
#include "field/triplane.h"

namespace tritex {

// Batched field callables: the renderer hands over all query points at once.
using SdfField = std::function<Tensor(const FieldQuery&)>;  // -> [N]
using RgbField = std::function<Tensor(const FieldQuery&)>;  // -> [N,3] in [0,1]

struct RenderedView {
  Tensor rgb;      // [H,W,3] in [0,1]
  Tensor opacity;  // [H,W] in [0,1]
  Tensor depth;    // optional [H,W], undefined when absent
  int64_t height = 0, width = 0;

  void check_valid(const char* op) const;
};

using Color = std::array<double, 3>;

}  // namespace tritex
