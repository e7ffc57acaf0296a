#pragma once

#include <functional>
#include <memory>
#include <string>

#include "core/tensor.h"

namespace tritex {

inline constexpr int64_t kPromptTokens = 77;  // padded or truncated to 77

// Token-embedding matrix plus pooled embedding for a text prompt.
struct PromptRecord {
  std::string text;
  Tensor tokens;  // [77, D]
  Tensor pooled;  // [D]

  void check_valid(const char* op) const;
};

// Pluggable text embedder. The default is a deterministic hash-based
// pseudo-embedder so the whole suite runs without any external model; a real
// text-encoder adapter registers under its own name.
class PromptEmbedder {
 public:
  virtual ~PromptEmbedder() = default;
  virtual std::string name() const = 0;
  virtual int64_t dim() const = 0;
  virtual PromptRecord embed(const std::string& text) const = 0;
};

using EmbedderFactory =
    std::function<std::shared_ptr<PromptEmbedder>(int64_t dim, uint64_t seed)>;

void register_embedder(const std::string& name, EmbedderFactory factory);
std::shared_ptr<PromptEmbedder> create_embedder(const std::string& name, int64_t dim,
                                                uint64_t seed);

}  // namespace tritex
