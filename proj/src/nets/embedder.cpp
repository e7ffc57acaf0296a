#include "nets/embedder.h"

#include <map>
#include <stdexcept>

#include "core/rng.h"

namespace tritex {

void PromptRecord::check_valid(const char* op) const {
  if (!tokens.defined() || tokens.rank() != 2 || tokens.dim(0) != kPromptTokens)
    throw std::invalid_argument(std::string(op) + ": token matrix must have 77 rows");
  if (!pooled.defined() || pooled.numel() != tokens.dim(1))
    throw std::invalid_argument(std::string(op) + ": pooled dim mismatch");
  if (!tokens.all_finite() || !pooled.all_finite())
    throw std::invalid_argument(std::string(op) + ": non-finite embedding");
}

namespace {

class HashEmbedder final : public PromptEmbedder {
 public:
  HashEmbedder(int64_t dim, uint64_t seed) : dim_(dim), seed_(seed) {}

  std::string name() const override { return "hash"; }
  int64_t dim() const override { return dim_; }

  PromptRecord embed(const std::string& text) const override {
    PromptRecord rec;
    rec.text = text;
    const uint64_t base = hash_combine(seed_, hash_str(text));
    std::vector<double> tok(kPromptTokens * dim_);
    for (int64_t i = 0; i < kPromptTokens; ++i) {
      Rng row(hash_combine(base, static_cast<uint64_t>(i)));
      for (int64_t j = 0; j < dim_; ++j) tok[i * dim_ + j] = row.uniform(-1.0, 1.0);
    }
    rec.tokens = Tensor::from({kPromptTokens, dim_}, std::move(tok));
    Rng pool(hash_combine(base, hash_str("pooled")));
    rec.pooled = Tensor::rand_uniform({dim_}, pool, -1.0, 1.0);
    return rec;
  }

 private:
  int64_t dim_;
  uint64_t seed_;
};

std::map<std::string, EmbedderFactory>& registry() {
  static std::map<std::string, EmbedderFactory> r = {
      {"hash",
       [](int64_t dim, uint64_t seed) { return std::make_shared<HashEmbedder>(dim, seed); }},
  };
  return r;
}

}  // namespace

void register_embedder(const std::string& name, EmbedderFactory factory) {
  registry()[name] = std::move(factory);
}

std::shared_ptr<PromptEmbedder> create_embedder(const std::string& name, int64_t dim,
                                                uint64_t seed) {
  const auto it = registry().find(name);
  if (it == registry().end())
    throw std::runtime_error("unknown prompt embedder '" + name +
                             "' (register a real text-encoder adapter under this name)");
  return it->second(dim, seed);
}

}  // namespace tritex
