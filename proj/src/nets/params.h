#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/rng.h"
#include "core/tensor.h"

namespace tritex {

// Ordered registry of named leaf tensors. Registration order is the
// serialization and optimizer order, so runs are reproducible bit for bit.
class ParamStore {
 public:
  Tensor add(const std::string& name, Shape shape);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }

  void zero_grad();
  void set_requires_grad_all(bool rg);
  void set_requires_grad_prefix(const std::string& prefix, bool rg);
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;

  int64_t total_size() const;
  // Deep snapshot of values (for freeze assertions and determinism checks).
  std::map<std::string, std::vector<double>> snapshot() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::map<std::string, size_t> index_;
};

// Weight initializers (uniform +-1/sqrt(fan_in) unless stated otherwise).
Tensor init_linear_weight(ParamStore& ps, const std::string& name, int64_t in, int64_t out,
                          Rng& rng);
Tensor init_zeros(ParamStore& ps, const std::string& name, Shape shape);
Tensor init_ones(ParamStore& ps, const std::string& name, Shape shape);
Tensor init_conv3_weight(ParamStore& ps, const std::string& name, int64_t cout, int64_t cin,
                         Rng& rng);
Tensor init_conv1_weight(ParamStore& ps, const std::string& name, int64_t cout, int64_t cin,
                         Rng& rng);

// Named-tensor archive with manifest, versioned header "LAT1"; the stage tag
// and free-form metadata ride alongside.
void save_checkpoint(const std::string& path, const ParamStore& ps,
                     const std::map<std::string, std::string>& metadata);
std::map<std::string, std::string> load_checkpoint(const std::string& path, ParamStore& ps,
                                                   bool allow_missing = false);
std::map<std::string, std::string> peek_checkpoint_metadata(const std::string& path);

}  // namespace tritex
