#include "nets/params.h"

#include <cmath>
#include <stdexcept>

#include "core/serialize.h"

namespace tritex {

Tensor ParamStore::add(const std::string& name, Shape shape) {
  if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
  Tensor t = Tensor::zeros(std::move(shape), true);
  index_[name] = items_.size();
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
  return items_[it->second].second;
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) > 0; }

void ParamStore::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

void ParamStore::set_requires_grad_all(bool rg) {
  for (auto& [name, t] : items_) t.set_requires_grad(rg);
}

void ParamStore::set_requires_grad_prefix(const std::string& prefix, bool rg) {
  bool any = false;
  for (auto& [name, t] : items_)
    if (name.rfind(prefix, 0) == 0) {
      t.set_requires_grad(rg);
      any = true;
    }
  if (!any) throw std::invalid_argument("ParamStore: no params with prefix " + prefix);
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, t] : items_)
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  return out;
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

std::map<std::string, std::vector<double>> ParamStore::snapshot() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, t] : items_)
    out[name] = std::vector<double>(t.data(), t.data() + t.numel());
  return out;
}

Tensor init_linear_weight(ParamStore& ps, const std::string& name, int64_t in, int64_t out,
                          Rng& rng) {
  Tensor t = ps.add(name, {in, out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-bound, bound);
  return t;
}

Tensor init_zeros(ParamStore& ps, const std::string& name, Shape shape) {
  return ps.add(name, std::move(shape));
}

Tensor init_ones(ParamStore& ps, const std::string& name, Shape shape) {
  Tensor t = ps.add(name, std::move(shape));
  std::fill(t.data(), t.data() + t.numel(), 1.0);
  return t;
}

Tensor init_conv3_weight(ParamStore& ps, const std::string& name, int64_t cout, int64_t cin,
                         Rng& rng) {
  Tensor t = ps.add(name, {cout, cin, 3, 3});
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * 9));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-bound, bound);
  return t;
}

Tensor init_conv1_weight(ParamStore& ps, const std::string& name, int64_t cout, int64_t cin,
                         Rng& rng) {
  Tensor t = ps.add(name, {cout, cin});
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-bound, bound);
  return t;
}

namespace {
constexpr uint32_t kCheckpointVersion = 1;
}

void save_checkpoint(const std::string& path, const ParamStore& ps,
                     const std::map<std::string, std::string>& metadata) {
  AtomicFileWriter w(path);
  auto& os = w.stream();
  write_magic(os, "LAT1");
  write_u32(os, kCheckpointVersion);
  write_u32(os, static_cast<uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    write_string(os, k);
    write_string(os, v);
  }
  write_u32(os, static_cast<uint32_t>(ps.items().size()));
  // manifest first, then raw data, so readers can list tensors cheaply
  for (const auto& [name, t] : ps.items()) {
    write_string(os, name);
    write_u32(os, static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape()) write_u64(os, static_cast<uint64_t>(d));
  }
  for (const auto& [name, t] : ps.items()) {
    const double* d = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) write_f64(os, d[i]);
  }
  w.commit();
}

std::map<std::string, std::string> load_checkpoint(const std::string& path, ParamStore& ps,
                                                   bool allow_missing) {
  auto is = open_in_binary(path);
  expect_magic(is, "LAT1", "checkpoint");
  const uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint version mismatch: file has " + std::to_string(version) +
                             ", expected " + std::to_string(kCheckpointVersion));
  std::map<std::string, std::string> metadata;
  const uint32_t n_meta = read_u32(is);
  for (uint32_t i = 0; i < n_meta; ++i) {
    std::string k = read_string(is);
    metadata[k] = read_string(is);
  }
  const uint32_t n_tensors = read_u32(is);
  std::vector<std::pair<std::string, Shape>> manifest(n_tensors);
  for (auto& [name, shape] : manifest) {
    name = read_string(is);
    const uint32_t rank = read_u32(is);
    shape.resize(rank);
    for (auto& d : shape) d = static_cast<int64_t>(read_u64(is));
  }
  for (const auto& [name, shape] : manifest) {
    const int64_t n = numel_of(shape);
    if (!ps.has(name)) {
      if (allow_missing) {
        is.seekg(static_cast<std::streamoff>(n * 8), std::ios::cur);
        continue;
      }
      throw std::runtime_error("checkpoint tensor '" + name + "' unknown to this model");
    }
    Tensor t = ps.get(name);
    if (t.shape() != shape)
      throw std::runtime_error("checkpoint tensor '" + name + "' has shape " + shape_str(shape) +
                               ", model expects " + shape_str(t.shape()));
    for (int64_t i = 0; i < n; ++i) t.data()[i] = read_f64(is);
  }
  return metadata;
}

std::map<std::string, std::string> peek_checkpoint_metadata(const std::string& path) {
  auto is = open_in_binary(path);
  expect_magic(is, "LAT1", "checkpoint");
  const uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint version mismatch: file has " + std::to_string(version));
  std::map<std::string, std::string> metadata;
  const uint32_t n_meta = read_u32(is);
  for (uint32_t i = 0; i < n_meta; ++i) {
    std::string k = read_string(is);
    metadata[k] = read_string(is);
  }
  return metadata;
}

}  // namespace tritex
