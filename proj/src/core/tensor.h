#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/rng.h"

namespace tritex {

using Shape = std::vector<int64_t>;

int64_t numel_of(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode;

// Value-semantic handle to a node in the reverse-mode autodiff graph.
// All tensors are dense row-major double arrays. Reshapes alias storage;
// every other op copies. Gradients are accumulated into leaf nodes by
// backward() and persist until zero_grad().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor full(Shape s, double v);
  static Tensor from(Shape s, std::vector<double> data);
  static Tensor scalar(double v);
  static Tensor randn(Shape s, Rng& rng, double stddev = 1.0);
  static Tensor rand_uniform(Shape s, Rng& rng, double lo, double hi);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  int64_t dim(int i) const;  // negative i counts from the back
  int rank() const;

  double* data();
  const double* data() const;
  double item() const;
  double at(std::initializer_list<int64_t> idx) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool rg);
  double* grad();
  const double* grad() const;
  bool has_grad() const;
  void zero_grad();
  bool all_finite() const;

  // Same storage, detached from the graph (stop-gradient).
  Tensor detach() const;
  // Deep copy of the values, detached leaf.
  Tensor clone_data() const;

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
  Shape shape;
  std::shared_ptr<std::vector<double>> val;
  std::vector<double> grad;  // allocated on demand, same layout as val
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<Tensor> parents;
  std::function<void(TensorNode&)> backprop;
  int visit_mark = 0;

  double* vdata() { return val->data(); }
  const double* vdata() const { return val->data(); }
  int64_t numel() const { return static_cast<int64_t>(val->size()); }
  void ensure_grad();
  void add_grad(const TensorNode& child);  // same-layout accumulate
};

// Reverse-mode sweep from a scalar loss. Accumulates into .grad of every
// reachable node that requires grad.
void backward(const Tensor& loss);

// Builds a non-leaf op node. Grad requirement is inherited from parents;
// when no parent requires grad the backprop closure is dropped entirely.
Tensor make_op(Shape shape, std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backprop);

}  // namespace tritex
