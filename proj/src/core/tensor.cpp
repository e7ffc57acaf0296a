#include "core/tensor.h"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tritex {

int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

void TensorNode::ensure_grad() {
  if (grad.size() != val->size()) grad.assign(val->size(), 0.0);
}

void TensorNode::add_grad(const TensorNode& child) {
  ensure_grad();
  const double* g = child.grad.data();
  for (size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
}

static std::shared_ptr<TensorNode> new_leaf(Shape s) {
  auto n = std::make_shared<TensorNode>();
  n->val = std::make_shared<std::vector<double>>(numel_of(s), 0.0);
  n->shape = std::move(s);
  return n;
}

Tensor Tensor::zeros(Shape s, bool requires_grad) {
  Tensor t(new_leaf(std::move(s)));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape s, double v) {
  Tensor t(new_leaf(std::move(s)));
  std::fill(t.node_->val->begin(), t.node_->val->end(), v);
  return t;
}

Tensor Tensor::from(Shape s, std::vector<double> data) {
  if (numel_of(s) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("Tensor::from: data size does not match shape " + shape_str(s));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(s);
  n->val = std::make_shared<std::vector<double>>(std::move(data));
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::randn(Shape s, Rng& rng, double stddev) {
  Tensor t(new_leaf(std::move(s)));
  for (double& x : *t.node_->val) x = rng.normal() * stddev;
  return t;
}

Tensor Tensor::rand_uniform(Shape s, Rng& rng, double lo, double hi) {
  Tensor t(new_leaf(std::move(s)));
  for (double& x : *t.node_->val) x = rng.uniform(lo, hi);
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return node_->numel(); }

int64_t Tensor::dim(int i) const {
  const int r = rank();
  if (i < 0) i += r;
  if (i < 0 || i >= r) throw std::invalid_argument("Tensor::dim: axis out of range");
  return node_->shape[i];
}

int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }

double* Tensor::data() { return node_->vdata(); }
const double* Tensor::data() const { return node_->vdata(); }

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar");
  return (*node_->val)[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  const Shape& s = node_->shape;
  if (idx.size() != s.size()) throw std::invalid_argument("Tensor::at: rank mismatch");
  int64_t lin = 0;
  size_t k = 0;
  for (int64_t i : idx) {
    lin = lin * s[k] + i;
    ++k;
  }
  return (*node_->val)[lin];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool rg) {
  if (!node_->is_leaf) throw std::invalid_argument("set_requires_grad: non-leaf tensor");
  node_->requires_grad = rg;
  return *this;
}

double* Tensor::grad() {
  node_->ensure_grad();
  return node_->grad.data();
}

const double* Tensor::grad() const { return node_->grad.data(); }

bool Tensor::has_grad() const { return node_->grad.size() == node_->val->size(); }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : *node_->val)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<TensorNode>();
  n->shape = node_->shape;
  n->val = node_->val;  // shares storage
  n->requires_grad = false;
  return Tensor(std::move(n));
}

Tensor Tensor::clone_data() const {
  auto n = std::make_shared<TensorNode>();
  n->shape = node_->shape;
  n->val = std::make_shared<std::vector<double>>(*node_->val);
  return Tensor(std::move(n));
}

Tensor make_op(Shape shape, std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backprop) {
  auto n = std::make_shared<TensorNode>();
  n->val = std::make_shared<std::vector<double>>(numel_of(shape), 0.0);
  n->shape = std::move(shape);
  n->is_leaf = false;
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a defined scalar");
  TensorNode* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative topological order (children before parents in the result).
  static int mark_gen = 0;
  const int mark = ++mark_gen;
  std::vector<TensorNode*> order;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root, 0);
  root->visit_mark = mark;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].node();
      if (p->requires_grad && p->visit_mark != mark && !p->is_leaf) {
        p->visit_mark = mark;
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Non-leaf grads are per-sweep scratch: zero them all up front so repeated
  // backward calls over a shared subgraph accumulate only into leaves.
  for (TensorNode* n : order) {
    n->ensure_grad();
    std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) {
      n->ensure_grad();
      n->backprop(*n);
    }
  }
}

}  // namespace tritex
