#include "core/ops.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tritex {

using EMatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMatRM>;
using MapCM = Eigen::Map<const EMatRM>;

namespace {

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (size_t i = 0; i < r; ++i) {
    const int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                                  " vs " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

std::vector<int64_t> contiguous_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 0);
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

// Strides of `in` aligned to broadcast result shape `out` (0 on broadcast dims).
std::vector<int64_t> bcast_strides(const Shape& in, const Shape& out) {
  auto st = contiguous_strides(in);
  std::vector<int64_t> r(out.size(), 0);
  const size_t off = out.size() - in.size();
  for (size_t i = 0; i < in.size(); ++i) r[off + i] = (in[i] == 1 && out[off + i] != 1) ? 0 : st[i];
  return r;
}

struct BinaryFns {
  double (*f)(double, double);
  double (*dfa)(double, double);
  double (*dfb)(double, double);
};

Tensor binary_op(const Tensor& a, const Tensor& b, const BinaryFns& fns, const char* name) {
  check_defined(a, name);
  check_defined(b, name);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) {
    Tensor out = make_op(sa, {a, b}, [fns](TensorNode& self) {
      TensorNode* pa = self.parents[0].node();
      TensorNode* pb = self.parents[1].node();
      const double* av = pa->vdata();
      const double* bv = pb->vdata();
      const double* g = self.grad.data();
      const int64_t n = self.numel();
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (int64_t i = 0; i < n; ++i) pa->grad[i] += g[i] * fns.dfa(av[i], bv[i]);
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int64_t i = 0; i < n; ++i) pb->grad[i] += g[i] * fns.dfb(av[i], bv[i]);
      }
    });
    const double* av = a.data();
    const double* bv = b.data();
    double* o = out.data();
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) o[i] = fns.f(av[i], bv[i]);
    return out;
  }

  const Shape so = broadcast_shape(sa, sb, name);
  const auto stA = bcast_strides(sa, so);
  const auto stB = bcast_strides(sb, so);
  Tensor out = make_op(so, {a, b}, [fns, so, stA, stB](TensorNode& self) {
    TensorNode* pa = self.parents[0].node();
    TensorNode* pb = self.parents[1].node();
    if (pa->requires_grad) pa->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    const double* av = pa->vdata();
    const double* bv = pb->vdata();
    const double* g = self.grad.data();
    const size_t r = so.size();
    std::vector<int64_t> idx(r, 0);
    int64_t ia = 0, ib = 0;
    const int64_t n = self.numel();
    for (int64_t lin = 0; lin < n; ++lin) {
      if (pa->requires_grad) pa->grad[ia] += g[lin] * fns.dfa(av[ia], bv[ib]);
      if (pb->requires_grad) pb->grad[ib] += g[lin] * fns.dfb(av[ia], bv[ib]);
      for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
        if (++idx[d] < so[d]) {
          ia += stA[d];
          ib += stB[d];
          break;
        }
        idx[d] = 0;
        ia -= stA[d] * (so[d] - 1);
        ib -= stB[d] * (so[d] - 1);
      }
    }
  });
  const double* av = a.data();
  const double* bv = b.data();
  double* o = out.data();
  const size_t r = so.size();
  std::vector<int64_t> idx(r, 0);
  int64_t ia = 0, ib = 0;
  const int64_t n = out.numel();
  for (int64_t lin = 0; lin < n; ++lin) {
    o[lin] = fns.f(av[ia], bv[ib]);
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      if (++idx[d] < so[d]) {
        ia += stA[d];
        ib += stB[d];
        break;
      }
      idx[d] = 0;
      ia -= stA[d] * (so[d] - 1);
      ib -= stB[d] * (so[d] - 1);
    }
  }
  return out;
}

struct UnaryFns {
  double (*f)(double);
  double (*df)(double, double);  // (x, y) -> dy/dx
};

Tensor unary_op(const Tensor& a, const UnaryFns& fns, const char* name) {
  check_defined(a, name);
  Tensor out = make_op(a.shape(), {a}, [fns](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* x = p->vdata();
    const double* y = self.vdata();
    const double* g = self.grad.data();
    const int64_t n = self.numel();
    for (int64_t i = 0; i < n; ++i) p->grad[i] += g[i] * fns.df(x[i], y[i]);
  });
  const double* x = a.data();
  double* y = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = fns.f(x[i]);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  static const BinaryFns fns{[](double x, double y) { return x + y; },
                             [](double, double) { return 1.0; },
                             [](double, double) { return 1.0; }};
  return binary_op(a, b, fns, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  static const BinaryFns fns{[](double x, double y) { return x - y; },
                             [](double, double) { return 1.0; },
                             [](double, double) { return -1.0; }};
  return binary_op(a, b, fns, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  static const BinaryFns fns{[](double x, double y) { return x * y; },
                             [](double, double y) { return y; },
                             [](double x, double) { return x; }};
  return binary_op(a, b, fns, "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
  static const BinaryFns fns{[](double x, double y) { return x / y; },
                             [](double, double y) { return 1.0 / y; },
                             [](double x, double y) { return -x / (y * y); }};
  return binary_op(a, b, fns, "div");
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double s) {
  check_defined(a, "scale");
  Tensor out = make_op(a.shape(), {a}, [s](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    for (int64_t i = 0; i < self.numel(); ++i) p->grad[i] += g[i] * s;
  });
  const double* x = a.data();
  double* y = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) y[i] = x[i] * s;
  return out;
}

Tensor add_const(const Tensor& a, double c) {
  check_defined(a, "add_const");
  Tensor out = make_op(a.shape(), {a}, [](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->add_grad(self);
  });
  const double* x = a.data();
  double* y = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) y[i] = x[i] + c;
  return out;
}

Tensor exp_(const Tensor& a) {
  static const UnaryFns fns{[](double x) { return std::exp(x); },
                            [](double, double y) { return y; }};
  return unary_op(a, fns, "exp");
}

Tensor log_(const Tensor& a) {
  static const UnaryFns fns{[](double x) { return std::log(x); },
                            [](double x, double) { return 1.0 / x; }};
  return unary_op(a, fns, "log");
}

Tensor sqrt_(const Tensor& a) {
  static const UnaryFns fns{[](double x) { return std::sqrt(x); },
                            [](double, double y) { return 0.5 / y; }};
  return unary_op(a, fns, "sqrt");
}

Tensor tanh_(const Tensor& a) {
  static const UnaryFns fns{[](double x) { return std::tanh(x); },
                            [](double, double y) { return 1.0 - y * y; }};
  return unary_op(a, fns, "tanh");
}

Tensor sigmoid(const Tensor& a) {
  static const UnaryFns fns{[](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                            [](double, double y) { return y * (1.0 - y); }};
  return unary_op(a, fns, "sigmoid");
}

Tensor silu(const Tensor& a) {
  static const UnaryFns fns{
      [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      }};
  return unary_op(a, fns, "silu");
}

Tensor square(const Tensor& a) {
  static const UnaryFns fns{[](double x) { return x * x; },
                            [](double x, double) { return 2.0 * x; }};
  return unary_op(a, fns, "square");
}

Tensor reshape(const Tensor& a, Shape s) {
  check_defined(a, "reshape");
  // one -1 dim may be inferred
  int64_t known = 1, infer = -1;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == -1) {
      if (infer >= 0) throw std::invalid_argument("reshape: multiple -1 dims");
      infer = static_cast<int64_t>(i);
    } else {
      known *= s[i];
    }
  }
  if (infer >= 0) s[infer] = a.numel() / known;
  if (numel_of(s) != a.numel())
    throw std::invalid_argument("reshape: size mismatch " + shape_str(a.shape()) + " -> " +
                                shape_str(s));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(s);
  n->val = a.node_ptr()->val;  // alias
  n->is_leaf = false;
  n->requires_grad = a.requires_grad();
  if (n->requires_grad) {
    n->parents = {a};
    n->backprop = [](TensorNode& self) {
      TensorNode* p = self.parents[0].node();
      p->add_grad(self);
    };
  }
  return Tensor(std::move(n));
}

Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  check_defined(a, "permute");
  const Shape& sa = a.shape();
  if (perm.size() != sa.size()) throw std::invalid_argument("permute: rank mismatch");
  Shape so(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) so[i] = sa[perm[i]];
  const auto stA = contiguous_strides(sa);
  std::vector<int64_t> src_stride(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) src_stride[i] = stA[perm[i]];

  Tensor out = make_op(so, {a}, [so, src_stride](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    const size_t r = so.size();
    std::vector<int64_t> idx(r, 0);
    int64_t isrc = 0;
    for (int64_t lin = 0; lin < self.numel(); ++lin) {
      p->grad[isrc] += g[lin];
      for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
        if (++idx[d] < so[d]) {
          isrc += src_stride[d];
          break;
        }
        idx[d] = 0;
        isrc -= src_stride[d] * (so[d] - 1);
      }
    }
  });
  const double* x = a.data();
  double* y = out.data();
  const size_t r = so.size();
  std::vector<int64_t> idx(r, 0);
  int64_t isrc = 0;
  for (int64_t lin = 0; lin < out.numel(); ++lin) {
    y[lin] = x[isrc];
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      if (++idx[d] < so[d]) {
        isrc += src_stride[d];
        break;
      }
      idx[d] = 0;
      isrc -= src_stride[d] * (so[d] - 1);
    }
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: empty input");
  const Shape& s0 = parts[0].shape();
  const int r = static_cast<int>(s0.size());
  if (axis < 0) axis += r;
  Shape so = s0;
  so[axis] = 0;
  for (const auto& p : parts) {
    check_defined(p, "concat");
    const Shape& sp = p.shape();
    if (static_cast<int>(sp.size()) != r) throw std::invalid_argument("concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && sp[i] != s0[i]) throw std::invalid_argument("concat: shape mismatch");
    so[axis] += sp[axis];
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[i];
  for (int i = axis + 1; i < r; ++i) inner *= s0[i];
  std::vector<int64_t> widths;  // per-part axis*inner extent
  for (const auto& p : parts) widths.push_back(p.shape()[axis] * inner);
  const int64_t total_w = so[axis] * inner;

  Tensor out = make_op(so, parts, [outer, widths, total_w](TensorNode& self) {
    const double* g = self.grad.data();
    int64_t off = 0;
    for (size_t k = 0; k < self.parents.size(); ++k) {
      TensorNode* p = self.parents[k].node();
      if (p->requires_grad) {
        p->ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
          const double* src = g + o * total_w + off;
          double* dst = p->grad.data() + o * widths[k];
          for (int64_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
        }
      }
      off += widths[k];
    }
  });
  double* y = out.data();
  int64_t off = 0;
  for (size_t k = 0; k < parts.size(); ++k) {
    const double* src = parts[k].data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(src + o * widths[k], src + (o + 1) * widths[k], y + o * total_w + off);
    off += widths[k];
  }
  return out;
}

Tensor broadcast_to(const Tensor& a, const Shape& s) {
  check_defined(a, "broadcast_to");
  if (a.shape() == s) return a;
  (void)broadcast_shape(a.shape(), s, "broadcast_to");
  // implemented as a * ones(s) semantics without the multiply
  Tensor ones = Tensor::full(s, 1.0);
  return mul(a, ones);
}

Tensor slice_axis0(const Tensor& a, int64_t start, int64_t len) {
  check_defined(a, "slice_axis0");
  const Shape& sa = a.shape();
  if (start < 0 || start + len > sa[0]) throw std::invalid_argument("slice_axis0: out of range");
  Shape so = sa;
  so[0] = len;
  int64_t inner = 1;
  for (size_t i = 1; i < sa.size(); ++i) inner *= sa[i];
  Tensor out = make_op(so, {a}, [start, inner](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    double* dst = p->grad.data() + start * inner;
    for (int64_t i = 0; i < self.numel(); ++i) dst[i] += g[i];
  });
  std::copy(a.data() + start * inner, a.data() + (start + len) * inner, out.data());
  return out;
}

Tensor sum_all(const Tensor& a) {
  check_defined(a, "sum_all");
  Tensor out = make_op({1}, {a}, [](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double g = self.grad[0];
    for (auto& gi : p->grad) gi += g;
  });
  double acc = 0.0;
  const double* x = a.data();
  for (int64_t i = 0; i < a.numel(); ++i) acc += x[i];
  out.data()[0] = acc;
  return out;
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_axis(const Tensor& a, int axis, bool keepdim) {
  check_defined(a, "sum_axis");
  const Shape& sa = a.shape();
  const int r = static_cast<int>(sa.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw std::invalid_argument("sum_axis: axis out of range");
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sa[i];
  for (int i = axis + 1; i < r; ++i) inner *= sa[i];
  const int64_t mid = sa[axis];
  Shape so;
  for (int i = 0; i < r; ++i) {
    if (i == axis) {
      if (keepdim) so.push_back(1);
    } else {
      so.push_back(sa[i]);
    }
  }
  if (so.empty()) so.push_back(1);

  Tensor out = make_op(so, {a}, [outer, mid, inner](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t m = 0; m < mid; ++m) {
        double* dst = p->grad.data() + (o * mid + m) * inner;
        const double* src = g + o * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
  });
  double* y = out.data();
  std::fill(y, y + out.numel(), 0.0);
  const double* x = a.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t m = 0; m < mid; ++m) {
      const double* src = x + (o * mid + m) * inner;
      double* dst = y + o * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  return out;
}

Tensor mean_axis(const Tensor& a, int axis, bool keepdim) {
  const int r = a.rank();
  const int ax = axis < 0 ? axis + r : axis;
  return scale(sum_axis(a, axis, keepdim), 1.0 / static_cast<double>(a.shape()[ax]));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: bad shapes " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = make_op({m, n}, {a, b}, [m, k, n](TensorNode& self) {
    TensorNode* pa = self.parents[0].node();
    TensorNode* pb = self.parents[1].node();
    MapCM G(self.grad.data(), m, n);
    if (pa->requires_grad) {
      pa->ensure_grad();
      MapM Ga(pa->grad.data(), m, k);
      MapCM B(pb->vdata(), k, n);
      Ga.noalias() += G * B.transpose();
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      MapM Gb(pb->grad.data(), k, n);
      MapCM A(pa->vdata(), m, k);
      Gb.noalias() += A.transpose() * G;
    }
  });
  MapCM A(a.data(), m, k);
  MapCM B(b.data(), k, n);
  MapM O(out.data(), m, n);
  O.noalias() = A * B;
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  check_defined(a, "bmm");
  check_defined(b, "bmm");
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw std::invalid_argument("bmm: bad shapes " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int64_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  Tensor out = make_op({bs, m, n}, {a, b}, [bs, m, k, n](TensorNode& self) {
    TensorNode* pa = self.parents[0].node();
    TensorNode* pb = self.parents[1].node();
    if (pa->requires_grad) pa->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    for (int64_t i = 0; i < bs; ++i) {
      MapCM G(self.grad.data() + i * m * n, m, n);
      if (pa->requires_grad) {
        MapM Ga(pa->grad.data() + i * m * k, m, k);
        MapCM B(pb->vdata() + i * k * n, k, n);
        Ga.noalias() += G * B.transpose();
      }
      if (pb->requires_grad) {
        MapM Gb(pb->grad.data() + i * k * n, k, n);
        MapCM A(pa->vdata() + i * m * k, m, k);
        Gb.noalias() += A.transpose() * G;
      }
    }
  });
  for (int64_t i = 0; i < bs; ++i) {
    MapCM A(a.data() + i * m * k, m, k);
    MapCM B(b.data() + i * k * n, k, n);
    MapM O(out.data() + i * m * n, m, n);
    O.noalias() = A * B;
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_defined(x, "linear");
  check_defined(w, "linear");
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
    throw std::invalid_argument("linear: bad shapes " + shape_str(x.shape()) + " x " +
                                shape_str(w.shape()));
  const int64_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (b.defined() && (b.rank() != 1 || b.dim(0) != n))
    throw std::invalid_argument("linear: bad bias shape");

  std::vector<Tensor> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  Tensor out = make_op({m, n}, std::move(parents), [m, k, n](TensorNode& self) {
    TensorNode* px = self.parents[0].node();
    TensorNode* pw = self.parents[1].node();
    MapCM G(self.grad.data(), m, n);
    if (px->requires_grad) {
      px->ensure_grad();
      MapM Gx(px->grad.data(), m, k);
      MapCM W(pw->vdata(), k, n);
      Gx.noalias() += G * W.transpose();
    }
    if (pw->requires_grad) {
      pw->ensure_grad();
      MapM Gw(pw->grad.data(), k, n);
      MapCM X(px->vdata(), m, k);
      Gw.noalias() += X.transpose() * G;
    }
    if (self.parents.size() > 2) {
      TensorNode* pb = self.parents[2].node();
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) pb->grad[j] += self.grad[i * n + j];
      }
    }
  });
  MapCM X(x.data(), m, k);
  MapCM W(w.data(), k, n);
  MapM O(out.data(), m, n);
  O.noalias() = X * W;
  if (b.defined()) {
    const double* bias = b.data();
    double* o = out.data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) o[i * n + j] += bias[j];
  }
  return out;
}

Tensor softmax_lastdim(const Tensor& a) {
  check_defined(a, "softmax");
  const int64_t d = a.dim(-1);
  const int64_t rows = a.numel() / d;
  Tensor out = make_op(a.shape(), {a}, [rows, d](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* y = self.vdata();
    const double* g = self.grad.data();
    for (int64_t r = 0; r < rows; ++r) {
      const double* yr = y + r * d;
      const double* gr = g + r * d;
      double dot = 0.0;
      for (int64_t i = 0; i < d; ++i) dot += yr[i] * gr[i];
      double* dst = p->grad.data() + r * d;
      for (int64_t i = 0; i < d; ++i) dst[i] += yr[i] * (gr[i] - dot);
    }
  });
  const double* x = a.data();
  double* y = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * d;
    double* yr = y + r * d;
    double mx = xr[0];
    for (int64_t i = 1; i < d; ++i) mx = std::max(mx, xr[i]);
    double sum = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      yr[i] = std::exp(xr[i] - mx);
      sum += yr[i];
    }
    const double inv = 1.0 / sum;
    for (int64_t i = 0; i < d; ++i) yr[i] *= inv;
  }
  return out;
}

Tensor layernorm_lastdim(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  check_defined(x, "layernorm");
  const int64_t d = x.dim(-1);
  const int64_t rows = x.numel() / d;
  if (gamma.numel() != d || beta.numel() != d)
    throw std::invalid_argument("layernorm: bad affine shapes");

  Tensor out = make_op(x.shape(), {x, gamma, beta}, [rows, d, eps](TensorNode& self) {
    TensorNode* px = self.parents[0].node();
    TensorNode* pg = self.parents[1].node();
    TensorNode* pb = self.parents[2].node();
    if (px->requires_grad) px->ensure_grad();
    if (pg->requires_grad) pg->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    const double* xv = px->vdata();
    const double* gv = pg->vdata();
    const double* g = self.grad.data();
    std::vector<double> xhat(d);
    for (int64_t r = 0; r < rows; ++r) {
      const double* xr = xv + r * d;
      const double* gr = g + r * d;
      double mu = 0.0;
      for (int64_t i = 0; i < d; ++i) mu += xr[i];
      mu /= d;
      double var = 0.0;
      for (int64_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
      var /= d;
      const double inv_sigma = 1.0 / std::sqrt(var + eps);
      double m1 = 0.0, m2 = 0.0;  // mean(ghat), mean(ghat*xhat)
      for (int64_t i = 0; i < d; ++i) {
        xhat[i] = (xr[i] - mu) * inv_sigma;
        const double gh = gr[i] * gv[i];
        m1 += gh;
        m2 += gh * xhat[i];
      }
      m1 /= d;
      m2 /= d;
      if (px->requires_grad) {
        double* dst = px->grad.data() + r * d;
        for (int64_t i = 0; i < d; ++i)
          dst[i] += inv_sigma * (gr[i] * gv[i] - m1 - xhat[i] * m2);
      }
      if (pg->requires_grad)
        for (int64_t i = 0; i < d; ++i) pg->grad[i] += gr[i] * xhat[i];
      if (pb->requires_grad)
        for (int64_t i = 0; i < d; ++i) pb->grad[i] += gr[i];
    }
  });
  const double* xv = x.data();
  const double* gv = gamma.data();
  const double* bv = beta.data();
  double* y = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * d;
    double* yr = y + r * d;
    double mu = 0.0;
    for (int64_t i = 0; i < d; ++i) mu += xr[i];
    mu /= d;
    double var = 0.0;
    for (int64_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= d;
    const double inv_sigma = 1.0 / std::sqrt(var + eps);
    for (int64_t i = 0; i < d; ++i) yr[i] = (xr[i] - mu) * inv_sigma * gv[i] + bv[i];
  }
  return out;
}

Tensor groupnorm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                 double eps) {
  check_defined(x, "groupnorm");
  if (x.rank() != 3) throw std::invalid_argument("groupnorm: expected [C,H,W]");
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (c % groups != 0) throw std::invalid_argument("groupnorm: channels not divisible by groups");
  if (gamma.numel() != c || beta.numel() != c)
    throw std::invalid_argument("groupnorm: bad affine shapes");
  const int64_t cg = c / groups;       // channels per group
  const int64_t hw = h * w;
  const int64_t gsz = cg * hw;         // elements per group

  Tensor out = make_op(x.shape(), {x, gamma, beta}, [groups, cg, hw, gsz, eps](TensorNode& self) {
    TensorNode* px = self.parents[0].node();
    TensorNode* pg = self.parents[1].node();
    TensorNode* pb = self.parents[2].node();
    if (px->requires_grad) px->ensure_grad();
    if (pg->requires_grad) pg->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    const double* xv = px->vdata();
    const double* gv = pg->vdata();
    const double* g = self.grad.data();
    std::vector<double> xhat(gsz);
    for (int64_t gi = 0; gi < groups; ++gi) {
      const double* xg = xv + gi * gsz;
      const double* gg = g + gi * gsz;
      double mu = 0.0;
      for (int64_t i = 0; i < gsz; ++i) mu += xg[i];
      mu /= gsz;
      double var = 0.0;
      for (int64_t i = 0; i < gsz; ++i) var += (xg[i] - mu) * (xg[i] - mu);
      var /= gsz;
      const double inv_sigma = 1.0 / std::sqrt(var + eps);
      double m1 = 0.0, m2 = 0.0;
      for (int64_t i = 0; i < gsz; ++i) {
        xhat[i] = (xg[i] - mu) * inv_sigma;
        const double gh = gg[i] * gv[gi * cg + i / hw];
        m1 += gh;
        m2 += gh * xhat[i];
      }
      m1 /= gsz;
      m2 /= gsz;
      if (px->requires_grad) {
        double* dst = px->grad.data() + gi * gsz;
        for (int64_t i = 0; i < gsz; ++i) {
          const double gh = gg[i] * gv[gi * cg + i / hw];
          dst[i] += inv_sigma * (gh - m1 - xhat[i] * m2);
        }
      }
      if (pg->requires_grad)
        for (int64_t i = 0; i < gsz; ++i) pg->grad[gi * cg + i / hw] += gg[i] * xhat[i];
      if (pb->requires_grad)
        for (int64_t i = 0; i < gsz; ++i) pb->grad[gi * cg + i / hw] += gg[i];
    }
  });
  const double* xv = x.data();
  const double* gv = gamma.data();
  const double* bv = beta.data();
  double* y = out.data();
  for (int64_t gi = 0; gi < groups; ++gi) {
    const double* xg = xv + gi * gsz;
    double* yg = y + gi * gsz;
    double mu = 0.0;
    for (int64_t i = 0; i < gsz; ++i) mu += xg[i];
    mu /= gsz;
    double var = 0.0;
    for (int64_t i = 0; i < gsz; ++i) var += (xg[i] - mu) * (xg[i] - mu);
    var /= gsz;
    const double inv_sigma = 1.0 / std::sqrt(var + eps);
    for (int64_t i = 0; i < gsz; ++i) {
      const int64_t ch = gi * cg + i / hw;
      yg[i] = (xg[i] - mu) * inv_sigma * gv[ch] + bv[ch];
    }
  }
  return out;
}

namespace {

// im2col for 3x3, pad 1, stride 1: x [C,H,W] -> cols [C*9, H*W]
void im2col3(const double* x, int64_t c, int64_t h, int64_t w, double* cols) {
  const int64_t hw = h * w;
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t ky = 0; ky < 3; ++ky)
      for (int64_t kx = 0; kx < 3; ++kx) {
        double* dst = cols + ((ci * 3 + ky) * 3 + kx) * hw;
        for (int64_t y = 0; y < h; ++y) {
          const int64_t sy = y + ky - 1;
          if (sy < 0 || sy >= h) {
            std::fill(dst + y * w, dst + (y + 1) * w, 0.0);
            continue;
          }
          const double* src = x + ci * hw + sy * w;
          for (int64_t xcol = 0; xcol < w; ++xcol) {
            const int64_t sx = xcol + kx - 1;
            dst[y * w + xcol] = (sx < 0 || sx >= w) ? 0.0 : src[sx];
          }
        }
      }
}

void col2im3_add(const double* cols, int64_t c, int64_t h, int64_t w, double* x) {
  const int64_t hw = h * w;
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t ky = 0; ky < 3; ++ky)
      for (int64_t kx = 0; kx < 3; ++kx) {
        const double* src = cols + ((ci * 3 + ky) * 3 + kx) * hw;
        for (int64_t y = 0; y < h; ++y) {
          const int64_t sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          double* dst = x + ci * hw + sy * w;
          for (int64_t xcol = 0; xcol < w; ++xcol) {
            const int64_t sx = xcol + kx - 1;
            if (sx >= 0 && sx < w) dst[sx] += src[y * w + xcol];
          }
        }
      }
}

}  // namespace

Tensor conv2d_3x3(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_defined(x, "conv2d_3x3");
  check_defined(w, "conv2d_3x3");
  if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0) || w.dim(2) != 3 || w.dim(3) != 3)
    throw std::invalid_argument("conv2d_3x3: bad shapes " + shape_str(x.shape()) + " w " +
                                shape_str(w.shape()));
  const int64_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2), cout = w.dim(0);
  if (b.defined() && b.numel() != cout) throw std::invalid_argument("conv2d_3x3: bad bias");
  const int64_t hw = h * wd;
  const int64_t k = cin * 9;

  std::vector<Tensor> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  Tensor out = make_op({cout, h, wd}, std::move(parents), [cin, h, wd, cout, hw, k](TensorNode& self) {
    TensorNode* px = self.parents[0].node();
    TensorNode* pw = self.parents[1].node();
    std::vector<double> cols(k * hw);
    im2col3(px->vdata(), cin, h, wd, cols.data());
    MapCM G(self.grad.data(), cout, hw);
    if (pw->requires_grad) {
      pw->ensure_grad();
      MapM Gw(pw->grad.data(), cout, k);
      MapCM C(cols.data(), k, hw);
      Gw.noalias() += G * C.transpose();
    }
    if (px->requires_grad) {
      px->ensure_grad();
      std::vector<double> gcols(k * hw);
      MapM GC(gcols.data(), k, hw);
      MapCM W(pw->vdata(), cout, k);
      GC.noalias() = W.transpose() * G;
      col2im3_add(gcols.data(), cin, h, wd, px->grad.data());
    }
    if (self.parents.size() > 2) {
      TensorNode* pb = self.parents[2].node();
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int64_t co = 0; co < cout; ++co) {
          double acc = 0.0;
          for (int64_t i = 0; i < hw; ++i) acc += self.grad[co * hw + i];
          pb->grad[co] += acc;
        }
      }
    }
  });
  std::vector<double> cols(k * hw);
  im2col3(x.data(), cin, h, wd, cols.data());
  MapCM W(w.data(), cout, k);
  MapCM C(cols.data(), k, hw);
  MapM O(out.data(), cout, hw);
  O.noalias() = W * C;
  if (b.defined()) {
    const double* bias = b.data();
    double* o = out.data();
    for (int64_t co = 0; co < cout; ++co)
      for (int64_t i = 0; i < hw; ++i) o[co * hw + i] += bias[co];
  }
  return out;
}

Tensor conv2d_1x1(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_defined(x, "conv2d_1x1");
  check_defined(w, "conv2d_1x1");
  if (x.rank() != 3 || w.rank() != 2 || w.dim(1) != x.dim(0))
    throw std::invalid_argument("conv2d_1x1: bad shapes");
  const int64_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2), cout = w.dim(0);
  const int64_t hw = h * wd;
  if (b.defined() && b.numel() != cout) throw std::invalid_argument("conv2d_1x1: bad bias");

  std::vector<Tensor> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  Tensor out = make_op({cout, h, wd}, std::move(parents), [cin, cout, hw](TensorNode& self) {
    TensorNode* px = self.parents[0].node();
    TensorNode* pw = self.parents[1].node();
    MapCM G(self.grad.data(), cout, hw);
    if (pw->requires_grad) {
      pw->ensure_grad();
      MapM Gw(pw->grad.data(), cout, cin);
      MapCM X(px->vdata(), cin, hw);
      Gw.noalias() += G * X.transpose();
    }
    if (px->requires_grad) {
      px->ensure_grad();
      MapM Gx(px->grad.data(), cin, hw);
      MapCM W(pw->vdata(), cout, cin);
      Gx.noalias() += W.transpose() * G;
    }
    if (self.parents.size() > 2) {
      TensorNode* pb = self.parents[2].node();
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int64_t co = 0; co < cout; ++co) {
          double acc = 0.0;
          for (int64_t i = 0; i < hw; ++i) acc += self.grad[co * hw + i];
          pb->grad[co] += acc;
        }
      }
    }
  });
  MapCM W(w.data(), cout, cin);
  MapCM X(x.data(), cin, hw);
  MapM O(out.data(), cout, hw);
  O.noalias() = W * X;
  if (b.defined()) {
    const double* bias = b.data();
    double* o = out.data();
    for (int64_t co = 0; co < cout; ++co)
      for (int64_t i = 0; i < hw; ++i) o[co * hw + i] += bias[co];
  }
  return out;
}

Tensor avgpool2x2(const Tensor& x) {
  check_defined(x, "avgpool2x2");
  if (x.rank() != 3 || x.dim(1) % 2 || x.dim(2) % 2)
    throw std::invalid_argument("avgpool2x2: expected [C,2h,2w]");
  const int64_t c = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2;
  const int64_t ih = x.dim(1), iw = x.dim(2);
  Tensor out = make_op({c, h, w}, {x}, [c, h, w, ih, iw](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    for (int64_t ci = 0; ci < c; ++ci)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t xc = 0; xc < w; ++xc) {
          const double gv = 0.25 * g[(ci * h + y) * w + xc];
          double* base = p->grad.data() + ci * ih * iw + 2 * y * iw + 2 * xc;
          base[0] += gv;
          base[1] += gv;
          base[iw] += gv;
          base[iw + 1] += gv;
        }
  });
  const double* xv = x.data();
  double* y = out.data();
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t yy = 0; yy < h; ++yy)
      for (int64_t xc = 0; xc < w; ++xc) {
        const double* base = xv + ci * ih * iw + 2 * yy * iw + 2 * xc;
        y[(ci * h + yy) * w + xc] = 0.25 * (base[0] + base[1] + base[iw] + base[iw + 1]);
      }
  return out;
}

Tensor upsample_nearest(const Tensor& x, int64_t out_h, int64_t out_w) {
  check_defined(x, "upsample_nearest");
  if (x.rank() != 3) throw std::invalid_argument("upsample_nearest: expected [C,H,W]");
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<int64_t> row_map(out_h), col_map(out_w);
  for (int64_t i = 0; i < out_h; ++i) row_map[i] = std::min(h - 1, i * h / out_h);
  for (int64_t i = 0; i < out_w; ++i) col_map[i] = std::min(w - 1, i * w / out_w);

  Tensor out = make_op({c, out_h, out_w}, {x}, [c, h, w, out_h, out_w, row_map, col_map](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    for (int64_t ci = 0; ci < c; ++ci)
      for (int64_t y = 0; y < out_h; ++y)
        for (int64_t xc = 0; xc < out_w; ++xc)
          p->grad[(ci * h + row_map[y]) * w + col_map[xc]] += g[(ci * out_h + y) * out_w + xc];
  });
  const double* xv = x.data();
  double* y = out.data();
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t yy = 0; yy < out_h; ++yy)
      for (int64_t xc = 0; xc < out_w; ++xc)
        y[(ci * out_h + yy) * out_w + xc] = xv[(ci * h + row_map[yy]) * w + col_map[xc]];
  return out;
}

Tensor cumsum_exclusive_lastdim(const Tensor& a) {
  check_defined(a, "cumsum_exclusive");
  const int64_t d = a.dim(-1);
  const int64_t rows = a.numel() / d;
  Tensor out = make_op(a.shape(), {a}, [rows, d](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    for (int64_t r = 0; r < rows; ++r) {
      // dx_i = sum_{j > i} g_j
      double acc = 0.0;
      double* dst = p->grad.data() + r * d;
      const double* gr = g + r * d;
      for (int64_t i = d - 1; i >= 0; --i) {
        dst[i] += acc;
        acc += gr[i];
      }
    }
  });
  const double* x = a.data();
  double* y = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      y[r * d + i] = acc;
      acc += x[r * d + i];
    }
  }
  return out;
}

Tensor mse(const Tensor& a, const Tensor& b) { return mean_all(square(sub(a, b))); }

Tensor scatter_rows_to_image(const Tensor& values, const std::vector<int64_t>& pix, int64_t h,
                             int64_t w, const std::vector<double>& background) {
  check_defined(values, "scatter_rows_to_image");
  if (values.rank() != 2 || values.dim(0) != static_cast<int64_t>(pix.size()))
    throw std::invalid_argument("scatter_rows_to_image: bad values shape");
  const int64_t c = values.dim(1);
  if (static_cast<int64_t>(background.size()) != c)
    throw std::invalid_argument("scatter_rows_to_image: bad background size");

  Tensor out = make_op({h, w, c}, {values}, [pix, c](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    for (size_t m = 0; m < pix.size(); ++m)
      for (int64_t ch = 0; ch < c; ++ch) p->grad[m * c + ch] += g[pix[m] * c + ch];
  });
  double* y = out.data();
  for (int64_t i = 0; i < h * w; ++i)
    for (int64_t ch = 0; ch < c; ++ch) y[i * c + ch] = background[ch];
  const double* v = values.data();
  for (size_t m = 0; m < pix.size(); ++m) {
    if (pix[m] < 0 || pix[m] >= h * w)
      throw std::invalid_argument("scatter_rows_to_image: pixel id out of range");
    for (int64_t ch = 0; ch < c; ++ch) y[pix[m] * c + ch] = v[m * c + ch];
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& rows) {
  check_defined(x, "gather_rows");
  if (x.rank() != 2) throw std::invalid_argument("gather_rows: expected 2-d tensor");
  const int64_t c = x.dim(1);
  const int64_t n = static_cast<int64_t>(rows.size());
  Tensor out = make_op({n, c}, {x}, [rows, c](TensorNode& self) {
    TensorNode* p = self.parents[0].node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* g = self.grad.data();
    for (size_t m = 0; m < rows.size(); ++m)
      for (int64_t ch = 0; ch < c; ++ch) p->grad[rows[m] * c + ch] += g[m * c + ch];
  });
  const double* xv = x.data();
  double* y = out.data();
  for (int64_t m = 0; m < n; ++m) {
    if (rows[m] < 0 || rows[m] >= x.dim(0))
      throw std::invalid_argument("gather_rows: row index out of range");
    std::copy(xv + rows[m] * c, xv + (rows[m] + 1) * c, y + m * c);
  }
  return out;
}

}  // namespace tritex
