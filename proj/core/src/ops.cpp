#include "i2md/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "i2md/error.hpp"

namespace i2md {
namespace {

using detail::ImplPtr;
using detail::Node;
using detail::TensorImpl;

std::atomic<std::uint64_t> g_next_seq{1};

std::vector<double>& grad_of(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
  return t.grad;
}

template <class Backward>
Tensor record(Shape shape, std::vector<double> data, const char* op, std::vector<ImplPtr> inputs,
              Backward&& backward) {
  auto out = std::make_shared<TensorImpl>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  const bool needs_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const ImplPtr& p) { return p->requires_grad; });
  if (needs_grad) {
    auto node = std::make_shared<Node>();
    node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
    node->op = op;
    node->inputs = std::move(inputs);
    node->backward = std::forward<Backward>(backward);
    out->node = std::move(node);
    out->requires_grad = true;
  }
  return Tensor(std::move(out));
}

const ImplPtr& impl_of(const Tensor& t) {
  if (!t.defined()) throw ContractError("operation on an undefined tensor");
  return t.impl();
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// c[m,n] += op(a) * op(b), with op(a) of extent m x k and op(b) of k x n.
void gemm_acc(const double* a, bool trans_a, const double* b, bool trans_b, double* c,
              std::size_t m, std::size_t k, std::size_t n) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto K = static_cast<Eigen::Index>(k);
  const auto N = static_cast<Eigen::Index>(n);
  ConstMap A(a, trans_a ? K : M, trans_a ? M : K);
  ConstMap B(b, trans_b ? N : K, trans_b ? K : N);
  MutMap C(c, M, N);
  if (!trans_a && !trans_b) {
    C.noalias() += A * B;
  } else if (trans_a && !trans_b) {
    C.noalias() += A.transpose() * B;
  } else if (!trans_a && trans_b) {
    C.noalias() += A * B.transpose();
  } else {
    C.noalias() += A.transpose() * B.transpose();
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <class F, class G>
Tensor unary(const Tensor& x, const char* op, F&& forward, G&& derivative) {
  const auto& xi = impl_of(x);
  std::vector<double> out(xi->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(xi->data[i]);
  return record(xi->shape, std::move(out), op, {xi},
                [xi, derivative](const TensorImpl& o) {
                  auto& g = grad_of(*xi);
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    g[i] += o.grad[i] * derivative(xi->data[i], o.data[i]);
                  }
                });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& ai = impl_of(a);
  const auto& bi = impl_of(b);
  if (ai->shape.size() != 2 || bi->shape.size() != 2 || ai->shape[1] != bi->shape[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(ai->shape) + " and " +
                         shape_string(bi->shape));
  }
  const std::size_t m = ai->shape[0], k = ai->shape[1], n = bi->shape[1];
  std::vector<double> out(m * n, 0.0);
  gemm_acc(ai->data.data(), false, bi->data.data(), false, out.data(), m, k, n);
  return record({m, n}, std::move(out), "matmul", {ai, bi}, [ai, bi, m, k, n](const TensorImpl& o) {
    if (ai->requires_grad) gemm_acc(o.grad.data(), false, bi->data.data(), true, grad_of(*ai).data(), m, n, k);
    if (bi->requires_grad) gemm_acc(ai->data.data(), true, o.grad.data(), false, grad_of(*bi).data(), k, m, n);
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  const auto& ai = impl_of(a);
  const auto& bi = impl_of(b);
  if (ai->shape.size() != 3 || bi->shape.size() != 3 || ai->shape[0] != bi->shape[0] ||
      ai->shape[2] != bi->shape[1]) {
    throw DimensionError("bmm: incompatible shapes " + shape_string(ai->shape) + " and " +
                         shape_string(bi->shape));
  }
  const std::size_t batch = ai->shape[0], m = ai->shape[1], k = ai->shape[2], n = bi->shape[2];
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t p = 0; p < batch; ++p) {
    gemm_acc(ai->data.data() + p * m * k, false, bi->data.data() + p * k * n, false,
             out.data() + p * m * n, m, k, n);
  }
  return record({batch, m, n}, std::move(out), "bmm", {ai, bi},
                [ai, bi, batch, m, k, n](const TensorImpl& o) {
                  for (std::size_t p = 0; p < batch; ++p) {
                    const double* g = o.grad.data() + p * m * n;
                    if (ai->requires_grad) {
                      gemm_acc(g, false, bi->data.data() + p * k * n, true,
                               grad_of(*ai).data() + p * m * k, m, n, k);
                    }
                    if (bi->requires_grad) {
                      gemm_acc(ai->data.data() + p * m * k, true, g, false,
                               grad_of(*bi).data() + p * k * n, k, m, n);
                    }
                  }
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto& ai = impl_of(a);
  const auto& bi = impl_of(b);
  std::vector<double> out(ai->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ai->data[i] + bi->data[i];
  return record(ai->shape, std::move(out), "add", {ai, bi}, [ai, bi](const TensorImpl& o) {
    for (const auto& in : {ai, bi}) {
      if (!in->requires_grad) continue;
      auto& g = grad_of(*in);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto& ai = impl_of(a);
  const auto& bi = impl_of(b);
  std::vector<double> out(ai->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ai->data[i] - bi->data[i];
  return record(ai->shape, std::move(out), "sub", {ai, bi}, [ai, bi](const TensorImpl& o) {
    if (ai->requires_grad) {
      auto& g = grad_of(*ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (bi->requires_grad) {
      auto& g = grad_of(*bi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto& ai = impl_of(a);
  const auto& bi = impl_of(b);
  std::vector<double> out(ai->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ai->data[i] * bi->data[i];
  return record(ai->shape, std::move(out), "mul", {ai, bi}, [ai, bi](const TensorImpl& o) {
    if (ai->requires_grad) {
      auto& g = grad_of(*ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bi->data[i];
    }
    if (bi->requires_grad) {
      auto& g = grad_of(*bi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * ai->data[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, "add_scalar", [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  const auto& xi = impl_of(x);
  const auto& bi = impl_of(bias);
  if (xi->shape.empty() || bi->shape.size() != 1 || bi->shape[0] != xi->shape.back()) {
    throw DimensionError("add_row_bias: bias " + shape_string(bi->shape) +
                         " does not match last axis of " + shape_string(xi->shape));
  }
  const std::size_t n = bi->shape[0];
  std::vector<double> out(xi->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xi->data[i] + bi->data[i % n];
  return record(xi->shape, std::move(out), "add_row_bias", {xi, bi}, [xi, bi, n](const TensorImpl& o) {
    if (xi->requires_grad) {
      auto& g = grad_of(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (bi->requires_grad) {
      auto& g = grad_of(*bi);
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % n] += o.grad[i];
    }
  });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, "log", [](double v) { return std::log(std::max(v, kLogFloor)); },
      [](double v, double) { return v >= kLogFloor ? 1.0 / v : 0.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  const auto& xi = impl_of(x);
  double s = 0.0;
  for (double v : xi->data) s += v;
  return record({}, {s}, "sum", {xi}, [xi](const TensorImpl& o) {
    auto& g = grad_of(*xi);
    for (auto& v : g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const auto& xi = impl_of(x);
  if (xi->data.empty()) throw DimensionError("mean of an empty tensor");
  const double inv = 1.0 / static_cast<double>(xi->data.size());
  double s = 0.0;
  for (double v : xi->data) s += v;
  return record({}, {s * inv}, "mean", {xi}, [xi, inv](const TensorImpl& o) {
    auto& g = grad_of(*xi);
    for (auto& v : g) v += o.grad[0] * inv;
  });
}

Tensor sum_last(const Tensor& x) {
  const auto& xi = impl_of(x);
  if (xi->shape.empty()) throw DimensionError("sum_last on a rank-0 tensor");
  const std::size_t n = xi->shape.back();
  const std::size_t rows = n ? xi->data.size() / n : 0;
  Shape out_shape(xi->shape.begin(), xi->shape.end() - 1);
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += xi->data[r * n + j];
    out[r] = s;
  }
  return record(std::move(out_shape), std::move(out), "sum_last", {xi}, [xi, n, rows](const TensorImpl& o) {
    auto& g = grad_of(*xi);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += o.grad[r];
    }
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const auto& xi = impl_of(x);
  const std::size_t r = xi->shape.size();
  if (order.size() != r) throw DimensionError("permute: order rank mismatch for " + shape_string(xi->shape));
  std::vector<bool> used(r, false);
  for (auto a : order) {
    if (a >= r || used[a]) throw DimensionError("permute: invalid axis order");
    used[a] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * xi->shape[i];
  Shape out_shape(r);
  std::vector<std::size_t> step(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = xi->shape[order[i]];
    step[i] = in_stride[order[i]];
  }
  const std::size_t n = xi->data.size();
  // Visits output elements in order; calls f(out_index, in_offset).
  auto walk = [out_shape, step, r, n](auto&& f) {
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t lin = 0; lin < n; ++lin) {
      f(lin, off);
      for (std::size_t ax = r; ax-- > 0;) {
        ++idx[ax];
        off += step[ax];
        if (idx[ax] < out_shape[ax]) break;
        off -= step[ax] * out_shape[ax];
        idx[ax] = 0;
      }
    }
  };
  std::vector<double> out(n);
  walk([&](std::size_t lin, std::size_t off) { out[lin] = xi->data[off]; });
  return record(out_shape, std::move(out), "permute", {xi}, [xi, walk](const TensorImpl& o) {
    auto& g = grad_of(*xi);
    walk([&](std::size_t lin, std::size_t off) { g[off] += o.grad[lin]; });
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("transpose expects rank 2, got " + shape_string(x.shape()));
  return permute(x, {1, 0});
}

Tensor reshape(const Tensor& x, Shape shape) {
  const auto& xi = impl_of(x);
  if (shape_numel(shape) != xi->data.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(xi->shape) + " as " + shape_string(shape));
  }
  return record(std::move(shape), xi->data, "reshape", {xi}, [xi](const TensorImpl& o) {
    auto& g = grad_of(*xi);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& first = impl_of(parts[0])->shape;
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_string(first));
  std::vector<ImplPtr> inputs;
  std::vector<std::size_t> extents;
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const auto& pi = impl_of(p);
    if (pi->shape.size() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && pi->shape[d] != first[d]) {
        throw DimensionError("concat: shape mismatch " + shape_string(first) + " vs " + shape_string(pi->shape));
      }
    }
    out_shape[axis] += pi->shape[axis];
    extents.push_back(pi->shape[axis]);
    inputs.push_back(pi);
  }
  const auto split = split_axis(out_shape, axis, "concat");
  std::vector<double> out(shape_numel(out_shape));
  std::size_t col = 0;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    const std::size_t block = extents[p] * split.inner;
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(inputs[p]->data.data() + o * block, block,
                  out.data() + (o * split.extent + col) * split.inner);
    }
    col += extents[p];
  }
  auto captured = inputs;
  return record(std::move(out_shape), std::move(out), "concat", std::move(inputs),
                [captured, extents, split](const TensorImpl& o) {
                  std::size_t c = 0;
                  for (std::size_t p = 0; p < captured.size(); ++p) {
                    const std::size_t block = extents[p] * split.inner;
                    if (captured[p]->requires_grad) {
                      auto& g = grad_of(*captured[p]);
                      for (std::size_t q = 0; q < split.outer; ++q) {
                        const double* src = o.grad.data() + (q * split.extent + c) * split.inner;
                        double* dst = g.data() + q * block;
                        for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                      }
                    }
                    c += extents[p];
                  }
                });
}

Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto& xi = impl_of(x);
  const auto split = split_axis(xi->shape, axis, "narrow");
  if (start + length > split.extent) {
    throw DimensionError("narrow: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") exceeds axis extent of " + shape_string(xi->shape));
  }
  Shape out_shape = xi->shape;
  out_shape[axis] = length;
  const std::size_t block = length * split.inner;
  std::vector<double> out(split.outer * block);
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(xi->data.data() + (o * split.extent + start) * split.inner, block, out.data() + o * block);
  }
  return record(std::move(out_shape), std::move(out), "narrow", {xi},
                [xi, split, start, block](const TensorImpl& o) {
                  auto& g = grad_of(*xi);
                  for (std::size_t q = 0; q < split.outer; ++q) {
                    double* dst = g.data() + (q * split.extent + start) * split.inner;
                    for (std::size_t i = 0; i < block; ++i) dst[i] += o.grad[q * block + i];
                  }
                });
}

Tensor gather(const Tensor& x, std::span<const std::size_t> indices) {
  const auto& xi = impl_of(x);
  if (xi->shape.empty()) throw DimensionError("gather on a rank-0 tensor");
  const std::size_t rows = xi->shape[0];
  const std::size_t inner = rows ? xi->data.size() / rows : 0;
  for (auto i : indices) {
    if (i >= rows) {
      throw ContractError("gather: index " + std::to_string(i) + " out of range for " + shape_string(xi->shape));
    }
  }
  Shape out_shape = xi->shape;
  out_shape[0] = indices.size();
  std::vector<double> out(indices.size() * inner);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::copy_n(xi->data.data() + indices[r] * inner, inner, out.data() + r * inner);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return record(std::move(out_shape), std::move(out), "gather", {xi}, [xi, idx, inner](const TensorImpl& o) {
    auto& g = grad_of(*xi);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t i = 0; i < inner; ++i) g[idx[r] * inner + i] += o.grad[r * inner + i];
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& xi = impl_of(x);
  const auto s = split_axis(xi->shape, axis, "softmax");
  if (s.extent == 0) throw DimensionError("softmax over an empty axis of " + shape_string(xi->shape));
  std::vector<double> out(xi->data.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.extent; ++k) mx = std::max(mx, xi->data[base + k * s.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        const double e = std::exp(xi->data[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= z;
    }
  }
  return record(xi->shape, std::move(out), "softmax", {xi}, [xi, s](const TensorImpl& o) {
    auto& g = grad_of(*xi);
    for (std::size_t q = 0; q < s.outer; ++q) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = q * s.extent * s.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.extent; ++k) {
          dot += o.grad[base + k * s.inner] * o.data[base + k * s.inner];
        }
        for (std::size_t k = 0; k < s.extent; ++k) {
          const std::size_t i = base + k * s.inner;
          g[i] += o.data[i] * (o.grad[i] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const auto& xi = impl_of(x);
  const auto s = split_axis(xi->shape, axis, "log_softmax");
  if (s.extent == 0) throw DimensionError("log_softmax over an empty axis of " + shape_string(xi->shape));
  std::vector<double> out(xi->data.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.extent; ++k) mx = std::max(mx, xi->data[base + k * s.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) z += std::exp(xi->data[base + k * s.inner] - mx);
      const double lz = mx + std::log(z);
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] = xi->data[base + k * s.inner] - lz;
    }
  }
  return record(xi->shape, std::move(out), "log_softmax", {xi}, [xi, s](const TensorImpl& o) {
    auto& g = grad_of(*xi);
    for (std::size_t q = 0; q < s.outer; ++q) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = q * s.extent * s.inner + in;
        double total = 0.0;
        for (std::size_t k = 0; k < s.extent; ++k) total += o.grad[base + k * s.inner];
        for (std::size_t k = 0; k < s.extent; ++k) {
          const std::size_t i = base + k * s.inner;
          g[i] += o.grad[i] - std::exp(o.data[i]) * total;
        }
      }
    }
  });
}

Tensor l2_normalize(const Tensor& x) {
  const auto& xi = impl_of(x);
  if (xi->shape.empty()) throw DimensionError("l2_normalize on a rank-0 tensor");
  const std::size_t n = xi->shape.back();
  const std::size_t rows = n ? xi->data.size() / n : 0;
  std::vector<double> norms(rows);
  std::vector<double> out(xi->data.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += xi->data[r * n + j] * xi->data[r * n + j];
    const double norm = std::sqrt(ss);
    if (!(norm >= 1e-12)) {
      throw DegenerateInputError("l2_normalize: row " + std::to_string(r) + " has norm " + std::to_string(norm));
    }
    norms[r] = norm;
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xi->data[r * n + j] / norm;
  }
  return record(xi->shape, std::move(out), "l2_normalize", {xi}, [xi, n, rows, norms](const TensorImpl& o) {
    auto& g = grad_of(*xi);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += o.grad[r * n + j] * o.data[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        g[r * n + j] += (o.grad[r * n + j] - o.data[r * n + j] * dot) / norms[r];
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const auto& xi = impl_of(x);
  const auto& gi = impl_of(gamma);
  const auto& bi = impl_of(beta);
  if (xi->shape.empty()) throw DimensionError("layer_norm on a rank-0 tensor");
  const std::size_t n = xi->shape.back();
  if (gi->shape != Shape{n} || bi->shape != Shape{n}) {
    throw DimensionError("layer_norm: affine parameters must have shape [" + std::to_string(n) + "]");
  }
  const std::size_t rows = n ? xi->data.size() / n : 0;
  std::vector<double> xhat(xi->data.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(xi->data.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xi->data.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * is;
      xhat[r * n + j] = h;
      out[r * n + j] = gi->data[j] * h + bi->data[j];
    }
  }
  return record(xi->shape, std::move(out), "layer_norm", {xi, gi, bi},
                [xi, gi, bi, n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](const TensorImpl& o) {
                  if (gi->requires_grad || bi->requires_grad) {
                    auto& gg = grad_of(*gi);
                    auto& gb = grad_of(*bi);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < n; ++j) {
                        gg[j] += o.grad[r * n + j] * xhat[r * n + j];
                        gb[j] += o.grad[r * n + j];
                      }
                    }
                  }
                  if (!xi->requires_grad) return;
                  auto& gx = grad_of(*xi);
                  const double inv_n = 1.0 / static_cast<double>(n);
                  for (std::size_t r = 0; r < rows; ++r) {
                    double mean_g = 0.0, mean_gh = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                      const double gh = o.grad[r * n + j] * gi->data[j];
                      mean_g += gh;
                      mean_gh += gh * xhat[r * n + j];
                    }
                    mean_g *= inv_n;
                    mean_gh *= inv_n;
                    for (std::size_t j = 0; j < n; ++j) {
                      const double gh = o.grad[r * n + j] * gi->data[j];
                      gx[r * n + j] += inv_std[r] * (gh - mean_g - xhat[r * n + j] * mean_gh);
                    }
                  }
                });
}

Tensor group_mean(const Tensor& x, std::size_t group) {
  const auto& xi = impl_of(x);
  if (xi->shape.size() != 2 || group == 0 || xi->shape[0] % group != 0) {
    throw DimensionError("group_mean: " + shape_string(xi->shape) + " not divisible into groups of " +
                         std::to_string(group));
  }
  const std::size_t groups = xi->shape[0] / group;
  const std::size_t c = xi->shape[1];
  const double inv = 1.0 / static_cast<double>(group);
  std::vector<double> out(groups * c, 0.0);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t r = 0; r < group; ++r) {
      const double* row = xi->data.data() + (g * group + r) * c;
      for (std::size_t j = 0; j < c; ++j) out[g * c + j] += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) out[g * c + j] *= inv;
  }
  return record({groups, c}, std::move(out), "group_mean", {xi}, [xi, groups, group, c, inv](const TensorImpl& o) {
    auto& gx = grad_of(*xi);
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t r = 0; r < group; ++r) {
        double* row = gx.data() + (g * group + r) * c;
        for (std::size_t j = 0; j < c; ++j) row[j] += o.grad[g * c + j] * inv;
      }
    }
  });
}

Tensor graph_mix(const Tensor& x, const Tensor& adjacency) {
  const auto& xi = impl_of(x);
  const auto& ai = impl_of(adjacency);
  if (ai->shape.size() != 2 || ai->shape[0] != ai->shape[1]) {
    throw DimensionError("graph_mix: adjacency must be square, got " + shape_string(ai->shape));
  }
  const std::size_t j = ai->shape[0];
  if (xi->shape.size() != 2 || j == 0 || xi->shape[0] % j != 0) {
    throw DimensionError("graph_mix: input " + shape_string(xi->shape) + " is not a stack of " +
                         std::to_string(j) + "-joint blocks");
  }
  if (ai->requires_grad) throw ContractError("graph_mix: adjacency must be a constant");
  const std::size_t blocks = xi->shape[0] / j;
  const std::size_t c = xi->shape[1];
  // Sparse (row, col, weight) triples; skeleton graphs are very sparse.
  struct Entry {
    std::size_t row, col;
    double w;
  };
  std::vector<Entry> entries;
  for (std::size_t r = 0; r < j; ++r) {
    for (std::size_t k = 0; k < j; ++k) {
      if (ai->data[r * j + k] != 0.0) entries.push_back({r, k, ai->data[r * j + k]});
    }
  }
  std::vector<double> out(xi->data.size(), 0.0);
  for (std::size_t b = 0; b < blocks; ++b) {
    const double* src = xi->data.data() + b * j * c;
    double* dst = out.data() + b * j * c;
    for (const auto& e : entries) {
      for (std::size_t q = 0; q < c; ++q) dst[e.row * c + q] += e.w * src[e.col * c + q];
    }
  }
  return record(xi->shape, std::move(out), "graph_mix", {xi}, [xi, entries, blocks, j, c](const TensorImpl& o) {
    auto& g = grad_of(*xi);
    for (std::size_t b = 0; b < blocks; ++b) {
      const double* src = o.grad.data() + b * j * c;
      double* dst = g.data() + b * j * c;
      for (const auto& e : entries) {
        for (std::size_t q = 0; q < c; ++q) dst[e.col * c + q] += e.w * src[e.row * c + q];
      }
    }
  });
}

}  // namespace i2md
