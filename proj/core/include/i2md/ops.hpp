#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "i2md/tensor.hpp"

// Differentiable tensor operations. Broadcasting is limited to
// tensor-scalar (`scale`, `add_scalar`) and row-bias (`add_row_bias`) forms.
namespace i2md {

/// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [B,M,K] x [B,K,N] -> [B,M,N]
Tensor bmm(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
/// x[..., N] + bias[N]
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

Tensor exp(const Tensor& x);
/// Natural log with inputs floored at `kLogFloor`; the gradient is zero
/// where the floor is active.
Tensor log(const Tensor& x);
Tensor relu(const Tensor& x);

inline constexpr double kLogFloor = 1e-12;

/// Full reductions to a rank-0 tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum over the last axis: [..., N] -> [...].
Tensor sum_last(const Tensor& x);

Tensor transpose(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
/// Select slices along axis 0. Indices carry no gradient.
Tensor gather(const Tensor& x, std::span<const std::size_t> indices);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

/// Row-wise L2 normalization over the last axis. Throws
/// DegenerateInputError when a row norm is below 1e-12.
Tensor l2_normalize(const Tensor& x);

/// Layer normalization over the last axis with affine gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Mean over consecutive groups of rows: [G*group, C] -> [G, C].
Tensor group_mean(const Tensor& x, std::size_t group);

/// Graph propagation with a constant J x J operator applied to each block
/// of J consecutive rows: out[g*J + i] = sum_k adj[i,k] * x[g*J + k].
Tensor graph_mix(const Tensor& x, const Tensor& adjacency);

}  // namespace i2md
